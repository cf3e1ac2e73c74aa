#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hpca/dense_linalg.hpp"

namespace hpca {

using FeatureId = std::uint64_t;

/// One example: strictly increasing 0-based feature ids with finite values.
struct SparseRow {
  std::vector<FeatureId> indices;
  std::vector<double> values;
  std::optional<double> label;

  std::size_t nnz() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  /// Sorts by feature id and sums duplicates.
  static SparseRow from_entries(std::vector<std::pair<FeatureId, double>> entries,
                                std::optional<double> label = std::nullopt);

  /// Throws DataError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

class RowReader;

/// Row-major sparse matrix that is either held in memory or re-streamed from
/// a libsvm file on every pass. Immutable and cheap to copy; handles may be
/// shared across threads, each thread opening its own reader.
class SparseDataset {
 public:
  /// Every `kIndexStride`-th row's byte offset is kept for file-backed datasets.
  static constexpr std::size_t kIndexStride = 1024;

  SparseDataset() = default;

  /// Validates each row; p defaults to max index + 1.
  static SparseDataset from_rows(std::vector<SparseRow> rows, std::optional<std::size_t> declared_p = std::nullopt);

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return p_; }
  bool file_backed() const noexcept { return file_ != nullptr; }
  const std::filesystem::path& path() const;

  RowReader reader() const;
  RowReader reader(std::size_t begin, std::size_t end) const;

  /// Direct access for in-memory datasets only.
  const std::vector<SparseRow>& memory_rows() const;

 private:
  friend class RowReader;
  friend SparseDataset parse_libsvm(const std::filesystem::path&, std::optional<std::size_t>);

  struct FileSource {
    std::filesystem::path path;
    std::vector<std::uint64_t> offsets;  // byte offset of row i * kIndexStride
  };

  std::shared_ptr<const std::vector<SparseRow>> memory_;
  std::shared_ptr<const FileSource> file_;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
};

/// Single-consumer cursor over a contiguous row range of a dataset.
class RowReader {
 public:
  /// Copies the next row into `row`, reusing its storage. Returns false at the end of the range.
  bool next(SparseRow& row);

  /// Index of the row the next call to next() would return.
  std::size_t position() const noexcept { return position_; }

 private:
  friend class SparseDataset;
  RowReader(const SparseDataset& dataset, std::size_t begin, std::size_t end);

  SparseDataset dataset_;
  std::size_t position_;
  std::size_t end_;
  std::unique_ptr<std::ifstream> file_;
  std::uint64_t offset_ = 0;
  std::string line_;
};

/// Parses one libsvm line (`label idx:val ...`, 1-based indices).
SparseRow parse_libsvm_line(std::string_view line, std::size_t line_number);

/// Validates the whole file once and returns a file-backed dataset.
SparseDataset parse_libsvm(const std::filesystem::path& path, std::optional<std::size_t> declared_p = std::nullopt);

inline RowReader stream_rows(const SparseDataset& dataset) { return dataset.reader(); }

/// Formats a row as `label idx:val ...` with 1-based indices; a missing label is written as 0.
std::string format_libsvm_row(const SparseRow& row);
void write_libsvm(const SparseDataset& dataset, std::ostream& out);
void write_libsvm(const SparseDataset& dataset, const std::filesystem::path& path);

/// Order-sensitive FNV-1a checksum over every row's ids, values and label.
std::uint64_t dataset_checksum(const SparseDataset& dataset);

/// Dense n x p copy; for desk-scale oracles only.
DenseMatrix densify(const SparseDataset& dataset);

struct SynthSpec {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t rank = 0;
  std::vector<double> spectrum;  // rank entries, nonincreasing, positive
  double noise_sigma = 0.0;
  double density = 1.0;
  std::uint64_t seed = 0;
};

/// X = sum_j spectrum[j] u_j v_jᵀ + noise, each entry kept with probability
/// `density`. u_j, v_j are random orthonormal columns. Deterministic in the seed.
SparseDataset synth_lowrank(const SynthSpec& spec);

}  // namespace hpca
