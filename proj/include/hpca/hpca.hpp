#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "hpca/dense_linalg.hpp"
#include "hpca/hashing.hpp"
#include "hpca/sparse_io.hpp"

namespace hpca {

/// Rows per pass chunk. Deterministic passes reduce chunk partials in chunk
/// order, so results are bit-identical for any worker count.
inline constexpr std::size_t kPassChunkRows = 4096;

struct PassOptions {
  bool deterministic_reduce = true;
  std::size_t threads = 1;
};

struct HpcaConfig {
  Projector projector = Projector::hashed(HashSpec{});
  std::size_t k = 1;
  std::size_t l = 0;  // probe columns; 0 means l = k
  std::uint64_t seed_omega = 0;
  bool center = false;
  bool deterministic_reduce = true;
  std::size_t threads = 1;

  std::size_t d() const noexcept { return projector.dim(); }
  std::size_t probes() const noexcept { return l == 0 ? k : l; }
  PassOptions pass_options() const noexcept { return {deterministic_reduce, threads}; }

  /// Throws ConfigError unless 1 <= k <= l <= d, k < d and threads >= 1.
  void validate() const;
};

/// Running sums for one streaming pass against a d x l matrix M:
/// acc = Σ h_i (h_iᵀ M) with h_i = Hᵀx_i, plus Σ h_i when the mean is tracked.
class PassAccumulator {
 public:
  PassAccumulator(std::size_t d, std::size_t l, bool track_mean);

  void add(const HashedEntries& h, const DenseMatrix& m);
  void merge(const PassAccumulator& other);
  void reset() noexcept;

  const DenseMatrix& sum() const noexcept { return acc_; }
  const std::vector<double>& mean_sum() const noexcept { return mean_acc_; }
  bool tracks_mean() const noexcept { return track_mean_; }
  std::size_t count() const noexcept { return count_; }

  /// (1/n)·acc, minus m·(mᵀM) when a mean is given. Consumes the accumulator.
  DenseMatrix finalize(const DenseMatrix& m, std::optional<std::span<const double>> center_mean) &&;

 private:
  DenseMatrix acc_;
  std::vector<double> mean_acc_;
  std::vector<double> scratch_;  // hᵀM for the current row
  std::size_t count_ = 0;
  bool track_mean_;
};

/// Accumulates rows [begin, end) sequentially into a fresh accumulator.
PassAccumulator accumulate_rows(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                                std::size_t begin, std::size_t end, bool track_mean);

/// Full streaming pass, chunked and optionally multi-threaded.
PassAccumulator accumulate_pass(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                                bool track_mean, const PassOptions& options = {});

/// (1/n) Σ h_i (h_iᵀ M), optionally with the rank-one centering correction.
DenseMatrix pass(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                 std::optional<std::span<const double>> center_mean = std::nullopt, const PassOptions& options = {});

/// Fitted loadings and singular values; immutable, safe to share across threads.
class PcaModel {
 public:
  PcaModel(DenseMatrix loadings, std::vector<double> singular_values, std::optional<std::vector<double>> hashed_mean,
           Projector projector, std::size_t n_fit);

  const DenseMatrix& loadings() const noexcept { return loadings_; }
  const std::vector<double>& singular_values() const noexcept { return singular_values_; }
  const std::optional<std::vector<double>>& hashed_mean() const noexcept { return hashed_mean_; }
  const Projector& projector() const noexcept { return projector_; }
  std::size_t k() const noexcept { return singular_values_.size(); }
  std::size_t d() const noexcept { return loadings_.rows(); }
  std::size_t n_fit() const noexcept { return n_fit_; }
  bool centered() const noexcept { return hashed_mean_.has_value(); }

  /// Ṽᵀ(Hᵀx - m), written into `out` (length k).
  void project_unwhitened(const SparseRow& x, std::span<double> out) const;
  /// pinv(Σ̃) ⊙ Ṽᵀ(Hᵀx - m).
  void project_whitened(const SparseRow& x, std::span<double> out) const;

  std::vector<double> project_unwhitened(const SparseRow& x) const;
  std::vector<double> project_whitened(const SparseRow& x) const;

  friend bool operator==(const PcaModel& a, const PcaModel& b) {
    return a.loadings_ == b.loadings_ && a.singular_values_ == b.singular_values_ &&
           a.hashed_mean_ == b.hashed_mean_ && a.projector_ == b.projector_ && a.n_fit_ == b.n_fit_;
  }

 private:
  DenseMatrix loadings_;
  std::vector<double> singular_values_;
  std::optional<std::vector<double>> hashed_mean_;
  Projector projector_;
  std::size_t n_fit_;
  std::vector<double> whitening_;  // pinv_diag(singular_values)
};

/// Two-pass hashed randomized PCA.
PcaModel fit(const SparseDataset& ds, const HpcaConfig& cfg);

using ScoreSink = std::function<void(std::size_t row, std::span<const double> scores)>;

/// Whitened scores of every row, streamed to `sink` in row order.
void transform(const SparseDataset& ds, const PcaModel& model, const ScoreSink& sink, bool whitened = true);

PcaModel fit_transform(const SparseDataset& ds, const HpcaConfig& cfg, const ScoreSink& sink);

struct FitTransformResult {
  PcaModel model;
  DenseMatrix scores;  // n x k, whitened
};
FitTransformResult fit_transform(const SparseDataset& ds, const HpcaConfig& cfg);

/// Dense working-set figure for a fit: three d x l matrices, plus the mean when centering.
std::size_t peak_accumulator_bytes(std::size_t d, std::size_t l, bool center) noexcept;

/// Text model format, version HPCA1.
void save_model(const PcaModel& model, std::ostream& out);
void save_model(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_model(std::istream& in);
PcaModel load_model(const std::filesystem::path& path);

}  // namespace hpca
