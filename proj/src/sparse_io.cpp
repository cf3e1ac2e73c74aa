#include "hpca/sparse_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

#include "hpca/errors.hpp"
#include "hpca/random.hpp"
#include "hpca/text_format.hpp"

namespace hpca {

namespace {

// Reads one line into `line`; advances `offset` past it and its newline.
bool read_line(std::istream& in, std::string& line, std::uint64_t& offset) {
  if (!std::getline(in, line)) return false;
  offset += line.size() + (in.eof() ? 0 : 1);
  return true;
}

FeatureId max_index_plus_one(const SparseRow& row) { return row.empty() ? 0 : row.indices.back() + 1; }

}  // namespace

SparseRow SparseRow::from_entries(std::vector<std::pair<FeatureId, double>> entries, std::optional<double> label) {
  const bool sorted = std::is_sorted(entries.begin(), entries.end(),
                                     [](const auto& a, const auto& b) { return a.first < b.first; });
  if (!sorted) {
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  SparseRow row;
  row.label = label;
  row.indices.reserve(entries.size());
  row.values.reserve(entries.size());
  for (const auto& [index, value] : entries) {
    if (!row.indices.empty() && row.indices.back() == index) {
      row.values.back() += value;
    } else {
      row.indices.push_back(index);
      row.values.push_back(value);
    }
  }
  return row;
}

void SparseRow::validate() const {
  if (indices.size() != values.size()) throw DataError("sparse row has mismatched index and value counts");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && indices[i] <= indices[i - 1]) throw DataError("sparse row indices must be strictly increasing");
    if (!std::isfinite(values[i])) throw DataError("sparse row contains a non-finite value");
  }
  if (label && !std::isfinite(*label)) throw DataError("sparse row label is not finite");
}

SparseDataset SparseDataset::from_rows(std::vector<SparseRow> rows, std::optional<std::size_t> declared_p) {
  std::size_t needed = 0;
  for (const auto& row : rows) {
    row.validate();
    needed = std::max<std::size_t>(needed, max_index_plus_one(row));
  }
  if (declared_p && *declared_p < needed) {
    throw DimensionError("declared p = " + std::to_string(*declared_p) + " is smaller than max index + 1 = " +
                         std::to_string(needed));
  }
  SparseDataset ds;
  ds.n_ = rows.size();
  ds.p_ = declared_p.value_or(needed);
  ds.memory_ = std::make_shared<const std::vector<SparseRow>>(std::move(rows));
  return ds;
}

const std::filesystem::path& SparseDataset::path() const {
  if (!file_) throw DataError("dataset is not file-backed");
  return file_->path;
}

const std::vector<SparseRow>& SparseDataset::memory_rows() const {
  if (!memory_) throw DataError("dataset is file-backed; use a reader");
  return *memory_;
}

RowReader SparseDataset::reader() const { return RowReader(*this, 0, n_); }

RowReader SparseDataset::reader(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_) {
    throw DimensionError("row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") is outside a dataset of " + std::to_string(n_) + " rows");
  }
  return RowReader(*this, begin, end);
}

RowReader::RowReader(const SparseDataset& dataset, std::size_t begin, std::size_t end)
    : dataset_(dataset), position_(begin), end_(end) {
  if (!dataset_.file_ || begin == end) return;
  const auto& source = *dataset_.file_;
  file_ = std::make_unique<std::ifstream>(source.path, std::ios::binary);
  if (!*file_) throw StreamError(0, "cannot reopen " + source.path.string());
  const std::size_t block = begin / SparseDataset::kIndexStride;
  offset_ = source.offsets.at(block);
  file_->seekg(static_cast<std::streamoff>(offset_));
  for (std::size_t skip = block * SparseDataset::kIndexStride; skip < begin; ++skip) {
    if (!read_line(*file_, line_, offset_)) throw StreamError(offset_, "file ended while seeking to row " + std::to_string(begin));
  }
}

bool RowReader::next(SparseRow& row) {
  if (position_ >= end_) return false;
  if (!file_) {
    row = (*dataset_.memory_)[position_++];
    return true;
  }
  const std::uint64_t line_start = offset_;
  if (!read_line(*file_, line_, offset_)) {
    throw StreamError(line_start, "file ended after " + std::to_string(position_) + " of " +
                                      std::to_string(dataset_.rows()) + " rows");
  }
  try {
    row = parse_libsvm_line(line_, position_ + 1);
  } catch (const ParseError& e) {
    throw StreamError(line_start, e.what());
  }
  if (max_index_plus_one(row) > dataset_.cols()) throw StreamError(line_start, "feature index exceeds dataset p");
  ++position_;
  return true;
}

SparseRow parse_libsvm_line(std::string_view line, std::size_t line_number) {
  const auto fields = split_fields(line);
  if (fields.empty()) throw ParseError(line_number, "missing label");
  const auto label = parse_double(fields[0]);
  if (!label) throw ParseError(line_number, "malformed label '" + std::string(fields[0]) + "'");
  if (!std::isfinite(*label)) throw ParseError(line_number, "non-finite label");

  std::vector<std::pair<FeatureId, double>> entries;
  entries.reserve(fields.size() - 1);
  for (std::size_t f = 1; f < fields.size(); ++f) {
    const std::string_view token = fields[f];
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) throw ParseError(line_number, "malformed token '" + std::string(token) + "'");
    const std::string_view index_text = token.substr(0, colon);
    const std::string_view value_text = token.substr(colon + 1);
    if (!index_text.empty() && index_text.front() == '-') {
      throw ParseError(line_number, "negative feature index in '" + std::string(token) + "'");
    }
    const auto index = parse_uint64(index_text);
    if (!index) throw ParseError(line_number, "malformed feature index in '" + std::string(token) + "'");
    if (*index == 0) throw ParseError(line_number, "feature index 0 (indices are 1-based)");
    const auto value = parse_double(value_text);
    if (!value) throw ParseError(line_number, "malformed value in '" + std::string(token) + "'");
    if (!std::isfinite(*value)) throw ParseError(line_number, "non-finite value in '" + std::string(token) + "'");
    entries.emplace_back(*index - 1, *value);
  }
  SparseRow row = SparseRow::from_entries(std::move(entries), *label);
  for (double v : row.values)
    if (!std::isfinite(v)) throw ParseError(line_number, "duplicate feature values overflow");
  return row;
}

SparseDataset parse_libsvm(const std::filesystem::path& path, std::optional<std::size_t> declared_p) {
  if (declared_p && *declared_p == 0) throw DimensionError("declared p must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());

  auto source = std::make_shared<SparseDataset::FileSource>();
  source->path = path;
  std::string line;
  std::uint64_t offset = 0;
  std::size_t n = 0;
  std::size_t needed = 0;
  for (;;) {
    const std::uint64_t line_start = offset;
    if (!read_line(in, line, offset)) break;
    if (n % SparseDataset::kIndexStride == 0) source->offsets.push_back(line_start);
    const SparseRow row = parse_libsvm_line(line, n + 1);
    needed = std::max<std::size_t>(needed, max_index_plus_one(row));
    ++n;
  }
  if (in.bad()) throw StreamError(offset, "read failure in " + path.string());
  if (declared_p && *declared_p < needed) {
    throw DimensionError("declared p = " + std::to_string(*declared_p) + " is smaller than max index + 1 = " +
                         std::to_string(needed));
  }
  SparseDataset ds;
  ds.n_ = n;
  ds.p_ = declared_p.value_or(needed);
  ds.file_ = std::move(source);
  return ds;
}

std::string format_libsvm_row(const SparseRow& row) {
  std::string out;
  append_double(out, row.label.value_or(0.0));
  for (std::size_t i = 0; i < row.nnz(); ++i) {
    out.push_back(' ');
    out += std::to_string(row.indices[i] + 1);
    out.push_back(':');
    append_double(out, row.values[i]);
  }
  return out;
}

void write_libsvm(const SparseDataset& dataset, std::ostream& out) {
  auto reader = dataset.reader();
  SparseRow row;
  while (reader.next(row)) out << format_libsvm_row(row) << '\n';
}

void write_libsvm(const SparseDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_libsvm(dataset, out);
  if (!out) throw DataError("write failed for " + path.string());
}

std::uint64_t dataset_checksum(const SparseDataset& dataset) {
  std::uint64_t h = fnv1a64({});
  auto reader = dataset.reader();
  SparseRow row;
  while (reader.next(row)) {
    const double label = row.label.value_or(0.0);
    h = fnv1a64({reinterpret_cast<const char*>(&label), sizeof label}, h);
    h = fnv1a64({reinterpret_cast<const char*>(row.indices.data()), row.indices.size() * sizeof(FeatureId)}, h);
    h = fnv1a64({reinterpret_cast<const char*>(row.values.data()), row.values.size() * sizeof(double)}, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

DenseMatrix densify(const SparseDataset& dataset) {
  DenseMatrix x(dataset.rows(), dataset.cols());
  auto reader = dataset.reader();
  SparseRow row;
  std::size_t i = 0;
  while (reader.next(row)) {
    for (std::size_t t = 0; t < row.nnz(); ++t) x(i, row.indices[t]) = row.values[t];
    ++i;
  }
  return x;
}

SparseDataset synth_lowrank(const SynthSpec& spec) {
  if (spec.n == 0 || spec.p == 0) throw ConfigError("synth_lowrank: n and p must be positive");
  if (spec.rank == 0 || spec.rank > std::min(spec.n, spec.p)) {
    throw ConfigError("synth_lowrank: rank must be in [1, min(n, p)]");
  }
  if (spec.spectrum.size() != spec.rank) throw ConfigError("synth_lowrank: spectrum must have exactly rank entries");
  for (std::size_t j = 0; j < spec.rank; ++j) {
    if (!(spec.spectrum[j] > 0.0) || !std::isfinite(spec.spectrum[j])) {
      throw ConfigError("synth_lowrank: spectrum entries must be positive");
    }
    if (j > 0 && spec.spectrum[j] > spec.spectrum[j - 1]) throw ConfigError("synth_lowrank: spectrum must be nonincreasing");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ConfigError("synth_lowrank: noise must be nonnegative");
  }
  if (!(spec.density > 0.0 && spec.density <= 1.0)) throw ConfigError("synth_lowrank: density must be in (0, 1]");

  const std::size_t r = spec.rank;
  const DenseMatrix u = gram_schmidt(gaussian_matrix(spec.n, r, mix64(spec.seed ^ 0x11)));
  const DenseMatrix v = gram_schmidt(gaussian_matrix(spec.p, r, mix64(spec.seed ^ 0x22)));
  NormalStream noise(mix64(spec.seed ^ 0x33));
  SplitMix64 mask(mix64(spec.seed ^ 0x44));

  std::vector<SparseRow> rows(spec.n);
  std::vector<double> weights(r);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t t = 0; t < r; ++t) weights[t] = spec.spectrum[t] * u(i, t);
    SparseRow& row = rows[i];
    row.label = 0.0;
    for (std::size_t j = 0; j < spec.p; ++j) {
      const auto vj = v.row(j);
      double value = 0.0;
      for (std::size_t t = 0; t < r; ++t) value += weights[t] * vj[t];
      if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise.next();
      const bool keep = spec.density >= 1.0 || mask.uniform() < spec.density;
      if (keep && value != 0.0) {
        row.indices.push_back(j);
        row.values.push_back(value);
      }
    }
  }
  return SparseDataset::from_rows(std::move(rows), spec.p);
}

}  // namespace hpca
