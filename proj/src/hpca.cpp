#include "hpca/hpca.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "hpca/errors.hpp"

namespace hpca {

void HpcaConfig::validate() const {
  const std::size_t d_ = d();
  const std::size_t l_ = probes();
  if (k == 0) throw ConfigError("k must be at least 1");
  if (k >= d_) throw ConfigError("k = " + std::to_string(k) + " must be smaller than d = " + std::to_string(d_));
  if (l_ < k || l_ > d_) {
    throw ConfigError("l = " + std::to_string(l_) + " must satisfy k <= l <= d (k = " + std::to_string(k) +
                      ", d = " + std::to_string(d_) + ")");
  }
  if (threads == 0) throw ConfigError("threads must be at least 1");
}

PassAccumulator::PassAccumulator(std::size_t d, std::size_t l, bool track_mean)
    : acc_(d, l), mean_acc_(track_mean ? d : 0, 0.0), scratch_(l, 0.0), track_mean_(track_mean) {}

void PassAccumulator::add(const HashedEntries& h, const DenseMatrix& m) {
  const std::size_t l = acc_.cols();
  std::fill(scratch_.begin(), scratch_.end(), 0.0);
  for (std::size_t e = 0; e < h.size(); ++e) {
    const double v = h.values[e];
    const auto mrow = m.row(h.buckets[e]);
    for (std::size_t c = 0; c < l; ++c) scratch_[c] += v * mrow[c];
  }
  for (std::size_t e = 0; e < h.size(); ++e) {
    const double v = h.values[e];
    auto arow = acc_.row(h.buckets[e]);
    for (std::size_t c = 0; c < l; ++c) arow[c] += v * scratch_[c];
    if (track_mean_) mean_acc_[h.buckets[e]] += v;
  }
  ++count_;
}

void PassAccumulator::merge(const PassAccumulator& other) {
  if (other.acc_.rows() != acc_.rows() || other.acc_.cols() != acc_.cols() || other.track_mean_ != track_mean_) {
    throw DimensionError("cannot merge accumulators of different shapes");
  }
  auto dst = acc_.data();
  const auto src = other.acc_.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  for (std::size_t i = 0; i < mean_acc_.size(); ++i) mean_acc_[i] += other.mean_acc_[i];
  count_ += other.count_;
}

void PassAccumulator::reset() noexcept {
  acc_.fill(0.0);
  std::fill(mean_acc_.begin(), mean_acc_.end(), 0.0);
  count_ = 0;
}

DenseMatrix PassAccumulator::finalize(const DenseMatrix& m, std::optional<std::span<const double>> center_mean) && {
  if (count_ == 0) throw DataError("pass over an empty dataset");
  DenseMatrix out = std::move(acc_);
  const double n = static_cast<double>(count_);
  for (double& x : out.data()) x /= n;
  if (center_mean) {
    const auto mean = *center_mean;
    if (mean.size() != out.rows()) throw DimensionError("center mean length differs from d");
    std::vector<double> proj(out.cols(), 0.0);  // mᵀM
    for (std::size_t b = 0; b < mean.size(); ++b) {
      if (mean[b] == 0.0) continue;
      const auto mrow = m.row(b);
      for (std::size_t c = 0; c < proj.size(); ++c) proj[c] += mean[b] * mrow[c];
    }
    for (std::size_t b = 0; b < mean.size(); ++b) {
      if (mean[b] == 0.0) continue;
      auto orow = out.row(b);
      for (std::size_t c = 0; c < proj.size(); ++c) orow[c] -= mean[b] * proj[c];
    }
  }
  return out;
}

namespace {

void accumulate_into(PassAccumulator& acc, const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                     std::size_t begin, std::size_t end) {
  auto reader = ds.reader(begin, end);
  SparseRow row;
  HashedEntries hashed;
  while (reader.next(row)) {
    projector.apply(row, hashed);
    acc.add(hashed, m);
  }
}

void check_pass_inputs(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m) {
  if (m.rows() != projector.dim()) {
    throw DimensionError("pass matrix has " + std::to_string(m.rows()) + " rows, expected d = " +
                         std::to_string(projector.dim()));
  }
  if (ds.rows() == 0) throw DataError("pass over an empty dataset");
}

}  // namespace

PassAccumulator accumulate_rows(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                                std::size_t begin, std::size_t end, bool track_mean) {
  if (m.rows() != projector.dim()) throw DimensionError("pass matrix row count differs from d");
  PassAccumulator acc(m.rows(), m.cols(), track_mean);
  accumulate_into(acc, ds, projector, m, begin, end);
  return acc;
}

PassAccumulator accumulate_pass(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                                bool track_mean, const PassOptions& options) {
  check_pass_inputs(ds, projector, m);
  const std::size_t n = ds.rows();
  const std::size_t d = m.rows();
  const std::size_t l = m.cols();
  PassAccumulator total(d, l, track_mean);

  if (!options.deterministic_reduce && options.threads > 1) {
    // Contiguous blocks, merged in completion order.
    const std::size_t workers = std::min(options.threads, n);
    std::mutex merge_mutex;
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            PassAccumulator local = accumulate_rows(ds, projector, m, begin, end, track_mean);
            std::lock_guard lock(merge_mutex);
            total.merge(local);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    return total;
  }

  const std::size_t chunks = (n + kPassChunkRows - 1) / kPassChunkRows;
  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, chunks);
  std::vector<PassAccumulator> partials;
  partials.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) partials.emplace_back(d, l, track_mean);

  for (std::size_t wave = 0; wave < chunks; wave += workers) {
    const std::size_t in_wave = std::min(workers, chunks - wave);
    auto run_chunk = [&](std::size_t w) {
      const std::size_t chunk = wave + w;
      partials[w].reset();
      accumulate_into(partials[w], ds, projector, m, chunk * kPassChunkRows, std::min(n, (chunk + 1) * kPassChunkRows));
    };
    if (in_wave == 1) {
      run_chunk(0);
    } else {
      std::vector<std::exception_ptr> errors(in_wave);
      {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < in_wave; ++w) {
          pool.emplace_back([&, w] {
            try {
              run_chunk(w);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
      }
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t w = 0; w < in_wave; ++w) total.merge(partials[w]);
  }
  return total;
}

DenseMatrix pass(const SparseDataset& ds, const Projector& projector, const DenseMatrix& m,
                 std::optional<std::span<const double>> center_mean, const PassOptions& options) {
  PassAccumulator acc = accumulate_pass(ds, projector, m, false, options);
  return std::move(acc).finalize(m, center_mean);
}

PcaModel::PcaModel(DenseMatrix loadings, std::vector<double> singular_values,
                   std::optional<std::vector<double>> hashed_mean, Projector projector, std::size_t n_fit)
    : loadings_(std::move(loadings)),
      singular_values_(std::move(singular_values)),
      hashed_mean_(std::move(hashed_mean)),
      projector_(std::move(projector)),
      n_fit_(n_fit) {
  if (loadings_.cols() != singular_values_.size() || singular_values_.empty()) {
    throw DimensionError("model loadings and singular values disagree on k");
  }
  if (loadings_.rows() != projector_.dim()) throw DimensionError("model loadings have the wrong number of rows for d");
  if (hashed_mean_ && hashed_mean_->size() != loadings_.rows()) throw DimensionError("model mean length differs from d");
  for (std::size_t j = 0; j < singular_values_.size(); ++j) {
    if (!(singular_values_[j] >= 0.0) || (j > 0 && singular_values_[j] > singular_values_[j - 1])) {
      throw DataError("singular values must be nonnegative and nonincreasing");
    }
  }
  whitening_ = pinv_diag(singular_values_);
}

void PcaModel::project_unwhitened(const SparseRow& x, std::span<double> out) const {
  const std::size_t k = this->k();
  if (out.size() != k) throw DimensionError("projection output must have length k");
  std::fill(out.begin(), out.end(), 0.0);
  if (!hashed_mean_) {
    for (std::size_t t = 0; t < x.nnz(); ++t) {
      const auto [bucket, sign] = projector_.index(x.indices[t]);
      const double v = sign * x.values[t];
      const auto lrow = loadings_.row(bucket);
      for (std::size_t c = 0; c < k; ++c) out[c] += v * lrow[c];
    }
    return;
  }
  std::vector<double> centered = projector_.apply(x);
  const auto& mean = *hashed_mean_;
  for (std::size_t b = 0; b < centered.size(); ++b) {
    const double v = centered[b] - mean[b];
    if (v == 0.0) continue;
    const auto lrow = loadings_.row(b);
    for (std::size_t c = 0; c < k; ++c) out[c] += v * lrow[c];
  }
}

void PcaModel::project_whitened(const SparseRow& x, std::span<double> out) const {
  project_unwhitened(x, out);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] *= whitening_[c];
}

std::vector<double> PcaModel::project_unwhitened(const SparseRow& x) const {
  std::vector<double> out(k());
  project_unwhitened(x, out);
  return out;
}

std::vector<double> PcaModel::project_whitened(const SparseRow& x) const {
  std::vector<double> out(k());
  project_whitened(x, out);
  return out;
}

PcaModel fit(const SparseDataset& ds, const HpcaConfig& cfg) {
  cfg.validate();
  const std::size_t n = ds.rows();
  const std::size_t d = cfg.d();
  const std::size_t k = cfg.k;
  const std::size_t l = cfg.probes();
  if (n < 2) throw DataError("fit needs at least 2 rows, got " + std::to_string(n));
  if (k >= n) throw DataError("k = " + std::to_string(k) + " must be smaller than n = " + std::to_string(n));
  const PassOptions options = cfg.pass_options();

  // First pass: Y = C·Ω, collecting Σ h_i alongside when centering.
  DenseMatrix probe = gaussian_matrix(d, l, cfg.seed_omega);
  PassAccumulator first = accumulate_pass(ds, cfg.projector, probe, cfg.center, options);
  std::optional<std::vector<double>> mean;
  if (cfg.center) {
    mean = first.mean_sum();
    for (double& x : *mean) x /= static_cast<double>(n);
  }
  auto mean_span = [&]() -> std::optional<std::span<const double>> {
    if (!mean) return std::nullopt;
    return std::span<const double>(*mean);
  };
  DenseMatrix y = std::move(first).finalize(probe, mean_span());
  probe.release();

  if (max_abs(y) == 0.0) {
    // The (centered) hashed covariance annihilates every probe: it is zero,
    // so Z = C·Q = 0 for any basis Q and every singular value is zero.
    return PcaModel(DenseMatrix(d, k), std::vector<double>(k, 0.0), std::move(mean), cfg.projector, n);
  }

  DenseMatrix q = gram_schmidt(y);
  y.release();

  // Second pass: Z = C·Q.
  DenseMatrix z = pass(ds, cfg.projector, q, mean_span(), options);
  q.release();

  const EigenDecomposition eig = sym_eig(multiply_at_b(z, z));
  std::vector<double> sigma(k);
  std::vector<double> sigma_sq(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double lambda = std::max(eig.eigenvalues[j], 0.0);
    sigma_sq[j] = std::sqrt(lambda);
    sigma[j] = std::sqrt(sigma_sq[j]);
  }
  const std::vector<double> inv_sq = pinv_diag(sigma_sq);

  DenseMatrix loadings(d, k);
  for (std::size_t r = 0; r < d; ++r) {
    const auto zrow = z.row(r);
    auto out = loadings.row(r);
    for (std::size_t t = 0; t < l; ++t) {
      if (zrow[t] == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) out[j] += zrow[t] * eig.eigenvectors(t, j);
    }
    for (std::size_t j = 0; j < k; ++j) out[j] *= inv_sq[j];
  }
  z.release();
  normalize_column_signs(loadings);
  return PcaModel(std::move(loadings), std::move(sigma), std::move(mean), cfg.projector, n);
}

void transform(const SparseDataset& ds, const PcaModel& model, const ScoreSink& sink, bool whitened) {
  auto reader = ds.reader();
  SparseRow row;
  std::vector<double> scores(model.k());
  std::size_t i = 0;
  while (reader.next(row)) {
    if (whitened) {
      model.project_whitened(row, scores);
    } else {
      model.project_unwhitened(row, scores);
    }
    sink(i++, scores);
  }
}

PcaModel fit_transform(const SparseDataset& ds, const HpcaConfig& cfg, const ScoreSink& sink) {
  PcaModel model = fit(ds, cfg);
  transform(ds, model, sink, true);
  return model;
}

FitTransformResult fit_transform(const SparseDataset& ds, const HpcaConfig& cfg) {
  DenseMatrix scores(ds.rows(), cfg.k);
  PcaModel model = fit_transform(ds, cfg, [&](std::size_t i, std::span<const double> s) {
    std::copy(s.begin(), s.end(), scores.row(i).begin());
  });
  return {std::move(model), std::move(scores)};
}

std::size_t peak_accumulator_bytes(std::size_t d, std::size_t l, bool center) noexcept {
  return 3 * d * l * sizeof(double) + (center ? 3 * d * sizeof(double) : 0);
}

}  // namespace hpca
