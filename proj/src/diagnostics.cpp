#include "hpca/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>
#include <thread>

#include "hpca/errors.hpp"
#include "hpca/text_format.hpp"

namespace hpca {

namespace {

constexpr double kOrthonormalTolerance = 1e-8;

std::size_t worker_count(std::size_t work_items) {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(hw, work_items));
}

// Runs body(i) for i in [0, n) on interleaved indices so triangular loops balance.
template <class Body>
void parallel_rows(std::size_t n, Body body) {
  const std::size_t workers = worker_count(n / 64 + 1);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
}

double dot(const double* a, const double* b, std::size_t len) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t t = 0;
  for (; t + 4 <= len; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  for (; t < len; ++t) s0 += a[t] * b[t];
  return (s0 + s1) + (s2 + s3);
}

double sparse_dot(const SparseRow& a, const SparseRow& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() && j < b.nnz()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (b.indices[j] < a.indices[i]) {
      ++j;
    } else {
      s += a.values[i++] * b.values[j++];
    }
  }
  return s;
}

std::vector<SparseRow> load_rows(const SparseDataset& ds) {
  std::vector<SparseRow> rows;
  rows.reserve(ds.rows());
  auto reader = ds.reader();
  SparseRow row;
  while (reader.next(row)) rows.push_back(row);
  return rows;
}

// ‖v‖∞/‖v‖₂ with the 2-norm scaled by the max entry to avoid overflow; 0 for v = 0.
struct RatioAccumulator {
  double inf = 0.0;
  double sum = 0.0;  // Σ (v/inf)², maintained with rescaling
  void add(double v) {
    const double a = std::abs(v);
    if (a == 0.0) return;
    if (a > inf) {
      sum = sum * (inf / a) * (inf / a) + 1.0;
      inf = a;
    } else {
      sum += (a / inf) * (a / inf);
    }
  }
  double ratio() const { return inf == 0.0 ? 0.0 : 1.0 / std::sqrt(sum); }
};

double row_ratio(const SparseRow& x) {
  RatioAccumulator acc;
  for (double v : x.values) acc.add(v);
  return acc.ratio();
}

double pair_ratio_sparse(const SparseRow& a, const SparseRow& b) {
  RatioAccumulator acc;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() || j < b.nnz()) {
    if (j == b.nnz() || (i < a.nnz() && a.indices[i] < b.indices[j])) {
      acc.add(a.values[i++]);
    } else if (i == a.nnz() || b.indices[j] < a.indices[i]) {
      acc.add(b.values[j++]);
    } else {
      acc.add(a.values[i++] - b.values[j++]);
    }
  }
  return acc.ratio();
}

double pair_ratio_dense(std::span<const double> a, std::span<const double> b) {
  double m0 = 0, m1 = 0, s0 = 0, s1 = 0;
  std::size_t t = 0;
  const std::size_t len = a.size();
  for (; t + 2 <= len; t += 2) {
    const double d0 = a[t] - b[t];
    const double d1 = a[t + 1] - b[t + 1];
    m0 = std::max(m0, std::abs(d0));
    m1 = std::max(m1, std::abs(d1));
    s0 += d0 * d0;
    s1 += d1 * d1;
  }
  for (; t < len; ++t) {
    const double d0 = a[t] - b[t];
    m0 = std::max(m0, std::abs(d0));
    s0 += d0 * d0;
  }
  const double inf = std::max(m0, m1);
  const double sum = s0 + s1;
  if (inf == 0.0) return 0.0;
  // Unscaled squares can under- or overflow at the extremes; redo those with scaling.
  if (std::isfinite(sum) && inf > 1e-150) return inf / std::sqrt(sum);
  RatioAccumulator acc;
  for (t = 0; t < len; ++t) acc.add(a[t] - b[t]);
  return acc.ratio();
}

// Eigen-decomposition of the (optionally double-centered) Gram matrix.
EigenDecomposition gram_eig(const DenseMatrix& gram, bool center) {
  if (!center) return sym_eig_tridiagonal(gram);
  const std::size_t n = gram.rows();
  std::vector<double> row_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row_mean[i] += gram(i, j);
    total += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
  }
  total /= static_cast<double>(n) * static_cast<double>(n);
  DenseMatrix centered(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) centered(i, j) = gram(i, j) - row_mean[i] - row_mean[j] + total;
  return sym_eig_tridiagonal(centered);
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(',');
    append_double(out, values[i]);
  }
  return out;
}

}  // namespace

CanonicalAngles canonical_angles(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("canonical_angles: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         ", B is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (orthonormality_error(a) > kOrthonormalTolerance || orthonormality_error(b) > kOrthonormalTolerance) {
    throw NumericError("canonical_angles: inputs must have orthonormal columns");
  }
  const DenseMatrix atb = multiply_at_b(a, b);
  CanonicalAngles out;
  out.cosines = oracle_svd(atb).sigma;
  for (double& c : out.cosines) c = std::clamp(c, 0.0, 1.0);

  DenseMatrix residual = multiply(a, atb);
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) residual(r, c) = b(r, c) - residual(r, c);
  out.sin_phi_frobenius = std::min(frobenius_norm(residual), std::sqrt(static_cast<double>(a.cols())));
  return out;
}

Coherence coherence_eta(const SparseDataset& ds, bool rows_only) {
  const std::size_t n = ds.rows();
  if (!rows_only && n > kEtaPairwiseMaxRows) {
    throw GuardError("eta_pairwise", "pairwise coherence needs n <= " + std::to_string(kEtaPairwiseMaxRows) +
                                         ", got n = " + std::to_string(n) + "; use the rows-only lower bound");
  }
  const auto rows = load_rows(ds);
  Coherence out;
  out.lower_bound = rows_only;
  for (const auto& row : rows) out.eta = std::max(out.eta, row_ratio(row));
  if (rows_only || n < 2) return out;

  std::mutex mu;
  const bool dense = n * ds.cols() <= kExactMaxEntries;
  const DenseMatrix x = dense ? densify(ds) : DenseMatrix{};
  parallel_rows(n, [&](std::size_t i) {
    double local = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      local = std::max(local, dense ? pair_ratio_dense(x.row(i), x.row(j)) : pair_ratio_sparse(rows[i], rows[j]));
    }
    std::lock_guard lock(mu);
    out.eta = std::max(out.eta, local);
  });
  return out;
}

namespace {

DenseMatrix symmetric_row_products(const DenseMatrix& x) {
  const std::size_t n = x.rows();
  DenseMatrix g(n, n);
  parallel_rows(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(x.row(i).data(), x.row(j).data(), x.cols());
      g(i, j) = v;
      g(j, i) = v;
    }
  });
  return g;
}

// Exact Gram matrix XXᵀ; dense when X fits the exact-size budget, sparse merges otherwise.
DenseMatrix exact_gram(const SparseDataset& ds, const std::vector<SparseRow>& rows) {
  if (ds.rows() * ds.cols() <= kExactMaxEntries) return symmetric_row_products(densify(ds));
  const std::size_t n = rows.size();
  DenseMatrix g(n, n);
  parallel_rows(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = sparse_dot(rows[i], rows[j]);
      g(i, j) = v;
      g(j, i) = v;
    }
  });
  return g;
}

// Hashed Gram matrix (XH)(XH)ᵀ through dense hashed rows.
DenseMatrix hashed_gram(const std::vector<SparseRow>& rows, const Projector& projector) {
  DenseMatrix xh(rows.size(), projector.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto h = projector.apply(rows[i]);
    std::copy(h.begin(), h.end(), xh.row(i).begin());
  }
  return symmetric_row_products(xh);
}

void check_gram_guard(std::size_t n) {
  if (n > kGramMaxRows) {
    throw GuardError("gram_rows", "Gram diagnostics need n <= " + std::to_string(kGramMaxRows) + ", got n = " +
                                      std::to_string(n));
  }
}

double gram_distance(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.data().size(); ++t) {
    const double diff = a.data()[t] - b.data()[t];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

double gram_perturbation(const SparseDataset& ds, const Projector& projector) {
  check_gram_guard(ds.rows());
  if (projector.is_identity()) {
    if (projector.dim() < ds.cols()) {
      throw DimensionError("identity projector p = " + std::to_string(projector.dim()) + " is smaller than dataset p = " +
                           std::to_string(ds.cols()));
    }
    return 0.0;
  }
  const auto rows = load_rows(ds);
  return gram_distance(hashed_gram(rows, projector), exact_gram(ds, rows));
}

std::size_t recommended_d(std::size_t n, double delta, double epsilon) {
  if (n == 0 || !(delta > 0.0 && delta < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("recommended_d needs n >= 1, 0 < delta < 1, epsilon > 0");
  }
  const double raw = 144.0 * std::log(static_cast<double>(n) / delta) / (epsilon * epsilon);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw)));
}

double eta_threshold(std::size_t n, std::size_t d, double delta, double epsilon) {
  if (n == 0 || d == 0 || !(delta > 0.0 && delta < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("eta_threshold needs n, d >= 1, 0 < delta < 1, epsilon > 0");
  }
  const double ln_n = std::log(static_cast<double>(n) / delta);
  const double ln_d = std::log(static_cast<double>(d) / delta);
  return epsilon / (18.0 * std::sqrt(2.0 * ln_n * ln_d));
}

ExactReference exact_reference(const SparseDataset& ds, std::size_t k, bool center) {
  check_gram_guard(ds.rows());
  if (ds.rows() * ds.cols() > kExactMaxEntries) {
    throw GuardError("exact_size", "exact reference needs n*p <= " + std::to_string(kExactMaxEntries) + ", got " +
                                       std::to_string(ds.rows()) + "x" + std::to_string(ds.cols()));
  }
  if (k == 0 || k >= ds.rows()) throw ConfigError("exact reference needs 1 <= k < n");
  const auto rows = load_rows(ds);

  ExactReference ref;
  ref.n = ds.rows();
  ref.p = ds.cols();
  ref.k = k;
  ref.centered = center;
  ref.gram = exact_gram(ds, rows);
  auto eig = gram_eig(ref.gram, center);
  ref.top_left = DenseMatrix(ref.n, k);
  for (std::size_t r = 0; r < ref.n; ++r)
    for (std::size_t c = 0; c < k; ++c) ref.top_left(r, c) = eig.eigenvectors(r, c);
  ref.eigenvalues = std::move(eig.eigenvalues);
  ref.eta = coherence_eta(ds, ref.n > kEtaPairwiseMaxRows);
  return ref;
}

DiagnosticsReport compare_to_reference(const ExactReference& ref, const SparseDataset& ds, const HpcaConfig& cfg,
                                       double epsilon, double delta) {
  cfg.validate();
  if (ref.n != ds.rows() || ref.p != ds.cols() || ref.k != cfg.k || ref.centered != cfg.center) {
    throw ConfigError("exact reference was built for a different dataset or configuration");
  }
  auto [model, scores] = fit_transform(ds, cfg);

  DiagnosticsReport report;
  report.n = ref.n;
  report.p = ref.p;
  report.k = cfg.k;
  report.d = cfg.d();
  report.epsilon = epsilon;
  report.delta = delta;

  const auto angles = canonical_angles(ref.top_left, gram_schmidt(scores));
  report.cosines = angles.cosines;
  report.sin_phi_frobenius = angles.sin_phi_frobenius;

  report.eta = ref.eta.eta;
  report.eta_lower_bound = ref.eta.lower_bound;
  report.gram_perturbation_fro =
      cfg.projector.is_identity() ? 0.0 : gram_distance(hashed_gram(load_rows(ds), cfg.projector), ref.gram);

  const double n = static_cast<double>(ref.n);
  report.alpha = ref.k < ref.eigenvalues.size() ? std::max(0.0, ref.eigenvalues[ref.k]) / n : 0.0;
  const double sigma_k = model.singular_values().back();
  report.gamma = sigma_k * sigma_k - report.alpha;
  report.gap_violated = !(report.gamma > 0.0);

  report.recommended_d = recommended_d(ref.n, delta, epsilon);
  report.eta_threshold = eta_threshold(ref.n, report.d, delta, epsilon);
  report.eta_condition_met = report.eta <= report.eta_threshold;
  return report;
}

DiagnosticsReport compare_to_exact(const SparseDataset& ds, const HpcaConfig& cfg, double epsilon, double delta) {
  cfg.validate();
  return compare_to_reference(exact_reference(ds, cfg.k, cfg.center), ds, cfg, epsilon, delta);
}

std::string DiagnosticsReport::to_text() const {
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) {
    out.append(key);
    out.push_back('=');
    out.append(value);
    out.push_back('\n');
  };
  auto num = [](double v) { return format_double(v); };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };

  line("n", std::to_string(n));
  line("p", std::to_string(p));
  line("k", std::to_string(k));
  line("d", std::to_string(d));
  line("sin_phi_frobenius", num(sin_phi_frobenius));
  line("cosines", join(cosines));
  line("eta", num(eta));
  line("eta_mode", eta_lower_bound ? "rows_only_lower_bound" : "pairwise");
  line("gram_perturbation_fro", num(gram_perturbation_fro));
  line("alpha", num(alpha));
  line("gamma", num(gamma));
  line("gap_violated", flag(gap_violated));
  line("epsilon", num(epsilon));
  line("delta", num(delta));
  line("recommended_d", std::to_string(recommended_d));
  line("recommended_d_formula", "ceil(144*ln(n/delta)/epsilon^2)");
  line("eta_threshold", num(eta_threshold));
  line("eta_threshold_formula", "epsilon/(18*sqrt(2*ln(n/delta)*ln(d/delta)))");
  line("eta_condition_met", flag(eta_condition_met));
  line("dense_basis_bytes", std::to_string(dense_basis_bytes(p, k)));
  line("hashed_basis_bytes", std::to_string(dense_basis_bytes(d, k)));
  line("basis_bytes_formula", "dim*k*8");
  return out;
}

}  // namespace hpca
