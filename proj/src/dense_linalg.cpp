#include "hpca/dense_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hpca/errors.hpp"
#include "hpca/random.hpp"

namespace hpca {

namespace {

constexpr double kRankTolerance = 1e-12;
constexpr double kAsymmetryTolerance = 1e-9;
constexpr double kJacobiTolerance = 1e-12;
constexpr int kJacobiMaxSweeps = 100;
constexpr int kQlMaxIterations = 60;
constexpr double kPinvTolerance = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Row-major rows of `basis` are orthonormal; removes their components from
// `v` twice.
void orthogonalize_against(const DenseMatrix& basis, std::size_t count, std::span<double> v) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto q = basis.row(i);
      axpy(-dot(q, v), q, v);
    }
  }
}

// Checks symmetry to kAsymmetryTolerance * max|a| and returns (a + aᵀ)/2.
DenseMatrix checked_symmetric(const DenseMatrix& input, const char* who) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw DimensionError(std::string(who) + " needs a square matrix");
  const double scale = max_abs(input);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > kAsymmetryTolerance * scale) {
        throw AsymmetricMatrix(std::string(who) + ": entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") differs from its transpose beyond tolerance");
      }
    }
  }
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  return a;
}

// Sorts eigenpairs by value, descending and stable; row j of `vt` is the vector for values[j].
EigenDecomposition sorted_eigenpairs(const std::vector<double>& values, const DenseMatrix& vt) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] > values[y]; });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = values[order[j]];
    const auto v = vt.row(order[j]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, j) = v[r];
  }
  normalize_column_signs(out.eigenvectors);
  return out;
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void DenseMatrix::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

void DenseMatrix::release() noexcept {
  rows_ = cols_ = 0;
  std::vector<double>().swap(data_);
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("multiply: inner dimensions differ");
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t t = 0; t < a.cols(); ++t) {
      const double x = a(i, t);
      if (x != 0.0) axpy(x, b.row(t), dst);
    }
  }
  return out;
}

DenseMatrix multiply_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("multiply_at_b: row counts differ");
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto brow = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double x = a(r, i);
      if (x != 0.0) axpy(x, brow, out.row(i));
    }
  }
  return out;
}

double frobenius_norm(const DenseMatrix& a) { return norm2(a.data()); }

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double orthonormality_error(const DenseMatrix& a) {
  const DenseMatrix gram = multiply_at_b(a, a);
  return max_abs_diff(gram, DenseMatrix::identity(gram.rows()));
}

void normalize_column_signs(DenseMatrix& a) {
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double best = 0.0;
    double best_value = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (std::abs(a(r, c)) > best) {
        best = std::abs(a(r, c));
        best_value = a(r, c);
      }
    }
    if (best_value < 0.0)
      for (std::size_t r = 0; r < a.rows(); ++r) a(r, c) = -a(r, c);
  }
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  DenseMatrix m(rows, cols);
  NormalStream normals(seed);
  for (double& x : m.data()) x = normals.next();
  return m;
}

DenseMatrix gram_schmidt(const DenseMatrix& y) {
  const std::size_t d = y.rows();
  const std::size_t k = y.cols();
  if (k == 0 || d < k) {
    throw DimensionError("gram_schmidt needs d >= k >= 1, got " + std::to_string(d) + "x" + std::to_string(k));
  }
  // Columns become contiguous rows while orthogonalizing.
  DenseMatrix work = y.transpose();
  for (std::size_t j = 0; j < k; ++j) {
    auto v = work.row(j);
    const double original = norm2(v);
    orthogonalize_against(work, j, v);
    const double remaining = norm2(v);
    if (!(original > 0.0) || !(remaining > kRankTolerance * original)) {
      throw RankDeficient(j, "gram_schmidt: column " + std::to_string(j) +
                                 " is numerically dependent on earlier columns");
    }
    for (double& x : v) x /= remaining;
  }
  return work.transpose();
}

EigenDecomposition sym_eig(const DenseMatrix& input) {
  DenseMatrix a = checked_symmetric(input, "sym_eig");
  const std::size_t n = a.rows();

  // Rows of vt are the eigenvectors, so each rotation touches two contiguous rows.
  DenseMatrix vt = DenseMatrix::identity(n);
  const double target = kJacobiTolerance * frobenius_norm(a);
  std::vector<double> new_p(n), new_q(n);

  bool converged = false;
  for (int sweep = 0; sweep <= kJacobiMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off) <= target) {
      converged = true;
      break;
    }
    if (sweep == kJacobiMaxSweeps) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 4 && std::abs(app) + g == std::abs(app) && std::abs(aqq) + g == std::abs(aqq)) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        double t = std::abs(theta) > 1e150 ? 0.5 / std::abs(theta)
                                           : 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const auto rp = a.row(p);
        const auto rq = a.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          new_p[k] = c * rp[k] - s * rq[k];
          new_q[k] = s * rp[k] + c * rq[k];
        }
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          a(p, k) = a(k, p) = new_p[k];
          a(q, k) = a(k, q) = new_q[k];
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;

        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vp[k];
          const double y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
  }
  if (!converged) {
    throw NoConvergence("sym_eig: Jacobi iteration did not converge in " + std::to_string(kJacobiMaxSweeps) +
                        " sweeps");
  }

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
  return sorted_eigenpairs(values, vt);
}

// Householder reduction to tridiagonal form followed by implicit QL with
// shifts. `w` holds the transposed accumulated transform (row j = column j),
// so every inner loop runs over contiguous memory.
EigenDecomposition sym_eig_tridiagonal(const DenseMatrix& input) {
  DenseMatrix w = checked_symmetric(input, "sym_eig_tridiagonal");
  const std::size_t n = w.rows();
  if (n == 0) return {};
  std::vector<double> d(n), e(n, 0.0);

  for (std::size_t j = 0; j < n; ++j) d[j] = w(j, n - 1);
  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = w(j, i - 1);
        w(j, i) = 0.0;
        w(i, j) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        w(i, j) = f;
        const auto wj = w.row(j);
        g = e[j] + wj[j] * f;
        for (std::size_t k = j + 1; k < i; ++k) {
          g += wj[k] * d[k];
          e[k] += wj[k] * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        const auto wj = w.row(j);
        for (std::size_t k = j; k < i; ++k) wj[k] -= f * e[k] + g * d[k];
        d[j] = wj[i - 1];
        wj[i] = 0.0;
      }
    }
    d[i] = h;
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    w(i, n - 1) = w(i, i);
    w(i, i) = 1.0;
    const double h = d[i + 1];
    const auto wi1 = w.row(i + 1);
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = wi1[k] / h;
      for (std::size_t j = 0; j <= i; ++j) {
        const auto wj = w.row(j);
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += wi1[k] * wj[k];
        for (std::size_t k = 0; k <= i; ++k) wj[k] -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) wi1[k] = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = w(j, n - 1);
    w(j, n - 1) = 0.0;
  }
  w(n - 1, n - 1) = 1.0;

  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n && std::abs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > kQlMaxIterations) {
          throw NoConvergence("sym_eig_tridiagonal: QL iteration did not converge for eigenvalue " +
                              std::to_string(l));
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = m; i-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          const auto wa = w.row(i);
          const auto wb = w.row(i + 1);
          for (std::size_t k = 0; k < n; ++k) {
            const double t = wb[k];
            wb[k] = s * wa[k] + c * t;
            wa[k] = c * wa[k] - s * t;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
  return sorted_eigenpairs(d, w);
}

std::vector<double> pinv_diag(std::span<const double> sigma) {
  double largest = 0.0;
  for (double s : sigma) {
    if (!(s >= 0.0)) throw NumericError("pinv_diag: entries must be nonnegative");
    largest = std::max(largest, s);
  }
  std::vector<double> out(sigma.size(), 0.0);
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (sigma[i] > kPinvTolerance * largest) out[i] = 1.0 / sigma[i];
  return out;
}

SvdResult oracle_svd(const DenseMatrix& x) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (n * p > kOracleMaxEntries) {
    throw GuardError("oracle_size", "oracle_svd is limited to n*p <= " + std::to_string(kOracleMaxEntries) +
                                        ", got " + std::to_string(n) + "x" + std::to_string(p));
  }
  const bool tall = n >= p;
  const std::size_t r = std::min(n, p);

  // Eigenvectors of the small Gram matrix give one side; mapping them
  // through X gives the other side scaled by the singular values.
  const DenseMatrix gram = tall ? multiply_at_b(x, x) : multiply_at_b(x.transpose(), x.transpose());
  const EigenDecomposition eig = sym_eig(gram);
  const DenseMatrix& small_side = eig.eigenvectors;  // r x r
  const DenseMatrix mapped = tall ? multiply(x, small_side) : multiply_at_b(x, small_side);
  const std::size_t m = mapped.rows();

  std::vector<double> sigma(r);
  for (std::size_t j = 0; j < r; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += mapped(i, j) * mapped(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
  const double largest = r > 0 ? sigma[order[0]] : 0.0;

  // Normalized mapped vectors, re-orthogonalized in decreasing-sigma order;
  // numerically null directions are completed from the standard basis.
  DenseMatrix basis(r, m);
  std::size_t next_candidate = 0;
  for (std::size_t j = 0; j < r; ++j) {
    auto v = basis.row(j);
    const std::size_t src = order[j];
    double norm = 0.0;
    if (sigma[src] > kRankTolerance * largest) {
      for (std::size_t i = 0; i < m; ++i) v[i] = mapped(i, src) / sigma[src];
      orthogonalize_against(basis, j, v);
      norm = norm2(v);
    }
    while (!(norm > 0.5)) {
      std::fill(v.begin(), v.end(), 0.0);
      v[next_candidate++ % m] = 1.0;
      orthogonalize_against(basis, j, v);
      norm = norm2(v);
    }
    for (double& e : v) e /= norm;
  }

  SvdResult out;
  out.sigma.resize(r);
  DenseMatrix small_sorted(r, r);
  for (std::size_t j = 0; j < r; ++j) {
    out.sigma[j] = sigma[order[j]];
    for (std::size_t i = 0; i < r; ++i) small_sorted(i, j) = small_side(i, order[j]);
  }
  DenseMatrix big = basis.transpose();  // m x r
  // Fix signs on V, carry the flips over to U.
  DenseMatrix& v_side = tall ? small_sorted : big;
  DenseMatrix& u_side = tall ? big : small_sorted;
  DenseMatrix before = v_side;
  normalize_column_signs(v_side);
  for (std::size_t j = 0; j < r; ++j) {
    const bool flipped = v_side.rows() > 0 && [&] {
      for (std::size_t i = 0; i < v_side.rows(); ++i)
        if (before(i, j) != 0.0) return before(i, j) != v_side(i, j);
      return false;
    }();
    if (flipped)
      for (std::size_t i = 0; i < u_side.rows(); ++i) u_side(i, j) = -u_side(i, j);
  }
  out.u = std::move(u_side);
  out.v = std::move(v_side);
  return out;
}

}  // namespace hpca
