#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hpca {

/// Small dense row-major matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transpose() const;
  void fill(double value) noexcept;

  /// Frees storage; the matrix becomes 0x0.
  void release() noexcept;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ·b without forming aᵀ.
DenseMatrix multiply_at_b(const DenseMatrix& a, const DenseMatrix& b);

double frobenius_norm(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);
/// max |aᵢⱼ - bᵢⱼ|; shapes must agree.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
/// max |(aᵀa - I)ᵢⱼ|.
double orthonormality_error(const DenseMatrix& a);

/// Flips each column so its largest-magnitude entry (first one on ties) is nonnegative.
void normalize_column_signs(DenseMatrix& a);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // nonincreasing
  DenseMatrix eigenvectors;         // columns
};

struct SvdResult {
  DenseMatrix u;              // n x r, r = min(n, p)
  std::vector<double> sigma;  // nonincreasing
  DenseMatrix v;              // p x r
};

/// i.i.d. N(0,1) entries, Box-Muller over the splitmix64 stream of `seed`, filled row-major.
DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Orthonormal basis of span(Y) by modified Gram-Schmidt with one
/// re-orthogonalization pass. Throws RankDeficient when a column retains
/// less than 1e-12 of its original norm.
DenseMatrix gram_schmidt(const DenseMatrix& y);

/// Cyclic Jacobi eigensolver for symmetric matrices.
EigenDecomposition sym_eig(const DenseMatrix& a);

/// Householder tridiagonalization plus implicit QL; O(n³) with a small
/// constant, for the large reference problems where Jacobi is too slow.
/// Same output conventions as sym_eig.
EigenDecomposition sym_eig_tridiagonal(const DenseMatrix& a);

/// Pseudo-inverse of a nonnegative diagonal: 1/s above 1e-12 * max, else 0.
std::vector<double> pinv_diag(std::span<const double> sigma);

inline constexpr std::size_t kOracleMaxEntries = 1'000'000;

/// Brute-force thin SVD through the eigendecomposition of the smaller Gram
/// matrix. Singular values are recomputed as column norms of the mapped
/// vectors so that zero singular values come out at roundoff level.
SvdResult oracle_svd(const DenseMatrix& x);

}  // namespace hpca
