#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hpca/dense_linalg.hpp"
#include "hpca/hpca.hpp"
#include "hpca/sparse_io.hpp"

namespace hpca {

struct CanonicalAngles {
  std::vector<double> cosines;  // singular values of AᵀB, clamped to [0, 1]
  double sin_phi_frobenius = 0.0;
};

/// Angles between span(A) and span(B); both n x k with orthonormal columns.
/// ‖sin Φ‖_F is evaluated as ‖B - A(AᵀB)‖_F, which equals √Σ(1 - cos²)
/// without the cancellation near zero angles.
CanonicalAngles canonical_angles(const DenseMatrix& a, const DenseMatrix& b);

inline constexpr std::size_t kEtaPairwiseMaxRows = 10'000;
inline constexpr std::size_t kGramMaxRows = 2'000;
inline constexpr std::size_t kExactMaxEntries = 10'000'000;

struct Coherence {
  double eta = 0.0;
  bool lower_bound = false;  // true when pairs were skipped
};

/// η = max over rows of ‖x‖∞/‖x‖₂ and over row pairs of ‖x-x'‖∞/‖x-x'‖₂.
/// Zero rows and identical pairs are skipped. Pairwise mode needs
/// n <= kEtaPairwiseMaxRows; `rows_only` skips pairs and reports a lower bound.
Coherence coherence_eta(const SparseDataset& ds, bool rows_only = false);

/// ‖(XH)(XH)ᵀ - XXᵀ‖_F; n <= kGramMaxRows.
double gram_perturbation(const SparseDataset& ds, const Projector& projector);

/// ceil(144 ln(n/δ) / ε²).
std::size_t recommended_d(std::size_t n, double delta, double epsilon);
/// ε / (18 √(2 ln(n/δ) ln(d/δ))).
double eta_threshold(std::size_t n, std::size_t d, double delta, double epsilon);
/// Bytes of a dense dim x k basis of doubles.
inline std::uint64_t dense_basis_bytes(std::uint64_t dim, std::uint64_t k) { return dim * k * 8; }

struct DiagnosticsReport {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> cosines;
  double sin_phi_frobenius = 0.0;
  double eta = 0.0;
  bool eta_lower_bound = false;
  double gram_perturbation_fro = 0.0;
  double alpha = 0.0;  // covariance scale: λ_{k+1}(XXᵀ) / n
  double gamma = 0.0;  // min(Σ̃₁²) - alpha, reported raw
  bool gap_violated = false;
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t recommended_d = 0;
  double eta_threshold = 0.0;
  bool eta_condition_met = false;

  /// Flat key=value block, one field per line.
  std::string to_text() const;
};

/// Exact quantities of X that do not depend on the hash draw, computed once per dataset.
struct ExactReference {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t k = 0;
  bool centered = false;
  DenseMatrix gram;                  // XXᵀ of the raw rows
  DenseMatrix top_left;              // U₁, n x k, of X (mean-subtracted if centered)
  std::vector<double> eigenvalues;   // of the (centered) Gram matrix, nonincreasing
  Coherence eta;
};

/// Guards: n <= kGramMaxRows and n*p <= kExactMaxEntries.
ExactReference exact_reference(const SparseDataset& ds, std::size_t k, bool center);

DiagnosticsReport compare_to_reference(const ExactReference& ref, const SparseDataset& ds, const HpcaConfig& cfg,
                                       double epsilon, double delta);

DiagnosticsReport compare_to_exact(const SparseDataset& ds, const HpcaConfig& cfg, double epsilon, double delta);

}  // namespace hpca
