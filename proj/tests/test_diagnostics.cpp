#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "hpca/diagnostics.hpp"
#include "hpca/errors.hpp"
#include "hpca/random.hpp"
#include "test_support.hpp"

using namespace hpca;
using namespace hpca::testing;

namespace {

DenseMatrix column(std::vector<double> v) {
  const std::size_t n = v.size();
  return DenseMatrix(n, 1, std::move(v));
}

// Brute-force ‖(XH)(XH)ᵀ - XXᵀ‖_F from dense matrices.
double gram_oracle(const SparseDataset& ds, const HashSpec& spec) {
  const auto x = densify(ds);
  const auto xh = multiply(x, materialize_hash(spec, ds.cols()));
  const auto a = multiply(xh, xh.transpose());
  const auto b = multiply(x, x.transpose());
  double s = 0.0;
  for (std::size_t t = 0; t < a.data().size(); ++t) s += (a.data()[t] - b.data()[t]) * (a.data()[t] - b.data()[t]);
  return std::sqrt(s);
}

}  // namespace

TEST(CanonicalAngles, HandCases) {
  const auto same = canonical_angles(column({1, 0}), column({1, 0}));
  EXPECT_EQ(same.cosines, std::vector<double>{1.0});
  EXPECT_EQ(same.sin_phi_frobenius, 0.0);

  const auto orth = canonical_angles(column({1, 0}), column({0, 1}));
  EXPECT_EQ(orth.cosines, std::vector<double>{0.0});
  EXPECT_EQ(orth.sin_phi_frobenius, 1.0);

  const double s = 1.0 / std::sqrt(2.0);
  const auto diag = canonical_angles(column({1, 0}), column({s, s}));
  EXPECT_NEAR(diag.cosines[0], s, 1e-15);
  EXPECT_NEAR(diag.sin_phi_frobenius, s, 1e-15);
}

TEST(CanonicalAngles, RejectsNonOrthonormal) {
  EXPECT_THROW(canonical_angles(column({2, 0}), column({1, 0})), NumericError);
  EXPECT_THROW(canonical_angles(column({1, 0}), column({1, 0, 0})), DimensionError);
}

TEST(CanonicalAngles, SymmetricAndBasisInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = gram_schmidt(gaussian_matrix(30, 4, seed));
    const auto b = gram_schmidt(gaussian_matrix(30, 4, seed + 1000));
    const auto ab = canonical_angles(a, b);
    const auto ba = canonical_angles(b, a);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(ab.cosines[j], ba.cosines[j], 1e-12);
    EXPECT_NEAR(ab.sin_phi_frobenius, ba.sin_phi_frobenius, 1e-12);

    const auto rot = gram_schmidt(gaussian_matrix(4, 4, seed + 77));
    EXPECT_NEAR(canonical_angles(multiply(a, rot), b).sin_phi_frobenius, ab.sin_phi_frobenius, 1e-10);

    double s = 0.0;
    for (double c : ab.cosines) s += 1.0 - c * c;
    EXPECT_NEAR(ab.sin_phi_frobenius, std::sqrt(s), 1e-10);
    EXPECT_GE(ab.sin_phi_frobenius, 0.0);
    EXPECT_LE(ab.sin_phi_frobenius, 2.0);
  }
}

TEST(Coherence, HandCases) {
  EXPECT_NEAR(coherence_eta(from_dense(DenseMatrix(1, 2, {3, 4}))).eta, 0.8, 1e-12);
  EXPECT_EQ(coherence_eta(from_dense(DenseMatrix(1, 3, {0, 7, 0}))).eta, 1.0);
  const double s = 1.0 / std::sqrt(2.0);
  const auto pair = coherence_eta(from_dense(DenseMatrix(2, 3, {s, s, 0, 0, s, s})));
  EXPECT_NEAR(pair.eta, s, 1e-12);
  EXPECT_FALSE(pair.lower_bound);
}

TEST(Coherence, SkipsZeroRowsAndIdenticalPairs) {
  const auto c = coherence_eta(from_dense(DenseMatrix(3, 2, {0, 0, 1, 1, 1, 1})));
  EXPECT_NEAR(c.eta, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Coherence, ScaleInvariantExactly) {
  const auto ds = synth_lowrank({40, 30, 3, {3, 2, 1}, 0.1, 0.5, 5});
  const double base = coherence_eta(ds).eta;
  for (double c : {0.5, 4.0, 1024.0}) EXPECT_EQ(coherence_eta(from_dense(scaled(densify(ds), c))).eta, base);
  EXPECT_GT(base, 0.0);
  EXPECT_LE(base, 1.0);
}

TEST(Coherence, SparseAndDensePathsAgree) {
  // p large enough to take the sparse merge path.
  std::vector<SparseRow> rows;
  for (std::size_t i = 0; i < 30; ++i) {
    rows.push_back(SparseRow::from_entries({{i * 1000, 1.0 + i}, {i * 1000 + 7, -0.5}, {5'000'000, 2.0}}));
  }
  const auto sparse_ds = SparseDataset::from_rows(rows, 6'000'000);
  double brute = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    const double a = 1.0 + i;
    brute = std::max(brute, std::max(a, 2.0) / std::sqrt(a * a + 4.25));
  }
  // Pair (i, j): entries 1+i, -0.5, -(1+j), +0.5 with the shared feature cancelling.
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = i + 1; j < 30; ++j) {
      const double a = 1.0 + i, b = 1.0 + j;
      brute = std::max(brute, std::max(a, b) / std::sqrt(a * a + b * b + 0.5));
    }
  }
  EXPECT_NEAR(coherence_eta(sparse_ds).eta, brute, 1e-14);
}

TEST(Coherence, GuardAndRowsOnlyMode) {
  std::vector<SparseRow> rows(kEtaPairwiseMaxRows + 1, SparseRow::from_entries({{0, 1.0}, {1, 1.0}}));
  const auto ds = SparseDataset::from_rows(rows);
  try {
    coherence_eta(ds);
    FAIL();
  } catch (const GuardError& e) {
    EXPECT_EQ(e.guard(), "eta_pairwise");
  }
  const auto c = coherence_eta(ds, true);
  EXPECT_TRUE(c.lower_bound);
  EXPECT_NEAR(c.eta, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(GramPerturbation, IdentityIsZero) {
  const auto ds = synth_lowrank({30, 20, 3, {3, 2, 1}, 0.1, 0.5, 6});
  EXPECT_EQ(gram_perturbation(ds, Projector::identity(20)), 0.0);
}

TEST(GramPerturbation, CollisionFreeOneHotsAreZero) {
  const HashSpec spec{1024, 31, 32};
  std::vector<SparseRow> rows;
  std::vector<std::size_t> used;
  for (FeatureId i = 0; rows.size() < 10; ++i) {
    const auto b = hash_index(spec, i).bucket;
    if (std::find(used.begin(), used.end(), b) != used.end()) continue;
    used.push_back(b);
    rows.push_back(SparseRow::from_entries({{i, 1.5}}));
  }
  EXPECT_EQ(gram_perturbation(SparseDataset::from_rows(rows), Projector::hashed(spec)), 0.0);
}

TEST(GramPerturbation, MatchesDenseOracle) {
  const auto ds = synth_lowrank({25, 60, 3, {3, 2, 1}, 0.1, 0.4, 7});
  const HashSpec spec{8, 41, 42};
  EXPECT_NEAR(gram_perturbation(ds, Projector::hashed(spec)), gram_oracle(ds, spec), 1e-10);
}

TEST(GramPerturbation, ShrinksWithD) {
  const auto ds = synth_lowrank({40, 500, 4, {4, 3, 2, 1}, 0.05, 0.3, 8});
  std::vector<double> small, large;
  for (std::uint64_t s = 0; s < 9; ++s) {
    small.push_back(gram_perturbation(ds, Projector::hashed({64, mix64(s), mix64(s + 100)})));
    large.push_back(gram_perturbation(ds, Projector::hashed({4096, mix64(s), mix64(s + 100)})));
  }
  std::sort(small.begin(), small.end());
  std::sort(large.begin(), large.end());
  EXPECT_LT(large[4], small[4]);
}

TEST(GramPerturbation, Guard) {
  std::vector<SparseRow> rows(kGramMaxRows + 1, SparseRow::from_entries({{0, 1.0}}));
  EXPECT_THROW(gram_perturbation(SparseDataset::from_rows(rows), Projector::hashed({4, 1, 2})), GuardError);
}

TEST(BoundArithmetic, RecommendedDUsesNaturalLog) {
  // 144 ln(1e5) / 0.25 = 6631.44..., so the ceiling is 6632.
  EXPECT_EQ(recommended_d(1000, 0.01, 0.5), 6632u);
  EXPECT_EQ(recommended_d(1, 0.5, 1000.0), 1u);
  EXPECT_THROW(recommended_d(10, 0.0, 0.5), ConfigError);
  EXPECT_THROW(recommended_d(10, 0.1, 0.0), ConfigError);
}

TEST(BoundArithmetic, EtaThreshold) {
  const double expected = 0.5 / (18.0 * std::sqrt(2.0 * std::log(1000 / 0.01) * std::log(2048 / 0.01)));
  EXPECT_NEAR(eta_threshold(1000, 2048, 0.01, 0.5), expected, 1e-15);
}

TEST(BoundArithmetic, DenseBasisBytes) {
  // p = 1e8 features and k = 300 components in doubles: about 223.5 GiB.
  EXPECT_EQ(dense_basis_bytes(100'000'000, 300), 240'000'000'000ULL);
  EXPECT_NEAR(static_cast<double>(dense_basis_bytes(100'000'000, 300)) / (1ULL << 30), 223.5, 0.05);
}

TEST(CompareToExact, ZeroTailIdentity) {
  const auto ds = synth_lowrank({50, 30, 3, {5, 3, 2}, 0.0, 1.0, 9});
  HpcaConfig cfg;
  cfg.projector = Projector::identity(30);
  cfg.k = 3;
  cfg.seed_omega = 4;
  const auto r = compare_to_exact(ds, cfg, 0.5, 0.01);
  EXPECT_LE(r.sin_phi_frobenius, 1e-6);
  EXPECT_LE(r.alpha, 1e-12);
  EXPECT_GT(r.gamma, 0.0);
  EXPECT_FALSE(r.gap_violated);
  EXPECT_NEAR(r.gamma, 2.0 * 2.0 / 50.0, 1e-9);
  EXPECT_EQ(r.gram_perturbation_fro, 0.0);
  EXPECT_EQ(r.recommended_d, recommended_d(50, 0.01, 0.5));
}

TEST(CompareToExact, ReportFieldsAndText) {
  const auto ds = synth_lowrank({60, 200, 4, {5, 4, 3, 0.01}, 0.001, 1.0, 10});
  HpcaConfig cfg;
  cfg.projector = Projector::hashed({64, 1, 2});
  cfg.k = 3;
  cfg.seed_omega = 3;
  const auto r = compare_to_exact(ds, cfg, 0.5, 0.01);
  EXPECT_GE(r.sin_phi_frobenius, 0.0);
  EXPECT_LE(r.sin_phi_frobenius, std::sqrt(3.0));
  EXPECT_GT(r.eta, 0.0);
  EXPECT_LE(r.eta, 1.0);
  EXPECT_GT(r.gram_perturbation_fro, 0.0);
  EXPECT_EQ(r.cosines.size(), 3u);
  EXPECT_GT(r.alpha, 0.0);

  const auto text = r.to_text();
  for (const char* key : {"sin_phi_frobenius=", "cosines=", "eta=", "eta_mode=pairwise", "gram_perturbation_fro=",
                          "alpha=", "gamma=", "gap_violated=", "epsilon=0.5", "delta=0.01", "recommended_d=",
                          "recommended_d_formula=", "eta_threshold=", "eta_condition_met=", "dense_basis_bytes=",
                          "hashed_basis_bytes="}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 22);
}

TEST(CompareToExact, GapIsReportedRaw) {
  // Flat spectrum with d far too small, so the gap can go negative; it is reported, not clamped.
  const auto ds = synth_lowrank({40, 400, 8, {1, 1, 1, 1, 1, 1, 1, 1}, 0.0, 1.0, 11});
  HpcaConfig cfg;
  cfg.projector = Projector::hashed({8, 1, 2});
  cfg.k = 4;
  cfg.seed_omega = 5;
  const auto r = compare_to_exact(ds, cfg, 0.5, 0.01);
  const double sk = fit(ds, cfg).singular_values().back();
  EXPECT_EQ(r.gamma, sk * sk - r.alpha);
  EXPECT_NEAR(r.alpha, 1.0 / 40.0, 1e-12);
  EXPECT_EQ(r.gap_violated, !(r.gamma > 0.0));
}

TEST(CompareToExact, ReferenceReuseMatchesOneShot) {
  const auto ds = synth_lowrank({50, 80, 3, {4, 2, 1}, 0.01, 0.8, 12});
  HpcaConfig cfg;
  cfg.projector = Projector::hashed({32, 5, 6});
  cfg.k = 2;
  cfg.seed_omega = 7;
  const auto ref = exact_reference(ds, 2, false);
  EXPECT_EQ(compare_to_reference(ref, ds, cfg, 0.3, 0.05).to_text(), compare_to_exact(ds, cfg, 0.3, 0.05).to_text());
  cfg.center = true;
  EXPECT_THROW(compare_to_reference(ref, ds, cfg, 0.3, 0.05), ConfigError);
}

TEST(CompareToExact, CenteredReferenceMatchesMeanSubtractedOracle) {
  auto x = densify(synth_lowrank({40, 15, 2, {3, 1}, 0.01, 1.0, 13}));
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 15; ++j) x(i, j) += 2.0;
  const auto ref = exact_reference(from_dense(x), 2, true);
  for (std::size_t j = 0; j < 15; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < 40; ++i) m += x(i, j) / 40.0;
    for (std::size_t i = 0; i < 40; ++i) x(i, j) -= m;
  }
  const auto svd = oracle_svd(x);
  EXPECT_LE(max_abs_diff_up_to_sign(ref.top_left, leading_columns(svd.u, 2)), 1e-8);
}
