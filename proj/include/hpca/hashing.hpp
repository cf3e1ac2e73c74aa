#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hpca/sparse_io.hpp"

namespace hpca {

/// Defines the implicit p x d projection H with H(i, j) = sign(i) * [bucket(i) == j].
struct HashSpec {
  std::size_t d = 1;
  std::uint64_t seed_h = 0;
  std::uint64_t seed_xi = 0;

  friend bool operator==(const HashSpec&, const HashSpec&) = default;
};

struct HashedIndex {
  std::size_t bucket;
  int sign;  // +1 or -1

  friend bool operator==(const HashedIndex&, const HashedIndex&) = default;
};

/// bucket = mix64(seed_h ^ i*gamma) mod d; sign from the top bit of mix64(seed_xi ^ i*gamma).
HashedIndex hash_index(const HashSpec& spec, FeatureId i) noexcept;

/// Dense Hᵀx, length d.
using HashedVector = std::vector<double>;

/// One (bucket, signed value) pair per nonzero of x; colliding buckets are not merged.
struct HashedEntries {
  std::vector<std::size_t> buckets;
  std::vector<double> values;

  std::size_t size() const noexcept { return buckets.size(); }
  void clear() noexcept {
    buckets.clear();
    values.clear();
  }
};

/// The projection applied by a fit: a seeded feature hash, or the identity
/// on p features (bucket(i) = i, sign = +1) used as a test harness.
class Projector {
 public:
  static Projector hashed(const HashSpec& spec);
  static Projector identity(std::size_t p);

  std::size_t dim() const noexcept { return spec_.d; }
  bool is_identity() const noexcept { return identity_; }
  /// Seeds of the hash; for the identity projector d = p and seeds are 0.
  const HashSpec& spec() const noexcept { return spec_; }

  /// Throws DimensionError for the identity projector when i >= p.
  HashedIndex index(FeatureId i) const;

  /// Dense Hᵀx; one hash evaluation per nonzero.
  HashedVector apply(const SparseRow& x) const;
  /// Sparse Hᵀx as unmerged entries, written into `out` (reused).
  void apply(const SparseRow& x, HashedEntries& out) const;
  /// Hᵀx as a SparseRow in bucket space, collisions summed.
  SparseRow apply_sparse(const SparseRow& x) const;

  friend bool operator==(const Projector&, const Projector&) = default;

 private:
  Projector(const HashSpec& spec, bool identity) : spec_(spec), identity_(identity) {}

  HashSpec spec_;
  bool identity_ = false;
};

inline HashedVector apply_hash(const HashSpec& spec, const SparseRow& x) { return Projector::hashed(spec).apply(x); }
inline Projector identity_hash(std::size_t p) { return Projector::identity(p); }

/// Master seed expansion used by the CLI: (mix64(seed^1), mix64(seed^2), mix64(seed^3)).
struct DerivedSeeds {
  std::uint64_t seed_h;
  std::uint64_t seed_xi;
  std::uint64_t seed_omega;
};
DerivedSeeds derive_seeds(std::uint64_t master) noexcept;

}  // namespace hpca
