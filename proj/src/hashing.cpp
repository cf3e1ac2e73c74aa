#include "hpca/hashing.hpp"

#include <string>

#include "hpca/errors.hpp"
#include "hpca/random.hpp"

namespace hpca {

HashedIndex hash_index(const HashSpec& spec, FeatureId i) noexcept {
  const std::uint64_t step = i * kGoldenGamma;
  const std::size_t bucket = static_cast<std::size_t>(mix64(spec.seed_h ^ step) % spec.d);
  const int sign = (mix64(spec.seed_xi ^ step) >> 63) ? -1 : 1;
  return {bucket, sign};
}

Projector Projector::hashed(const HashSpec& spec) {
  if (spec.d == 0) throw ConfigError("hash dimension d must be at least 1");
  return Projector(spec, false);
}

Projector Projector::identity(std::size_t p) {
  if (p == 0) throw ConfigError("identity projector needs p >= 1");
  return Projector(HashSpec{p, 0, 0}, true);
}

HashedIndex Projector::index(FeatureId i) const {
  if (!identity_) return hash_index(spec_, i);
  if (i >= spec_.d) {
    throw DimensionError("feature " + std::to_string(i) + " is outside the identity projector's p = " +
                         std::to_string(spec_.d));
  }
  return {static_cast<std::size_t>(i), 1};
}

HashedVector Projector::apply(const SparseRow& x) const {
  HashedVector out(spec_.d, 0.0);
  for (std::size_t t = 0; t < x.nnz(); ++t) {
    const auto [bucket, sign] = index(x.indices[t]);
    out[bucket] += sign * x.values[t];
  }
  return out;
}

void Projector::apply(const SparseRow& x, HashedEntries& out) const {
  out.clear();
  out.buckets.reserve(x.nnz());
  out.values.reserve(x.nnz());
  for (std::size_t t = 0; t < x.nnz(); ++t) {
    const auto [bucket, sign] = index(x.indices[t]);
    out.buckets.push_back(bucket);
    out.values.push_back(sign * x.values[t]);
  }
}

SparseRow Projector::apply_sparse(const SparseRow& x) const {
  std::vector<std::pair<FeatureId, double>> entries;
  entries.reserve(x.nnz());
  for (std::size_t t = 0; t < x.nnz(); ++t) {
    const auto [bucket, sign] = index(x.indices[t]);
    entries.emplace_back(bucket, sign * x.values[t]);
  }
  return SparseRow::from_entries(std::move(entries), x.label);
}

DerivedSeeds derive_seeds(std::uint64_t master) noexcept {
  return {mix64(master ^ 1), mix64(master ^ 2), mix64(master ^ 3)};
}

}  // namespace hpca
