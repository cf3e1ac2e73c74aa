#!/usr/bin/env python3
"""Standalone reference for the feature-hash family.

Prints golden (bucket, sign) values and bucket counts that the C++ unit
tests freeze. Written independently of the C++ sources.
"""
import math

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x):
    x = (x + GOLDEN) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def hash_index(d, seed_h, seed_xi, i):
    step = (i * GOLDEN) & MASK
    bucket = mix64(seed_h ^ step) % d
    sign = -1 if (mix64(seed_xi ^ step) >> 63) else 1
    return bucket, sign


def main():
    print("mix64(0) =", hex(mix64(0)))
    print("mix64(1) =", hex(mix64(1)))
    for seed in (0, 7):
        print("seed", seed, "derived:", [hex(mix64(seed ^ t)) for t in (1, 2, 3)])
    d, sh, sx = 1000, 12345, 67890
    print("golden (d=1000, seed_h=12345, seed_xi=67890):")
    for i in (0, 1, 2, 3, 999, 123456789):
        print("  ", i, hash_index(d, sh, sx, i))
    d, sh, sx = 16, 42, 4242
    counts = [0] * d
    sign_sum = 0
    for i in range(10000):
        b, s = hash_index(d, sh, sx, i)
        counts[b] += 1
        sign_sum += s
    band = 5 * math.sqrt(625 * 15 / 16)
    print("counts (d=16, seed_h=42, seed_xi=4242, ids 0..9999):", counts)
    print("sign_sum:", sign_sum, "band:", band)
    print("recommended_d(n=1000, delta=0.01, eps=0.5) =",
          math.ceil(144 * math.log(1000 / 0.01) / 0.5 ** 2),
          "raw", 144 * math.log(1000 / 0.01) / 0.5 ** 2)


if __name__ == "__main__":
    main()
