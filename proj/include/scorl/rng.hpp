#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace scorl {

// splitmix64 finalizer. Used to derive independent stream seeds from
// (master, tag, tag, tag) tuples so every stochastic stage owns its own
// generator. That keeps results independent of thread count and lets an
// interrupted run resume mid-training with identical draws.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = mix64(master ^ 0x5cf2ba21a86e51d3ull);
  s = mix64(s ^ mix64(a));
  s = mix64(s ^ mix64(b));
  s = mix64(s ^ mix64(c));
  return s;
}

struct Rng {
  std::mt19937_64 gen;
  std::normal_distribution<double> nd{0.0, 1.0};
  std::uniform_real_distribution<double> ud{0.0, 1.0};

  explicit Rng(uint64_t seed) : gen(seed) {}

  double normal() { return nd(gen); }
  double uniform() { return ud(gen); }
  uint64_t next_u64() { return gen(); }

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = nd(gen);
    return v;
  }

  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(std::uniform_int_distribution<long>(0, n - 1)(gen)); }
};

// Fisher-Yates shuffle of index vector, seeded.
inline std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = rng.uniform_int(i + 1);
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace scorl
