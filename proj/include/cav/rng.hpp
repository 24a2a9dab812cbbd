#pragma once
#include <cstdint>
#include <random>

#include "cav/matrix.hpp"

namespace cav::num {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// mt19937_64 wrapper with an explicit bits->double conversion so streams are
// identical on every platform. spawn() derives independent child streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    int v = int(uniform() * n);
    return v < n ? v : n - 1;
  }

  Rng spawn(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ull)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

inline Matrix rand_matrix(Rng& rng, int r, int c, double lo, double hi) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

}  // namespace cav::num
