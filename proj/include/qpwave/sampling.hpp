#ifndef QPWAVE_SAMPLING_HPP
#define QPWAVE_SAMPLING_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace qpwave {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for sample `index` of a run seeded with `seed`, so
/// samples can be drawn in any order (or concurrently) with identical output.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dULL)));
}

/// Uniform point on S^{n-1}: a normalized isotropic Gaussian draw.
template <class Rng>
std::vector<double> uniform_direction(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  double s = 0.0;
  do {
    s = 0.0;
    for (double& x : v) {
      x = normal(rng);
      s += x * x;
    }
  } while (s < 1e-24);
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

inline std::vector<double> sample_direction(int n, std::uint64_t seed, std::uint64_t index) {
  auto rng = substream(seed, index);
  return uniform_direction(n, rng);
}

/// Surface area of the unit sphere S^{n-1}.
inline double sphere_area(int n) {
  return 2.0 * std::pow(std::acos(-1.0), 0.5 * n) / std::tgamma(0.5 * n);
}

}  // namespace qpwave

#endif  // QPWAVE_SAMPLING_HPP
