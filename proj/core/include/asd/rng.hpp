#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace asd {

using Rng = std::mt19937;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent, reproducible stream derived from (master seed, stream name).
inline Rng make_stream(std::uint64_t master_seed, std::string_view name) {
  return Rng(static_cast<Rng::result_type>(splitmix64(master_seed ^ fnv1a(name))));
}

/// Uniform float in [0,1) built from the top 24 bits of one mt19937 draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 8) * (1.0 / 16777216.0);
}

/// Uniform integer in [0, n). n must be > 0.
inline std::uint32_t uniform_below(Rng& rng, std::uint32_t n) {
  // Rejection sampling keeps the draw unbiased for any n.
  const std::uint32_t limit = std::numeric_limits<std::uint32_t>::max() - (std::numeric_limits<std::uint32_t>::max() % n);
  std::uint32_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

template <class T>
void fisher_yates_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_below(rng, static_cast<std::uint32_t>(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Standard normal via Box-Muller (two uniform draws per call).
inline double sample_normal(Rng& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by the boost identity.
inline double sample_gamma(Rng& rng, double shape) {
  if (shape < 1.0) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = sample_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double sample_beta(Rng& rng, double a, double b) {
  const double x = sample_gamma(rng, a);
  const double y = sample_gamma(rng, b);
  return x / (x + y);
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& text) {
  Rng rng;
  std::istringstream is(text);
  is >> rng;
  return rng;
}

}  // namespace asd
