#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace marl {

// Counter-based 64-bit generator (SplitMix64). Streams are value types:
// copying the generator replays the same draws, and independent substreams
// are derived by hashing (state, index) so results do not depend on how
// work is partitioned across workers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int next_below(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::next_below: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Hash-combine two words; used to derive substream seeds.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent substream keyed by idx; does not advance this generator.
  Rng substream(std::uint64_t idx) const { return Rng(mix(state_, idx)); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Index draw from an explicit probability vector (inverse CDF walk).
// Rows are assumed normalized; fp slack keeps the draw in range.
inline int sample_index(std::span<const double> probs, Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

// Standard normal via Box-Muller.
inline double sample_normal(Rng& rng) {
  double u1 = rng.next_double();
  while (u1 <= 0.0) u1 = rng.next_double();
  double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled with the
// G(alpha) = G(alpha + 1) * U^(1/alpha) boost.
inline double sample_gamma(double alpha, Rng& rng) {
  if (alpha <= 0.0) throw std::invalid_argument("sample_gamma: alpha must be positive");
  if (alpha < 1.0) {
    double u = rng.next_double();
    while (u <= 0.0) u = rng.next_double();
    return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = sample_normal(rng);
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = rng.next_double();
    while (u <= 0.0) u = rng.next_double();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

// Dirichlet(alpha * 1) over dim coordinates via the gamma-ratio construction.
inline std::vector<double> sample_dirichlet(double alpha, int dim, Rng& rng) {
  if (dim <= 0) throw std::invalid_argument("sample_dirichlet: dim must be positive");
  std::vector<double> w(dim);
  double total = 0.0;
  for (int i = 0; i < dim; ++i) {
    w[i] = sample_gamma(alpha, rng);
    total += w[i];
  }
  if (total <= 0.0) {  // all-underflow fallback: degenerate at coordinate 0
    w.assign(dim, 0.0);
    w[0] = 1.0;
    return w;
  }
  for (double& x : w) x /= total;
  return w;
}

// Multinomial counts: n draws from probs.
inline std::vector<int> sample_multinomial(int n, std::span<const double> probs, Rng& rng) {
  std::vector<int> counts(probs.size(), 0);
  for (int i = 0; i < n; ++i) counts[sample_index(probs, rng)]++;
  return counts;
}

// Uniform k-subset of {0..n-1} via partial Fisher-Yates; returned sorted ascending.
std::vector<int> sample_subset(int n, int k, Rng& rng);

}  // namespace marl
