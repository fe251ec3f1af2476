#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dualband {

// splitmix64 finalizer; used to decorrelate stream seeds derived from one root.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic child seed for stream `stream` of a root seed. Different
// streams (realizations, model inits, shuffles, ...) get independent engines
// so adding a consumer never shifts the draws of another.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

// mt19937_64 with hand-rolled output transforms. std::*_distribution is
// implementation-defined, so uniform/normal/int draws are generated here to
// keep byte-identical results for a given seed regardless of the toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; the paired draw is cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1] so the log is finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // uniform integer in [lo, hi], unbiased via rejection
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(engine_());  // full span
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t u;
    do {
      u = engine_();
    } while (u >= limit);
    return lo + static_cast<std::int64_t>(u % range);
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dualband
