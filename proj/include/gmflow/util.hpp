#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace gmflow {

// Seeded RNG with variates derived by explicit arithmetic from the mt19937_64
// bit stream, so sequences are identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // uniform in [0,1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // index in [0,n)
  int index(int n) { return static_cast<int>(uniform() * n) % n; }

  // standard normal via Box-Muller; caches the second variate
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Process-wide worker cap used by parallel loops; 1 by default so every
// entry point is deterministic unless a caller opts in to more threads.
int thread_cap();
void set_thread_cap(int n);

// Runs fn(i) for i in [0,n). Work is split into contiguous index ranges and
// each index writes only its own output slot, so results do not depend on
// the number of workers.
void parallel_for(int n, const std::function<void(int)>& fn);

// Shortest round-trip decimal form (std::to_chars); locale-independent.
std::string format_double(double x);

// FNV-1a over a byte string; stable fingerprint for config identity.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace gmflow
