#include "gmflow/util.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

namespace gmflow {

namespace {
std::atomic<int> g_thread_cap{1};
}

int thread_cap() { return g_thread_cap.load(); }

void set_thread_cap(int n) {
  if (n < 1) throw std::invalid_argument("thread cap must be >= 1");
  g_thread_cap.store(n);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace gmflow
