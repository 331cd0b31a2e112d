#include "qdetect/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace qdetect {

std::size_t worker_count() {
  if (const char* env = std::getenv("QDETECT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
      // fall through to the hardware default
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t total, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n_chunks = (total + chunk - 1) / chunk;
  const std::size_t workers = std::min(worker_count(), n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);
  const auto run = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    try {
      fn(begin, std::min(chunk, total - begin));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) run(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace qdetect
