#include "mscd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "mscd/error.hpp"

namespace mscd {

namespace {
std::atomic<int> g_workers{1};
}

int worker_count() { return g_workers.load(); }

void set_worker_count(int workers) {
  if (workers < 1) throw Error("worker count must be at least 1");
  g_workers.store(workers);
}

int configure_workers_from_env() {
  if (const char* env = std::getenv("MSCD_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (*end != '\0' || value < 1 || value > 1024) {
      throw Error(std::string("MSCD_THREADS must be a positive integer, got '") + env + "'");
    }
    set_worker_count(static_cast<int>(value));
  }
  return worker_count();
}

void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& fn) {
  const auto workers = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::jthread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (std::ptrdiff_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      const std::ptrdiff_t begin = n * w / workers;
      const std::ptrdiff_t end = n * (w + 1) / workers;
      try {
        for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  threads.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mscd
