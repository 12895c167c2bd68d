// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace convbse {

namespace {
std::atomic<int> g_threads{0};
}

int default_num_threads() {
  if (const char* env = std::getenv("CONVBSE_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_num_threads(int n) { g_threads = n > 0 ? n : default_num_threads(); }

int num_threads() {
  int n = g_threads.load();
  return n > 0 ? n : default_num_threads();
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  std::exception_ptr error;
  std::mutex error_mutex;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4) num_threads(num_threads())
#endif
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace convbse
