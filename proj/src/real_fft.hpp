// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fftw3.h>

#include <complex>
#include <mutex>

namespace convbse::detail {

// The FFTW planner is not reentrant; execution on distinct buffers is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* time() { return time_; }
  std::complex<double>* freq() { return reinterpret_cast<std::complex<double>*>(freq_); }
  int size() const { return n_; }
  void forward() { fftw_execute(forward_); }
  // Unnormalized: returns n times the inverse DFT.
  void inverse() { fftw_execute(inverse_); }

 private:
  int n_;
  double* time_;
  fftw_complex* freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace convbse::detail
