// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "convbse/signal_io.hpp"

namespace convbse {

using Complex = std::complex<double>;

enum class WindowType { kSqrtHann, kHann };

struct StftConfig {
  int frame_len = 2048;
  int hop = 512;
  WindowType window = WindowType::kSqrtHann;

  int num_bins() const { return frame_len / 2 + 1; }
  void validate() const;
};

// Analysis window; the synthesis window is derived so that the pair
// satisfies the overlap-add condition at the configured hop.
Eigen::VectorXd analysis_window(const StftConfig& config);
Eigen::VectorXd synthesis_window(const StftConfig& config);

// Complex tensor indexed (frequency, frame, channel). Each frequency bin
// is stored as a channels x frames matrix, which is the layout the
// per-frequency optimizer consumes.
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(int bins, int frames, int channels);

  int num_bins() const { return static_cast<int>(bins_.size()); }
  int num_frames() const { return frames_; }
  int num_channels() const { return channels_; }

  Complex& operator()(int f, int t, int m) { return bins_[f](m, t); }
  Complex operator()(int f, int t, int m) const { return bins_[f](m, t); }

  Eigen::MatrixXcd& bin(int f) { return bins_[f]; }
  const Eigen::MatrixXcd& bin(int f) const { return bins_[f]; }

  bool all_finite() const;

  StftConfig config;
  int sample_rate = 16000;
  // Length of the time-domain signal this was computed from.
  Eigen::Index signal_length = 0;

 private:
  std::vector<Eigen::MatrixXcd> bins_;
  int frames_ = 0;
  int channels_ = 0;
};

// Pads frame_len - hop zeros on the left and enough on the right that every
// input sample is covered by frame_len / hop frames.
Spectrogram analyze(const MultichannelSignal& signal, const StftConfig& config);

// Weighted overlap-add; output length is spec.signal_length.
MultichannelSignal synthesize(const Spectrogram& spec);

}  // namespace convbse
