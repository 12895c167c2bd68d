// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/stft.hpp"

#include <cmath>
#include <numbers>

#include "convbse/error.hpp"
#include "real_fft.hpp"

namespace convbse {

namespace {

Eigen::Index left_pad(const StftConfig& c) { return c.frame_len - c.hop; }

}  // namespace

void StftConfig::validate() const {
  if (frame_len < 2 || hop < 1 || hop > frame_len || frame_len % hop != 0)
    throw ConfigError("STFT needs hop <= frame_len and frame_len % hop == 0");
  if (frame_len % 2 != 0) throw ConfigError("STFT frame length must be even");
}

Eigen::VectorXd analysis_window(const StftConfig& config) {
  const int n = config.frame_len;
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    w(i) = config.window == WindowType::kSqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

Eigen::VectorXd synthesis_window(const StftConfig& config) {
  config.validate();
  Eigen::VectorXd wa = analysis_window(config);
  const int n = config.frame_len;
  Eigen::VectorXd power(config.hop);
  power.setZero();
  for (int i = 0; i < n; ++i) power(i % config.hop) += wa(i) * wa(i);
  if (power.minCoeff() <= 0.0)
    throw ConfigError("window does not overlap-add at this hop");
  Eigen::VectorXd ws(n);
  for (int i = 0; i < n; ++i) ws(i) = wa(i) / power(i % config.hop);
  return ws;
}

Spectrogram::Spectrogram(int bins, int frames, int channels)
    : bins_(bins, Eigen::MatrixXcd::Zero(channels, frames)),
      frames_(frames),
      channels_(channels) {}

bool Spectrogram::all_finite() const {
  for (const auto& b : bins_)
    if (!b.allFinite()) return false;
  return true;
}

Spectrogram analyze(const MultichannelSignal& signal, const StftConfig& config) {
  config.validate();
  signal.validate();
  const Eigen::Index len = signal.length();
  if (len < config.frame_len)
    throw ConfigError("signal shorter than one STFT frame");

  const int n = config.frame_len;
  const Eigen::Index pad = left_pad(config);
  const int frames = static_cast<int>((pad + len - 1) / config.hop + 1);
  const int bins = config.num_bins();
  const Eigen::VectorXd window = analysis_window(config);

  Spectrogram spec(bins, frames, signal.channels());
  spec.config = config;
  spec.sample_rate = signal.sample_rate;
  spec.signal_length = len;

  detail::RealFft fft(n);
  for (int m = 0; m < signal.channels(); ++m) {
    for (int t = 0; t < frames; ++t) {
      const Eigen::Index start = static_cast<Eigen::Index>(t) * config.hop - pad;
      for (int i = 0; i < n; ++i) {
        const Eigen::Index k = start + i;
        fft.time()[i] = (k >= 0 && k < len) ? signal.samples(m, k) * window(i) : 0.0;
      }
      fft.forward();
      for (int f = 0; f < bins; ++f) spec(f, t, m) = fft.freq()[f];
    }
  }
  return spec;
}

MultichannelSignal synthesize(const Spectrogram& spec) {
  const StftConfig& config = spec.config;
  config.validate();
  if (!spec.all_finite()) throw ConfigError("cannot synthesize non-finite spectrogram");

  const int n = config.frame_len;
  const int bins = spec.num_bins();
  if (bins != config.num_bins())
    throw ConfigError("spectrogram bin count does not match its STFT config");
  const Eigen::Index pad = left_pad(config);
  const Eigen::Index padded =
      static_cast<Eigen::Index>(spec.num_frames() - 1) * config.hop + n;
  const Eigen::Index len =
      spec.signal_length > 0 ? spec.signal_length : padded - pad;
  const Eigen::VectorXd window = synthesis_window(config);

  MultichannelSignal out(spec.num_channels(), len, spec.sample_rate);
  detail::RealFft fft(n);
  for (int m = 0; m < spec.num_channels(); ++m) {
    for (int t = 0; t < spec.num_frames(); ++t) {
      for (int f = 0; f < bins; ++f) fft.freq()[f] = spec(f, t, m);
      fft.inverse();
      const Eigen::Index start = static_cast<Eigen::Index>(t) * config.hop - pad;
      for (int i = 0; i < n; ++i) {
        const Eigen::Index k = start + i;
        if (k >= 0 && k < len) out.samples(m, k) += fft.time()[i] * window(i) / n;
      }
    }
  }
  return out;
}

}  // namespace convbse
