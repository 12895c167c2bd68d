// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "convbse/signal_io.hpp"

namespace convbse {

// One M x taps matrix per source.
struct RirSet {
  std::vector<Eigen::MatrixXd> rirs;
  int sample_rate = 16000;
};

// Channel m is source * rir.row(m), truncated to the source length.
MultichannelSignal convolve_rir(std::span<const double> source,
                                const Eigen::MatrixXd& rir,
                                int sample_rate = 16000);

// Same as convolve_rir with every tap at or beyond truncate_ms zeroed.
MultichannelSignal oracle_image(std::span<const double> source,
                                const Eigen::MatrixXd& rir, double truncate_ms,
                                int sample_rate = 16000);

struct MixResult {
  MultichannelSignal mixture;
  double noise_gain = 1.0;
};

// Sample variance of channel 0.
double first_channel_variance(const MultichannelSignal& image);

// 10 log10(mean speech variance / total noise variance), channel 0.
double measured_snr_db(const std::vector<MultichannelSignal>& speech_images,
                       const std::vector<MultichannelSignal>& noise_images,
                       double noise_gain = 1.0);

// Scales every noise image by one common gain so measured_snr_db hits the
// target, then sums all images.
MixResult mix_at_snr(const std::vector<MultichannelSignal>& speech_images,
                     const std::vector<MultichannelSignal>& noise_images,
                     double target_snr_db);

// Exponentially decaying Gaussian tail (-60 dB energy at rt60) behind a
// unit direct-path impulse. Each channel gets its own tail and a random
// direct-path delay shorter than max_delay taps.
struct RirOptions {
  int sample_rate = 16000;
  // Direct-path energy over total tail energy, per channel.
  double drr_db = 0.0;
  int max_delay = 32;
  double length_factor = 1.25;  // taps = length_factor * rt60
};
Eigen::MatrixXd synth_rir(double rt60_ms, int channels, std::uint64_t seed,
                          const RirOptions& options = {});

std::vector<double> pink_noise(Eigen::Index length, std::uint64_t seed);

// Harmonic syllables with formant colouring, random pitch, and pauses.
std::vector<double> speech_like_source(Eigen::Index length, int sample_rate,
                                       std::uint64_t seed);

struct MixtureSpec {
  int num_targets = 2;
  int noise_count = 6;
  double target_snr_db = 10.0;
  std::uint64_t seed = 0;
  int channels = 4;
  double rt60_ms = 400.0;
  double drr_db = -6.0;  // direct-to-reverberant ratio of every RIR
  double duration_s = 10.0;
  int sample_rate = 16000;
  double truncate_ms = 32.0;
  double target_level = 0.05;  // RMS of dry speech-like sources

  void validate() const;
};

struct SyntheticMixture {
  MultichannelSignal mixture;
  std::vector<MultichannelSignal> speech_images;  // full reverberation
  std::vector<MultichannelSignal> oracle_images;  // RIRs cut at truncate_ms
  std::vector<MultichannelSignal> noise_images;   // after noise_gain
  double noise_gain = 1.0;
  RirSet speech_rirs;
  RirSet noise_rirs;
};

// Speech sources are synthesized unless given; noises are reverberant pink
// noise point sources. When noise_gain is set the SNR solve is skipped and
// the recorded gain is applied instead (manifest replay).
SyntheticMixture build_synthetic_mixture(
    const MixtureSpec& spec,
    const std::vector<std::vector<double>>& speech = {},
    std::optional<double> noise_gain = std::nullopt);

}  // namespace convbse
