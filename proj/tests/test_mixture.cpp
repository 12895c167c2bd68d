// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "convbse/error.hpp"
#include "convbse/mixture.hpp"
#include "test_support.hpp"

using namespace convbse;
using convbse::testing::naive_convolution;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

// Two-pass population variance, written independently of the library.
double variance(const SampleMatrix& s) {
  const Eigen::Index n = s.cols();
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += s(0, i);
  mean /= n;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += (s(0, i) - mean) * (s(0, i) - mean);
  return acc / n;
}

MultichannelSignal image(int channels, std::size_t n, std::uint64_t seed, double sd) {
  MultichannelSignal s(channels, static_cast<Eigen::Index>(n), 16000);
  for (int m = 0; m < channels; ++m) {
    auto x = gaussian(n, seed * 31 + m, sd);
    for (std::size_t i = 0; i < n; ++i) s.samples(m, static_cast<Eigen::Index>(i)) = x[i];
  }
  return s;
}

}  // namespace

TEST(ConvolveRir, UnitImpulseReplicates) {
  auto src = gaussian(1000, 1);
  Eigen::MatrixXd rir = Eigen::MatrixXd::Zero(3, 16);
  rir.col(0).setOnes();
  MultichannelSignal out = convolve_rir(src, rir);
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 1000; ++n) EXPECT_NEAR(out.samples(m, n), src[n], 1e-12);
}

TEST(ConvolveRir, DelayedImpulseShifts) {
  auto src = gaussian(500, 2);
  const int d = 7;
  Eigen::MatrixXd rir = Eigen::MatrixXd::Zero(2, 20);
  rir.col(d).setOnes();
  MultichannelSignal out = convolve_rir(src, rir);
  for (int n = 0; n < 500; ++n)
    EXPECT_NEAR(out.samples(1, n), n >= d ? src[n - d] : 0.0, 1e-12);
}

TEST(ConvolveRir, MatchesNaiveSummation) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto src = gaussian(3000, seed);
    Eigen::MatrixXd rir(2, 257);
    auto taps = gaussian(2 * 257, seed + 100, 0.3);
    for (int m = 0; m < 2; ++m)
      for (int k = 0; k < 257; ++k) rir(m, k) = taps[m * 257 + k];
    MultichannelSignal out = convolve_rir(src, rir);
    for (int m = 0; m < 2; ++m) {
      std::vector<double> h(rir.cols());
      for (int k = 0; k < rir.cols(); ++k) h[k] = rir(m, k);
      auto ref = naive_convolution(src, h);
      for (std::size_t n = 0; n < src.size(); ++n)
        ASSERT_NEAR(out.samples(m, static_cast<Eigen::Index>(n)), ref[n], 1e-10);
    }
  }
}

TEST(OracleImage, LongTruncationIsPlainConvolution) {
  auto src = gaussian(800, 3);
  Eigen::MatrixXd rir = Eigen::MatrixXd::Random(2, 100);
  MultichannelSignal a = oracle_image(src, rir, 1000.0);
  MultichannelSignal b = convolve_rir(src, rir);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(OracleImage, LateImpulseIsRemoved) {
  auto src = gaussian(2000, 4);
  Eigen::MatrixXd rir = Eigen::MatrixXd::Zero(1, 1000);
  rir(0, 640) = 1.0;  // 40 ms at 16 kHz
  MultichannelSignal out = oracle_image(src, rir, 32.0);
  EXPECT_EQ(out.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(OracleImage, EqualsConvolutionWithTruncatedRir) {
  auto src = gaussian(4000, 5);
  auto taps = gaussian(2000, 6, 0.1);
  Eigen::MatrixXd rir(1, 2000);
  for (int k = 0; k < 2000; ++k) rir(0, k) = taps[k];
  std::vector<double> cut(taps.begin(), taps.begin() + 512);  // 32 ms
  cut.resize(2000, 0.0);
  auto ref = naive_convolution(src, cut);
  MultichannelSignal out = oracle_image(src, rir, 32.0);
  for (std::size_t n = 0; n < src.size(); ++n)
    ASSERT_NEAR(out.samples(0, static_cast<Eigen::Index>(n)), ref[n], 1e-10);
}

TEST(MixAtSnr, ZeroDbEqualVarianceGain) {
  std::vector<MultichannelSignal> speech = {image(2, 20000, 1, 1.0), image(2, 20000, 2, 1.0)};
  std::vector<MultichannelSignal> noise = {image(2, 20000, 3, 1.0)};
  MixResult r = mix_at_snr(speech, noise, 0.0);
  // Solving 10 log10(lambda_s / (g^2 lambda_n)) = 0 for g.
  const double lambda_s = 0.5 * (variance(speech[0].samples) + variance(speech[1].samples));
  const double lambda_n = variance(noise[0].samples);
  EXPECT_NEAR(r.noise_gain, std::sqrt(lambda_s / lambda_n), 1e-12);
  EXPECT_NEAR(r.noise_gain * r.noise_gain * lambda_n, lambda_s, 1e-12);
}

TEST(MixAtSnr, HitsTargetsAndSumsExactly) {
  for (double target : {5.0, 10.0, -3.0}) {
    std::vector<MultichannelSignal> speech = {image(4, 16000, 10, 0.1), image(4, 16000, 11, 0.3)};
    std::vector<MultichannelSignal> noise;
    for (int j = 0; j < 6; ++j) noise.push_back(image(4, 16000, 20 + j, 0.05 * (j + 1)));
    MixResult r = mix_at_snr(speech, noise, target);

    double lambda_s = 0.5 * (variance(speech[0].samples) + variance(speech[1].samples));
    double lambda_n = 0.0;
    SampleMatrix expected = speech[0].samples + speech[1].samples;
    for (const auto& z : noise) {
      SampleMatrix scaled = r.noise_gain * z.samples;
      lambda_n += variance(scaled);
      expected += scaled;
    }
    EXPECT_NEAR(10.0 * std::log10(lambda_s / lambda_n), target, 1e-9);
    EXPECT_EQ(r.mixture.samples, expected);
  }
}

TEST(MixAtSnr, DegenerateInputsRejected) {
  std::vector<MultichannelSignal> speech = {image(2, 1000, 1, 1.0)};
  EXPECT_THROW(mix_at_snr(speech, {}, 5.0), ConfigError);
  EXPECT_THROW(mix_at_snr({}, speech, 5.0), ConfigError);
  std::vector<MultichannelSignal> silent = {MultichannelSignal(2, 1000, 16000)};
  EXPECT_THROW(mix_at_snr(speech, silent, 5.0), ConfigError);
  EXPECT_THROW(mix_at_snr(silent, speech, 5.0), ConfigError);
  std::vector<MultichannelSignal> shorter = {image(2, 999, 2, 1.0)};
  EXPECT_THROW(mix_at_snr(speech, shorter, 5.0), ConfigError);
}

TEST(SynthRir, DecayMatchesRt60) {
  // Fit 10 log10 of block energies against time; the regression line must
  // fall by 60 dB over rt60.
  const double rt60_ms = 780.0;
  const int channels = 8;
  Eigen::MatrixXd rir = synth_rir(rt60_ms, channels, 42);
  const int block = 256;
  const int first = 64;  // skip the direct path
  const int blocks = static_cast<int>((rir.cols() - first) / block);
  Eigen::VectorXd t(blocks), y(blocks);
  for (int b = 0; b < blocks; ++b) {
    double e = 0.0;
    for (int m = 0; m < channels; ++m)
      for (int k = 0; k < block; ++k) e += rir(m, first + b * block + k) * rir(m, first + b * block + k);
    t(b) = first + b * block + 0.5 * block;
    y(b) = 10.0 * std::log10(e);
  }
  const double tm = t.mean(), ym = y.mean();
  const double slope = ((t.array() - tm) * (y.array() - ym)).sum() / (t.array() - tm).square().sum();
  EXPECT_NEAR(slope * 12480.0, -60.0, 1.0);
}

TEST(SynthRir, DirectToReverberantRatio) {
  for (double drr : {0.0, -6.0}) {
    RirOptions options;
    options.drr_db = drr;
    const int channels = 16;
    Eigen::MatrixXd rir = synth_rir(400.0, channels, 77, options);
    double direct = 0.0, tail = 0.0;
    for (int m = 0; m < channels; ++m) {
      Eigen::Index peak = 0;
      rir.row(m).cwiseAbs().maxCoeff(&peak);
      direct += rir(m, peak) * rir(m, peak);
      tail += rir.row(m).squaredNorm() - rir(m, peak) * rir(m, peak);
    }
    EXPECT_NEAR(10.0 * std::log10(direct / tail), drr, 0.5);
  }
}

TEST(SynthRir, DeterministicAndSeedDependent) {
  Eigen::MatrixXd a = synth_rir(400.0, 4, 7);
  Eigen::MatrixXd b = synth_rir(400.0, 4, 7);
  Eigen::MatrixXd c = synth_rir(400.0, 4, 8);
  EXPECT_EQ(a, b);
  EXPECT_GT((a - c).norm(), 0.1);
  EXPECT_GT((a.row(0) - a.row(1)).norm(), 0.01);
  EXPECT_THROW(synth_rir(0.0, 4, 1), ConfigError);
}

TEST(PinkNoise, UnitVarianceAndLowFrequencyHeavy) {
  auto x = pink_noise(1 << 16, 3);
  double mean = 0.0, var = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  for (double v : x) var += (v - mean) * (v - mean);
  EXPECT_NEAR(var / x.size(), 1.0, 1e-9);
  // First differences remove most low-frequency power from 1/f noise.
  double diff = 0.0;
  for (std::size_t n = 1; n < x.size(); ++n) diff += (x[n] - x[n - 1]) * (x[n] - x[n - 1]);
  EXPECT_LT(diff / x.size(), 1.0);
  EXPECT_EQ(pink_noise(100, 3), pink_noise(100, 3));
}

TEST(SpeechLike, NonStationaryWithPauses) {
  auto x = speech_like_source(16000 * 4, 16000, 9);
  const int block = 320;
  int silent = 0, loud = 0;
  for (std::size_t b = 0; b + block <= x.size(); b += block) {
    double e = 0.0;
    for (int k = 0; k < block; ++k) e += x[b + k] * x[b + k];
    e /= block;
    silent += e < 1e-3;
    loud += e > 1.0;
  }
  EXPECT_GT(silent, 10);
  EXPECT_GT(loud, 10);
}

TEST(SyntheticMixture, ReplayWithRecordedGainIsBitIdentical) {
  MixtureSpec spec;
  spec.duration_s = 2.0;
  spec.target_snr_db = 5.0;
  spec.seed = 123;
  SyntheticMixture a = build_synthetic_mixture(spec);
  SyntheticMixture b = build_synthetic_mixture(spec, {}, a.noise_gain);
  EXPECT_EQ(a.mixture.samples, b.mixture.samples);
  EXPECT_NEAR(measured_snr_db(a.speech_images, a.noise_images), 5.0, 1e-9);
  ASSERT_EQ(a.oracle_images.size(), 2u);
  ASSERT_EQ(a.noise_images.size(), 6u);
}

TEST(SyntheticMixture, NoNoiseIsAnError) {
  MixtureSpec spec;
  spec.noise_count = 0;
  spec.duration_s = 1.0;
  EXPECT_THROW(build_synthetic_mixture(spec), ConfigError);
}
