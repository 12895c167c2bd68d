// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "convbse/error.hpp"
#include "real_fft.hpp"

namespace convbse {

namespace {

int next_pow2(Eigen::Index n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream per (role, index) under one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role,
                          std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (role << 40) ^ index);
}

double sample_variance(const double* x, Eigen::Index n) {
  double mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) acc += (x[i] - mean) * (x[i] - mean);
  return acc / static_cast<double>(n);
}

void check_images(const std::vector<MultichannelSignal>& images,
                  int channels, Eigen::Index length) {
  for (const auto& img : images)
    if (img.channels() != channels || img.length() != length)
      throw ConfigError("all images must share channel count and length");
}

MultichannelSignal sum_images(const std::vector<MultichannelSignal>& speech,
                              const std::vector<MultichannelSignal>& noise,
                              double noise_gain) {
  MultichannelSignal out(speech.front().channels(), speech.front().length(),
                         speech.front().sample_rate);
  for (const auto& s : speech) out.samples += s.samples;
  for (const auto& z : noise) out.samples += noise_gain * z.samples;
  return out;
}

std::vector<MultichannelSignal> scaled(std::vector<MultichannelSignal> images,
                                       double gain) {
  for (auto& img : images) img.samples *= gain;
  return images;
}

}  // namespace

MultichannelSignal convolve_rir(std::span<const double> source,
                                const Eigen::MatrixXd& rir, int sample_rate) {
  const auto len = static_cast<Eigen::Index>(source.size());
  const Eigen::Index taps = rir.cols();
  MultichannelSignal out(static_cast<int>(rir.rows()), len, sample_rate);
  if (len == 0 || taps == 0) return out;

  const int nfft = next_pow2(len + taps - 1);
  const int bins = nfft / 2 + 1;
  detail::RealFft fft(nfft);
  std::fill(fft.time(), fft.time() + nfft, 0.0);
  std::copy(source.begin(), source.end(), fft.time());
  fft.forward();
  std::vector<std::complex<double>> source_spec(fft.freq(), fft.freq() + bins);

  for (Eigen::Index m = 0; m < rir.rows(); ++m) {
    std::fill(fft.time(), fft.time() + nfft, 0.0);
    for (Eigen::Index k = 0; k < taps; ++k) fft.time()[k] = rir(m, k);
    fft.forward();
    for (int f = 0; f < bins; ++f) fft.freq()[f] *= source_spec[f];
    fft.inverse();
    for (Eigen::Index n = 0; n < len; ++n) out.samples(m, n) = fft.time()[n] / nfft;
  }
  return out;
}

MultichannelSignal oracle_image(std::span<const double> source,
                                const Eigen::MatrixXd& rir, double truncate_ms,
                                int sample_rate) {
  if (!(truncate_ms > 0.0)) throw ConfigError("truncation time must be positive");
  const double keep = std::round(truncate_ms * sample_rate / 1000.0);
  const Eigen::Index taps =
      std::min<Eigen::Index>(rir.cols(), static_cast<Eigen::Index>(keep));
  Eigen::MatrixXd cut = Eigen::MatrixXd::Zero(rir.rows(), rir.cols());
  cut.leftCols(taps) = rir.leftCols(taps);
  return convolve_rir(source, cut, sample_rate);
}

double first_channel_variance(const MultichannelSignal& image) {
  return sample_variance(image.samples.row(0).data(), image.length());
}

double measured_snr_db(const std::vector<MultichannelSignal>& speech_images,
                       const std::vector<MultichannelSignal>& noise_images,
                       double noise_gain) {
  double speech = 0.0;
  for (const auto& s : speech_images) speech += first_channel_variance(s);
  speech /= static_cast<double>(speech_images.size());
  double noise = 0.0;
  for (const auto& z : noise_images) noise += first_channel_variance(z);
  return 10.0 * std::log10(speech / (noise * noise_gain * noise_gain));
}

MixResult mix_at_snr(const std::vector<MultichannelSignal>& speech_images,
                     const std::vector<MultichannelSignal>& noise_images,
                     double target_snr_db) {
  if (speech_images.empty()) throw ConfigError("mixing needs at least one speech image");
  if (noise_images.empty())
    throw ConfigError("mixing at an SNR needs at least one noise image");
  if (!std::isfinite(target_snr_db)) throw ConfigError("target SNR must be finite");
  const int channels = speech_images.front().channels();
  const Eigen::Index length = speech_images.front().length();
  check_images(speech_images, channels, length);
  check_images(noise_images, channels, length);

  double speech = 0.0;
  for (const auto& s : speech_images) speech += first_channel_variance(s);
  speech /= static_cast<double>(speech_images.size());
  double noise = 0.0;
  for (const auto& z : noise_images) noise += first_channel_variance(z);
  if (!(speech > 0.0)) throw ConfigError("speech images have zero variance");
  if (!(noise > 0.0)) throw ConfigError("noise images have zero variance");

  MixResult result;
  result.noise_gain = std::sqrt(speech / (noise * std::pow(10.0, target_snr_db / 10.0)));
  result.mixture = sum_images(speech_images, noise_images, result.noise_gain);
  return result;
}

Eigen::MatrixXd synth_rir(double rt60_ms, int channels, std::uint64_t seed,
                          const RirOptions& options) {
  if (!(rt60_ms > 0.0)) throw ConfigError("RT60 must be positive");
  if (channels < 1) throw ConfigError("RIR needs at least one channel");
  const double rt60_taps = rt60_ms * options.sample_rate / 1000.0;
  const auto taps = static_cast<Eigen::Index>(
      std::ceil(options.length_factor * rt60_taps) + options.max_delay);
  // Amplitude decay per tap so that the energy envelope is -60 dB at rt60.
  const double decay = 3.0 * std::log(10.0) / rt60_taps;
  // Tail energy sum_n g^2 exp(-2 decay n) = g^2 / (1 - exp(-2 decay)) for a
  // long tail; g is set so the unit direct path sits drr_db above it.
  const double tail_gain =
      std::sqrt(std::pow(10.0, -options.drr_db / 10.0) * (1.0 - std::exp(-2.0 * decay)));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> delay_dist(0, std::max(0, options.max_delay - 1));

  Eigen::MatrixXd rir = Eigen::MatrixXd::Zero(channels, taps);
  for (int m = 0; m < channels; ++m) {
    const int delay = delay_dist(rng);
    rir(m, delay) = 1.0;
    for (Eigen::Index n = delay + 1; n < taps; ++n)
      rir(m, n) = tail_gain * std::exp(-decay * n) * gauss(rng);
  }
  return rir;
}

std::vector<double> pink_noise(Eigen::Index length, std::uint64_t seed) {
  // Paul Kellett's refined 1/f filter applied to white Gaussian noise.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<double> out(length);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (auto& y : out) {
    const double white = gauss(rng);
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    y = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
  }
  if (length > 0) {
    const double sd = std::sqrt(sample_variance(out.data(), length));
    if (sd > 0.0)
      for (auto& y : out) y /= sd;
  }
  return out;
}

std::vector<double> speech_like_source(Eigen::Index length, int sample_rate,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  const double fs = sample_rate;
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> out(length, 0.0);
  Eigen::Index n = 0;
  while (n < length) {
    n += static_cast<Eigen::Index>(range(0.05, 0.3) * fs);
    const auto dur = static_cast<Eigen::Index>(range(0.1, 0.4) * fs);
    const bool voiced = uni(rng) < 0.8;
    const double f0 = range(90.0, 250.0);
    const double glide = range(-0.2, 0.2);
    const double gain = range(0.5, 1.5);
    const double formants[2] = {range(300.0, 900.0), range(900.0, 2500.0)};

    const int harmonics = std::min(40, static_cast<int>(0.45 * fs / (f0 * 1.2)));
    std::vector<double> phase(harmonics);
    for (auto& p : phase) p = range(0.0, two_pi);
    std::normal_distribution<double> gauss;

    std::vector<double> excitation(dur);
    double base_phase = 0.0;
    for (Eigen::Index k = 0; k < dur; ++k) {
      if (voiced) {
        const double pitch = f0 * (1.0 + glide * k / dur);
        base_phase += two_pi * pitch / fs;
        double e = 0.0;
        for (int h = 0; h < harmonics; ++h)
          e += std::sin((h + 1) * base_phase + phase[h]) / (h + 1);
        excitation[k] = e;
      } else {
        excitation[k] = gauss(rng);
      }
    }

    std::vector<double> shaped(dur, 0.0);
    for (double formant : formants) {
      const double r = std::exp(-std::numbers::pi * range(80.0, 150.0) / fs);
      const double c = 2.0 * r * std::cos(two_pi * formant / fs);
      double y1 = 0.0, y2 = 0.0;
      for (Eigen::Index k = 0; k < dur; ++k) {
        const double y = (1.0 - r) * excitation[k] + c * y1 - r * r * y2;
        y2 = y1;
        y1 = y;
        shaped[k] += y;
      }
    }
    if (!voiced)
      for (Eigen::Index k = 1; k < dur; ++k) shaped[k] += excitation[k] - excitation[k - 1];

    for (Eigen::Index k = 0; k < dur && n + k < length; ++k) {
      const double env = std::sin(std::numbers::pi * (k + 0.5) / dur);
      out[n + k] += gain * env * env * shaped[k];
    }
    n += dur;
  }
  if (length > 0) {
    const double sd = std::sqrt(sample_variance(out.data(), length));
    if (sd > 0.0)
      for (auto& y : out) y /= sd;
  }
  return out;
}

void MixtureSpec::validate() const {
  if (num_targets < 1) throw ConfigError("need at least one target source");
  if (noise_count < 0) throw ConfigError("noise count must be non-negative");
  if (!std::isfinite(target_snr_db)) throw ConfigError("target SNR must be finite");
  if (!std::isfinite(drr_db)) throw ConfigError("direct-to-reverberant ratio must be finite");
  if (channels < 1) throw ConfigError("need at least one channel");
  if (!(rt60_ms > 0.0) || !(duration_s > 0.0) || sample_rate <= 0 ||
      !(truncate_ms > 0.0) || !(target_level > 0.0))
    throw ConfigError("RT60, duration, rate, truncation and level must be positive");
}

SyntheticMixture build_synthetic_mixture(
    const MixtureSpec& spec, const std::vector<std::vector<double>>& speech,
    std::optional<double> noise_gain) {
  spec.validate();
  if (spec.noise_count == 0)
    throw ConfigError("an SNR-controlled mixture needs at least one noise source");
  if (!speech.empty() && static_cast<int>(speech.size()) != spec.num_targets)
    throw ConfigError("number of speech signals differs from the target count");

  const int fs = spec.sample_rate;
  auto length = static_cast<Eigen::Index>(std::llround(spec.duration_s * fs));
  if (!speech.empty()) {
    length = static_cast<Eigen::Index>(speech.front().size());
    for (const auto& s : speech) length = std::min(length, static_cast<Eigen::Index>(s.size()));
  }
  RirOptions rir_options;
  rir_options.sample_rate = fs;
  rir_options.drr_db = spec.drr_db;

  SyntheticMixture out;
  out.speech_rirs.sample_rate = fs;
  out.noise_rirs.sample_rate = fs;
  for (int k = 0; k < spec.num_targets; ++k) {
    std::vector<double> dry;
    if (speech.empty()) {
      dry = speech_like_source(length, fs, derive_seed(spec.seed, 1, k));
      for (auto& x : dry) x *= spec.target_level;
    } else {
      dry.assign(speech[k].begin(), speech[k].begin() + length);
    }
    Eigen::MatrixXd rir = synth_rir(spec.rt60_ms, spec.channels, derive_seed(spec.seed, 2, k),
                                    rir_options);
    out.speech_images.push_back(convolve_rir(dry, rir, fs));
    out.oracle_images.push_back(oracle_image(dry, rir, spec.truncate_ms, fs));
    out.speech_rirs.rirs.push_back(std::move(rir));
  }

  std::vector<MultichannelSignal> raw_noise;
  for (int j = 0; j < spec.noise_count; ++j) {
    std::vector<double> dry = pink_noise(length, derive_seed(spec.seed, 3, j));
    for (auto& x : dry) x *= spec.target_level;
    Eigen::MatrixXd rir = synth_rir(spec.rt60_ms, spec.channels, derive_seed(spec.seed, 4, j),
                                    rir_options);
    raw_noise.push_back(convolve_rir(dry, rir, fs));
    out.noise_rirs.rirs.push_back(std::move(rir));
  }

  if (noise_gain) {
    out.noise_gain = *noise_gain;
    out.mixture = sum_images(out.speech_images, raw_noise, out.noise_gain);
  } else {
    MixResult mix = mix_at_snr(out.speech_images, raw_noise, spec.target_snr_db);
    out.noise_gain = mix.noise_gain;
    out.mixture = std::move(mix.mixture);
  }
  out.noise_images = scaled(std::move(raw_noise), out.noise_gain);
  return out;
}

}  // namespace convbse
