// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "convbse/error.hpp"
#include "real_fft.hpp"

namespace convbse {

namespace {

double energy(std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

double ratio_db(double signal, double noise) {
  if (!(noise > 0.0)) return signal > 0.0 ? kSdrCapDb : -kSdrCapDb;
  if (!(signal > 0.0)) return -kSdrCapDb;
  return std::clamp(10.0 * std::log10(signal / noise), -kSdrCapDb, kSdrCapDb);
}

int next_pow2(std::size_t n) {
  int p = 1;
  while (static_cast<std::size_t>(p) < n) p <<= 1;
  return p;
}

// Least-squares FIR projection of estimate onto delayed copies of reference.
std::vector<double> filtered_target(std::span<const double> estimate,
                                    std::span<const double> reference, int taps) {
  const std::size_t n = reference.size();
  const int nfft = next_pow2(n + taps);
  const int bins = nfft / 2 + 1;
  detail::RealFft fft(nfft);

  auto transform = [&](std::span<const double> x) {
    std::fill(fft.time(), fft.time() + nfft, 0.0);
    std::copy(x.begin(), x.end(), fft.time());
    fft.forward();
    return std::vector<Complex>(fft.freq(), fft.freq() + bins);
  };
  const std::vector<Complex> R = transform(reference);
  const std::vector<Complex> E = transform(estimate);

  auto inverse = [&](auto&& spectrum) {
    for (int f = 0; f < bins; ++f) fft.freq()[f] = spectrum(f);
    fft.inverse();
    std::vector<double> out(fft.time(), fft.time() + nfft);
    for (auto& v : out) v /= nfft;
    return out;
  };
  const std::vector<double> auto_corr = inverse([&](int f) { return std::norm(R[f]); });
  const std::vector<double> cross = inverse([&](int f) { return E[f] * std::conj(R[f]); });

  Eigen::MatrixXd toeplitz(taps, taps);
  Eigen::VectorXd rhs(taps);
  for (int i = 0; i < taps; ++i) {
    rhs(i) = cross[i];
    for (int j = 0; j < taps; ++j) toeplitz(i, j) = auto_corr[std::abs(i - j)];
  }
  toeplitz.diagonal().array() += 1e-10 * auto_corr[0] + std::numeric_limits<double>::min();
  const Eigen::VectorXd h = toeplitz.ldlt().solve(rhs);

  std::vector<double> padded_h(h.data(), h.data() + taps);
  const std::vector<Complex> H = transform(padded_h);
  std::vector<double> target = inverse([&](int f) { return H[f] * R[f]; });
  target.resize(n);
  return target;
}

}  // namespace

double sdr(std::span<const double> estimate, std::span<const double> reference,
           SdrMode mode, int filter_taps) {
  if (estimate.size() != reference.size())
    throw ConfigError("estimate and reference lengths differ");
  const double ref_energy = energy(reference);
  if (!(ref_energy > 0.0)) throw ConfigError("reference signal is all zero");

  std::vector<double> target;
  if (mode == SdrMode::kGainOnly) {
    const double gain =
        std::inner_product(estimate.begin(), estimate.end(), reference.begin(), 0.0) /
        ref_energy;
    target.resize(reference.size());
    std::transform(reference.begin(), reference.end(), target.begin(),
                   [gain](double r) { return gain * r; });
  } else {
    if (filter_taps < 1) throw ConfigError("distortion filter needs at least one tap");
    target = filtered_target(estimate, reference, filter_taps);
  }
  double err = 0.0;
  for (std::size_t n = 0; n < target.size(); ++n) {
    const double e = estimate[n] - target[n];
    err += e * e;
  }
  return ratio_db(energy(target), err);
}

double SdrReport::mean() const {
  if (sdr_db.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(sdr_db.begin(), sdr_db.end(), 0.0) /
         static_cast<double>(sdr_db.size());
}

SdrReport best_pairing_sdr(const std::vector<std::vector<double>>& estimates,
                           const std::vector<std::vector<double>>& references,
                           SdrMode mode) {
  const std::size_t K = references.size();
  if (K == 0 || estimates.size() < K)
    throw ConfigError("need at least as many estimates as references");
  if (estimates.size() > 8) throw ConfigError("pairing search is limited to 8 estimates");

  Eigen::MatrixXd table(estimates.size(), K);
  for (std::size_t e = 0; e < estimates.size(); ++e)
    for (std::size_t k = 0; k < K; ++k)
      table(e, k) = sdr(estimates[e], references[k], mode);

  std::vector<int> order(estimates.size());
  std::iota(order.begin(), order.end(), 0);
  SdrReport best;
  double best_sum = -std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += table(order[k], k);
    if (sum > best_sum) {
      best_sum = sum;
      best.assignment.assign(order.begin(), order.begin() + K);
    }
  } while (std::next_permutation(order.begin(), order.end()));
  for (std::size_t k = 0; k < K; ++k) best.sdr_db.push_back(table(best.assignment[k], k));
  return best;
}

void write_sdr_csv(const std::vector<SdrRow>& rows, const std::filesystem::path& path,
                   bool append) {
  const bool header = !append || !std::filesystem::exists(path) ||
                      std::filesystem::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (header) out << "method,mixture,source,sdr_db,elapsed_s\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << r.method << ',' << r.mixture << ',' << r.source << ',' << r.sdr_db << ','
        << r.elapsed_s << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

CostModel model_iteration_cost(Variant variant, int channels, int targets, int lag_dim,
                               int frames, int bins, int alg2_g_period) {
  const double M = channels;
  const int K_int = variant == Variant::kIvaConv ? channels : targets;
  const double K = K_int;
  const double L = variant == Variant::kIve ? 0.0 : lag_dim;
  const double FT = static_cast<double>(frames) * bins;
  const double F = bins;
  // K target statistics plus one for the noise block when it exists.
  const double passes = K + (K_int < channels ? 1.0 : 0.0);
  const double separation = M * (M + L) * FT;

  CostModel cost;
  if (variant == Variant::kIveConvAlg2) {
    const double period = std::max(1, alg2_g_period);
    cost.covariance_passes = passes / period;
    cost.covariance_ops = passes * L * L * FT / period;
    cost.factorization_ops = passes * L * L * L * F / period;
    cost.other_ops = (passes * (M * M + 2.0 * M * L) * FT + M * L * FT) / period +
                     K * M * M * FT + separation;
  } else {
    cost.covariance_passes = passes;
    cost.covariance_ops = passes * L * L * FT;
    cost.factorization_ops = passes * L * L * L * F;
    cost.other_ops = passes * (M * M + 2.0 * M * L) * FT + separation;
  }
  return cost;
}

StackedSpectrogram random_stacked(int bins, int frames, int channels, int d1, int d2,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd envelope(frames);
  for (int t = 0; t < frames; ++t) envelope(t) = std::exp(gauss(rng));
  Spectrogram spec(bins, frames, channels);
  for (int f = 0; f < bins; ++f)
    for (int t = 0; t < frames; ++t)
      for (int m = 0; m < channels; ++m)
        spec(f, t, m) = envelope(t) * Complex(gauss(rng), gauss(rng));
  if (d1 <= 0) return stack_instantaneous(spec);
  return stack(spec, d1, d2);
}

std::vector<BenchmarkRow> benchmark_iteration_cost(const std::vector<BenchmarkCase>& cases,
                                                   int iterations, std::uint64_t seed) {
  if (iterations < 1) throw ConfigError("benchmark needs at least one iteration");
  std::vector<BenchmarkRow> rows;
  for (const auto& bench : cases) {
    BcdConfig config;
    config.variant = bench.variant;
    config.num_targets = bench.targets;
    config.d1 = bench.d1;
    config.d2 = bench.d2;
    config.outer_iterations = iterations;
    config.track_objective = false;
    const BcdConfig c = config.resolved(bench.channels);

    const StackedSpectrogram stacked =
        random_stacked(bench.bins, bench.frames, bench.channels, c.d1, c.d2, seed);
    const BcdResult result = run_bcd(stacked, c);

    BenchmarkRow row;
    row.config = bench;
    row.config.targets = c.num_targets;
    row.config.d1 = c.d1;
    row.config.d2 = c.d2;
    row.lag_dim = stacked.lag_dim();
    row.model = model_iteration_cost(c.variant, bench.channels, c.num_targets,
                                     row.lag_dim, bench.frames, bench.bins,
                                     c.alg2_g_period);
    row.seconds_per_iteration =
        result.log.back().elapsed_s / static_cast<double>(result.log.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace convbse
