// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "convbse/evaluation.hpp"
#include "convbse/mixture.hpp"
#include "convbse/parallel.hpp"
#include "convbse/pipeline.hpp"
#include "test_support.hpp"

using namespace convbse;
using namespace convbse::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::vector<double> first_channel(const MultichannelSignal& s) {
  std::vector<double> out(static_cast<std::size_t>(s.length()));
  for (Eigen::Index n = 0; n < s.length(); ++n) out[static_cast<std::size_t>(n)] = s.samples(0, n);
  return out;
}

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

// ------------------------------------------------------------------ 1

Outcome monotonicity() {
  const auto t0 = Clock::now();
  const int channel_options[3] = {3, 4, 6};
  double worst = -std::numeric_limits<double>::infinity();
  int checks = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const int M = channel_options[instance % 3];
    const int K = 1 + (instance / 3) % 2;
    const Spectrogram spec = model_spectrogram(64, 128, M, K, 1000 + instance);
    for (Variant v : {Variant::kIveConvAlg1, Variant::kIveConvAlg2}) {
      BcdConfig c;
      c.variant = v;
      c.num_targets = K;
      c.d1 = 2;
      c.d2 = 3;
      c.outer_iterations = 10;
      c.track_objective = false;
      const StackedSpectrogram x = stack_for(spec, c);
      double previous = std::numeric_limits<double>::infinity();
      BcdCallbacks cb;
      cb.on_block = [&](const BlockEvent& e) {
        const double g = objective(e.state, e.model, x);
        if (std::isfinite(previous))
          worst = std::max(worst, (g - previous) / std::abs(previous));
        previous = g;
        ++checks;
      };
      run_bcd(x, c, cb);
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-8 && elapsed < 60.0;
  o.detail = fmt("%.0f block updates, max relative increase %.2e, %.1f s", checks, worst,
                 elapsed);
  return o;
}

// ------------------------------------------------------------------ 2

Outcome reduction_identity() {
  double worst = 0.0;
  for (int instance = 0; instance < 10; ++instance) {
    std::mt19937_64 rng(2000 + instance);
    const int M = 3 + instance % 2;
    const int K = 1 + instance % 2;
    const Spectrogram spec = model_spectrogram(8, 60, M, K, 2100 + instance);
    const StackedSpectrogram x = stack(spec, 2, 4);
    const int L = x.lag_dim();
    FilterState state(8, M, L, K);
    SourceModel model;
    std::uniform_real_distribution<double> u(0.2, 3.0);
    model.v.resize(K, 60);
    for (auto& v : model.v.reshaped()) v = u(rng);
    std::vector<std::vector<CovarianceStats>> stats(8);
    std::vector<std::vector<Eigen::MatrixXcd>> V(8);
    for (int f = 0; f < 8; ++f) {
      state.W(f) = random_complex(M, M, rng);
      model.omega.push_back(random_hpd(M - K, rng));
      std::vector<Eigen::MatrixXcd> B;
      for (int i = 0; i < K; ++i)
        stats[f].push_back(weighted_covariance(x, f, model.v.row(i).transpose()));
      stats[f].push_back(sample_covariance(x, f));
      for (const auto& s : stats[f]) {
        ReducedStats r = reduce(s, 0.0);
        V[f].push_back(r.V);
        B.push_back(r.B);
      }
      backfill_lower_filters(state.filter(f), M, K, B);
    }
    worst = std::max(worst, rel_diff(objective(state, model, stats),
                                     reduced_objective(state, model, V)));
  }
  Outcome o;
  o.pass = worst <= 1e-9;
  o.detail = fmt("10 instances, max relative difference %.2e", worst);
  return o;
}

// ------------------------------------------------------------------ 3

Outcome stationarity() {
  double ip_norm = 0.0, orth = 0.0, backfill = 0.0, noise_grad = 0.0, g_system = 0.0;
  int probe_failures = 0;
  for (int instance = 0; instance < 10; ++instance) {
    std::mt19937_64 rng(3000 + instance);
    const int M = 3 + instance % 3;
    const int K = 1 + instance % 2;
    const int L = 2 * M;

    // Target update.
    Eigen::MatrixXcd V = random_hpd(M, rng);
    Eigen::MatrixXcd W = random_complex(M, M, rng);
    const int i = instance % K;
    update_target_filter(W, i, V);
    ip_norm = std::max(ip_norm, std::abs((W.col(i).adjoint() * V * W.col(i))(0, 0) - 1.0));

    // Noise block.
    Eigen::MatrixXcd Vz = random_hpd(M, rng);
    update_noise_block(W, K, Vz);
    orth = std::max(orth, (W.leftCols(K).adjoint() * Vz * W.rightCols(M - K)).norm());

    // Lower filters: Rbar wbar + Pbar w = 0 for each column.
    std::vector<CovarianceStats> stats;
    std::vector<Eigen::MatrixXcd> B;
    for (int k = 0; k <= K; ++k) {
      stats.push_back(CovarianceStats{random_hpd(M + L, rng), M});
      B.push_back(prediction_filter(stats.back(), 0.0));
    }
    Eigen::MatrixXcd filter(M + L, M);
    filter.topRows(M) = W;
    backfill_lower_filters(filter, M, K, B);
    for (int col = 0; col < M; ++col) {
      const CovarianceStats& s = stats[std::min(col, K)];
      const Eigen::VectorXcd pw = s.Pbar() * filter.col(col).head(M);
      const Eigen::VectorXcd r = s.Rbar() * filter.col(col).tail(L) + pw;
      (col < K ? backfill : noise_grad) =
          std::max(col < K ? backfill : noise_grad, r.norm() / pw.norm());
    }

    // Prediction matrix: G W = [B_1 w_1 | ... | B_z W_z] and local minimality.
    const Eigen::MatrixXcd G = update_prediction_matrix(W, K, B);
    Eigen::MatrixXcd rhs(L, M);
    for (int k = 0; k < K; ++k) rhs.col(k) = B[k] * W.col(k);
    rhs.rightCols(M - K) = B[K] * W.rightCols(M - K);
    g_system = std::max(g_system, rel_diff(G * W, rhs));
    auto cost = [&](const Eigen::MatrixXcd& Gt) {
      Eigen::MatrixXcd What(M + L, M);
      What.topRows(M) = W;
      What.bottomRows(L) = -Gt * W;
      double value = 0.0;
      for (int k = 0; k < K; ++k)
        value += (What.col(k).adjoint() * stats[k].full * What.col(k))(0, 0).real();
      const Eigen::MatrixXcd Wz = What.rightCols(M - K);
      value += (Wz.adjoint() * stats[K].full * Wz).trace().real();
      return value;
    };
    const double best = cost(G);
    for (int probe = 0; probe < 20; ++probe)
      if (cost(G + 0.01 * random_complex(L, M, rng)) < best) ++probe_failures;
  }
  Outcome o;
  o.pass = ip_norm <= 1e-10 && orth <= 1e-10 && backfill <= 1e-8 && noise_grad <= 1e-8 &&
           g_system <= 1e-9 && probe_failures == 0;
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "|w^H V w - 1| %.1e, |Ws^H Vz Wz| %.1e, target/noise backfill residual "
                "%.1e/%.1e, G system %.1e, %d of 200 probes beat G",
                ip_norm, orth, backfill, noise_grad, g_system, probe_failures);
  o.detail = buf;
  return o;
}

// ------------------------------------------------------------------ 4

Outcome corner_equivalence() {
  double ive_err = 0.0, iva_err = 0.0;
  const int iterations = 8;
  {
    BcdConfig c;
    c.variant = Variant::kIve;
    c.num_targets = 2;
    c.outer_iterations = iterations;
    const StackedSpectrogram x = stack_for(model_spectrogram(16, 100, 4, 2, 4000), c);
    std::vector<Eigen::MatrixXcd> xs;
    for (int f = 0; f < x.num_bins(); ++f) xs.push_back(x.bin(f));
    const auto history = direct_ive(xs, 2, iterations);
    BcdCallbacks cb;
    cb.on_iteration = [&](const IterationEvent& e) {
      for (int f = 0; f < x.num_bins(); ++f)
        ive_err = std::max(ive_err, rel_diff(Eigen::MatrixXcd(e.state.W(f)),
                                             history[e.iteration - 1][f]));
      return std::vector<double>{};
    };
    run_bcd(x, c, cb);
  }
  {
    BcdConfig c;
    c.variant = Variant::kIvaConv;
    c.d1 = 2;
    c.d2 = 4;
    c.outer_iterations = iterations;
    const StackedSpectrogram x = stack_for(model_spectrogram(16, 100, 3, 3, 4001), c);
    std::vector<Eigen::MatrixXcd> xs;
    for (int f = 0; f < x.num_bins(); ++f) xs.push_back(x.bin(f));
    const auto history = direct_iva_conv(xs, 3, iterations, kRelativeRidge);
    BcdCallbacks cb;
    cb.on_iteration = [&](const IterationEvent& e) {
      for (int f = 0; f < x.num_bins(); ++f)
        iva_err = std::max(iva_err, rel_diff(e.state.filter(f), history[e.iteration - 1][f]));
      return std::vector<double>{};
    };
    run_bcd(x, c, cb);
  }
  Outcome o;
  o.pass = ive_err <= 1e-10 && iva_err <= 1e-10;
  o.detail = fmt("max relative iterate difference: IVE %.2e, IVA-conv %.2e", ive_err, iva_err);
  return o;
}

// ------------------------------------------------------------------ 5

Outcome separation_quality() {
  const auto t0 = Clock::now();
  const int mixtures = 5;
  double ive_total = 0.0, conv_total = 0.0;
  for (int m = 0; m < mixtures; ++m) {
    MixtureSpec spec;
    spec.seed = 5000 + static_cast<std::uint64_t>(m);
    spec.num_targets = 2;
    spec.noise_count = 6;
    spec.target_snr_db = 10.0;
    spec.channels = 4;
    spec.rt60_ms = 400.0;
    spec.duration_s = 30.0;
    const SyntheticMixture mix = build_synthetic_mixture(spec);
    std::vector<std::vector<double>> refs;
    for (const auto& img : mix.oracle_images) refs.push_back(first_channel(img));

    double means[2];
    int k = 0;
    for (Variant v : {Variant::kIve, Variant::kIveConvAlg1}) {
      BcdConfig c;
      c.variant = v;
      c.num_targets = 2;
      c.d1 = 2;
      c.d2 = 5;
      c.outer_iterations = 50;
      c.track_objective = false;
      const PipelineResult r = separate_signal(mix.mixture, c, StftConfig{});
      std::vector<std::vector<double>> est;
      for (const auto& img : r.images.targets) est.push_back(first_channel(img));
      means[k++] = best_pairing_sdr(est, refs).mean();
    }
    std::printf("    mixture %d: IVE %.2f dB, IVE-conv-Alg1 %.2f dB\n", m, means[0], means[1]);
    std::fflush(stdout);
    ive_total += means[0] / mixtures;
    conv_total += means[1] / mixtures;
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = conv_total >= ive_total + 1.0 && elapsed < 600.0;
  o.detail = fmt("mean SDR IVE %.2f dB, IVE-conv-Alg1 %.2f dB, %.0f s", ive_total, conv_total,
                 elapsed);
  return o;
}

// ------------------------------------------------------------------ 6

Outcome speed() {
  const int saved = num_threads();
  set_num_threads(1);
  BenchmarkCase base;
  base.channels = 6;
  base.targets = 2;
  base.d1 = 2;
  base.d2 = 5;
  base.frames = 300;
  base.bins = 257;
  std::vector<BenchmarkCase> cases(2, base);
  cases[0].variant = Variant::kIveConvAlg1;
  cases[1].variant = Variant::kIvaConv;
  const auto rows = benchmark_iteration_cost(cases, 5, 6000);
  set_num_threads(saved);

  const double time_ratio = rows[0].seconds_per_iteration / rows[1].seconds_per_iteration;
  const double ops_ratio = rows[0].model.covariance_ops / rows[1].model.covariance_ops;
  const double expected = (2.0 + 1.0) / 6.0;
  Outcome o;
  o.pass = time_ratio <= 0.6 && ops_ratio == expected;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "Alg1 %.3f s/iter, IVA-conv %.3f s/iter, time ratio %.3f, modeled ratio %.4f "
                "(expected %.4f)",
                rows[0].seconds_per_iteration, rows[1].seconds_per_iteration, time_ratio,
                ops_ratio, expected);
  o.detail = buf;
  return o;
}

// ------------------------------------------------------------------ 7

Outcome reconstruction_and_snr() {
  std::mt19937_64 rng(7000);
  std::normal_distribution<double> g;
  double worst_pr = 0.0;
  for (StftConfig cfg : {StftConfig{2048, 512, WindowType::kSqrtHann},
                         StftConfig{1024, 256, WindowType::kSqrtHann},
                         StftConfig{512, 256, WindowType::kHann}}) {
    MultichannelSignal x(3, 20000, 16000);
    for (auto& v : x.samples.reshaped()) v = g(rng);
    const MultichannelSignal y = synthesize(analyze(x, cfg));
    worst_pr = std::max(worst_pr, (y.samples - x.samples).norm() / x.samples.norm());
  }

  double worst_snr = 0.0;
  for (double target : {0.0, 5.0, 10.0}) {
    MixtureSpec spec;
    spec.seed = 7100 + static_cast<std::uint64_t>(target);
    spec.target_snr_db = target;
    spec.duration_s = 2.0;
    const SyntheticMixture mix = build_synthetic_mixture(spec);
    worst_snr = std::max(worst_snr,
                         std::abs(measured_snr_db(mix.speech_images, mix.noise_images) - target));
  }

  // Spot checks of derived oracles; the unit suites cover the rest.
  std::vector<double> src(2000), h(300);
  for (auto& v : src) v = g(rng);
  for (auto& v : h) v = 0.1 * g(rng);
  Eigen::MatrixXd rir(1, 300);
  for (int k = 0; k < 300; ++k) rir(0, k) = h[k];
  const auto naive = naive_convolution(src, h);
  const MultichannelSignal conv = convolve_rir(src, rir);
  double conv_err = 0.0;
  for (int n = 0; n < 2000; ++n) conv_err = std::max(conv_err, std::abs(conv.samples(0, n) - naive[n]));

  const CovarianceStats s{random_hpd(9, rng), 3};
  const double block_err = rel_diff(schur_complement(s, 0.0).inverse(),
                                    Eigen::MatrixXcd(s.full.inverse().topLeftCorner(3, 3)));

  Outcome o;
  o.pass = worst_pr <= 1e-6 && worst_snr <= 1e-9 && conv_err <= 1e-10 && block_err <= 1e-9;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "STFT relative RMS error %.1e, SNR error %.1e dB, convolution %.1e, "
                "block inverse %.1e",
                worst_pr, worst_snr, conv_err, block_err);
  o.detail = buf;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"1 monotonicity", monotonicity},
      {"2 reduction identity", reduction_identity},
      {"3 stationarity and closed forms", stationarity},
      {"4 corner equivalence", corner_equivalence},
      {"5 separation quality", separation_quality},
      {"6 speed", speed},
      {"7 reconstruction and SNR", reconstruction_and_snr},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
