// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/separator.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "convbse/error.hpp"
#include "convbse/parallel.hpp"

namespace convbse {

namespace {

constexpr double kSingularRcond = 1e-14;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// log |det W| from an LU factorization; throws when W is singular.
double log_abs_det(const Eigen::MatrixXcd& W) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(W);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < W.rows(); ++k) {
    const double a = std::abs(lu.matrixLU()(k, k));
    if (!(a > 0.0) || !std::isfinite(a))
      throw NumericalError("separation matrix is singular");
    acc += std::log(a);
  }
  return acc;
}

// log det and inverse-trace helper for the noise covariance.
struct OmegaFactor {
  Eigen::LLT<Eigen::MatrixXcd> llt;
  double log_det = 0.0;

  explicit OmegaFactor(const Eigen::MatrixXcd& omega) : llt(omega) {
    if (omega.rows() == 0) return;
    if (llt.info() != Eigen::Success)
      throw NumericalError("noise covariance is not positive definite");
    for (Eigen::Index k = 0; k < omega.rows(); ++k)
      log_det += 2.0 * std::log(llt.matrixL()(k, k).real());
  }
  // trace(Omega^{-1} C)
  double trace_inv(const Eigen::MatrixXcd& C) const {
    if (C.rows() == 0) return 0.0;
    return llt.solve(C).trace().real();
  }
};

double log_v_term(const SourceModel& model, int bins) {
  const auto T = static_cast<double>(model.v.cols());
  return bins * model.v.array().log().sum() / T;
}

double sum_in_order(const std::vector<double>& per_bin) {
  return std::accumulate(per_bin.begin(), per_bin.end(), 0.0);
}

void check_model(const FilterState& state, const SourceModel& model) {
  if (model.v.rows() != state.targets())
    throw ConfigError("source model has the wrong number of targets");
  if (static_cast<int>(model.omega.size()) != state.num_bins())
    throw ConfigError("source model needs one noise covariance per bin");
}

// Quadratic form sum of a block of filter columns against one statistic.
double quad_trace(const Eigen::MatrixXcd& F, const Eigen::MatrixXcd& R) {
  return (F.adjoint() * R * F).trace().real();
}

// Statistics of the time-invariant noise model, computed once per run.
struct NoiseCache {
  std::vector<Eigen::MatrixXcd> V;  // Schur complement of Rhat_z
  std::vector<Eigen::MatrixXcd> B;  // Rbar_z^{-1} Pbar_z
  std::vector<Eigen::MatrixXcd> R;  // top-left block of Rhat_z
};

NoiseCache build_noise_cache(const StackedSpectrogram& stacked) {
  const int F = stacked.num_bins();
  NoiseCache cache{std::vector<Eigen::MatrixXcd>(F), std::vector<Eigen::MatrixXcd>(F),
                   std::vector<Eigen::MatrixXcd>(F)};
  parallel_for(F, [&](int f) {
    CovarianceStats stats = sample_covariance(stacked, f);
    ReducedStats red = reduce(stats);
    cache.V[f] = std::move(red.V);
    cache.B[f] = std::move(red.B);
    cache.R[f] = stats.R();
  });
  return cache;
}

void check_stacked(const StackedSpectrogram& stacked, const BcdConfig& c) {
  const int M = stacked.channels();
  const int expected = c.variant == Variant::kIve ? 0 : M * (c.d2 - c.d1 + 1);
  if (stacked.lag_dim() != expected || (expected > 0 && stacked.d1() != c.d1))
    throw ConfigError("stacked observation does not match the configured delays");
}

BcdState initialize_with(const StackedSpectrogram& stacked, const BcdConfig& c,
                         const NoiseCache* cache) {
  const int F = stacked.num_bins();
  const int M = stacked.channels();
  const int L = stacked.lag_dim();
  const int K = c.num_targets;
  BcdState out{FilterState(F, M, L, K), SourceModel{}};
  out.model.omega.assign(F, Eigen::MatrixXcd(0, 0));
  for (int f = 0; f < F; ++f) {
    out.state.W(f) = -Eigen::MatrixXcd::Identity(M, M);
    out.state.lower(f).setZero();
  }
  if (K < M) {
    const bool alg2 = c.variant == Variant::kIveConvAlg2;
    parallel_for(F, [&](int f) {
      // With G = 0 the Alg2 noise covariance is the plain top-left block.
      const Eigen::MatrixXcd& V = alg2 ? cache->R[f] : cache->V[f];
      out.model.omega[f] = update_noise_block(out.state.W(f), K, V);
      if (!alg2 && L > 0)
        out.state.lower(f).rightCols(M - K).noalias() =
            -cache->B[f] * out.state.W(f).rightCols(M - K);
    });
  }
  out.model.v = update_variances(separate(out.state, stacked).targets);
  return out;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kIve:
      return "ive";
    case Variant::kIvaConv:
      return "iva-conv";
    case Variant::kIveConvAlg1:
      return "ive-conv-alg1";
    case Variant::kIveConvAlg2:
      return "ive-conv-alg2";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kIve, Variant::kIvaConv, Variant::kIveConvAlg1,
                    Variant::kIveConvAlg2})
    if (to_string(v) == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected ive, iva-conv, ive-conv-alg1 or ive-conv-alg2)");
}

BcdConfig BcdConfig::resolved(int channels) const {
  if (channels < 1) throw ConfigError("need at least one channel");
  BcdConfig c = *this;
  if (c.variant == Variant::kIvaConv) c.num_targets = channels;
  if (c.variant == Variant::kIve) {
    c.d1 = 0;
    c.d2 = 0;
  } else if (c.d1 < 1 || c.d2 < c.d1) {
    throw ConfigError("delays need 1 <= d1 <= d2");
  }
  if (c.num_targets < 1 || c.num_targets > channels)
    throw ConfigError("target count must satisfy 1 <= K <= M");
  if (c.outer_iterations < 0) throw ConfigError("iteration count must be non-negative");
  if (c.alg2_g_period < 1) throw ConfigError("G update period must be positive");
  if (!(c.rel_tolerance >= 0.0)) throw ConfigError("tolerance must be non-negative");
  return c;
}

StackedSpectrogram stack_for(const Spectrogram& spec, const BcdConfig& config) {
  const BcdConfig c = config.resolved(spec.num_channels());
  if (c.variant == Variant::kIve) return stack_instantaneous(spec);
  return stack(spec, c.d1, c.d2);
}

FilterState::FilterState(int bins, int channels, int lag_dim, int targets)
    : channels_(channels), lag_dim_(lag_dim), targets_(targets) {
  if (targets < 1 || targets > channels)
    throw ConfigError("target count must satisfy 1 <= K <= M");
  Eigen::MatrixXcd init = Eigen::MatrixXcd::Zero(channels + lag_dim, channels);
  init.topRows(channels).setIdentity();
  filters_.assign(bins, init);
}

Eigen::MatrixXcd FilterState::prediction_matrix(int f) const {
  if (lag_dim_ == 0) return Eigen::MatrixXcd::Zero(0, channels_);
  // G W = -Wbar  <=>  W^T G^T = -Wbar^T
  Eigen::MatrixXcd Wt = W(f).transpose();
  Eigen::MatrixXcd rhs = -lower(f).transpose();
  return Eigen::PartialPivLU<Eigen::MatrixXcd>(Wt).solve(rhs).transpose();
}

void FilterState::set_prediction_matrix(int f, const Eigen::MatrixXcd& G) {
  if (G.rows() != lag_dim_ || G.cols() != channels_)
    throw ConfigError("prediction matrix must be L x M");
  if (lag_dim_ > 0) lower(f).noalias() = -G * W(f);
}

double objective(const FilterState& state, const SourceModel& model,
                 const StackedSpectrogram& stacked) {
  check_model(state, model);
  const int F = state.num_bins();
  const int K = state.targets();
  const int Nz = state.noise_dim();
  const auto T = static_cast<double>(stacked.num_frames());
  if (model.v.cols() != stacked.num_frames())
    throw ConfigError("source model and observation differ in frame count");
  const Eigen::ArrayXXd inv_v = model.v.array().inverse();

  std::vector<double> per_bin(F);
  parallel_for(F, [&](int f) {
    const Eigen::MatrixXcd S = state.filter(f).adjoint() * stacked.bin(f);
    double value = (S.topRows(K).cwiseAbs2().array() * inv_v).sum() / T;
    OmegaFactor omega(model.omega[f]);
    if (Nz > 0) {
      const Eigen::MatrixXcd Z = S.bottomRows(Nz);
      const Eigen::MatrixXcd C = Z * Z.adjoint() / T;
      value += omega.trace_inv(C);
    }
    value += -2.0 * log_abs_det(state.W(f)) + omega.log_det;
    per_bin[f] = value;
  });
  return sum_in_order(per_bin) + log_v_term(model, F);
}

double objective(const FilterState& state, const SourceModel& model,
                 const std::vector<std::vector<CovarianceStats>>& stats) {
  check_model(state, model);
  const int F = state.num_bins();
  const int K = state.targets();
  const int Nz = state.noise_dim();
  if (static_cast<int>(stats.size()) != F)
    throw ConfigError("need statistics for every frequency bin");
  std::vector<double> per_bin(F);
  for (int f = 0; f < F; ++f) {
    if (static_cast<int>(stats[f].size()) < K + (Nz > 0 ? 1 : 0))
      throw ConfigError("need one statistic per target plus the noise");
    const Eigen::MatrixXcd& What = state.filter(f);
    double value = 0.0;
    for (int i = 0; i < K; ++i) value += quad_trace(What.col(i), stats[f][i].full);
    OmegaFactor omega(model.omega[f]);
    if (Nz > 0) {
      const Eigen::MatrixXcd Wz = What.rightCols(Nz);
      value += omega.trace_inv(Wz.adjoint() * stats[f][K].full * Wz);
    }
    value += -2.0 * log_abs_det(state.W(f)) + omega.log_det;
    per_bin[f] = value;
  }
  return sum_in_order(per_bin) + log_v_term(model, F);
}

double reduced_objective(const FilterState& state, const SourceModel& model,
                         const std::vector<std::vector<Eigen::MatrixXcd>>& V) {
  check_model(state, model);
  const int F = state.num_bins();
  const int K = state.targets();
  const int Nz = state.noise_dim();
  if (static_cast<int>(V.size()) != F)
    throw ConfigError("need reduced covariances for every frequency bin");
  std::vector<double> per_bin(F);
  for (int f = 0; f < F; ++f) {
    const Eigen::MatrixXcd W = state.W(f);
    double value = 0.0;
    for (int i = 0; i < K; ++i) value += quad_trace(W.col(i), V[f][i]);
    OmegaFactor omega(model.omega[f]);
    if (Nz > 0) {
      const Eigen::MatrixXcd Wz = W.rightCols(Nz);
      value += omega.trace_inv(Wz.adjoint() * V[f][K] * Wz);
    }
    value += -2.0 * log_abs_det(W) + omega.log_det;
    per_bin[f] = value;
  }
  return sum_in_order(per_bin) + log_v_term(model, F);
}

Eigen::MatrixXd update_variances(const std::vector<Eigen::MatrixXcd>& separated) {
  if (separated.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index T = separated.front().cols();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(separated.size()), T);
  for (std::size_t i = 0; i < separated.size(); ++i) {
    const Eigen::MatrixXcd& s = separated[i];
    if (s.cols() != T) throw ConfigError("separated sources differ in frame count");
    Eigen::VectorXd row = s.cwiseAbs2().colwise().sum().transpose() /
                          static_cast<double>(s.rows());
    floor_weights(row);
    v.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return v;
}

void update_target_filter(Eigen::Ref<Eigen::MatrixXcd> W, int i,
                          const Eigen::MatrixXcd& V) {
  const Eigen::Index M = W.rows();
  if (i < 0 || i >= M) throw ConfigError("target index out of range");
  Eigen::MatrixXcd Vused = V;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(W.adjoint() * Vused);
  if (!(lu.rcond() > kSingularRcond)) {
    Vused.diagonal().array() += ridge_for(V, kRelativeRidge);
    lu.compute(W.adjoint() * Vused);
    if (!(lu.rcond() > kSingularRcond))
      throw NumericalError("W^H V is singular after ridge", 1.0 / lu.rcond());
  }
  const Eigen::VectorXcd u = lu.solve(Eigen::VectorXcd::Unit(M, i));
  const double scale = (u.adjoint() * Vused * u)(0, 0).real();
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw NumericalError("target filter normalization is not positive");
  W.col(i) = u / std::sqrt(scale);
}

Eigen::MatrixXcd update_noise_block(Eigen::Ref<Eigen::MatrixXcd> W, int targets,
                                    const Eigen::MatrixXcd& V) {
  const Eigen::Index M = W.rows();
  const Eigen::Index K = targets;
  const Eigen::Index Nz = M - K;
  if (K < 1 || K > M) throw ConfigError("target count must satisfy 1 <= K <= M");
  if (Nz == 0) return Eigen::MatrixXcd(0, 0);

  const Eigen::MatrixXcd A = W.leftCols(K).adjoint() * V;  // K x M
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A.leftCols(K));
  if (!(lu.rcond() > kSingularRcond))
    throw NumericalError("W_s^H V E_s is singular", 1.0 / lu.rcond());
  W.rightCols(Nz).topRows(K) = lu.solve(A.rightCols(Nz));
  W.rightCols(Nz).bottomRows(Nz) = -Eigen::MatrixXcd::Identity(Nz, Nz);

  Eigen::MatrixXcd omega = W.rightCols(Nz).adjoint() * V * W.rightCols(Nz);
  hermitize(omega);
  return omega;
}

void backfill_lower_filters(Eigen::Ref<Eigen::MatrixXcd> filter, int channels,
                            int targets,
                            std::span<const Eigen::MatrixXcd> prediction_filters) {
  const int M = channels;
  const int K = targets;
  const int Nz = M - K;
  const Eigen::Index L = filter.rows() - M;
  if (static_cast<int>(prediction_filters.size()) < K + (Nz > 0 ? 1 : 0))
    throw ConfigError("need one prediction filter per target plus the noise");
  if (L == 0) return;
  for (int i = 0; i < K; ++i)
    filter.bottomRows(L).col(i).noalias() = -prediction_filters[i] * filter.topRows(M).col(i);
  if (Nz > 0)
    filter.bottomRows(L).rightCols(Nz).noalias() =
        -prediction_filters[K] * filter.topRows(M).rightCols(Nz);
}

Eigen::MatrixXcd update_prediction_matrix(
    const Eigen::MatrixXcd& W, int targets,
    std::span<const Eigen::MatrixXcd> prediction_filters) {
  const Eigen::Index M = W.rows();
  const int K = targets;
  const Eigen::Index Nz = M - K;
  if (static_cast<int>(prediction_filters.size()) < K + (Nz > 0 ? 1 : 0))
    throw ConfigError("need one prediction filter per target plus the noise");
  const Eigen::Index L = prediction_filters[0].rows();
  Eigen::MatrixXcd C(L, M);
  for (int i = 0; i < K; ++i) C.col(i).noalias() = prediction_filters[i] * W.col(i);
  if (Nz > 0) C.rightCols(Nz).noalias() = prediction_filters[K] * W.rightCols(Nz);

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(W.transpose());
  if (!(lu.rcond() > kSingularRcond))
    throw NumericalError("separation matrix is singular", 1.0 / lu.rcond());
  return lu.solve(C.transpose()).transpose();
}

namespace {

Separated allocate_separated(const FilterState& state, int frames) {
  const int F = state.num_bins();
  Separated out;
  out.targets.assign(state.targets(), Eigen::MatrixXcd(F, frames));
  out.noise.assign(state.noise_dim(), Eigen::MatrixXcd(F, frames));
  return out;
}

void scatter(Separated& out, int f, const Eigen::MatrixXcd& S, int K) {
  for (int i = 0; i < K; ++i) out.targets[i].row(f) = S.row(i);
  for (std::size_t j = 0; j < out.noise.size(); ++j)
    out.noise[j].row(f) = S.row(K + static_cast<Eigen::Index>(j));
}

}  // namespace

Separated separate(const FilterState& state, const StackedSpectrogram& stacked) {
  Separated out = allocate_separated(state, stacked.num_frames());
  parallel_for(state.num_bins(), [&](int f) {
    const Eigen::MatrixXcd S = state.filter(f).adjoint() * stacked.bin(f);
    scatter(out, f, S, state.targets());
  });
  return out;
}

Separated separate_dereverbed(const FilterState& state,
                              const StackedSpectrogram& stacked) {
  Separated out = allocate_separated(state, stacked.num_frames());
  parallel_for(state.num_bins(), [&](int f) {
    const Eigen::MatrixXcd y =
        dereverbed_signal(stacked.bin(f), state.prediction_matrix(f), state.channels());
    const Eigen::MatrixXcd S = state.W(f).adjoint() * y;
    scatter(out, f, S, state.targets());
  });
  return out;
}

Spectrogram project_back(const FilterState& state, int i,
                         const Eigen::MatrixXcd& source) {
  const int F = state.num_bins();
  const int M = state.channels();
  if (source.rows() != F) throw ConfigError("source must have one row per bin");
  Spectrogram image(F, static_cast<int>(source.cols()), M);
  parallel_for(F, [&](int f) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(state.W(f).adjoint());
    if (!(lu.rcond() > kSingularRcond))
      throw NumericalError("separation matrix is singular", 1.0 / lu.rcond());
    const Eigen::VectorXcd steering = lu.solve(Eigen::VectorXcd::Unit(M, i));
    image.bin(f).noalias() = steering * source.row(f);
  });
  return image;
}

Spectrogram project_back_noise(const FilterState& state,
                               const std::vector<Eigen::MatrixXcd>& noise) {
  const int F = state.num_bins();
  const int M = state.channels();
  const int K = state.targets();
  const int Nz = state.noise_dim();
  if (static_cast<int>(noise.size()) != Nz) throw ConfigError("need N_z noise signals");
  const int T = Nz > 0 ? static_cast<int>(noise.front().cols()) : 0;
  Spectrogram image(F, T, M);
  if (Nz == 0) return image;
  parallel_for(F, [&](int f) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(state.W(f).adjoint());
    if (!(lu.rcond() > kSingularRcond))
      throw NumericalError("separation matrix is singular", 1.0 / lu.rcond());
    const Eigen::MatrixXcd steering =
        lu.solve(Eigen::MatrixXcd::Identity(M, M).rightCols(M - K));
    Eigen::MatrixXcd z(Nz, T);
    for (int j = 0; j < Nz; ++j) z.row(j) = noise[j].row(f);
    image.bin(f).noalias() = steering * z;
  });
  return image;
}

BcdState initialize(const StackedSpectrogram& stacked, const BcdConfig& config) {
  const BcdConfig c = config.resolved(stacked.channels());
  check_stacked(stacked, c);
  NoiseCache cache;
  if (c.num_targets < stacked.channels()) cache = build_noise_cache(stacked);
  return initialize_with(stacked, c, &cache);
}

BcdResult run_bcd(const StackedSpectrogram& stacked, const BcdConfig& config,
                  const BcdCallbacks& callbacks) {
  const BcdConfig c = config.resolved(stacked.channels());
  check_stacked(stacked, c);
  const int F = stacked.num_bins();
  const int M = stacked.channels();
  const int L = stacked.lag_dim();
  const int K = c.num_targets;
  const int Nz = M - K;
  const bool alg2 = c.variant == Variant::kIveConvAlg2;
  const auto T = static_cast<double>(stacked.num_frames());

  NoiseCache cache;
  if (Nz > 0 || alg2) cache = build_noise_cache(stacked);
  BcdState init = initialize_with(stacked, c, &cache);
  BcdResult result{std::move(init.state), std::move(init.model), {}};
  FilterState& state = result.state;
  SourceModel& model = result.model;

  // Time spent inside user callbacks is excluded from the reported runtime.
  const Clock::time_point start = Clock::now();
  double excluded = 0.0;
  auto emit = [&](int it, std::string block) {
    if (!callbacks.on_block) return;
    const Clock::time_point t0 = Clock::now();
    callbacks.on_block(BlockEvent{it, std::move(block), state, model});
    excluded += seconds_since(t0);
  };

  // Algorithm 2 works on the dereverbed observation y = x - G^H xbar.
  std::vector<Eigen::MatrixXcd> G(alg2 ? F : 0), Y(alg2 ? F : 0), Vz(alg2 ? F : 0);

  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0; it < c.outer_iterations; ++it) {
    model.v = update_variances(separate(state, stacked).targets);
    emit(it, "v");

    if (alg2 && it % c.alg2_g_period == 0) {
      parallel_for(F, [&](int f) {
        std::vector<Eigen::MatrixXcd> B(K + (Nz > 0 ? 1 : 0));
        for (int i = 0; i < K; ++i)
          B[i] = prediction_filter(weighted_covariance(stacked, f, model.v.row(i).transpose()));
        if (Nz > 0) B[K] = cache.B[f];
        G[f] = update_prediction_matrix(state.W(f), K, B);
        state.set_prediction_matrix(f, G[f]);
        Y[f] = dereverbed_signal(stacked.bin(f), G[f], M);
        if (Nz > 0) {
          Vz[f].noalias() = Y[f] * Y[f].adjoint() / T;
          hermitize(Vz[f]);
        }
      });
      emit(it, "G");
    }

    for (int i = 0; i < K; ++i) {
      const Eigen::VectorXd weights = model.v.row(i).transpose();
      parallel_for(F, [&](int f) {
        if (alg2) {
          const Eigen::MatrixXcd V = weighted_covariance(Y[f], weights, M).full;
          update_target_filter(state.W(f), i, V);
          state.lower(f).col(i).noalias() = -G[f] * state.W(f).col(i);
        } else {
          const ReducedStats red = reduce(weighted_covariance(stacked, f, weights));
          update_target_filter(state.W(f), i, red.V);
          if (L > 0) state.lower(f).col(i).noalias() = -red.B * state.W(f).col(i);
        }
      });
      emit(it, "w" + std::to_string(i + 1));

      if (Nz > 0) {
        parallel_for(F, [&](int f) {
          if (alg2) {
            model.omega[f] = update_noise_block(state.W(f), K, Vz[f]);
            state.lower(f).rightCols(Nz).noalias() = -G[f] * state.W(f).rightCols(Nz);
          } else {
            model.omega[f] = update_noise_block(state.W(f), K, cache.V[f]);
            if (L > 0)
              state.lower(f).rightCols(Nz).noalias() = -cache.B[f] * state.W(f).rightCols(Nz);
          }
        });
        emit(it, "noise");
      }
    }

    RunRecord record;
    record.iteration = it + 1;
    record.objective = c.track_objective ? objective(state, model, stacked)
                                         : std::numeric_limits<double>::quiet_NaN();
    record.elapsed_s = seconds_since(start) - excluded;
    if (callbacks.on_iteration) {
      const Clock::time_point t0 = Clock::now();
      record.sdr_db = callbacks.on_iteration(
          IterationEvent{it + 1, record.objective, record.elapsed_s, state, model});
      excluded += seconds_since(t0);
    }
    result.log.push_back(std::move(record));

    const double current = result.log.back().objective;
    if (c.rel_tolerance > 0.0 && std::isfinite(previous) &&
        std::abs(previous - current) <= c.rel_tolerance * std::abs(previous))
      break;
    previous = current;
  }
  return result;
}

}  // namespace convbse
