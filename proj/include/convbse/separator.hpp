// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convbse/signal_io.hpp"
#include "convbse/statistics.hpp"
#include "convbse/stft.hpp"

namespace convbse {

enum class Variant { kIve, kIvaConv, kIveConvAlg1, kIveConvAlg2 };

std::string_view to_string(Variant variant);
// Accepts "ive", "iva-conv", "ive-conv-alg1", "ive-conv-alg2".
Variant parse_variant(std::string_view name);

struct BcdConfig {
  Variant variant = Variant::kIveConvAlg1;
  int num_targets = 2;
  int d1 = 2;
  int d2 = 5;
  int outer_iterations = 50;
  int alg2_g_period = 5;
  // Stop once |g_prev - g| <= rel_tolerance * |g_prev|; 0 disables.
  double rel_tolerance = 0.0;
  // Evaluate the objective after each outer iteration for the run log.
  bool track_objective = true;

  // Applies the variant corners (IVA-conv: K = M; IVE: no delays) and
  // checks the remaining fields against the channel count.
  BcdConfig resolved(int channels) const;
};

// Stacks with the delay range the (resolved) config asks for.
StackedSpectrogram stack_for(const Spectrogram& spec, const BcdConfig& config);

// Per frequency the convolutional filter
//   What = [ W    ]  =  [ I  ] W
//          [ Wbar ]     [ -G ]
// with columns w_1 .. w_K (targets) followed by the N_z = M - K noise
// columns. The lower block is stored directly; G is recovered on demand.
class FilterState {
 public:
  FilterState() = default;
  FilterState(int bins, int channels, int lag_dim, int targets);

  int num_bins() const { return static_cast<int>(filters_.size()); }
  int channels() const { return channels_; }
  int lag_dim() const { return lag_dim_; }
  int targets() const { return targets_; }
  int noise_dim() const { return channels_ - targets_; }

  Eigen::MatrixXcd& filter(int f) { return filters_[f]; }
  const Eigen::MatrixXcd& filter(int f) const { return filters_[f]; }
  auto W(int f) { return filters_[f].topRows(channels_); }
  auto W(int f) const { return filters_[f].topRows(channels_); }
  auto lower(int f) { return filters_[f].bottomRows(lag_dim_); }
  auto lower(int f) const { return filters_[f].bottomRows(lag_dim_); }

  // G = -Wbar W^{-1}.
  Eigen::MatrixXcd prediction_matrix(int f) const;
  // Sets Wbar = -G W.
  void set_prediction_matrix(int f, const Eigen::MatrixXcd& G);

 private:
  std::vector<Eigen::MatrixXcd> filters_;
  int channels_ = 0;
  int lag_dim_ = 0;
  int targets_ = 0;
};

struct SourceModel {
  Eigen::MatrixXd v;                   // K x T, shared across frequencies
  std::vector<Eigen::MatrixXcd> omega;  // N_z x N_z per frequency
};

// Negative log-likelihood per frame, summed over frequency, evaluated from
// the signals s = What^H xhat directly.
double objective(const FilterState& state, const SourceModel& model,
                 const StackedSpectrogram& stacked);

// Same quantity from precomputed covariances: stats[f][i] holds Rhat_i(f)
// for the targets i < K followed by the noise statistic Rhat_z(f).
double objective(const FilterState& state, const SourceModel& model,
                 const std::vector<std::vector<CovarianceStats>>& stats);

// Objective of the reduced (lower blocks eliminated) problem, using the
// Schur complements V[f][i] (targets then noise), plus the same log v term
// as the full objective.
double reduced_objective(const FilterState& state, const SourceModel& model,
                         const std::vector<std::vector<Eigen::MatrixXcd>>& V);

// v_i(t) = mean_f |s_i(f, t)|^2, floored.
Eigen::MatrixXd update_variances(const std::vector<Eigen::MatrixXcd>& separated);

// Iterative projection: u = (W^H V)^{-1} e_i, w_i = u (u^H V u)^{-1/2}.
// Only column i of W changes.
void update_target_filter(Eigen::Ref<Eigen::MatrixXcd> W, int i,
                          const Eigen::MatrixXcd& V);

// W_z = [(W_s^H V E_s)^{-1} W_s^H V E_z; -I], returns Omega = W_z^H V W_z.
// No-op returning an empty matrix when K = M.
Eigen::MatrixXcd update_noise_block(Eigen::Ref<Eigen::MatrixXcd> W,
                                    int targets, const Eigen::MatrixXcd& V);

// wbar_i = -B_i w_i and Wbar_z = -B_z W_z with B = Rbar^{-1} Pbar.
// prediction_filters holds one entry per target plus one for the noise
// (the last may be omitted when K = M).
void backfill_lower_filters(Eigen::Ref<Eigen::MatrixXcd> filter, int channels,
                            int targets,
                            std::span<const Eigen::MatrixXcd> prediction_filters);

// G = [B_1 w_1 | ... | B_K w_K | B_z W_z] W^{-1}, the exact minimizer over G
// with W, Omega and v fixed.
Eigen::MatrixXcd update_prediction_matrix(
    const Eigen::MatrixXcd& W, int targets,
    std::span<const Eigen::MatrixXcd> prediction_filters);

struct Separated {
  std::vector<Eigen::MatrixXcd> targets;  // K entries, each F x T
  std::vector<Eigen::MatrixXcd> noise;    // N_z entries, each F x T
};

// s_i(f, t) = what_i(f)^H xhat(f, t).
Separated separate(const FilterState& state, const StackedSpectrogram& stacked);
// W^H (x - G^H xbar); must agree with separate().
Separated separate_dereverbed(const FilterState& state,
                              const StackedSpectrogram& stacked);

// (W^{-H} e_i) s_i(f, t): the scale-restored image of source i.
Spectrogram project_back(const FilterState& state, int i,
                         const Eigen::MatrixXcd& source);
// W^{-H} E_z z(f, t).
Spectrogram project_back_noise(const FilterState& state,
                               const std::vector<Eigen::MatrixXcd>& noise);

// W = -I, G = 0, then one noise-block update, then v from the separation.
struct BcdState {
  FilterState state;
  SourceModel model;
};
BcdState initialize(const StackedSpectrogram& stacked, const BcdConfig& config);

struct BlockEvent {
  int iteration;
  std::string block;  // "v", "G", "w<i>" or "noise"
  const FilterState& state;
  const SourceModel& model;
};

struct IterationEvent {
  int iteration;
  double objective;  // NaN when not tracked
  double elapsed_s;
  const FilterState& state;
  const SourceModel& model;
};

struct BcdCallbacks {
  std::function<void(const BlockEvent&)> on_block;
  // Extra per-source SDR values to put in the run log for this iteration.
  std::function<std::vector<double>(const IterationEvent&)> on_iteration;
};

struct BcdResult {
  FilterState state;
  SourceModel model;
  std::vector<RunRecord> log;
};

BcdResult run_bcd(const StackedSpectrogram& stacked, const BcdConfig& config,
                  const BcdCallbacks& callbacks = {});

}  // namespace convbse
