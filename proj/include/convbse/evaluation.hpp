// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "convbse/separator.hpp"

namespace convbse {

inline constexpr double kSdrCapDb = 60.0;

enum class SdrMode { kGainOnly, kShortFilter };

// Energy of the reference's allowed distortion (least-squares gain or
// short FIR filter applied to the reference) over the residual energy, in
// dB and capped at +-kSdrCapDb.
double sdr(std::span<const double> estimate, std::span<const double> reference,
           SdrMode mode = SdrMode::kGainOnly, int filter_taps = 512);

struct SdrReport {
  std::string method;
  std::vector<double> sdr_db;      // per reference, after pairing
  std::vector<int> assignment;     // assignment[k] = estimate paired with reference k
  double elapsed_s = 0.0;
  int iteration = 0;

  double mean() const;
};

// Pairs estimates with references by the assignment of maximal mean SDR.
SdrReport best_pairing_sdr(const std::vector<std::vector<double>>& estimates,
                           const std::vector<std::vector<double>>& references,
                           SdrMode mode = SdrMode::kGainOnly);

struct SdrRow {
  std::string method;
  std::string mixture;
  int source = 0;
  double sdr_db = 0.0;
  double elapsed_s = 0.0;
};

// CSV with header method,mixture,source,sdr_db,elapsed_s.
void write_sdr_csv(const std::vector<SdrRow>& rows, const std::filesystem::path& path,
                   bool append = false);

// Operation counts (complex multiply-accumulates) of one outer iteration.
struct CostModel {
  double covariance_passes = 0.0;  // weighted (M+L)-dim covariances
  double covariance_ops = 0.0;     // passes * L^2 * F * T
  double factorization_ops = 0.0;  // passes * L^3 * F
  double other_ops = 0.0;          // M-dim terms and the separation pass
  double total() const { return covariance_ops + factorization_ops + other_ops; }
};

CostModel model_iteration_cost(Variant variant, int channels, int targets, int lag_dim,
                               int frames, int bins, int alg2_g_period = 5);

struct BenchmarkCase {
  Variant variant = Variant::kIveConvAlg1;
  int channels = 6;
  int targets = 2;
  int d1 = 2;
  int d2 = 5;
  int frames = 300;
  int bins = 257;
};

struct BenchmarkRow {
  BenchmarkCase config;  // resolved (IVA-conv has targets = channels)
  int lag_dim = 0;
  CostModel model;
  double seconds_per_iteration = 0.0;
};

// Runs each case on random data for `iterations` outer iterations
// (objective tracking off) and reports the mean wall-clock per iteration
// next to the modeled operation count.
std::vector<BenchmarkRow> benchmark_iteration_cost(const std::vector<BenchmarkCase>& cases,
                                                   int iterations = 3,
                                                   std::uint64_t seed = 0);

// Random stacked observation with time-varying frame power.
StackedSpectrogram random_stacked(int bins, int frames, int channels, int d1, int d2,
                                  std::uint64_t seed);

}  // namespace convbse
