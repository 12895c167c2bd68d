// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "convbse/stft.hpp"

namespace convbse {

inline constexpr double kWeightFloor = 1e-6;
inline constexpr double kRelativeRidge = 1e-10;

// Per (f, t) the vector [x(t); x(t - d1); ...; x(t - d2)] of size M + L with
// L = M (d2 - d1 + 1). Frames before the start are zero. d1 = d2 = 0 with
// L = 0 is the instantaneous (no delay) layout.
class StackedSpectrogram {
 public:
  StackedSpectrogram() = default;
  StackedSpectrogram(int bins, int frames, int channels, int d1, int d2);

  int num_bins() const { return static_cast<int>(bins_.size()); }
  int num_frames() const { return frames_; }
  int channels() const { return channels_; }
  int lag_dim() const { return lag_dim_; }
  int dim() const { return channels_ + lag_dim_; }
  int d1() const { return d1_; }
  int d2() const { return d2_; }
  bool instantaneous() const { return lag_dim_ == 0; }

  // (M + L) x T for one frequency.
  Eigen::MatrixXcd& bin(int f) { return bins_[f]; }
  const Eigen::MatrixXcd& bin(int f) const { return bins_[f]; }

 private:
  std::vector<Eigen::MatrixXcd> bins_;
  int frames_ = 0;
  int channels_ = 0;
  int lag_dim_ = 0;
  int d1_ = 0;
  int d2_ = 0;
};

StackedSpectrogram stack(const Spectrogram& spec, int d1, int d2);
StackedSpectrogram stack_instantaneous(const Spectrogram& spec);

// Hermitian (M + L) x (M + L) matrix with the block partition
//   [ R     Pbar^H ]
//   [ Pbar  Rbar   ]
struct CovarianceStats {
  Eigen::MatrixXcd full;
  int channels = 0;

  int lag_dim() const { return static_cast<int>(full.rows()) - channels; }
  auto R() const { return full.topLeftCorner(channels, channels); }
  auto Pbar() const { return full.bottomLeftCorner(lag_dim(), channels); }
  auto Rbar() const { return full.bottomRightCorner(lag_dim(), lag_dim()); }
};

// (1/T) sum_t xhat xhat^H / v(t). Throws on non-finite or non-positive
// weights.
CovarianceStats weighted_covariance(const Eigen::MatrixXcd& xhat,
                                    const Eigen::VectorXd& weights,
                                    int channels);
CovarianceStats weighted_covariance(const StackedSpectrogram& stacked, int f,
                                    const Eigen::VectorXd& weights);
// v = 1 everywhere.
CovarianceStats sample_covariance(const StackedSpectrogram& stacked, int f);

// v <- max(v, kWeightFloor * mean(v)).
void floor_weights(Eigen::VectorXd& v);

// relative_ridge * trace(A) / dim(A).
double ridge_for(const Eigen::MatrixXcd& A, double relative_ridge);

// (Rbar + ridge I)^{-1} Pbar, L x M. Hermitian-aware (Cholesky) solve.
Eigen::MatrixXcd prediction_filter(const CovarianceStats& stats,
                                   double relative_ridge = kRelativeRidge);

// R - Pbar^H (Rbar + ridge I)^{-1} Pbar.
Eigen::MatrixXcd schur_complement(const CovarianceStats& stats,
                                  double relative_ridge = kRelativeRidge);

// Schur complement together with the prediction filter it was built from,
// sharing one factorization.
struct ReducedStats {
  Eigen::MatrixXcd V;  // M x M
  Eigen::MatrixXcd B;  // L x M, Rbar^{-1} Pbar
};
ReducedStats reduce(const CovarianceStats& stats,
                    double relative_ridge = kRelativeRidge);

// [I; -G]^H Rhat [I; -G].
Eigen::MatrixXcd dereverbed_covariance(const CovarianceStats& stats,
                                       const Eigen::MatrixXcd& G);

// x(t) - G^H xbar(t), M x T. Its weighted covariance equals
// dereverbed_covariance of the stacked weighted covariance.
Eigen::MatrixXcd dereverbed_signal(const Eigen::MatrixXcd& xhat,
                                   const Eigen::MatrixXcd& G, int channels);

void hermitize(Eigen::MatrixXcd& A);

}  // namespace convbse
