// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/statistics.hpp"

#include <cmath>
#include <string>

#include "convbse/error.hpp"

namespace convbse {

StackedSpectrogram::StackedSpectrogram(int bins, int frames, int channels,
                                       int d1, int d2)
    : frames_(frames),
      channels_(channels),
      lag_dim_(d2 >= d1 && d1 > 0 ? channels * (d2 - d1 + 1) : 0),
      d1_(lag_dim_ > 0 ? d1 : 0),
      d2_(lag_dim_ > 0 ? d2 : 0) {
  bins_.assign(bins, Eigen::MatrixXcd::Zero(channels_ + lag_dim_, frames));
}

StackedSpectrogram stack(const Spectrogram& spec, int d1, int d2) {
  if (d1 < 1 || d2 < d1) throw ConfigError("delays need 1 <= d1 <= d2");
  if (spec.num_frames() <= d2)
    throw ConfigError("too few frames (" + std::to_string(spec.num_frames()) +
                      ") for delay d2 = " + std::to_string(d2));
  const int M = spec.num_channels();
  const int T = spec.num_frames();
  StackedSpectrogram out(spec.num_bins(), T, M, d1, d2);
  for (int f = 0; f < spec.num_bins(); ++f) {
    const Eigen::MatrixXcd& x = spec.bin(f);
    Eigen::MatrixXcd& xhat = out.bin(f);
    xhat.topRows(M) = x;
    for (int d = d1; d <= d2; ++d) {
      const int row = M + (d - d1) * M;
      xhat.block(row, d, M, T - d) = x.leftCols(T - d);
    }
  }
  return out;
}

StackedSpectrogram stack_instantaneous(const Spectrogram& spec) {
  StackedSpectrogram out(spec.num_bins(), spec.num_frames(), spec.num_channels(), 0, 0);
  for (int f = 0; f < spec.num_bins(); ++f) out.bin(f) = spec.bin(f);
  return out;
}

void hermitize(Eigen::MatrixXcd& A) {
  Eigen::MatrixXcd h = 0.5 * (A + A.adjoint());
  A = std::move(h);
}

CovarianceStats weighted_covariance(const Eigen::MatrixXcd& xhat,
                                    const Eigen::VectorXd& weights,
                                    int channels) {
  const Eigen::Index T = xhat.cols();
  if (weights.size() != T) throw ConfigError("one weight per frame is required");
  if (!weights.allFinite() || (weights.array() <= 0.0).any())
    throw NumericalError("covariance weights must be finite and positive");

  Eigen::VectorXd scale = weights.array().rsqrt();
  Eigen::MatrixXcd scaled = xhat * scale.asDiagonal();
  const Eigen::Index dim = xhat.rows();
  Eigen::MatrixXcd lower = Eigen::MatrixXcd::Zero(dim, dim);
  lower.selfadjointView<Eigen::Lower>().rankUpdate(scaled, 1.0 / static_cast<double>(T));

  CovarianceStats stats;
  stats.channels = channels;
  stats.full = lower.selfadjointView<Eigen::Lower>();
  return stats;
}

CovarianceStats weighted_covariance(const StackedSpectrogram& stacked, int f,
                                    const Eigen::VectorXd& weights) {
  return weighted_covariance(stacked.bin(f), weights, stacked.channels());
}

CovarianceStats sample_covariance(const StackedSpectrogram& stacked, int f) {
  return weighted_covariance(stacked.bin(f),
                             Eigen::VectorXd::Ones(stacked.num_frames()),
                             stacked.channels());
}

void floor_weights(Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  const double floor = kWeightFloor * v.mean();
  // All-zero input has no scale to be relative to.
  v = v.cwiseMax(floor > 0.0 ? floor : kWeightFloor);
}

double ridge_for(const Eigen::MatrixXcd& A, double relative_ridge) {
  if (A.rows() == 0) return 0.0;
  return relative_ridge * A.trace().real() / static_cast<double>(A.rows());
}

Eigen::MatrixXcd prediction_filter(const CovarianceStats& stats,
                                   double relative_ridge) {
  const int L = stats.lag_dim();
  const int M = stats.channels;
  if (L == 0) return Eigen::MatrixXcd::Zero(0, M);

  Eigen::MatrixXcd rbar = stats.Rbar();
  rbar.diagonal().array() += ridge_for(rbar, relative_ridge);
  Eigen::LLT<Eigen::MatrixXcd> llt(rbar);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXcd B = llt.solve(stats.Pbar());
    if (B.allFinite()) return B;
  }
  Eigen::LDLT<Eigen::MatrixXcd> ldlt(rbar);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (rcond > 1e-15) {
    Eigen::MatrixXcd B = ldlt.solve(stats.Pbar());
    if (B.allFinite()) return B;
  }
  throw NumericalError("lag covariance is singular after ridge",
                       rcond > 0.0 ? 1.0 / rcond : INFINITY);
}

ReducedStats reduce(const CovarianceStats& stats, double relative_ridge) {
  ReducedStats out;
  out.B = prediction_filter(stats, relative_ridge);
  out.V = stats.R();
  if (stats.lag_dim() > 0) out.V.noalias() -= stats.Pbar().adjoint() * out.B;
  hermitize(out.V);
  return out;
}

Eigen::MatrixXcd schur_complement(const CovarianceStats& stats,
                                  double relative_ridge) {
  return reduce(stats, relative_ridge).V;
}

Eigen::MatrixXcd dereverbed_covariance(const CovarianceStats& stats,
                                       const Eigen::MatrixXcd& G) {
  const int L = stats.lag_dim();
  if (G.rows() != L || G.cols() != stats.channels)
    throw ConfigError("prediction matrix must be L x M");
  Eigen::MatrixXcd V = stats.R();
  if (L > 0) {
    Eigen::MatrixXcd cross = stats.Pbar().adjoint() * G;
    V -= cross + cross.adjoint();
    V.noalias() += G.adjoint() * stats.Rbar() * G;
  }
  hermitize(V);
  return V;
}

Eigen::MatrixXcd dereverbed_signal(const Eigen::MatrixXcd& xhat,
                                   const Eigen::MatrixXcd& G, int channels) {
  Eigen::MatrixXcd y = xhat.topRows(channels);
  const Eigen::Index L = xhat.rows() - channels;
  if (L > 0) y.noalias() -= G.adjoint() * xhat.bottomRows(L);
  return y;
}

}  // namespace convbse
