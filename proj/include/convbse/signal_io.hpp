// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace convbse {

// Rows are channels, columns are samples.
using SampleMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MultichannelSignal {
  SampleMatrix samples;
  int sample_rate = 16000;

  MultichannelSignal() = default;
  MultichannelSignal(SampleMatrix s, int rate);
  MultichannelSignal(int channels, Eigen::Index length, int rate);

  int channels() const { return static_cast<int>(samples.rows()); }
  Eigen::Index length() const { return samples.cols(); }
  // Throws ConfigError when the invariants do not hold.
  void validate() const;
};

enum class WavEncoding { kPcm16, kPcm24, kFloat32 };

// Reads PCM 16/24/32-bit or IEEE float (32/64-bit) RIFF files.
MultichannelSignal read_wav(const std::filesystem::path& path);

// Returns the number of samples that had to be clipped into [-1, 1].
std::size_t write_wav(const MultichannelSignal& signal,
                      const std::filesystem::path& path,
                      WavEncoding encoding = WavEncoding::kFloat32);

// Largest difference read_wav(write_wav(x)) may show for in-range x.
double quantization_step(WavEncoding encoding);

struct RunRecord {
  int iteration = 0;
  double objective = 0.0;
  double elapsed_s = 0.0;
  std::vector<double> sdr_db;  // empty when SDR was not tracked

  bool operator==(const RunRecord&) const = default;
};

// Tab-separated, one header line starting with '#'.
void write_run_log(const std::vector<RunRecord>& records,
                   const std::filesystem::path& path);
std::vector<RunRecord> read_run_log(const std::filesystem::path& path);

}  // namespace convbse
