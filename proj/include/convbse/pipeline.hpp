// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "convbse/separator.hpp"
#include "convbse/signal_io.hpp"
#include "convbse/stft.hpp"

namespace convbse {

struct SeparationImages {
  std::vector<MultichannelSignal> targets;  // K images, M channels each
  std::optional<MultichannelSignal> noise;  // summed noise image when N_z > 0
};

// Time-domain images of the current estimate. `layout` supplies the STFT
// configuration, sample rate and signal length.
SeparationImages reconstruct_images(const FilterState& state,
                                    const StackedSpectrogram& stacked,
                                    const Spectrogram& layout, bool with_noise);

struct PipelineResult {
  SeparationImages images;
  BcdResult bcd;
};

// Per-iteration hook receiving the reconstructed target images; its return
// value is stored as the iteration's SDR column in the run log.
using ImageProbe =
    std::function<std::vector<double>(int iteration, const SeparationImages& images)>;

// STFT, stacking, block coordinate descent, projection back and inverse STFT.
PipelineResult separate_signal(const MultichannelSignal& mixture, const BcdConfig& config,
                               const StftConfig& stft, bool with_noise = false,
                               const ImageProbe& probe = {});

}  // namespace convbse
