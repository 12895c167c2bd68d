// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/pipeline.hpp"

namespace convbse {

namespace {

MultichannelSignal to_time(Spectrogram spec, const Spectrogram& layout) {
  spec.config = layout.config;
  spec.sample_rate = layout.sample_rate;
  spec.signal_length = layout.signal_length;
  return synthesize(spec);
}

}  // namespace

SeparationImages reconstruct_images(const FilterState& state,
                                    const StackedSpectrogram& stacked,
                                    const Spectrogram& layout, bool with_noise) {
  Separated sep = separate(state, stacked);
  SeparationImages out;
  for (int i = 0; i < state.targets(); ++i)
    out.targets.push_back(to_time(project_back(state, i, sep.targets[i]), layout));
  if (with_noise && state.noise_dim() > 0)
    out.noise = to_time(project_back_noise(state, sep.noise), layout);
  return out;
}

PipelineResult separate_signal(const MultichannelSignal& mixture, const BcdConfig& config,
                               const StftConfig& stft, bool with_noise,
                               const ImageProbe& probe) {
  mixture.validate();
  const BcdConfig c = config.resolved(mixture.channels());
  const Spectrogram spec = analyze(mixture, stft);
  const StackedSpectrogram stacked = stack_for(spec, c);

  BcdCallbacks callbacks;
  if (probe) {
    callbacks.on_iteration = [&](const IterationEvent& e) {
      return probe(e.iteration, reconstruct_images(e.state, stacked, spec, false));
    };
  }
  PipelineResult out;
  out.bcd = run_bcd(stacked, c, callbacks);
  out.images = reconstruct_images(out.bcd.state, stacked, spec, with_noise);
  return out;
}

}  // namespace convbse
