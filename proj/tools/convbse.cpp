// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command line front end: synth, separate, eval, bench.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "convbse/error.hpp"
#include "convbse/evaluation.hpp"
#include "convbse/mixture.hpp"
#include "convbse/parallel.hpp"
#include "convbse/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace convbse;

namespace {

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;
constexpr int kExpectedRate = 16000;

WavEncoding parse_encoding(const std::string& name) {
  if (name == "pcm16") return WavEncoding::kPcm16;
  if (name == "pcm24") return WavEncoding::kPcm24;
  if (name == "float32") return WavEncoding::kFloat32;
  throw ConfigError("unknown encoding '" + name + "' (expected pcm16, pcm24 or float32)");
}

void write_checked(const MultichannelSignal& s, const fs::path& path, WavEncoding enc) {
  const std::size_t clipped = write_wav(s, path, enc);
  if (clipped > 0)
    std::cerr << "warning: " << clipped << " samples clipped in " << path.string() << "\n";
}

std::vector<double> first_channel(const MultichannelSignal& s) {
  std::vector<double> out(static_cast<std::size_t>(s.length()));
  for (Eigen::Index n = 0; n < s.length(); ++n) out[static_cast<std::size_t>(n)] = s.samples(0, n);
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  MixtureSpec spec;
  fs::path out_dir;
  int count = 1;
  std::vector<std::string> speech;
  std::string replay;
  std::string encoding = "float32";
};

json manifest_entry(const MixtureSpec& spec, double gain, const std::vector<std::string>& speech,
                    const std::string& name) {
  json j;
  j["name"] = name;
  j["seed"] = spec.seed;
  j["num_targets"] = spec.num_targets;
  j["noise_count"] = spec.noise_count;
  j["target_snr_db"] = spec.target_snr_db;
  j["channels"] = spec.channels;
  j["rt60_ms"] = spec.rt60_ms;
  j["drr_db"] = spec.drr_db;
  j["duration_s"] = spec.duration_s;
  j["sample_rate"] = spec.sample_rate;
  j["truncate_ms"] = spec.truncate_ms;
  j["target_level"] = spec.target_level;
  j["noise_gain"] = gain;
  j["speech"] = speech;
  return j;
}

MixtureSpec spec_from_entry(const json& j) {
  MixtureSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.num_targets = j.at("num_targets").get<int>();
  s.noise_count = j.at("noise_count").get<int>();
  s.target_snr_db = j.at("target_snr_db").get<double>();
  s.channels = j.at("channels").get<int>();
  s.rt60_ms = j.at("rt60_ms").get<double>();
  s.drr_db = j.value("drr_db", s.drr_db);
  s.duration_s = j.at("duration_s").get<double>();
  s.sample_rate = j.at("sample_rate").get<int>();
  s.truncate_ms = j.at("truncate_ms").get<double>();
  s.target_level = j.at("target_level").get<double>();
  return s;
}

std::vector<std::vector<double>> load_speech(const std::vector<std::string>& paths, int rate) {
  std::vector<std::vector<double>> out;
  for (const auto& p : paths) {
    MultichannelSignal s = read_wav(p);
    if (s.sample_rate != rate)
      throw ConfigError("incompatible sample rates: " + p + " is " +
                        std::to_string(s.sample_rate) + " Hz, mixture is " +
                        std::to_string(rate) + " Hz");
    out.push_back(first_channel(s));
  }
  return out;
}

void write_mixture(const SyntheticMixture& mix, const fs::path& dir, WavEncoding enc) {
  fs::create_directories(dir);
  write_checked(mix.mixture, dir / "mixture.wav", enc);
  for (std::size_t k = 0; k < mix.oracle_images.size(); ++k)
    write_checked(mix.oracle_images[k], dir / ("oracle_" + std::to_string(k + 1) + ".wav"), enc);
}

int cmd_synth(const SynthOptions& o) {
  const WavEncoding enc = parse_encoding(o.encoding);
  fs::create_directories(o.out_dir);
  const fs::path manifest = o.out_dir / "manifest.jsonl";

  if (!o.replay.empty()) {
    std::ifstream in(o.replay);
    if (!in) throw IoError("cannot open manifest " + o.replay);
    std::vector<json> entries;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) entries.push_back(json::parse(line));
    in.close();
    std::ofstream log(manifest);
    for (const json& j : entries) {
      const MixtureSpec spec = spec_from_entry(j);
      const auto speech_paths = j.at("speech").get<std::vector<std::string>>();
      const SyntheticMixture mix = build_synthetic_mixture(
          spec, load_speech(speech_paths, spec.sample_rate), j.at("noise_gain").get<double>());
      const std::string name = j.at("name").get<std::string>();
      write_mixture(mix, o.out_dir / name, enc);
      log << manifest_entry(spec, mix.noise_gain, speech_paths, name).dump() << "\n";
      std::cout << name << ": replayed with noise gain " << mix.noise_gain << "\n";
    }
    return 0;
  }

  if (o.count < 1) throw ConfigError("count must be positive");
  const auto speech = load_speech(o.speech, o.spec.sample_rate);
  std::ofstream log(manifest);
  for (int n = 0; n < o.count; ++n) {
    MixtureSpec spec = o.spec;
    spec.seed = o.spec.seed + static_cast<std::uint64_t>(n);
    const SyntheticMixture mix = build_synthetic_mixture(spec, speech);
    char name[32];
    std::snprintf(name, sizeof name, "mix_%03d", n);
    write_mixture(mix, o.out_dir / name, enc);
    log << manifest_entry(spec, mix.noise_gain, o.speech, name).dump() << "\n";
    std::cout << name << ": SNR " << measured_snr_db(mix.speech_images, mix.noise_images)
              << " dB, noise gain " << mix.noise_gain << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- separate

struct SeparateOptions {
  std::string input;
  fs::path out_dir;
  std::string variant = "ive-conv-alg1";
  BcdConfig bcd;
  StftConfig stft;
  std::string window = "sqrt-hann";
  bool write_noise = false;
  std::vector<std::string> references;
  std::string encoding = "float32";
};

int cmd_separate(SeparateOptions o) {
  o.bcd.variant = parse_variant(o.variant);
  if (o.window == "sqrt-hann") {
    o.stft.window = WindowType::kSqrtHann;
  } else if (o.window == "hann") {
    o.stft.window = WindowType::kHann;
  } else {
    throw ConfigError("unknown window '" + o.window + "' (expected sqrt-hann or hann)");
  }
  o.stft.validate();
  const WavEncoding enc = parse_encoding(o.encoding);

  const MultichannelSignal mixture = read_wav(o.input);
  if (mixture.sample_rate != kExpectedRate)
    std::cerr << "warning: input sample rate is " << mixture.sample_rate
              << " Hz; parameters are tuned for 16 kHz\n";
  const BcdConfig config = o.bcd.resolved(mixture.channels());

  std::vector<std::vector<double>> refs;
  for (const auto& r : o.references) {
    MultichannelSignal s = read_wav(r);
    if (s.sample_rate != mixture.sample_rate || s.length() != mixture.length())
      throw ConfigError("reference " + r + " does not match the mixture rate and length");
    refs.push_back(first_channel(s));
  }
  ImageProbe probe;
  if (!refs.empty()) {
    probe = [&](int, const SeparationImages& images) {
      std::vector<std::vector<double>> est;
      for (const auto& img : images.targets) est.push_back(first_channel(img));
      return best_pairing_sdr(est, refs).sdr_db;
    };
  }

  const PipelineResult result = separate_signal(mixture, config, o.stft, o.write_noise, probe);
  fs::create_directories(o.out_dir);
  for (std::size_t k = 0; k < result.images.targets.size(); ++k)
    write_checked(result.images.targets[k], o.out_dir / ("source_" + std::to_string(k + 1) + ".wav"),
                  enc);
  if (result.images.noise) write_checked(*result.images.noise, o.out_dir / "noise.wav", enc);
  if (!result.bcd.log.empty()) write_run_log(result.bcd.log, o.out_dir / "run_log.tsv");

  const auto& last = result.bcd.log;
  std::cout << to_string(config.variant) << ": " << result.images.targets.size()
            << " sources, " << last.size() << " iterations";
  if (!last.empty()) std::cout << ", " << last.back().elapsed_s << " s";
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::vector<std::string> estimates;
  std::vector<std::string> references;
  std::string method = "unknown";
  std::string mixture = "mixture";
  std::string mode = "gain";
  std::string csv;
  bool append = false;
  double elapsed = 0.0;
};

int cmd_eval(const EvalOptions& o) {
  SdrMode mode;
  if (o.mode == "gain") {
    mode = SdrMode::kGainOnly;
  } else if (o.mode == "filter") {
    mode = SdrMode::kShortFilter;
  } else {
    throw ConfigError("unknown SDR mode '" + o.mode + "' (expected gain or filter)");
  }
  auto load = [](const std::vector<std::string>& paths) {
    std::vector<std::vector<double>> out;
    for (const auto& p : paths) out.push_back(first_channel(read_wav(p)));
    return out;
  };
  const SdrReport report = best_pairing_sdr(load(o.estimates), load(o.references), mode);

  std::vector<SdrRow> rows;
  for (std::size_t k = 0; k < report.sdr_db.size(); ++k)
    rows.push_back({o.method, o.mixture, static_cast<int>(k), report.sdr_db[k], o.elapsed});
  std::cout << "method,mixture,source,sdr_db,elapsed_s\n";
  for (const auto& r : rows)
    std::cout << r.method << "," << r.mixture << "," << r.source << "," << r.sdr_db << ","
              << r.elapsed_s << "\n";
  if (!o.csv.empty()) write_sdr_csv(rows, o.csv, o.append);
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  std::vector<int> channels = {4, 6};
  int targets = 2;
  int d1 = 2;
  int d2 = 5;
  int frames = 300;
  int bins = 257;
  int iterations = 3;
  std::vector<std::string> variants = {"ive-conv-alg1", "ive-conv-alg2", "iva-conv"};
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_bench(const BenchOptions& o) {
  std::vector<BenchmarkCase> cases;
  for (int m : o.channels)
    for (const auto& name : o.variants) {
      BenchmarkCase c;
      c.variant = parse_variant(name);
      c.channels = m;
      c.targets = o.targets;
      c.d1 = o.d1;
      c.d2 = o.d2;
      c.frames = o.frames;
      c.bins = o.bins;
      cases.push_back(c);
    }
  const auto rows = benchmark_iteration_cost(cases, o.iterations, o.seed);

  std::ostringstream table;
  table << "variant,M,K,L,T,F,covariance_passes,model_ops,seconds_per_iteration,"
           "time_ratio_vs_iva_conv,ops_ratio_vs_iva_conv\n";
  for (const auto& r : rows) {
    const BenchmarkRow* iva = nullptr;
    for (const auto& q : rows)
      if (q.config.variant == Variant::kIvaConv && q.config.channels == r.config.channels)
        iva = &q;
    table << to_string(r.config.variant) << "," << r.config.channels << "," << r.config.targets
          << "," << r.lag_dim << "," << r.config.frames << "," << r.config.bins << ","
          << r.model.covariance_passes << "," << r.model.total() << ","
          << r.seconds_per_iteration << ",";
    if (iva) {
      table << r.seconds_per_iteration / iva->seconds_per_iteration << ","
            << r.model.covariance_ops / iva->model.covariance_ops;
    } else {
      table << ",";
    }
    table << "\n";
  }
  std::cout << table.str();
  if (!o.csv.empty()) {
    std::ofstream out(o.csv);
    if (!out) throw IoError("cannot write " + o.csv);
    out << table.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint source separation and dereverberation"};
  app.set_config("--config", "", "Configuration file (TOML/INI); flags take precedence");
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: CONVBSE_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Synthesize reverberant noisy mixtures");
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.spec.seed, "Base seed")->capture_default_str();
  synth_cmd->add_option("--count", synth.count, "Number of mixtures")->capture_default_str();
  synth_cmd->add_option("--snr", synth.spec.target_snr_db, "Target SNR in dB")
      ->capture_default_str();
  synth_cmd->add_option("--noise-count", synth.spec.noise_count, "Point noise sources")
      ->capture_default_str();
  synth_cmd->add_option("--targets", synth.spec.num_targets, "Speech sources")
      ->capture_default_str();
  synth_cmd->add_option("--channels", synth.spec.channels, "Microphones")->capture_default_str();
  synth_cmd->add_option("--rt60", synth.spec.rt60_ms, "Reverberation time in ms")
      ->capture_default_str();
  synth_cmd->add_option("--drr", synth.spec.drr_db, "Direct-to-reverberant ratio in dB")
      ->capture_default_str();
  synth_cmd->add_option("--duration", synth.spec.duration_s, "Length in seconds")
      ->capture_default_str();
  synth_cmd->add_option("--rate", synth.spec.sample_rate, "Sample rate")->capture_default_str();
  synth_cmd->add_option("--truncate-ms", synth.spec.truncate_ms, "Oracle RIR truncation")
      ->capture_default_str();
  synth_cmd->add_option("--speech", synth.speech, "Dry speech WAVs (one per target)")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--replay", synth.replay, "Reproduce the mixtures of a manifest")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--encoding", synth.encoding, "pcm16, pcm24 or float32")
      ->capture_default_str();

  SeparateOptions sep;
  CLI::App* sep_cmd = app.add_subcommand("separate", "Separate and dereverberate a mixture");
  sep_cmd->add_option("input", sep.input, "Multichannel mixture WAV")
      ->required()
      ->check(CLI::ExistingFile);
  sep_cmd->add_option("outdir", sep.out_dir, "Output directory")->required();
  sep_cmd->add_option("--variant", sep.variant, "ive, iva-conv, ive-conv-alg1, ive-conv-alg2")
      ->capture_default_str();
  sep_cmd->add_option("--k", sep.bcd.num_targets, "Target sources")->capture_default_str();
  sep_cmd->add_option("--d1", sep.bcd.d1, "First prediction delay")->capture_default_str();
  sep_cmd->add_option("--d2", sep.bcd.d2, "Last prediction delay")->capture_default_str();
  sep_cmd->add_option("--iters", sep.bcd.outer_iterations, "Outer iterations")
      ->capture_default_str();
  sep_cmd->add_option("--g-period", sep.bcd.alg2_g_period, "Iterations between G updates")
      ->capture_default_str();
  sep_cmd->add_option("--tol", sep.bcd.rel_tolerance, "Relative objective tolerance (0: off)")
      ->capture_default_str();
  sep_cmd->add_option("--frame-len", sep.stft.frame_len, "STFT frame length")
      ->capture_default_str();
  sep_cmd->add_option("--hop", sep.stft.hop, "STFT hop")->capture_default_str();
  sep_cmd->add_option("--window", sep.window, "sqrt-hann or hann")->capture_default_str();
  sep_cmd->add_flag("--noise", sep.write_noise, "Also write the noise image");
  sep_cmd->add_option("--ref", sep.references, "Reference images for per-iteration SDR")
      ->check(CLI::ExistingFile);
  sep_cmd->add_option("--encoding", sep.encoding, "pcm16, pcm24 or float32")
      ->capture_default_str();

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Signal-to-distortion ratio of estimates");
  eval_cmd->add_option("--est", eval.estimates, "Estimated images")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref", eval.references, "Reference images")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--method", eval.method, "Method label")->capture_default_str();
  eval_cmd->add_option("--mixture", eval.mixture, "Mixture label")->capture_default_str();
  eval_cmd->add_option("--mode", eval.mode, "gain or filter")->capture_default_str();
  eval_cmd->add_option("--elapsed", eval.elapsed, "Runtime to record in seconds");
  eval_cmd->add_option("--csv", eval.csv, "CSV output");
  eval_cmd->add_flag("--append", eval.append, "Append to the CSV");

  BenchOptions bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Per-iteration cost of each variant");
  bench_cmd->add_option("--channels", bench.channels, "Microphone counts")->capture_default_str();
  bench_cmd->add_option("--k", bench.targets, "Target sources")->capture_default_str();
  bench_cmd->add_option("--d1", bench.d1, "First prediction delay")->capture_default_str();
  bench_cmd->add_option("--d2", bench.d2, "Last prediction delay")->capture_default_str();
  bench_cmd->add_option("--frames", bench.frames, "Frames T")->capture_default_str();
  bench_cmd->add_option("--bins", bench.bins, "Frequency bins F")->capture_default_str();
  bench_cmd->add_option("--iters", bench.iterations, "Timed iterations")->capture_default_str();
  bench_cmd->add_option("--variants", bench.variants, "Variants to time")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
  bench_cmd->add_option("--csv", bench.csv, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageExit;
  }

  try {
    set_num_threads(threads > 0 ? threads : default_num_threads());
    if (*synth_cmd) return cmd_synth(synth);
    if (*sep_cmd) return cmd_separate(sep);
    if (*eval_cmd) return cmd_eval(eval);
    if (*bench_cmd) return cmd_bench(bench);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageExit;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kFailureExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailureExit;
  }
  return kUsageExit;
}
