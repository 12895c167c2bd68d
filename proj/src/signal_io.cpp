// Copyright 2026 convbse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "convbse/signal_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "convbse/error.hpp"

namespace convbse {

MultichannelSignal::MultichannelSignal(SampleMatrix s, int rate)
    : samples(std::move(s)), sample_rate(rate) {}

MultichannelSignal::MultichannelSignal(int channels, Eigen::Index length,
                                       int rate)
    : samples(SampleMatrix::Zero(channels, length)), sample_rate(rate) {}

void MultichannelSignal::validate() const {
  if (samples.rows() < 1) throw ConfigError("signal has no channels");
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const WavFormat& fmt) {
  if (fmt.format == kFormatFloat) {
    if (fmt.bits == 32) {
      std::uint32_t raw = le32(p);
      float v;
      std::memcpy(&v, &raw, sizeof(v));
      return v;
    }
    std::uint64_t raw = std::uint64_t(le32(p)) | (std::uint64_t(le32(p + 4)) << 32);
    double v;
    std::memcpy(&v, &raw, sizeof(v));
    return v;
  }
  switch (fmt.bits) {
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) |
                       (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
  return 0.0;
}

}  // namespace

MultichannelSignal read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0)
    throw IoError(path.string() + " is not a RIFF/WAVE file");

  WavFormat fmt;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t size = le32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw IoError("truncated fmt chunk in " + path.string());
      fmt.format = le16(body);
      fmt.channels = le16(body + 2);
      fmt.rate = le32(body + 4);
      fmt.bits = le16(body + 14);
      if (fmt.format == kFormatExtensible) {
        if (size < 40 || avail < 40)
          throw IoError("truncated extensible fmt chunk in " + path.string());
        fmt.format = le16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = std::min<std::size_t>(size, avail);
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt || pcm == nullptr)
    throw IoError(path.string() + " lacks a fmt or data chunk");

  bool supported =
      (fmt.format == kFormatPcm && (fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32)) ||
      (fmt.format == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64));
  if (!supported) {
    std::ostringstream msg;
    msg << "unsupported WAV encoding in " << path.string() << ": format tag "
        << fmt.format << ", " << fmt.bits << " bits per sample";
    throw IoError(msg.str());
  }
  if (fmt.channels == 0 || fmt.rate == 0)
    throw IoError(path.string() + " declares zero channels or zero rate");

  const std::size_t width = fmt.bits / 8;
  const std::size_t frame = width * fmt.channels;
  const auto length = static_cast<Eigen::Index>(pcm_bytes / frame);
  MultichannelSignal out(fmt.channels, length, static_cast<int>(fmt.rate));
  for (Eigen::Index n = 0; n < length; ++n)
    for (int m = 0; m < fmt.channels; ++m)
      out.samples(m, n) = decode_sample(pcm + n * frame + m * width, fmt);
  return out;
}

double quantization_step(WavEncoding encoding) {
  switch (encoding) {
    case WavEncoding::kPcm16:
      return 1.0 / 32768.0;
    case WavEncoding::kPcm24:
      return 1.0 / 8388608.0;
    case WavEncoding::kFloat32:
      return std::numeric_limits<float>::epsilon();
  }
  return 0.0;
}

std::size_t write_wav(const MultichannelSignal& signal,
                      const std::filesystem::path& path, WavEncoding encoding) {
  signal.validate();
  if (!signal.samples.allFinite())
    throw ConfigError("cannot write non-finite samples to " + path.string());

  const int channels = signal.channels();
  const int bits = encoding == WavEncoding::kPcm16 ? 16
                   : encoding == WavEncoding::kPcm24 ? 24
                                                     : 32;
  const int width = bits / 8;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(signal.length() * channels * width);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, encoding == WavEncoding::kFloat32 ? kFormatFloat : kFormatPcm);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(signal.sample_rate));
  put32(out, static_cast<std::uint32_t>(signal.sample_rate * channels * width));
  put16(out, static_cast<std::uint16_t>(channels * width));
  put16(out, static_cast<std::uint16_t>(bits));
  out += "data";
  put32(out, data_bytes);

  std::size_t clipped = 0;
  for (Eigen::Index n = 0; n < signal.length(); ++n) {
    for (int m = 0; m < channels; ++m) {
      double x = signal.samples(m, n);
      if (x > 1.0 || x < -1.0) {
        ++clipped;
        x = std::clamp(x, -1.0, 1.0);
      }
      switch (encoding) {
        case WavEncoding::kPcm16: {
          auto q = static_cast<std::int32_t>(std::lround(x * 32768.0));
          put16(out, static_cast<std::uint16_t>(std::clamp(q, -32768, 32767)));
          break;
        }
        case WavEncoding::kPcm24: {
          auto q = static_cast<std::int32_t>(std::lround(x * 8388608.0));
          q = std::clamp(q, -8388608, 8388607);
          auto u = static_cast<std::uint32_t>(q);
          out.push_back(static_cast<char>(u & 0xFF));
          out.push_back(static_cast<char>((u >> 8) & 0xFF));
          out.push_back(static_cast<char>((u >> 16) & 0xFF));
          break;
        }
        case WavEncoding::kFloat32: {
          float v = static_cast<float>(x);
          std::uint32_t raw;
          std::memcpy(&raw, &v, sizeof(raw));
          put32(out, raw);
          break;
        }
      }
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing " + path.string());
  return clipped;
}

void write_run_log(const std::vector<RunRecord>& records,
                   const std::filesystem::path& path) {
  if (records.empty()) throw ConfigError("run log needs at least one record");
  std::size_t num_sdr = 0;
  for (const auto& r : records) num_sdr = std::max(num_sdr, r.sdr_db.size());

  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "# iter\tobjective\telapsed_s";
  for (std::size_t k = 0; k < num_sdr; ++k) out << "\tsdr_" << k + 1;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records) {
    out << r.iteration << '\t' << r.objective << '\t' << r.elapsed_s;
    for (std::size_t k = 0; k < num_sdr; ++k) {
      out << '\t';
      if (k < r.sdr_db.size())
        out << r.sdr_db[k];
      else
        out << '-';
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<RunRecord> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RunRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(fields, field, '\t')) cols.push_back(field);
    if (cols.size() < 3) throw IoError("malformed run log line: " + line);
    RunRecord r;
    r.iteration = std::stoi(cols[0]);
    r.objective = std::strtod(cols[1].c_str(), nullptr);
    r.elapsed_s = std::strtod(cols[2].c_str(), nullptr);
    for (std::size_t k = 3; k < cols.size(); ++k) {
      if (cols[k] == "-") break;
      r.sdr_db.push_back(std::strtod(cols[k].c_str(), nullptr));
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace convbse
