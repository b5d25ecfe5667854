// Copyright 2026 The orthosep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "orthosep/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "orthosep/error.hpp"

namespace orthosep {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "unknown";
}

void validate(const Waveform& w) {
  require(w.sample_rate > 0, fmt::format("sample rate must be positive, got {}", w.sample_rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    if (!std::isfinite(w.samples[i]))
      fail(ErrorKind::kInvalidArgument, fmt::format("non-finite sample at index {}", i));
  }
}

double mean_power(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  return acc / static_cast<double>(w.samples.size());
}

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for reading", path.string()));
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::kFormat, fmt::format("'{}': {}", path.string(), why));
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    bad("not a RIFF/WAVE file");

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) bad("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) bad("fmt chunk too small");
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1) bad(fmt::format("audio format {} is not PCM (1)", format));
      if (channels != 1) bad(fmt::format("{} channels, expected mono", channels));
      if (bits != 16) bad(fmt::format("{} bits per sample, expected 16", bits));
      if (rate != static_cast<std::uint32_t>(kDefaultSampleRate))
        bad(fmt::format("sample rate {} Hz, expected {} Hz", rate, kDefaultSampleRate));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) bad("data chunk precedes fmt chunk");
      if (size % 2 != 0) bad("odd data chunk size for 16-bit samples");
      Waveform w;
      w.sample_rate = kDefaultSampleRate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  fail(ErrorKind::kFormat, fmt::format("'{}': no data chunk", path.string()));
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  validate(w);
  require(w.sample_rate == kDefaultSampleRate,
          fmt::format("only {} Hz output is supported, got {}", kDefaultSampleRate, w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate));
  put32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, data_bytes);
  for (double x : w.samples) {
    const double clipped = std::clamp(x, -1.0, 32767.0 / 32768.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

}  // namespace orthosep
