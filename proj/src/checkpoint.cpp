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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "orthosep/error.hpp"
#include "orthosep/network.hpp"

namespace orthosep {

namespace {

constexpr char kMagic[4] = {'O', 'S', 'E', 'P'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n, "string");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      fail(ErrorKind::kFormat, fmt::format("checkpoint '{}' is truncated (reading {} at byte {} of {})", source_,
                                           what, pos_, data_.size()));
  }

  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  check_shapes(ckpt.params, ckpt.network);
  validate(ckpt.stft);
  require(ckpt.lambda >= 0.0, "checkpoint lambda must be non-negative");
  require(ckpt.stft.num_bins() == ckpt.network.input_dim,
          fmt::format("network input_dim {} does not match {} STFT bins", ckpt.network.input_dim,
                      ckpt.stft.num_bins()));
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.network.input_dim));
  w.u32(static_cast<std::uint32_t>(ckpt.network.hidden));
  w.u32(static_cast<std::uint32_t>(ckpt.network.num_layers));
  w.u32(static_cast<std::uint32_t>(ckpt.network.embedding_dim));
  w.f64(ckpt.network.dropout);
  w.u32(static_cast<std::uint32_t>(ckpt.stft.fft_size));
  w.u32(static_cast<std::uint32_t>(ckpt.stft.hop));
  w.u32(static_cast<std::uint32_t>(ckpt.sample_rate));
  w.f64(ckpt.lambda);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& name = ckpt.params.names[i];
    const auto& b = ckpt.params.blocks[i];
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(b.rows()));
    w.u32(static_cast<std::uint32_t>(b.cols()));
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < b.cols(); ++c) w.f32(static_cast<float>(b(r, c)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, fmt::format("cannot open checkpoint '{}'", path.string()));
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path.string());
  if (r.str(4) != std::string(kMagic, 4))
    fail(ErrorKind::kFormat, fmt::format("'{}' is not an orthosep checkpoint (bad magic)", path.string()));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    fail(ErrorKind::kFormat, fmt::format("checkpoint '{}' has format version {}, this build reads version {}",
                                         path.string(), version, kCheckpointVersion));
  Checkpoint ck;
  ck.network.input_dim = static_cast<int>(r.u32());
  ck.network.hidden = static_cast<int>(r.u32());
  ck.network.num_layers = static_cast<int>(r.u32());
  ck.network.embedding_dim = static_cast<int>(r.u32());
  ck.network.dropout = r.f64();
  ck.stft.fft_size = static_cast<int>(r.u32());
  ck.stft.hop = static_cast<int>(r.u32());
  ck.sample_rate = static_cast<int>(r.u32());
  ck.lambda = r.f64();
  try {
    validate(ck.network);
    validate(ck.stft);
    require(ck.lambda >= 0.0 && std::isfinite(ck.lambda), "lambda must be finite and non-negative");
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, fmt::format("checkpoint '{}' has an invalid config block: {}", path.string(), e.what()));
  }

  const std::uint32_t count = r.u32();
  ModelParameters params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    params.names.push_back(r.str(name_len));
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (std::uint64_t(rows) * cols * 4 > data.size())
      fail(ErrorKind::kFormat, fmt::format("checkpoint '{}': block '{}' claims {}x{} values, file too small",
                                           path.string(), params.names.back(), rows, cols));
    Eigen::MatrixXd b(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr)
      for (std::uint32_t cc = 0; cc < cols; ++cc) b(rr, cc) = static_cast<double>(r.f32());
    params.blocks.push_back(std::move(b));
  }
  if (!r.at_end()) fail(ErrorKind::kFormat, fmt::format("checkpoint '{}' has trailing bytes", path.string()));
  try {
    check_shapes(params, ck.network);
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, fmt::format("checkpoint '{}': {}", path.string(), e.what()));
  }
  ck.params = std::move(params);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const auto& n = ck.network;
  if (n.input_dim != expected.input_dim || n.hidden != expected.hidden || n.num_layers != expected.num_layers ||
      n.embedding_dim != expected.embedding_dim)
    fail(ErrorKind::kInvalidArgument,
         fmt::format("checkpoint '{}' dimensions (input {}, hidden {}, layers {}, embedding {}) do not match "
                     "expected (input {}, hidden {}, layers {}, embedding {})",
                     path.string(), n.input_dim, n.hidden, n.num_layers, n.embedding_dim, expected.input_dim,
                     expected.hidden, expected.num_layers, expected.embedding_dim));
  return ck;
}

}  // namespace orthosep
