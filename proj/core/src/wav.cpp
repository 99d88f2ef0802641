// Copyright 2026 The dstdnn Authors.
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

#include "dstdnn/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dstdnn/common.hpp"

namespace dstdnn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;  // little-endian host assumed for this toolchain
}

std::uint16_t get_u16(const char* p) {
  std::uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  put_u32(buf, 36 + data_bytes);
  buf += "WAVE";
  buf += "fmt ";
  put_u32(buf, 16);
  put_u16(buf, 1);  // PCM
  put_u16(buf, 1);  // mono
  put_u32(buf, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(buf, static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(buf, 2);
  put_u16(buf, 16);
  buf += "data";
  put_u32(buf, data_bytes);
  for (double s : w.samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lrint(clipped * 32767.0));
    put_u16(buf, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_wav: cannot open " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write_wav: short write to " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_wav: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 44 || buf.compare(0, 4, "RIFF") != 0 ||
      buf.compare(8, 4, "WAVE") != 0) {
    throw IoError("read_wav: not a RIFF/WAVE file: " + path);
  }
  Waveform w;
  std::size_t pos = 12;
  bool have_fmt = false;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const std::uint32_t sz = get_u32(buf.data() + pos + 4);
    pos += 8;
    if (pos + sz > buf.size()) throw IoError("read_wav: truncated chunk");
    if (id == "fmt ") {
      if (sz < 16) throw IoError("read_wav: malformed fmt chunk");
      const std::uint16_t format = get_u16(buf.data() + pos);
      const std::uint16_t channels = get_u16(buf.data() + pos + 2);
      const std::uint16_t bits = get_u16(buf.data() + pos + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw IoError("read_wav: only 16-bit mono PCM is supported");
      }
      w.sample_rate = static_cast<int>(get_u32(buf.data() + pos + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw IoError("read_wav: data chunk before fmt");
      const std::size_t n = sz / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto q = static_cast<std::int16_t>(
            get_u16(buf.data() + pos + 2 * i));
        w.samples[i] = static_cast<double>(q) / 32767.0;
      }
      return w;
    }
    pos += sz + (sz % 2);  // chunks are word-aligned
  }
  throw IoError("read_wav: no data chunk in " + path);
}

}  // namespace dstdnn
