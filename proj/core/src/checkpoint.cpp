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

#include "dstdnn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dstdnn {

using json = nlohmann::json;

void save_checkpoint(const DsTdnn& model, const std::string& path) {
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config"] = json::parse(model_config_to_json(model.config()));

  json entries = json::array();
  std::size_t offset = 0;
  for (const Parameter* p : model.params().all()) {
    json e;
    e["name"] = p->name;
    e["shape"] = p->value.shape();
    e["dtype"] = "f32";
    e["offset"] = offset;
    entries.push_back(std::move(e));
    offset += p->value.numel() * 4;
  }
  manifest["params"] = std::move(entries);
  manifest["payload_bytes"] = offset;

  const std::string mjson = manifest.dump();
  std::string out;
  out.reserve(8 + mjson.size() + offset);
  const std::uint64_t mlen = mjson.size();
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((mlen >> (8 * i)) & 0xff));
  }
  out += mjson;
  for (const Parameter* p : model.params().all()) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const float v = static_cast<float>(p->value[i]);
      char bytes[4];
      std::memcpy(bytes, &v, 4);
      out.append(bytes, 4);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("save_checkpoint: short write to " + path);
}

std::unique_ptr<DsTdnn> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 8) throw IntegrityError("load_checkpoint: truncated header");
  std::uint64_t mlen = 0;
  for (int i = 7; i >= 0; --i) {
    mlen = (mlen << 8) | static_cast<unsigned char>(buf[i]);
  }
  if (8 + mlen > buf.size()) {
    throw IntegrityError("load_checkpoint: manifest extends past end of file");
  }

  json manifest;
  try {
    manifest = json::parse(buf.substr(8, mlen));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("load_checkpoint: bad manifest: ") +
                         e.what());
  }
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw IntegrityError("load_checkpoint: unsupported format version");
  }

  const ModelConfig cfg = model_config_from_json(manifest["config"].dump());
  auto model = std::make_unique<DsTdnn>(cfg, /*init_seed=*/0);

  const std::size_t payload_start = 8 + mlen;
  const std::size_t payload_bytes = buf.size() - payload_start;
  const std::size_t declared = manifest.value("payload_bytes", std::size_t{0});
  if (declared != payload_bytes) {
    throw IntegrityError("load_checkpoint: payload length mismatch");
  }

  const auto& entries = manifest["params"];
  if (entries.size() != model->params().all().size()) {
    throw IntegrityError("load_checkpoint: parameter count mismatch");
  }
  for (const auto& e : entries) {
    const std::string name = e["name"].get<std::string>();
    Parameter* p = model->params().find(name);
    if (p == nullptr) {
      throw IntegrityError("load_checkpoint: unknown parameter " + name);
    }
    const auto shape = e["shape"].get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw IntegrityError("load_checkpoint: shape mismatch for " + name);
    }
    if (e.value("dtype", "f32") != "f32") {
      throw IntegrityError("load_checkpoint: unsupported dtype for " + name);
    }
    const std::size_t offset = e["offset"].get<std::size_t>();
    const std::size_t bytes = p->value.numel() * 4;
    if (offset + bytes > payload_bytes) {
      throw IntegrityError("load_checkpoint: payload truncated at " + name);
    }
    const char* src = buf.data() + payload_start + offset;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      float v;
      std::memcpy(&v, src + 4 * i, 4);
      p->value[i] = static_cast<double>(v);
    }
  }
  return model;
}

}  // namespace dstdnn
