#include "graphcoder/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace graphcoder {

using nlohmann::json;

namespace {

// Payloads are written little-endian; byte-swap on big-endian hosts.
bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void swap_floats(std::vector<float>& v) {
  for (float& f : v) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) |
        ((u & 0x0000FF00u) << 8) | ((u & 0x000000FFu) << 24);
    std::memcpy(&f, &u, 4);
  }
}

}  // namespace

const TensorBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorBlob& Checkpoint::require(const std::string& name) const {
  const TensorBlob* t = find(name);
  if (!t) throw CheckpointError("checkpoint is missing tensor " + name);
  return *t;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json manifest;
  manifest["tensors"] = json::array();
  for (const auto& t : ckpt.tensors) {
    if (t.numel() != static_cast<long>(t.data.size())) {
      throw CheckpointError("tensor " + t.name + " shape does not match payload size");
    }
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}});
  }
  for (auto it = ckpt.meta.begin(); it != ckpt.meta.end(); ++it) manifest[it.key()] = it.value();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out << manifest.dump() << "\n";
  const bool little = host_little_endian();
  for (const auto& t : ckpt.tensors) {
    if (little) {
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    } else {
      std::vector<float> tmp = t.data;
      swap_floats(tmp);
      out.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * sizeof(float)));
    }
  }
  if (!out) throw CheckpointError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("checkpoint has no manifest line");
  json manifest = json::parse(line, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("tensors") ||
      !manifest["tensors"].is_array()) {
    throw CheckpointError("corrupt checkpoint manifest");
  }

  Checkpoint ckpt;
  for (const auto& entry : manifest["tensors"]) {
    if (!entry.contains("name") || !entry.contains("shape") || !entry.contains("dtype")) {
      throw CheckpointError("corrupt tensor manifest entry");
    }
    if (entry["dtype"].get<std::string>() != "f32") {
      throw CheckpointError("unsupported dtype for tensor " + entry["name"].get<std::string>());
    }
    TensorBlob t;
    t.name = entry["name"].get<std::string>();
    for (const auto& s : entry["shape"]) {
      const long dim = s.get<long>();
      if (dim <= 0) throw CheckpointError("non-positive dimension in tensor " + t.name);
      t.shape.push_back(dim);
    }
    t.data.resize(static_cast<std::size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float))) {
      throw CheckpointError("truncated payload for tensor " + t.name);
    }
    if (!host_little_endian()) swap_floats(t.data);
    ckpt.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw CheckpointError("trailing bytes after last tensor payload");
  }

  manifest.erase("tensors");
  ckpt.meta = std::move(manifest);
  return ckpt;
}

}  // namespace graphcoder
