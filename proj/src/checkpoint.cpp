#include "provmark/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "provmark/tensor.hpp"

namespace provmark {

namespace {

constexpr char kMagic[8] = {'P', 'M', 'C', 'K', 'P', 'T', '0', '1'};

using nlohmann::json;

json manifest_to_json(const CheckpointManifest& m) {
  json sections = json::array();
  for (const auto& s : m.sections)
    sections.push_back({{"name", s.name}, {"count", s.count}});
  return json{{"config", m.config_json},
              {"seed", m.seed},
              {"corpus_hash", m.corpus_hash},
              {"sections", sections}};
}

CheckpointManifest manifest_from_json(const json& j) {
  CheckpointManifest m;
  m.config_json = j.at("config").get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.corpus_hash = j.at("corpus_hash").get<uint64_t>();
  for (const auto& s : j.at("sections"))
    m.sections.push_back({s.at("name").get<std::string>(),
                          s.at("count").get<int64_t>()});
  return m;
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("IoError", "cannot open checkpoint: " + path);
  return is;
}

CheckpointManifest read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw Error("BadCheckpoint", "bad magic in " + path);
  uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) throw Error("BadCheckpoint", "truncated manifest in " + path);
  try {
    return manifest_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw Error("BadCheckpoint", std::string("manifest parse: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointManifest& manifest,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores) {
  CheckpointManifest m = manifest;
  m.sections.clear();
  for (const auto& [name, ps] : stores)
    m.sections.push_back({name, ps->total_size()});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("IoError", "cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  std::string text = manifest_to_json(m).dump();
  write_u64(os, text.size());
  os.write(text.data(), text.size());
  for (const auto& [name, ps] : stores) {
    (void)name;
    for (const auto& e : ps->entries()) {
      const ArrayX& v = e.t.value();
      os.write(reinterpret_cast<const char*>(v.data()),
               sizeof(Scalar) * v.size());
    }
  }
  if (!os) throw Error("IoError", "short write: " + path);
}

CheckpointManifest load_checkpoint(const std::string& path,
                                   const std::vector<std::pair<std::string, ParamStore*>>& stores) {
  std::ifstream is = open_or_throw(path);
  CheckpointManifest m = read_header(is, path);
  for (const auto& [name, ps] : stores) {
    const CheckpointSection* sec = nullptr;
    int64_t offset = 0;
    for (const auto& s : m.sections) {
      if (s.name == name) {
        sec = &s;
        break;
      }
      offset += s.count;
    }
    if (!sec)
      throw Error("BadCheckpoint", "section not in checkpoint: " + name);
    if (sec->count != ps->total_size())
      throw Error("BadCheckpoint", "size mismatch for section " + name);
    // payload starts after magic(8) + manifest length(8) + manifest bytes
    is.seekg(8, std::ios::beg);
    uint64_t len = read_u64(is);
    std::streamoff payload = 16 + (std::streamoff)len;
    is.seekg(payload + offset * (std::streamoff)sizeof(Scalar), std::ios::beg);
    for (auto t : ps->tensors()) {
      ArrayX& v = t.mutable_value();
      is.read(reinterpret_cast<char*>(v.data()), sizeof(Scalar) * v.size());
    }
    if (!is) throw Error("BadCheckpoint", "truncated payload in " + path);
  }
  return m;
}

CheckpointManifest read_manifest(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  return read_header(is, path);
}

uint64_t checkpoint_hash(const std::string& path) {
  std::ifstream is = open_or_throw(path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= (unsigned char)buf[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace provmark
