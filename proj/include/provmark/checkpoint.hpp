#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provmark/nn.hpp"

namespace provmark {

// Versioned binary container: magic + version, a JSON manifest (config echo,
// training seed, corpus hash, section table), then raw little-endian f64
// parameter payloads in store order. One file bundles every network so the
// inference commands take a single path.

struct CheckpointSection {
  std::string name;        // "face_codec", "embedder", ...
  int64_t count = 0;       // number of scalars
};

struct CheckpointManifest {
  std::string config_json;               // RunConfig echo
  uint64_t seed = 0;
  uint64_t corpus_hash = 0;
  std::vector<CheckpointSection> sections;
};

void save_checkpoint(const std::string& path, const CheckpointManifest& manifest,
                     const std::vector<std::pair<std::string, const ParamStore*>>& stores);

// loads payloads into the given stores (shapes must already match; sections
// are matched by name). Returns the manifest. Throws IoError / BadCheckpoint.
CheckpointManifest load_checkpoint(const std::string& path,
                                   const std::vector<std::pair<std::string, ParamStore*>>& stores);

// manifest-only read (cheap provenance lookups)
CheckpointManifest read_manifest(const std::string& path);

// FNV-1a over the whole file, for report provenance
uint64_t checkpoint_hash(const std::string& path);

}  // namespace provmark
