#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provmark/datamodel.hpp"

namespace provmark {

class Rng;

// Procedural face crop: ellipse head with randomized geometry, skin tone,
// hair, eyes, brows and mouth over a soft background. Keeps the repo
// self-contained when no real face directory is supplied.
Image synth_face(int resolution, Rng& rng);

std::vector<Image> synth_corpus(int count, int resolution, uint64_t seed);

// Recursive PNG/JPEG scan in sorted-path order; center-crop to square and
// bilinear-resize to `resolution`. Throws EmptyCorpus when nothing usable.
std::vector<Image> ingest_corpus(const std::string& dir, int resolution);

// single file (PNG or JPEG by extension), same crop/resize treatment
Image load_image_file(const std::string& path, int resolution);

// FNV-1a 64 over the 8-bit quantized pixels; recorded in checkpoint manifests
uint64_t corpus_hash(const std::vector<Image>& corpus);

}  // namespace provmark
