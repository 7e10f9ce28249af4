#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "provmark/tensor.hpp"

namespace provmark {

class Rng;

// Planar layout throughout: data[(c*H + y)*W + x], c in [0,channels).
struct Image {
  int channels = 0;  // always 3 for pipeline images
  int height = 0;
  int width = 0;
  ArrayX data;

  static Image zeros(int c, int h, int w) {
    return {c, h, w, ArrayX::Zero(static_cast<Eigen::Index>(c) * h * w)};
  }
  Scalar at(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  Scalar& at(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
};

struct OwnershipCode {
  std::vector<uint8_t> bits;  // each 0 or 1

  int n() const { return static_cast<int>(bits.size()); }
  bool operator==(const OwnershipCode& o) const { return bits == o.bits; }
};

struct LatentCode {
  int channels = 0;
  int height = 0;
  int width = 0;
  ArrayX data;

  int flat_size() const { return channels * height * width; }
};

struct WatermarkPayload {
  OwnershipCode code;
  LatentCode face_latent;
};

struct ManipulationMask {
  int height = 0;
  int width = 0;
  ArrayX data;          // H*W, row-major
  bool binary = false;  // true once thresholded

  static ManipulationMask zeros(int h, int w) {
    return {h, w, ArrayX::Zero(static_cast<Eigen::Index>(h) * w), true};
  }
};

struct ChannelMask {
  std::vector<uint8_t> values;  // one per latent channel, 0 or 1
};

// --- ownership code plumbing -------------------------------------------------

// Lowercase hex, MSB first, zero-padded to ceil(n/4) digits.
std::string code_to_hex(const OwnershipCode& code);

// Inverse of code_to_hex for a known n. Throws BadPayload on wrong length,
// bad characters, or set bits beyond the leading pad.
OwnershipCode hex_to_code(const std::string& hex, int n);

OwnershipCode random_code(int n, Rng& rng);

// --- validation ---------------------------------------------------------------

// Checks finiteness, [0,1] range and patch-size divisibility, in that order.
// Throws Error with kind NonFinite / OutOfRange / BadShape.
Image validate_image(int height, int width, ArrayX interleaved_or_planar,
                     int patch_size = 8, bool planar = true);

// --- masks --------------------------------------------------------------------

// values >= tau become 1, the rest 0. Throws BadThreshold unless 0 < tau < 1.
ManipulationMask binarize_mask(const ManipulationMask& m, Scalar tau = 0.5);

// --- tensor bridge --------------------------------------------------------------

// leaf tensors (no gradient) sharing the planar C,H,W layout
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);  // clamps to [0,1]
Tensor mask_to_tensor(const ManipulationMask& m);   // (1,H,W)
ManipulationMask tensor_to_mask(const Tensor& t, bool binary);
Tensor latent_to_tensor(const LatentCode& z);
LatentCode tensor_to_latent(const Tensor& t);

}  // namespace provmark
