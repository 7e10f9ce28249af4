#include "provmark/datamodel.hpp"

#include <cmath>

#include "provmark/rng.hpp"

namespace provmark {

std::string code_to_hex(const OwnershipCode& code) {
  const int n = code.n();
  const int digits = (n + 3) / 4;
  const int pad = digits * 4 - n;  // implicit leading zero bits
  std::string out(static_cast<size_t>(digits), '0');
  static const char* kHex = "0123456789abcdef";
  for (int d = 0; d < digits; ++d) {
    int v = 0;
    for (int j = 0; j < 4; ++j) {
      const int bit_idx = d * 4 + j - pad;
      const int bit = bit_idx >= 0 ? code.bits[static_cast<size_t>(bit_idx)] : 0;
      v = (v << 1) | bit;
    }
    out[static_cast<size_t>(d)] = kHex[v];
  }
  return out;
}

OwnershipCode hex_to_code(const std::string& hex, int n) {
  const int digits = (n + 3) / 4;
  if (static_cast<int>(hex.size()) != digits)
    throw Error("BadPayload", "expected " + std::to_string(digits) +
                                  " hex digits for n=" + std::to_string(n) +
                                  ", got " + std::to_string(hex.size()));
  const int pad = digits * 4 - n;
  OwnershipCode code;
  code.bits.resize(static_cast<size_t>(n));
  for (int d = 0; d < digits; ++d) {
    const char c = hex[static_cast<size_t>(d)];
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw Error("BadPayload", std::string("invalid hex character '") + c + "'");
    for (int j = 0; j < 4; ++j) {
      const int bit = (v >> (3 - j)) & 1;
      const int bit_idx = d * 4 + j - pad;
      if (bit_idx < 0) {
        if (bit)
          throw Error("BadPayload", "value does not fit in " +
                                        std::to_string(n) + " bits");
      } else {
        code.bits[static_cast<size_t>(bit_idx)] = static_cast<uint8_t>(bit);
      }
    }
  }
  return code;
}

OwnershipCode random_code(int n, Rng& rng) {
  OwnershipCode code;
  code.bits.resize(static_cast<size_t>(n));
  for (auto& b : code.bits) b = rng.bernoulli(0.5) ? 1 : 0;
  return code;
}

Image validate_image(int height, int width, ArrayX data, int patch_size,
                     bool planar) {
  (void)planar;  // only planar input is produced anywhere in the pipeline
  if (height <= 0 || width <= 0)
    throw Error("BadShape", "image dimensions must be positive");
  if (data.size() != static_cast<Eigen::Index>(3) * height * width)
    throw Error("BadShape", "pixel buffer size " + std::to_string(data.size()) +
                                " does not match 3x" + std::to_string(height) +
                                "x" + std::to_string(width));
  if (!data.isFinite().all())
    throw Error("NonFinite", "image contains NaN or infinity");
  if ((data < 0.0).any() || (data > 1.0).any())
    throw Error("OutOfRange", "pixel values must lie in [0,1]");
  if (height % patch_size || width % patch_size)
    throw Error("BadShape", "height and width must be divisible by the patch size " +
                                std::to_string(patch_size));
  return {3, height, width, std::move(data)};
}

ManipulationMask binarize_mask(const ManipulationMask& m, Scalar tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw Error("BadThreshold", "threshold must lie strictly inside (0,1)");
  ManipulationMask out;
  out.height = m.height;
  out.width = m.width;
  out.binary = true;
  out.data = (m.data >= tau).cast<Scalar>();
  return out;
}

Tensor image_to_tensor(const Image& img) {
  return Tensor::from_array({img.channels, img.height, img.width}, img.data);
}

Image tensor_to_image(const Tensor& t) {
  if (t.ndim() != 3)
    throw Error("BadShape", "tensor_to_image expects a (C,H,W) tensor");
  return {t.dim(0), t.dim(1), t.dim(2), t.value().max(0.0).min(1.0)};
}

Tensor mask_to_tensor(const ManipulationMask& m) {
  return Tensor::from_array({1, m.height, m.width}, m.data);
}

ManipulationMask tensor_to_mask(const Tensor& t, bool binary) {
  if (t.ndim() != 3 || t.dim(0) != 1)
    throw Error("BadShape", "tensor_to_mask expects a (1,H,W) tensor");
  return {t.dim(1), t.dim(2), t.value().max(0.0).min(1.0), binary};
}

Tensor latent_to_tensor(const LatentCode& z) {
  return Tensor::from_array({z.channels, z.height, z.width}, z.data);
}

LatentCode tensor_to_latent(const Tensor& t) {
  if (t.ndim() != 3)
    throw Error("BadShape", "tensor_to_latent expects a (C,h,w) tensor");
  return {t.dim(0), t.dim(1), t.dim(2), t.value()};
}

}  // namespace provmark
