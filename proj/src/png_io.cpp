#include "provmark/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

namespace provmark {

namespace {

uint8_t quantize(Scalar v) {
  Scalar q = std::round(255.0 * v);
  if (q < 0) q = 0;
  if (q > 255) q = 255;
  return static_cast<uint8_t>(q);
}

void write_gray_or_rgb(const std::string& path, const uint8_t* buf, int h,
                       int w, bool rgb) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf, 0, nullptr))
    throw Error("IoError", "failed to write " + path + ": " + image.message);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  if (img.channels != 3)
    throw Error("BadShape", "write_png expects a 3-channel image");
  const int h = img.height, w = img.width;
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] = quantize(img.at(c, y, x));
  write_gray_or_rgb(path, buf.data(), h, w, true);
}

Image read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error("IoError", "failed to open " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
    throw Error("IoError", "failed to read " + path + ": " + image.message);
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  Image img = Image::zeros(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) =
            buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
  return img;
}

void write_mask_png(const std::string& path, const ManipulationMask& mask) {
  const int h = mask.height, w = mask.width;
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w);
  for (Eigen::Index i = 0; i < mask.data.size(); ++i)
    buf[static_cast<size_t>(i)] = quantize(mask.data[i]);
  write_gray_or_rgb(path, buf.data(), h, w, false);
}

ManipulationMask read_mask_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error("IoError", "failed to open " + path + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
    throw Error("IoError", "failed to read " + path + ": " + image.message);
  ManipulationMask mask;
  mask.height = static_cast<int>(image.height);
  mask.width = static_cast<int>(image.width);
  mask.binary = false;
  mask.data.resize(static_cast<Eigen::Index>(mask.height) * mask.width);
  for (Eigen::Index i = 0; i < mask.data.size(); ++i)
    mask.data[i] = buf[static_cast<size_t>(i)] / 255.0;
  return mask;
}

}  // namespace provmark
