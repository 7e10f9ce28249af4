#include "provmark/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>

#include <jpeglib.h>

#include "provmark/png_io.hpp"
#include "provmark/rng.hpp"
#include "provmark/tensor.hpp"

namespace provmark {

namespace {

struct Color {
  Scalar r, g, b;
};

void fill_ellipse(Image& img, Scalar cx, Scalar cy, Scalar rx, Scalar ry,
                  const Color& col, Scalar softness = 1.0) {
  const int y0 = std::max(0, static_cast<int>(cy - ry - 2));
  const int y1 = std::min(img.height - 1, static_cast<int>(cy + ry + 2));
  const int x0 = std::max(0, static_cast<int>(cx - rx - 2));
  const int x1 = std::min(img.width - 1, static_cast<int>(cx + rx + 2));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Scalar dx = (x - cx) / rx, dy = (y - cy) / ry;
      const Scalar d = dx * dx + dy * dy;
      if (d > 1.0) continue;
      // soft edge: fade the outer few percent
      Scalar a = std::min(1.0, softness * (1.0 - d) * 8.0);
      img.at(0, y, x) = (1 - a) * img.at(0, y, x) + a * col.r;
      img.at(1, y, x) = (1 - a) * img.at(1, y, x) + a * col.g;
      img.at(2, y, x) = (1 - a) * img.at(2, y, x) + a * col.b;
    }
}

}  // namespace

Image synth_face(int resolution, Rng& rng) {
  const int R = resolution;
  Image img = Image::zeros(3, R, R);

  // background: vertical gradient between two muted colors
  Color bg1{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  Color bg2{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  for (int y = 0; y < R; ++y) {
    const Scalar t = static_cast<Scalar>(y) / (R - 1);
    for (int x = 0; x < R; ++x) {
      img.at(0, y, x) = (1 - t) * bg1.r + t * bg2.r;
      img.at(1, y, x) = (1 - t) * bg1.g + t * bg2.g;
      img.at(2, y, x) = (1 - t) * bg1.b + t * bg2.b;
    }
  }

  // head
  const Scalar cx = R * rng.uniform(0.44, 0.56);
  const Scalar cy = R * rng.uniform(0.48, 0.58);
  const Scalar rx = R * rng.uniform(0.24, 0.33);
  const Scalar ry = R * rng.uniform(0.30, 0.40);
  const Scalar tone = rng.uniform(0.35, 0.9);
  Color skin{tone, tone * rng.uniform(0.72, 0.88), tone * rng.uniform(0.55, 0.75)};
  fill_ellipse(img, cx, cy, rx, ry, skin);

  // hair cap above the forehead
  if (rng.bernoulli(0.85)) {
    Color hair{rng.uniform(0.02, 0.45), rng.uniform(0.02, 0.35),
               rng.uniform(0.02, 0.3)};
    fill_ellipse(img, cx, cy - ry * rng.uniform(0.55, 0.75), rx * 1.05,
                 ry * rng.uniform(0.35, 0.55), hair);
  }

  // eyes (+ pupils), symmetric with jitter
  const Scalar eye_dy = -ry * rng.uniform(0.15, 0.3);
  const Scalar eye_dx = rx * rng.uniform(0.35, 0.5);
  const Scalar eye_r = rx * rng.uniform(0.12, 0.2);
  Color white{0.92, 0.92, 0.9};
  Color iris{rng.uniform(0.05, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.15, 0.6)};
  for (int side : {-1, 1}) {
    const Scalar ex = cx + side * eye_dx, ey = cy + eye_dy;
    fill_ellipse(img, ex, ey, eye_r, eye_r * 0.6, white);
    fill_ellipse(img, ex, ey, eye_r * 0.45, eye_r * 0.45, iris);
    // brow
    Color brow{0.1, 0.08, 0.06};
    fill_ellipse(img, ex, ey - eye_r * rng.uniform(1.1, 1.6), eye_r * 1.1,
                 eye_r * 0.22, brow);
  }

  // nose hint
  fill_ellipse(img, cx, cy + ry * 0.08, rx * 0.08, ry * 0.16,
               Color{skin.r * 0.85, skin.g * 0.85, skin.b * 0.85});

  // mouth
  Color lip{rng.uniform(0.45, 0.85), rng.uniform(0.1, 0.35), rng.uniform(0.15, 0.35)};
  fill_ellipse(img, cx, cy + ry * rng.uniform(0.42, 0.58),
               rx * rng.uniform(0.3, 0.5), ry * rng.uniform(0.06, 0.12), lip);

  // gentle vignette so images are not piecewise-constant
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < R; ++x) {
      const Scalar dx = (x - R / 2.0) / R, dy = (y - R / 2.0) / R;
      const Scalar v = 1.0 - 0.35 * (dx * dx + dy * dy);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) *= v;
    }

  // light grain
  for (Eigen::Index i = 0; i < img.data.size(); ++i) {
    img.data[i] += rng.uniform(-0.01, 0.01);
    img.data[i] = std::clamp(img.data[i], 0.0, 1.0);
  }
  return img;
}

std::vector<Image> synth_corpus(int count, int resolution, uint64_t seed) {
  Rng root(seed);
  std::vector<Image> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng r = root.split(static_cast<uint64_t>(i));
    out.push_back(synth_face(resolution, r));
  }
  return out;
}

namespace {

Image read_jpeg(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("IoError", "cannot open " + path);
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  Image img = Image::zeros(3, h, w);
  for (int y = 0; y < h; ++y) {
    uint8_t* rp = row.data();
    jpeg_read_scanlines(&cinfo, &rp, 1);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return img;
}

Image crop_resize(const Image& src, int resolution) {
  const int side = std::min(src.height, src.width);
  const int y0 = (src.height - side) / 2, x0 = (src.width - side) / 2;
  Image crop = Image::zeros(3, side, side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        crop.at(c, y, x) = src.at(c, y0 + y, x0 + x);
  NoGradGuard ng;
  Tensor t = resize_bilinear(image_to_tensor(crop), resolution, resolution);
  return tensor_to_image(t);
}

}  // namespace

Image load_image_file(const std::string& path, int resolution) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  Image raw = (ext == ".jpg" || ext == ".jpeg") ? read_jpeg(path) : read_png(path);
  return crop_resize(raw, resolution);
}

std::vector<Image> ingest_corpus(const std::string& dir, int resolution) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir))
    throw Error("IoError", "corpus directory does not exist: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Image> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    std::string ext = fs::path(p).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    Image raw = (ext == ".png") ? read_png(p) : read_jpeg(p);
    out.push_back(crop_resize(raw, resolution));
  }
  if (out.empty())
    throw Error("EmptyCorpus", "no PNG/JPEG files under " + dir);
  return out;
}

uint64_t corpus_hash(const std::vector<Image>& corpus) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_byte = [&h](uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (const auto& img : corpus) {
    for (int shift : {0, 8, 16, 24}) {
      mix_byte(static_cast<uint8_t>((static_cast<uint32_t>(img.height) >> shift) & 0xff));
      mix_byte(static_cast<uint8_t>((static_cast<uint32_t>(img.width) >> shift) & 0xff));
    }
    for (Eigen::Index i = 0; i < img.data.size(); ++i) {
      Scalar q = std::round(255.0 * img.data[i]);
      mix_byte(static_cast<uint8_t>(std::clamp(q, 0.0, 255.0)));
    }
  }
  return h;
}

}  // namespace provmark
