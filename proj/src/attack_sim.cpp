#include "provmark/attack_sim.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <queue>

#include "provmark/face_codec.hpp"
#include "provmark/poisson.hpp"

namespace provmark {

ChannelMask sample_channel_mask(int channels, Scalar p, Rng& rng) {
  if (!(p > 0.0 && p < 1.0))
    throw Error("BadProbability", "channel-mask density must be in (0,1)");
  if (channels < 1) throw Error("BadShape", "need at least one channel");
  ChannelMask m;
  m.values.resize(channels);
  for (int c = 0; c < channels; ++c) m.values[c] = rng.bernoulli(p) ? 1 : 0;
  return m;
}

LatentCode mix_latents(const LatentCode& z_pro, const LatentCode& z_src,
                       const ChannelMask& m) {
  if (z_pro.channels != z_src.channels || z_pro.height != z_src.height ||
      z_pro.width != z_src.width)
    throw Error("ShapeMismatch", "latent shapes differ");
  if ((int)m.values.size() != z_pro.channels)
    throw Error("ShapeMismatch", "channel mask length != latent channels");
  LatentCode out = z_pro;
  int hw = z_pro.height * z_pro.width;
  for (int c = 0; c < z_pro.channels; ++c)
    if (m.values[c]) out.data.segment(c * hw, hw) = z_src.data.segment(c * hw, hw);
  return out;
}

Tensor mix_latents_t(const Tensor& z_pro, const Tensor& z_src,
                     const ChannelMask& m) {
  if (z_pro.shape() != z_src.shape() || z_pro.ndim() != 3)
    throw Error("ShapeMismatch", "latent tensors must share a (C,h,w) shape");
  if ((int)m.values.size() != z_pro.shape()[0])
    throw Error("ShapeMismatch", "channel mask length != latent channels");
  std::vector<Tensor> rows;
  for (int c = 0; c < z_pro.shape()[0]; ++c)
    rows.push_back(slice_dim0(m.values[c] ? z_src : z_pro, c, 1));
  return concat_dim0(rows);
}

namespace {

int count_on(const ManipulationMask& m) {
  int n = 0;
  for (int i = 0; i < (int)m.data.size(); ++i)
    if (m.data[i] >= 0.5) ++n;
  return n;
}

bool touches_border(const ManipulationMask& m) {
  int h = m.height, w = m.width;
  for (int x = 0; x < w; ++x)
    if (m.data[x] >= 0.5 || m.data[(h - 1) * w + x] >= 0.5) return true;
  for (int y = 0; y < h; ++y)
    if (m.data[y * w] >= 0.5 || m.data[y * w + w - 1] >= 0.5) return true;
  return false;
}

bool single_component(const ManipulationMask& m, int on_count) {
  if (on_count == 0) return false;
  int h = m.height, w = m.width;
  std::vector<char> seen(h * w, 0);
  int start = -1;
  for (int i = 0; i < h * w && start < 0; ++i)
    if (m.data[i] >= 0.5) start = i;
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int visited = 0;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    ++visited;
    int y = i / w, x = i % w;
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      int ny = y + dy[k], nx = x + dx[k];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
      int j = ny * w + nx;
      if (!seen[j] && m.data[j] >= 0.5) {
        seen[j] = 1;
        q.push(j);
      }
    }
  }
  return visited == on_count;
}

void fill_ellipse_region(ManipulationMask& m, Scalar cy, Scalar cx, Scalar ry,
                         Scalar rx, const Scalar* fa, const Scalar* fb,
                         int fourier_terms) {
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      Scalar dy = (y - cy) / ry, dx = (x - cx) / rx;
      Scalar r = std::sqrt(dy * dy + dx * dx);
      Scalar limit = 1.0;
      if (fourier_terms > 0) {
        Scalar th = std::atan2(dy, dx);
        for (int k = 0; k < fourier_terms; ++k)
          limit += fa[k] * std::cos((k + 1) * th) + fb[k] * std::sin((k + 1) * th);
      }
      if (r <= limit) m.data[y * m.width + x] = 1.0;
    }
}

}  // namespace

ManipulationMask generate_blend_mask(int h, int w, Rng& rng) {
  if (h < 16 || w < 16)
    throw Error("BadShape", "blend masks need at least a 16x16 frame");
  const Scalar kMaxDef = 0.2;  // worst-case radial wobble
  for (int attempt = 0; attempt < 64; ++attempt) {
    // log-uniform target area so both small and large tampering shows up
    Scalar t = std::exp(rng.uniform(std::log(0.07), std::log(0.5)));
    Scalar aspect = std::exp(rng.uniform(std::log(0.6), std::log(1.6)));
    Scalar ry = std::sqrt(t * h * w * aspect / M_PI);
    Scalar rx = std::sqrt(t * h * w / (M_PI * aspect));
    // keep the deformed boundary at least 2px off the border
    ry = std::min(ry, 0.5 * (h - 6) / (1 + kMaxDef));
    rx = std::min(rx, 0.5 * (w - 6) / (1 + kMaxDef));
    Scalar ylo = std::max(h / 6.0, ry * (1 + kMaxDef) + 2);
    Scalar yhi = std::min(5.0 * h / 6.0, h - 2 - ry * (1 + kMaxDef));
    Scalar xlo = std::max(w / 6.0, rx * (1 + kMaxDef) + 2);
    Scalar xhi = std::min(5.0 * w / 6.0, w - 2 - rx * (1 + kMaxDef));
    if (ylo > yhi || xlo > xhi) continue;
    Scalar cy = rng.uniform(ylo, yhi), cx = rng.uniform(xlo, xhi);

    // low-order angular wobble keeps the region star-shaped (hence connected)
    Scalar fa[3], fb[3], mag = 0;
    for (int k = 0; k < 3; ++k) {
      fa[k] = rng.uniform(-1.0, 1.0) / (k + 1);
      fb[k] = rng.uniform(-1.0, 1.0) / (k + 1);
      mag += std::abs(fa[k]) + std::abs(fb[k]);
    }
    Scalar scale = kMaxDef * rng.uniform(0.3, 1.0) / std::max(mag, (Scalar)1e-9);
    for (int k = 0; k < 3; ++k) {
      fa[k] *= scale;
      fb[k] *= scale;
    }

    ManipulationMask m;
    m.height = h;
    m.width = w;
    m.binary = true;
    m.data = ArrayX::Zero(h * w);
    fill_ellipse_region(m, cy, cx, ry, rx, fa, fb, 3);

    if (rng.bernoulli(0.4)) {
      // secondary blob anchored strictly inside the primary, so the union
      // stays one component
      Scalar phi = rng.uniform(0.0, 2 * M_PI);
      Scalar rho = rng.uniform(0.2, 0.7);
      Scalar cy2 = cy + rho * std::sin(phi) * ry;
      Scalar cx2 = cx + rho * std::cos(phi) * rx;
      Scalar f = rng.uniform(0.25, 0.5);
      fill_ellipse_region(m, cy2, cx2, f * ry, f * rx, nullptr, nullptr, 0);
    }

    int on = count_on(m);
    Scalar frac = Scalar(on) / (h * w);
    if (frac < 0.05 || frac > 0.6) continue;
    if (touches_border(m)) continue;
    if (!single_component(m, on)) continue;
    Scalar my = 0, mx = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (m.data[y * w + x] >= 0.5) {
          my += y;
          mx += x;
        }
    my /= on;
    mx /= on;
    if (my < h / 6.0 || my > 5.0 * h / 6.0 || mx < w / 6.0 || mx > 5.0 * w / 6.0)
      continue;
    return m;
  }
  // extremely defensive fallback: a plain centered ellipse always satisfies
  // the contract
  ManipulationMask m;
  m.height = h;
  m.width = w;
  m.binary = true;
  m.data = ArrayX::Zero(h * w);
  fill_ellipse_region(m, h / 2.0, w / 2.0, 0.28 * h, 0.28 * w, nullptr, nullptr, 0);
  return m;
}

namespace {

const Eigen::Matrix<Scalar, 8, 8>& dct8_matrix() {
  static const Eigen::Matrix<Scalar, 8, 8> d = [] {
    Eigen::Matrix<Scalar, 8, 8> m;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        Scalar c = i == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        m(i, j) = c * std::cos((2 * j + 1) * i * M_PI / 16.0);
      }
    return m;
  }();
  return d;
}

// Annex-K luminance table, applied to every channel (no chroma path here)
const int kQuantTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

}  // namespace

Tensor approx_jpeg(const Tensor& img, Scalar quality) {
  if (img.ndim() != 3) throw Error("ShapeMismatch", "jpeg wants (C,H,W)");
  int c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  if (h % 8 != 0 || w % 8 != 0)
    throw Error("BadShape", "jpeg stage needs sides divisible by 8");
  bool lossless = quality >= 99.5;
  Scalar s = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  Scalar steps[64];
  for (int i = 0; i < 64; ++i)
    steps[i] = std::max(1.0, std::round(kQuantTable[i] * s / 100.0));

  const auto& d = dct8_matrix();
  ArrayX out(img.numel());
  const ArrayX& v = img.value();
  Eigen::Matrix<Scalar, 8, 8> blk;
  for (int ch = 0; ch < c; ++ch)
    for (int by = 0; by < h; by += 8)
      for (int bx = 0; bx < w; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            blk(y, x) = v[(ch * h + by + y) * w + bx + x] * 255.0 - 128.0;
        Eigen::Matrix<Scalar, 8, 8> coef = d * blk * d.transpose();
        if (!lossless)
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
              Scalar q = steps[y * 8 + x];
              coef(y, x) = std::round(coef(y, x) / q) * q;
            }
        blk = d.transpose() * coef * d;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            Scalar px = std::round(std::min(255.0, std::max(0.0, blk(y, x) + 128.0)));
            out[(ch * h + by + y) * w + bx + x] = px / 255.0;
          }
      }
  return ste_replace(img, out);
}

Tensor add_gaussian_noise(const Tensor& img, Scalar sigma, Rng& rng) {
  ArrayX noise(img.numel());
  for (int i = 0; i < (int)noise.size(); ++i) noise[i] = sigma * rng.normal();
  return add(img, Tensor::from_array(img.shape(), noise));
}

Tensor color_jitter(const Tensor& img, Scalar contrast, Scalar brightness) {
  // y = b * (0.5 + (x - 0.5) * c)
  return add_scalar(mul_scalar(img, brightness * contrast),
                    brightness * 0.5 * (1.0 - contrast));
}

Tensor degrade(const Tensor& img, const DegradeConfig& spec, Rng& rng,
               std::vector<std::string>* tags) {
  Tensor cur = img;
  if (spec.jitter) {
    Scalar c = rng.uniform(spec.jitter_min, spec.jitter_max);
    Scalar b = rng.uniform(spec.jitter_min, spec.jitter_max);
    cur = color_jitter(cur, c, b);
    if (tags) tags->push_back("jitter");
  }
  if (spec.noise) {
    Scalar sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
    cur = add_gaussian_noise(cur, sigma, rng);
    if (tags) tags->push_back("noise");
  }
  if (spec.jpeg) {
    Scalar q = rng.uniform(spec.jpeg_q_min, spec.jpeg_q_max);
    cur = approx_jpeg(clamp(cur, 0.0, 1.0), q);
    if (tags) tags->push_back("jpeg");
  }
  return clamp(cur, 0.0, 1.0);
}

AttackTensors attack_pipeline(const Tensor& protected_img,
                              const Tensor& source_img,
                              const AttackConfig& cfg, const FaceCodec* codec,
                              Rng& rng) {
  cfg.validate();
  if (protected_img.ndim() != 3 || protected_img.shape()[0] != 3)
    throw Error("ShapeMismatch", "protected image must be (3,H,W)");
  if (source_img.shape() != protected_img.shape())
    throw Error("ShapeMismatch", "source and protected shapes differ");
  int h = protected_img.shape()[1], w = protected_img.shape()[2];

  AttackTensors out;
  Tensor cur = protected_img;
  bool mixed = false, blended = false;

  if (cfg.enable_latent_mixing) {
    if (!codec) throw Error("BadConfig", "latent mixing needs a face codec");
    if (h != w)
      throw Error("BadShape", "latent mixing regenerates square frames only");
    int er = codec->config().encode_resolution();
    Tensor z_pro = codec->encode_mu(resize_bilinear(cur, er, er));
    Tensor z_src = codec->encode_mu(resize_bilinear(source_img, er, er));
    ChannelMask m = sample_channel_mask(codec->config().latent_channels,
                                        cfg.channel_mask_p, rng);
    cur = codec->decode(mix_latents_t(z_pro, z_src, m), h);
    mixed = true;
    out.stages.push_back("latent_mixing");
  }

  ManipulationMask blend_mask;
  if (cfg.enable_blending) {
    blend_mask = generate_blend_mask(h, w, rng);
    Image src_im, dst_im;
    {
      NoGradGuard ng;
      src_im = tensor_to_image(source_img);
      dst_im = tensor_to_image(cur);
    }
    Image edited = poisson_blend(src_im, dst_im, blend_mask);
    cur = ste_replace(cur, image_to_tensor(edited).value());
    blended = true;
    out.stages.push_back("blend");
  }

  if (cfg.enable_degradations)
    cur = degrade(cur, cfg.degrade, rng, &out.stages);

  out.edited = cur;
  if (blended)
    out.gt_mask = Tensor::from_array({1, h, w}, blend_mask.data);
  else if (mixed)
    out.gt_mask = Tensor::constant({1, h, w}, 1.0);
  else
    out.gt_mask = Tensor::constant({1, h, w}, 0.0);
  return out;
}

AttackOutcome simulate_attack(const Image& protected_img, const Image& source_img,
                              const AttackConfig& cfg, const FaceCodec* codec,
                              Rng& rng) {
  NoGradGuard ng;
  AttackTensors t = attack_pipeline(image_to_tensor(protected_img),
                                    image_to_tensor(source_img), cfg, codec, rng);
  AttackOutcome out;
  out.edited = tensor_to_image(t.edited);
  out.ground_truth_mask = tensor_to_mask(t.gt_mask, /*binary=*/true);
  out.stages = std::move(t.stages);
  return out;
}

}  // namespace provmark
