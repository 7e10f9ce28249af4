#include "provmark/localizer.hpp"

namespace provmark {

Tensor similarity_map(const Tensor& f_img, const Tensor& f_wm, Scalar eps) {
  if (f_img.shape() != f_wm.shape())
    throw Error("ShapeMismatch", "similarity_map: feature shapes differ");
  if (eps <= 0) throw Error("BadConfig", "similarity eps must be positive");
  Tensor dot = sum_channels(mul(f_img, f_wm));
  Tensor na = clamp_min(sqrt_op(sum_channels(square(f_img))), eps);
  Tensor nb = clamp_min(sqrt_op(sum_channels(square(f_wm))), eps);
  return clamp(div_elem(dot, mul(na, nb)), -1.0, 1.0);
}

Localizer::Localizer(const LocalizerConfig& cfg, const UrwConfig& urw,
                     uint64_t seed)
    : cfg_(cfg),
      urw_(urw),
      ps_(seed),
      i1_(ps_, "i1", 3, cfg.base_channels, 3, 1, 1),
      i2_(ps_, "i2", cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      i3_(ps_, "i3", 2 * cfg.base_channels, urw.scale_channels, 3, 2, 1),
      i4_(ps_, "i4", urw.scale_channels, urw.scale_channels, 3, 2, 1),
      i5_(ps_, "i5", urw.scale_channels, urw.scale_channels, 3, 2, 1),
      u4_(ps_, "u4", 2 * urw.scale_channels, urw.scale_channels, 3, 1, 1),
      u3_(ps_, "u3", 2 * urw.scale_channels, urw.scale_channels, 3, 1, 1),
      u2_(ps_, "u2", urw.scale_channels + 2 * cfg.base_channels,
          2 * cfg.base_channels, 3, 1, 1),
      u1_(ps_, "u1", 3 * cfg.base_channels, cfg.base_channels, 3, 1, 1),
      ehead_(ps_, "ehead", cfg.base_channels, 1, 3, 1, 1),
      g1_(ps_, "g1", urw.scales, cfg.fusion_channels, 3, 1, 1),
      g2_(ps_, "g2", cfg.fusion_channels, 1, 3, 1, 1),
      gnorm_(ps_, "gnorm", cfg.fusion_channels),
      a_raw_(ps_.fill("a_raw", {1}, 0.0)) {
  for (int s = 0; s < urw.scales; ++s) {
    proj_img_.emplace_back(ps_, "proj_img" + std::to_string(s),
                           urw.scale_channels, urw.scale_channels, 1, 1, 0);
    proj_wm_.emplace_back(ps_, "proj_wm" + std::to_string(s),
                          urw.scale_channels, urw.scale_channels, 1, 1, 0);
  }
}

Tensor Localizer::fuse_similarity(const std::vector<Tensor>& pyramid, int out_h,
                                  int out_w) const {
  if (static_cast<int>(pyramid.size()) != urw_.scales)
    throw Error("IncompletePyramid",
                "expected " + std::to_string(urw_.scales) + " scales, got " +
                    std::to_string(pyramid.size()));
  std::vector<Tensor> up;
  up.reserve(pyramid.size());
  for (const auto& s : pyramid) up.push_back(resize_bilinear(s, out_h, out_w));
  Tensor x = relu(gnorm_(g1_(concat_dim0(up))));
  return g2_(x);
}

LocalizerOut Localizer::forward(const Tensor& img,
                                const std::vector<Tensor>& wm_taps) const {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw Error("ShapeMismatch", "localizer expects a (3,H,W) image tensor");
  const int H = img.dim(1), W = img.dim(2);

  Tensor a1 = relu(i1_(img));   // c   @ H
  Tensor a2 = relu(i2_(a1));    // 2c  @ H/2
  Tensor a3 = relu(i3_(a2));    // C_s @ H/4
  Tensor a4 = relu(i4_(a3));    // C_s @ H/8
  Tensor a5 = relu(i5_(a4));    // C_s @ H/16

  Tensor b4 = relu(u4_(concat_dim0({upsample_nearest2(a5), a4})));
  Tensor b3 = relu(u3_(concat_dim0({upsample_nearest2(b4), a3})));
  Tensor b2 = relu(u2_(concat_dim0({upsample_nearest2(b3), a2})));
  Tensor b1 = relu(u1_(concat_dim0({upsample_nearest2(b2), a1})));
  Tensor e_dec = ehead_(b1);  // logits (1,H,W)

  LocalizerOut out;
  out.e_dec = e_dec;

  if (!cfg_.use_similarity_branch) {
    out.f_sim = Tensor::zeros({1, H, W});
    out.mhat = sigmoid(e_dec);
    return out;
  }

  if (static_cast<int>(wm_taps.size()) != urw_.scales)
    throw Error("IncompletePyramid",
                "expected " + std::to_string(urw_.scales) +
                    " watermark feature scales, got " +
                    std::to_string(wm_taps.size()));
  const Tensor img_feats[3] = {a3, a4, a5};
  for (int s = 0; s < urw_.scales; ++s) {
    if (wm_taps[static_cast<size_t>(s)].shape() != img_feats[s].shape())
      throw Error("ShapeMismatch", "watermark tap scale " + std::to_string(s) +
                                       " does not match image features");
    Tensor fi = proj_img_[static_cast<size_t>(s)](img_feats[s]);
    Tensor fw = proj_wm_[static_cast<size_t>(s)](wm_taps[static_cast<size_t>(s)]);
    out.sim_maps.push_back(similarity_map(fi, fw, cfg_.epsilon));
  }
  out.f_sim = fuse_similarity(out.sim_maps, H, W);

  // learnable evidence weight: sigmoid(a_raw) stays in the graph
  Tensor alpha = sigmoid(a_raw_);
  Tensor one_minus = sub(Tensor::constant({1}, 1.0), alpha);
  Tensor combined = add(mul_rows(reshape(e_dec, {1, H * W}), alpha),
                        mul_rows(reshape(out.f_sim, {1, H * W}), one_minus));
  out.mhat = sigmoid(reshape(combined, {1, H, W}));
  return out;
}

Scalar Localizer::alpha() const {
  NoGradGuard ng;
  return 0.5 * std::tanh(0.5 * a_raw_.value()[0]) + 0.5;
}

ManipulationMask Localizer::localize(const Image& img,
                                     const std::vector<Tensor>& wm_features) const {
  NoGradGuard ng;
  LocalizerOut out = forward(image_to_tensor(img), wm_features);
  return tensor_to_mask(out.mhat, false);
}

}  // namespace provmark
