#include "provmark/losses.hpp"

#include <cmath>

namespace provmark {

namespace {

Tensor perceptual_l1(const Tensor& a, const Tensor& b,
                     const PerceptualExtractor& phi) {
  std::vector<Tensor> fa = phi.features(a), fb = phi.features(b);
  Tensor acc = l1_mean(fa[0], fb[0]);
  for (size_t i = 1; i < fa.size(); ++i) acc = add(acc, l1_mean(fa[i], fb[i]));
  return acc;
}

}  // namespace

Tensor embed_loss(const Tensor& i_wm, const Tensor& i_ori,
                  const PerceptualExtractor& phi) {
  if (i_wm.shape() != i_ori.shape())
    throw Error("ShapeMismatch", "embed_loss image shapes differ");
  return add(mse_mean(i_wm, i_ori), perceptual_l1(i_wm, i_ori, phi));
}

Tensor decode_loss(const Tensor& logits, const Tensor& code_targets,
                   const Tensor& z_hat, const Tensor& z) {
  if (logits.shape() != code_targets.shape())
    throw Error("ShapeMismatch", "decode_loss code shapes differ");
  if (z_hat.shape() != z.shape())
    throw Error("ShapeMismatch", "decode_loss latent shapes differ");
  return add(bce_with_logits_mean(logits, code_targets), mse_mean(z_hat, z));
}

Tensor dice_loss(const Tensor& mhat, const Tensor& mstar, Scalar eps) {
  if (mhat.shape() != mstar.shape())
    throw Error("ShapeMismatch", "dice_loss mask shapes differ");
  if (!(eps > 0)) throw Error("BadConfig", "dice eps must be positive");
  Tensor inter = sum_all(mul(mhat, mstar));
  Tensor num = add_scalar(mul_scalar(inter, 2.0), eps);
  Tensor den = add_scalar(add(sum_all(mhat), sum_all(mstar)), eps);
  return sub(Tensor::constant({1}, 1.0), div_elem(num, den));
}

Tensor rec_loss(const Tensor& i_hat, const Tensor& i_ori,
                const PerceptualExtractor& phi) {
  if (i_hat.shape() != i_ori.shape())
    throw Error("ShapeMismatch", "rec_loss image shapes differ");
  return add(l1_mean(i_hat, i_ori), perceptual_l1(i_hat, i_ori, phi));
}

Tensor total_loss(const Tensor& l_embed, const Tensor& l_decode,
                  const Tensor& l_loc, const Tensor& l_rec,
                  const LossWeights& w) {
  for (const Tensor* p : {&l_embed, &l_decode, &l_loc, &l_rec})
    if (!std::isfinite(p->value()[0]))
      throw Error("NonFinitePart", "loss term is not finite");
  Tensor total = add(l_embed, mul_scalar(l_decode, w.lambda1));
  total = add(total, mul_scalar(l_loc, w.lambda2));
  return add(total, mul_scalar(l_rec, w.lambda3));
}

}  // namespace provmark
