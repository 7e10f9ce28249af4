#include "provmark/face_codec.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace provmark {

FaceCodec::FaceCodec(const FaceCodecConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      ps_(seed),
      e1_(ps_, "enc1", 3, cfg.base_channels, 3, 1, 1),
      e2_(ps_, "enc2", cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      e3_(ps_, "enc3", 2 * cfg.base_channels, 2 * cfg.base_channels, 3, 1, 1),
      e4_(ps_, "enc4", 2 * cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      ehead_(ps_, "enc_head", 2 * cfg.base_channels, 2 * cfg.latent_channels, 3,
             1, 1),
      d1_(ps_, "dec1", cfg.latent_channels, 2 * cfg.base_channels, 3, 1, 1),
      d2_(ps_, "dec2", 2 * cfg.base_channels, 2 * cfg.base_channels, 3, 1, 1),
      d3_(ps_, "dec3", 2 * cfg.base_channels, cfg.base_channels, 3, 1, 1),
      d4_(ps_, "dec4", cfg.base_channels, cfg.base_channels, 3, 1, 1),
      d5_(ps_, "dec5", cfg.base_channels, 3, 3, 1, 1) {}

std::pair<Tensor, Tensor> FaceCodec::encode_dist(const Tensor& img) const {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw Error("ShapeMismatch", "encoder expects a (3,H,W) tensor");
  const int R = cfg_.encode_resolution();
  Tensor x = resize_bilinear(img, R, R);
  x = relu(e1_(x));
  x = relu(e2_(x));
  x = relu(e3_(x));
  x = relu(e4_(x));
  Tensor stats = ehead_(x);  // (2*C, h, w)
  const int C = cfg_.latent_channels, hw = cfg_.latent_hw();
  Tensor mu = slice_dim0(stats, 0, C);
  Tensor logvar = clamp(slice_dim0(stats, C, C), -8.0, 8.0);
  if (mu.dim(1) != hw || mu.dim(2) != hw)
    throw Error("ShapeMismatch", "bottleneck does not match configured latent");
  return {mu, logvar};
}

Tensor FaceCodec::encode_mu(const Tensor& img) const {
  return encode_dist(img).first;
}

Tensor FaceCodec::decode(const Tensor& z, int out_resolution) const {
  if (z.ndim() != 3 || z.dim(0) != cfg_.latent_channels ||
      z.dim(1) != cfg_.latent_hw() || z.dim(2) != cfg_.latent_hw())
    throw Error("ShapeMismatch", "latent shape does not match codec config");
  Tensor x = relu(d1_(z));
  x = relu(d2_(upsample_nearest2(x)));
  x = relu(d3_(upsample_nearest2(x)));
  if (x.dim(1) != out_resolution)
    x = resize_bilinear(x, out_resolution, out_resolution);
  x = relu(d4_(x));
  return sigmoid(d5_(x));
}

LatentCode FaceCodec::encode_face(const Image& img) const {
  NoGradGuard ng;
  int er = cfg_.encode_resolution();
  return tensor_to_latent(
      encode_mu(resize_bilinear(image_to_tensor(img), er, er)));
}

Image FaceCodec::decode_face(const LatentCode& z, int out_resolution) const {
  NoGradGuard ng;
  return tensor_to_image(decode(latent_to_tensor(z), out_resolution));
}

namespace {

Scalar validation_recon(const FaceCodec& codec,
                        const std::vector<const Image*>& val) {
  NoGradGuard ng;
  Scalar total = 0;
  for (const Image* im : val) {
    Tensor x = image_to_tensor(*im);
    Tensor rec = codec.decode(codec.encode_mu(x), im->height);
    total += (rec.value() - x.value()).square().mean();
  }
  return total / static_cast<Scalar>(val.size());
}

}  // namespace

FaceCodecTrainStats train_face_codec(FaceCodec& codec,
                                     const std::vector<Image>& corpus,
                                     int epochs, int batch, Scalar lr,
                                     uint64_t seed, std::ostream* log) {
  if (corpus.empty()) throw Error("EmptyCorpus", "face codec corpus is empty");

  // hold out ~10% (at least 1) for the validation curve
  const int n_val = std::max(1, static_cast<int>(corpus.size()) / 10);
  std::vector<const Image*> val, tr;
  for (size_t i = 0; i < corpus.size(); ++i)
    (static_cast<int>(i) < n_val ? val : tr).push_back(&corpus[i]);
  if (tr.empty()) tr = val;

  Rng root(seed);
  Adam opt(codec.params().tensors(), lr);
  const Scalar klw = codec.config().kl_weight;

  FaceCodecTrainStats stats;
  stats.initial_recon = validation_recon(codec, val);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng erng = root.split(static_cast<uint64_t>(epoch));
    std::vector<int> order = erng.permutation(static_cast<int>(tr.size()));
    Scalar epoch_loss = 0;
    int steps = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(batch)) {
      opt.zero_grad();
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(batch));
      Scalar batch_loss = 0;
      for (size_t k = start; k < stop; ++k) {
        const Image& im = *tr[static_cast<size_t>(order[k])];
        Tensor x = image_to_tensor(im);
        auto [mu, logvar] = codec.encode_dist(x);
        // reparameterized sample
        ArrayX noise(mu.numel());
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = erng.normal();
        Tensor eps = Tensor::from_array(mu.shape(), std::move(noise));
        Tensor z = add(mu, mul(exp_op(mul_scalar(logvar, 0.5)), eps));
        Tensor rec = codec.decode(z, im.height);
        Tensor recon = mse_mean(rec, x);
        // KL(q||N(0,1)) per element: 0.5*(mu^2 + e^logvar - 1 - logvar)
        Tensor kl = mul_scalar(
            mean_all(sub(add(square(mu), exp_op(logvar)),
                         add_scalar(logvar, 1.0))),
            0.5);
        Tensor loss = add(recon, mul_scalar(kl, klw));
        const Scalar lv = loss.value()[0];
        if (!std::isfinite(lv))
          throw Error("Diverged", "face codec loss is not finite");
        batch_loss += lv;
        // scale so batch gradients average
        mul_scalar(loss, 1.0 / static_cast<Scalar>(stop - start)).backward();
      }
      opt.step();
      epoch_loss += batch_loss / static_cast<Scalar>(stop - start);
      ++steps;
    }
    const Scalar vrec = validation_recon(codec, val);
    stats.epoch_recon.push_back(vrec);
    if (log)
      (*log) << "codec epoch " << epoch << " train_loss "
             << epoch_loss / std::max(1, steps) << " val_recon " << vrec
             << "\n";
  }
  stats.final_recon = stats.epoch_recon.empty() ? stats.initial_recon
                                                : stats.epoch_recon.back();
  return stats;
}

}  // namespace provmark
