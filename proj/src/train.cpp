#include "provmark/train.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "provmark/attack_sim.hpp"
#include "provmark/losses.hpp"

namespace provmark {

namespace {

Tensor code_to_targets(const OwnershipCode& code) {
  ArrayX t(code.bits.size());
  for (size_t i = 0; i < code.bits.size(); ++i) t[i] = code.bits[i] ? 1.0 : 0.0;
  return Tensor::from_array({(int)code.bits.size()}, t);
}

// per-sample stage selection inside the configured arm: attacks fire with
// these odds so one arm still shows the localizer clean frames, splice-only
// frames, and fully regenerated frames
AttackConfig sample_genuine_config(const AttackConfig& arm, Rng& rng) {
  AttackConfig c = arm;
  if (c.enable_latent_mixing) c.enable_latent_mixing = rng.bernoulli(0.5);
  if (c.enable_blending) c.enable_blending = rng.bernoulli(0.75);
  return c;
}

struct SampleLoss {
  Scalar embed = 0, decode = 0, loc = 0, rec = 0, total = 0;
};

}  // namespace

std::string train_log_line(const TrainLogEntry& e) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"step\":" << e.step << ",\"embed\":" << e.l_embed
     << ",\"decode\":" << e.l_decode << ",\"loc\":" << e.l_loc
     << ",\"rec\":" << e.l_rec << ",\"total\":" << e.total
     << ",\"lr\":" << e.lr << "}";
  return os.str();
}

TrainResult train_joint(Pipeline& p, const std::vector<Image>& corpus,
                        std::ostream* log_stream,
                        const std::function<void(int epoch)>& checkpoint_cb) {
  const TrainConfig& tc = p.cfg.train;
  if ((int)corpus.size() < 100)
    throw Error("CorpusTooSmall", "joint training wants at least 100 images");
  for (const Image& im : corpus)
    if (im.height != p.cfg.resolution || im.width != p.cfg.resolution)
      throw Error("BadShape", "corpus image does not match the configured "
                              "resolution");

  PerceptualExtractor phi =
      PerceptualExtractor::random_pyramid(Rng(p.cfg.seed).split(77).next_u64());

  std::vector<Tensor> trainable;
  for (const ParamStore* ps :
       {&p.embedder.params(), &p.extractor.params(), &p.localizer.params(),
        &p.recovery.params()})
    for (Tensor t : ps->tensors()) trainable.push_back(t);
  Adam opt(trainable, tc.lr);

  Rng root(Rng(p.cfg.seed).split(101).next_u64());
  int n = (int)corpus.size();
  int steps_per_epoch =
      tc.steps_per_epoch > 0 ? tc.steps_per_epoch : std::max(1, n / tc.batch);

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    bool warmup = epoch < tc.mask_warmup_epochs;
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      Rng step_rng = root.split(step);
      opt.zero_grad();
      SampleLoss acc;
      for (int b = 0; b < tc.batch; ++b) {
        Rng rng = step_rng.split(b);

        int idx = rng.uniform_int(0, n - 1);
        int src = rng.uniform_int(0, n - 1);
        if (src == idx) src = (src + 1) % n;
        const Image& original = corpus[idx];
        Tensor img_t = image_to_tensor(original);
        Tensor src_t = image_to_tensor(corpus[src]);

        OwnershipCode code = random_code(p.cfg.urw.n_bits, rng);
        Tensor code_pm1 = UrwEmbedder::bits_to_pm1(code);
        Tensor z;
        {
          NoGradGuard ng;
          int er = p.cfg.face.encode_resolution();
          z = p.face.encode_mu(resize_bilinear(img_t, er, er));
          z = Tensor::from_array(z.shape(), z.value());
        }

        Tensor protected_t = p.embedder.embed_t(img_t, code_pm1, z);

        // adversary: genuine simulator attack, or a hard-paste composite.
        // during warm-up epochs the channel stays undegraded so the
        // embedder/extractor pair can co-adapt before quantization and
        // noise start erasing the nascent residual in the forward pass.
        Tensor edited, gt_mask;
        bool composite =
            tc.supervision == "mixed" ? rng.bernoulli(0.5) : false;
        if (composite) {
          ManipulationMask m = generate_blend_mask(
              original.height, original.width, rng);
          Tensor m_t = Tensor::from_array({1, m.height, m.width}, m.data);
          Tensor keep =
              sub(Tensor::constant({1, m.height, m.width}, 1.0), m_t);
          edited = add(mul_bcast_channel(protected_t, keep),
                       mul_bcast_channel(src_t, m_t));
          if (!warmup && p.cfg.attack.enable_degradations)
            edited = degrade(edited, p.cfg.attack.degrade, rng, nullptr);
          gt_mask = m_t;
        } else {
          AttackConfig sample_cfg = p.cfg.attack;
          if (warmup || rng.bernoulli(tc.clean_fraction)) {
            sample_cfg.enable_latent_mixing = false;
            sample_cfg.enable_blending = false;
            sample_cfg.enable_degradations = false;
          } else {
            sample_cfg = sample_genuine_config(sample_cfg, rng);
          }
          AttackTensors at =
              attack_pipeline(protected_t, src_t, sample_cfg, &p.face, rng);
          edited = at.edited;
          gt_mask = at.gt_mask;
        }

        ExtractorOut ex = p.extractor.forward(edited);
        LocalizerOut loc = p.localizer.forward(edited, ex.taps);

        Tensor rec_mask = warmup ? gt_mask : stop_gradient(loc.mhat);
        Tensor keep = sub(Tensor::constant(rec_mask.shape(), 1.0), rec_mask);
        Tensor edited_masked = mul_bcast_channel(edited, keep);
        Tensor proxy = p.face.decode(ex.latent, original.height);
        Tensor recovered = p.recovery.forward(edited_masked, proxy, ex.latent,
                                              rec_mask, false);

        Tensor l_embed = embed_loss(protected_t, img_t, phi);
        Tensor l_decode =
            decode_loss(ex.code_logits, code_to_targets(code), ex.latent, z);
        Tensor l_loc = dice_loss(loc.mhat, gt_mask, tc.dice_eps);
        Tensor l_rec = rec_loss(recovered, img_t, phi);
        Tensor total = total_loss(l_embed, l_decode, l_loc, l_rec, tc.weights);

        Scalar tv = total.value()[0];
        if (!std::isfinite(tv))
          throw Error("Diverged", "non-finite training loss");
        acc.embed += l_embed.value()[0];
        acc.decode += l_decode.value()[0];
        acc.loc += l_loc.value()[0];
        acc.rec += l_rec.value()[0];
        acc.total += tv;

        mul_scalar(total, 1.0 / tc.batch).backward();
      }
      opt.step();

      TrainLogEntry e;
      e.step = step;
      e.l_embed = acc.embed / tc.batch;
      e.l_decode = acc.decode / tc.batch;
      e.l_loc = acc.loc / tc.batch;
      e.l_rec = acc.rec / tc.batch;
      e.total = acc.total / tc.batch;
      e.lr = opt.lr();
      result.log.push_back(e);
      if (log_stream) (*log_stream) << train_log_line(e) << "\n";
    }
    if (checkpoint_cb) checkpoint_cb(epoch);
  }
  result.steps = step;
  return result;
}

}  // namespace provmark
