// Acceptance gate: one [PASS]/[FAIL] line per criterion, exit code = number
// of failures. Criteria 5-8 evaluate trained pipelines; checkpoints are
// cached under PROVMARK_ACCEPT_CACHE (default "accept_cache") and trained on
// demand when missing, so a cold run is slow but self-sufficient.
// PROVMARK_ACCEPT_ONLY="1,4,9" restricts the run while developing.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "provmark/attack_sim.hpp"
#include "provmark/corpus.hpp"
#include "provmark/evaluate.hpp"
#include "provmark/face_codec.hpp"
#include "provmark/localizer.hpp"
#include "provmark/losses.hpp"
#include "provmark/metrics.hpp"
#include "provmark/pipeline.hpp"
#include "provmark/poisson.hpp"
#include "provmark/recovery.hpp"
#include "provmark/train.hpp"

namespace fs = std::filesystem;
using namespace provmark;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back(what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
  std::string detail() const {
    std::string s;
    for (size_t i = 0; i < notes.size(); ++i)
      s += (i ? "; " : "") + notes[i];
    return s;
  }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. gradient-domain blending vs a dense direct solve of the same equations

Image random_image(int c, int h, int w, Rng& rng) {
  Image img = Image::zeros(c, h, w);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform();
  return img;
}

Eigen::VectorXd dense_blend_solution(const Image& src, const Image& dst,
                                     int channel, const ManipulationMask& mask) {
  const int h = dst.height, w = dst.width;
  std::vector<int> cells;
  for (int i = 0; i < h * w; ++i)
    if (mask.data[i] >= 0.5) cells.push_back(i);
  const int n = static_cast<int>(cells.size());
  auto find = [&](int y, int x) {
    for (int k = 0; k < n; ++k)
      if (cells[static_cast<size_t>(k)] == y * w + x) return k;
    return -1;
  };
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
  for (int k = 0; k < n; ++k) {
    const int y = cells[static_cast<size_t>(k)] / w;
    const int x = cells[static_cast<size_t>(k)] % w;
    A(k, k) = 4.0;
    for (int d = 0; d < 4; ++d) {
      const int yy = y + dy[d], xx = x + dx[d];
      const int j = find(yy, xx);
      if (j >= 0)
        A(k, j) = -1.0;
      else
        b[k] += dst.at(channel, yy, xx);
      b[k] += src.at(channel, y, x) - src.at(channel, yy, xx);
    }
  }
  return A.fullPivLu().solve(b);
}

Outcome criterion_blend_oracle() {
  Outcome out;
  auto t0 = Clock::now();
  Rng rng(20071);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Image src = random_image(1, 8, 8, rng);
    Image dst = random_image(1, 8, 8, rng);
    ManipulationMask m = ManipulationMask::zeros(8, 8);
    const int y0 = rng.uniform_int(1, 4), x0 = rng.uniform_int(1, 4);
    for (int y = y0; y < y0 + 3; ++y)
      for (int x = x0; x < x0 + 3; ++x) m.data[y * 8 + x] = 1.0;
    Eigen::VectorXd want = dense_blend_solution(src, dst, 0, m);
    Image got = poisson_blend(src, dst, m);
    int k = 0;
    for (int i = 0; i < 64; ++i) {
      if (m.data[i] < 0.5) continue;
      const double w = std::clamp(want[k++], 0.0, 1.0);
      worst = std::max(worst, std::abs(got.data[i] - w));
    }
  }
  double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.expect(worst <= 1e-6, "max |solver - dense| = " + fmt(worst, 9));
  out.expect(secs < 5.0, "runtime " + fmt(secs, 2) + "s >= 5s");
  out.note("50 instances, max err " + fmt(worst, 9) + ", " + fmt(secs, 2) + "s");
  return out;
}

// ---------------------------------------------------------------------------
// 2. similarity / gated attention / latent mixing: worked examples + properties

Tensor vec_tensor(const std::vector<double>& v) {
  ArrayX a(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) a[static_cast<Eigen::Index>(i)] = v[i];
  return Tensor::from_array({(int)v.size(), 1, 1}, a);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  NoGradGuard ng;
  return similarity_map(vec_tensor(a), vec_tensor(b), 1e-8).value()[0];
}

Outcome criterion_formula_examples() {
  Outcome out;
  NoGradGuard ng;

  // cosine similarity worked examples
  out.expect(std::abs(cosine({1, 0}, {1, 1}) - 1.0 / std::sqrt(2.0)) <= 1e-6,
             "cos((1,0),(1,1)) != 1/sqrt(2)");
  out.expect(std::abs(cosine({0.3, -0.7, 2.0}, {0.3, -0.7, 2.0}) - 1.0) <= 1e-6,
             "cos(v,v) != 1");
  out.expect(std::abs(cosine({0.3, -0.7, 2.0}, {-0.3, 0.7, -2.0}) + 1.0) <= 1e-6,
             "cos(v,-v) != -1");
  out.expect(std::abs(cosine({0, 0, 0}, {1, 2, 3})) <= 1e-6, "cos(0,v) != 0");

  // cosine properties over 1,000 random vector pairs
  Rng rng(20072);
  int bad_sym = 0, bad_scale = 0, bad_range = 0;
  for (int i = 0; i < 1000; ++i) {
    const int d = rng.uniform_int(2, 16);
    std::vector<double> a(d), b(d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double ab = cosine(a, b), ba = cosine(b, a);
    if (std::abs(ab - ba) > 1e-6) ++bad_sym;
    if (std::abs(ab) > 1.0 + 1e-9) ++bad_range;
    const double c = rng.uniform(0.1, 10.0);
    std::vector<double> ac = a;
    for (auto& v : ac) v *= c;
    if (std::abs(cosine(ac, b) - ab) > 1e-6) ++bad_scale;
  }
  out.expect(bad_sym == 0, std::to_string(bad_sym) + " symmetry violations");
  out.expect(bad_scale == 0, std::to_string(bad_scale) + " scale violations");
  out.expect(bad_range == 0, std::to_string(bad_range) + " range violations");

  // gated cross-attention: zero gate is identity; one key gives a closed form
  const int D = 8, T = 4;
  ParamStore ps(20073);
  MultiHeadAttention mha(ps, "mha", D, 2);
  LayerNorm ln_q(ps, "lnq", D), ln_kv(ps, "lnkv", D);
  Tensor t_x = Tensor::zeros({T, D}), t_wm = Tensor::zeros({1, D});
  Rng grng(20074);
  for (Eigen::Index i = 0; i < t_x.value().size(); ++i)
    t_x.mutable_value()[i] = grng.normal();
  for (Eigen::Index i = 0; i < t_wm.value().size(); ++i)
    t_wm.mutable_value()[i] = grng.normal();

  Tensor zero_gate = Tensor::zeros({T, 1});
  Tensor same = gated_cross_attention(mha, ln_q, ln_kv, t_x, t_wm, zero_gate);
  out.expect((same.value() - t_x.value()).abs().maxCoeff() <= 1e-12,
             "zero gate does not pass tokens through");

  // with a single key, softmax weights are 1 for every query: the attended
  // row is value(ln(t_wm)) through the output projection, independent of t_x
  Tensor half_gate = Tensor::constant({T, 1}, 0.5);
  Tensor got = gated_cross_attention(mha, ln_q, ln_kv, t_x, t_wm, half_gate);
  Tensor attended = mha(ln_q(t_x), ln_kv(t_wm));
  double worst_closed = 0.0, worst_rows = 0.0;
  for (int r = 0; r < T; ++r)
    for (int c = 0; c < D; ++c) {
      const double want = t_x.value()[r * D + c] + 0.5 * attended.value()[r * D + c];
      worst_closed = std::max(worst_closed,
                              std::abs(got.value()[r * D + c] - want));
      worst_rows = std::max(worst_rows, std::abs(attended.value()[r * D + c] -
                                                 attended.value()[c]));
    }
  out.expect(worst_closed <= 1e-6, "gated output != t_x + g*attended");
  out.expect(worst_rows <= 1e-6, "single-key attention varies across queries");

  // token gates from a mask: top-left quadrant of an 8x8 mask
  Tensor mask = Tensor::zeros({1, 8, 8});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) mask.mutable_value()[y * 8 + x] = 1.0;
  Tensor g4 = mask_to_gate(mask, 4, false);
  out.expect(std::abs(g4.value()[0] - 1.0) <= 1e-6 &&
                 std::abs(g4.value()[1]) <= 1e-6 &&
                 std::abs(g4.value()[2]) <= 1e-6 &&
                 std::abs(g4.value()[3]) <= 1e-6,
             "4x4-patch gates != (1,0,0,0)");
  Tensor g8 = mask_to_gate(mask, 8, false);
  out.expect(std::abs(g8.value()[0] - 0.25) <= 1e-6, "8x8-patch gate != 0.25");

  // latent mixing worked example and projection property
  LatentCode z_pro{2, 1, 1, ArrayX(2)}, z_src{2, 1, 1, ArrayX(2)};
  z_pro.data << 5, 7;
  z_src.data << 2, 3;
  LatentCode mixed = mix_latents(z_pro, z_src, ChannelMask{{1, 0}});
  out.expect(mixed.data[0] == 2.0 && mixed.data[1] == 7.0,
             "channel-mask example != ([2],[7])");

  Rng mrng(20075);
  int bad_proj = 0, bad_select = 0;
  for (int i = 0; i < 100; ++i) {
    const int c = mrng.uniform_int(2, 8);
    LatentCode a{c, 2, 2, ArrayX(c * 4)}, b{c, 2, 2, ArrayX(c * 4)};
    for (Eigen::Index k = 0; k < a.data.size(); ++k) {
      a.data[k] = mrng.normal();
      b.data[k] = mrng.normal();
    }
    ChannelMask mm;
    mm.values.resize(static_cast<size_t>(c));
    for (auto& v : mm.values) v = mrng.bernoulli(0.5) ? 1 : 0;
    LatentCode self_mix = mix_latents(a, a, mm);
    if ((self_mix.data - a.data).abs().maxCoeff() > 0) ++bad_proj;
    LatentCode sel = mix_latents(a, b, mm);
    for (int ch = 0; ch < c; ++ch) {
      const auto& want = mm.values[static_cast<size_t>(ch)] ? b : a;
      for (int k = 0; k < 4; ++k)
        if (sel.data[ch * 4 + k] != want.data[ch * 4 + k]) ++bad_select;
    }
  }
  out.expect(bad_proj == 0, "mix(z,z,m) != z");
  out.expect(bad_select == 0, "mixed channels not selected per mask bit");

  out.note("examples exact, 1000-vector properties clean");
  return out;
}

// ---------------------------------------------------------------------------
// 3. finite-difference gradient checks for each loss term + gated attention

double max_rel_fd_error(Tensor loss_out, Tensor leaf,
                        const std::function<Tensor()>& recompute,
                        const std::vector<Eigen::Index>& idxs) {
  leaf.zero_grad();
  loss_out.backward();
  const ArrayX grad = leaf.grad();
  double worst = 0.0;
  const double h = 1e-5;
  for (Eigen::Index i : idxs) {
    const double keep = leaf.value()[i];
    leaf.mutable_value()[i] = keep + h;
    const double up = recompute().value()[0];
    leaf.mutable_value()[i] = keep - h;
    const double dn = recompute().value()[0];
    leaf.mutable_value()[i] = keep;
    const double fd = (up - dn) / (2 * h);
    const double rel = std::abs(fd - grad[i]) /
                       std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

Tensor random_leaf(const std::vector<int>& shape, Rng& rng, double lo = 0.05,
                   double hi = 0.95) {
  Tensor t = Tensor::zeros(shape);
  for (Eigen::Index i = 0; i < t.value().size(); ++i)
    t.mutable_value()[i] = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

Outcome criterion_gradient_checks() {
  Outcome out;
  auto t0 = Clock::now();
  Rng rng(20076);
  const std::vector<Eigen::Index> idxs{0, 7, 31, 63, 100, 150};
  double worst_all = 0.0;
  auto record = [&](const char* name, double worst) {
    worst_all = std::max(worst_all, worst);
    out.expect(worst <= 1e-3,
               std::string(name) + " rel err " + fmt(worst, 6));
  };

  PerceptualExtractor phi = PerceptualExtractor::random_pyramid(20077);

  {
    Tensor pred = random_leaf({3, 8, 8}, rng);
    Tensor target = random_leaf({3, 8, 8}, rng);
    target.set_requires_grad(false);
    auto f = [&] { return embed_loss(pred, target, phi); };
    record("embedding loss", max_rel_fd_error(f(), pred, f, idxs));
  }
  {
    Tensor logits = Tensor::zeros({64});
    Tensor targets = Tensor::zeros({64});
    for (int i = 0; i < 64; ++i) {
      logits.mutable_value()[i] = rng.uniform(-2.0, 2.0);
      targets.mutable_value()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    logits.set_requires_grad(true);
    Tensor z_hat = random_leaf({4, 2, 2}, rng, -1.0, 1.0);
    Tensor z = random_leaf({4, 2, 2}, rng, -1.0, 1.0);
    z.set_requires_grad(false);
    auto f = [&] { return decode_loss(logits, targets, z_hat, z); };
    record("decode loss (logits)",
           max_rel_fd_error(f(), logits, f, {0, 13, 40, 63}));
    record("decode loss (latent)",
           max_rel_fd_error(f(), z_hat, f, {0, 5, 11, 15}));
  }
  {
    Tensor mhat = random_leaf({1, 8, 8}, rng);
    Tensor mstar = Tensor::zeros({1, 8, 8});
    for (int i = 0; i < 64; ++i)
      mstar.mutable_value()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    auto f = [&] { return dice_loss(mhat, mstar, 1.0); };
    record("overlap loss", max_rel_fd_error(f(), mhat, f, {0, 9, 33, 63}));
  }
  {
    Tensor pred = random_leaf({3, 8, 8}, rng);
    Tensor target = Tensor::zeros({3, 8, 8});
    // keep the pointwise L1 away from its kink so the FD stencil is valid
    for (Eigen::Index i = 0; i < target.value().size(); ++i)
      target.mutable_value()[i] =
          pred.value()[i] + (rng.bernoulli(0.5) ? 0.05 : -0.05);
    auto f = [&] { return rec_loss(pred, target, phi); };
    record("recovery loss", max_rel_fd_error(f(), pred, f, idxs));
  }
  {
    const int D = 8, T = 4;
    ParamStore ps(20078);
    MultiHeadAttention mha(ps, "mha", D, 2);
    LayerNorm ln_q(ps, "lnq", D), ln_kv(ps, "lnkv", D);
    Tensor t_x = random_leaf({T, D}, rng, -1.0, 1.0);
    Tensor t_wm = random_leaf({1, D}, rng, -1.0, 1.0);
    Tensor gate = random_leaf({T, 1}, rng, 0.1, 0.9);
    auto f = [&] {
      return mean_all(gated_cross_attention(mha, ln_q, ln_kv, t_x, t_wm, gate));
    };
    record("gated attention (tokens)",
           max_rel_fd_error(f(), t_x, f, {0, 9, 21, 31}));
    record("gated attention (watermark)",
           max_rel_fd_error(f(), t_wm, f, {0, 3, 7}));
    record("gated attention (gate)", max_rel_fd_error(f(), gate, f, {0, 2, 3}));
  }

  double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.expect(secs < 60.0, "runtime " + fmt(secs, 2) + "s >= 60s");
  out.note("worst rel err " + fmt(worst_all, 6) + ", " + fmt(secs, 2) + "s");
  return out;
}

// ---------------------------------------------------------------------------
// 4. AUC rank statistic vs brute-force pair enumeration + worked example

double brute_force_auc(const ManipulationMask& soft,
                       const ManipulationMask& truth) {
  double wins = 0;
  long pairs = 0;
  const Eigen::Index n = soft.data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (truth.data[i] < 0.5) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (truth.data[j] >= 0.5) continue;
      ++pairs;
      if (soft.data[i] > soft.data[j])
        wins += 1.0;
      else if (soft.data[i] == soft.data[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

Outcome criterion_auc_oracle() {
  Outcome out;
  Rng rng(20079);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = rng.uniform_int(2, 1000);
    ManipulationMask soft = ManipulationMask::zeros(1, n);
    ManipulationMask truth = ManipulationMask::zeros(1, n);
    truth.binary = true;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
      // quantized scores force plenty of rank ties
      soft.data[i] = rng.uniform_int(0, 4) / 4.0;
      truth.data[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      ones += truth.data[i] >= 0.5;
    }
    if (ones == 0) truth.data[0] = 1.0;
    if (ones == n) truth.data[0] = 0.0;
    LocalizationScores got = localization_scores(soft, truth);
    if (!got.auc_defined) {
      out.expect(false, "auc undefined on a mixed-class instance");
      continue;
    }
    worst = std::max(worst, std::abs(got.auc - brute_force_auc(soft, truth)));
  }
  out.expect(worst <= 1e-9, "max |rank auc - pair auc| = " + fmt(worst, 12));

  ManipulationMask soft = ManipulationMask::zeros(1, 4);
  ManipulationMask truth = ManipulationMask::zeros(1, 4);
  soft.data << 0.9, 0.4, 0.6, 0.1;
  truth.data << 1, 1, 0, 0;
  LocalizationScores s = localization_scores(soft, truth);
  out.expect(s.f1 == 0.5, "4-pixel F1 != 0.5 exactly");
  out.expect(s.auc_defined && s.auc == 0.75, "4-pixel AUC != 0.75 exactly");
  out.expect(std::abs(s.miou - 1.0 / 3.0) <= 1e-15, "4-pixel mIoU != 1/3");
  out.note("200 instances max err " + fmt(worst, 12) +
           "; worked example exact");
  return out;
}

// ---------------------------------------------------------------------------
// trained arms for criteria 5-8

constexpr int kCmpStepsPerEpoch = 300;  // comparison arms: equal budgets
constexpr int kCmpEpochs = 2;
constexpr int kLongStepsPerEpoch = 1500;  // default arm for absolute targets
constexpr int kLongEpochs = 2;

fs::path cache_dir() {
  if (const char* e = std::getenv("PROVMARK_ACCEPT_CACHE")) return e;
  return "accept_cache";
}

struct ArmSpec {
  std::string name;
  int steps = kCmpStepsPerEpoch;
  int epochs = kCmpEpochs;
  std::function<void(RunConfig&)> tweak = [](RunConfig&) {};
};

RunConfig arm_config(const ArmSpec& spec) {
  RunConfig cfg;  // defaults: seed 1, 64x64, corpus 1000, full attacks
  cfg.train.steps_per_epoch = spec.steps;
  cfg.train.epochs = spec.epochs;
  spec.tweak(cfg);
  cfg.attack = ablation_attack_config(cfg.ablation);
  cfg.validate();
  return cfg;
}

Pipeline load_or_train_arm(const ArmSpec& spec) {
  fs::path ckpt = cache_dir() / (spec.name + ".ckpt");
  if (fs::exists(ckpt)) return Pipeline::load(ckpt.string());

  RunConfig cfg = arm_config(spec);
  std::cerr << "[acceptance] training arm '" << spec.name << "' ("
            << spec.steps * spec.epochs << " steps)...\n";
  std::vector<Image> corpus =
      synth_corpus(cfg.corpus_size, cfg.resolution, cfg.seed);
  Pipeline p(cfg);
  train_face_codec(p.face, corpus, cfg.train.face_epochs, cfg.train.face_batch,
                   cfg.train.face_lr, Rng(cfg.seed).split(7).next_u64(),
                   nullptr);
  train_joint(p, corpus);
  fs::create_directories(cache_dir());
  p.save(ckpt.string(), corpus_hash(corpus));
  return p;
}

// held-out images and a fixed evaluation seed shared by every arm so the
// comparisons below are paired
const EvalReport& arm_report(const ArmSpec& spec) {
  static std::map<std::string, EvalReport> memo;
  auto it = memo.find(spec.name);
  if (it != memo.end()) return it->second;
  Pipeline p = load_or_train_arm(spec);
  std::vector<Image> held = synth_corpus(96, p.cfg.resolution, 424242);
  EvalReport r =
      evaluate(p, held, {"noise", "blend", "blend+mix"}, 32, 31337);
  return memo.emplace(spec.name, std::move(r)).first->second;
}

const EvalRow& find_row(const EvalReport& r, const std::string& name) {
  for (const EvalRow& row : r.rows)
    if (row.attack == name) return row;
  throw Error("BadReport", "missing evaluation row " + name);
}

double suite_bit_acc(const EvalReport& r) {
  return (find_row(r, "noise").bit_acc + find_row(r, "blend").bit_acc +
          find_row(r, "blend+mix").bit_acc) /
         3.0;
}

double tamper_f1(const EvalReport& r) {
  return (find_row(r, "blend").f1 + find_row(r, "blend+mix").f1) / 2.0;
}

const ArmSpec kDefaultLong{"default_long", kLongStepsPerEpoch, kLongEpochs};
const ArmSpec kAugNone{"aug_none", kCmpStepsPerEpoch, kCmpEpochs,
                       [](RunConfig& c) { c.ablation = "none"; }};
const ArmSpec kAugNoise{"aug_noise", kCmpStepsPerEpoch, kCmpEpochs,
                        [](RunConfig& c) { c.ablation = "noise"; }};
const ArmSpec kAugBlend{"aug_blend", kCmpStepsPerEpoch, kCmpEpochs,
                        [](RunConfig& c) { c.ablation = "blend"; }};
const ArmSpec kAugFull{"aug_full", kCmpStepsPerEpoch, kCmpEpochs};
const ArmSpec kSegOnly{"seg_only", kCmpStepsPerEpoch, kCmpEpochs,
                       [](RunConfig& c) {
                         c.localizer.use_similarity_branch = false;
                       }};
const ArmSpec kGenuineOnly{"genuine_pairs", kCmpStepsPerEpoch, kCmpEpochs,
                           [](RunConfig& c) {
                             c.train.supervision = "genuine";
                           }};
const ArmSpec kLatent576{"latent576", kCmpStepsPerEpoch, kCmpEpochs,
                         [](RunConfig& c) { c.face.latent_dim = 576; }};
const ArmSpec kLatent1024{"latent1024", kCmpStepsPerEpoch, kCmpEpochs,
                          [](RunConfig& c) { c.face.latent_dim = 1024; }};

// ---------------------------------------------------------------------------
// 5. absolute desk-scale quality targets on the default configuration

Outcome criterion_desk_targets() {
  Outcome out;
  const EvalReport& r = arm_report(kDefaultLong);
  const EvalRow& clean = find_row(r, "clean");
  const EvalRow& blend = find_row(r, "blend");
  out.expect(clean.bit_acc >= 99.0,
             "clean bit accuracy " + fmt(clean.bit_acc, 2) + " < 99");
  out.expect(clean.psnr_embed >= 38.0,
             "embedding psnr " + fmt(clean.psnr_embed, 2) + " < 38");
  out.expect(blend.f1 >= 0.80,
             "blend localization F1 " + fmt(blend.f1, 3) + " < 0.80");
  out.expect(blend.psnr_rec >= 24.0,
             "blend recovery psnr " + fmt(blend.psnr_rec, 2) + " < 24");
  out.note("bit_acc " + fmt(clean.bit_acc, 2) + ", psnr_emb " +
           fmt(clean.psnr_embed, 2) + ", f1 " + fmt(blend.f1, 3) +
           ", psnr_rec " + fmt(blend.psnr_rec, 2));
  return out;
}

// ---------------------------------------------------------------------------
// 6. attack-augmentation ladder orders decode robustness

Outcome criterion_augmentation_ladder() {
  Outcome out;
  const double none = suite_bit_acc(arm_report(kAugNone));
  const double noise = suite_bit_acc(arm_report(kAugNoise));
  const double blend = suite_bit_acc(arm_report(kAugBlend));
  const double full = suite_bit_acc(arm_report(kAugFull));
  out.expect(none < noise, "none " + fmt(none, 2) + " !< noise " + fmt(noise, 2));
  out.expect(noise < blend,
             "noise " + fmt(noise, 2) + " !< blend " + fmt(blend, 2));
  out.expect(full >= blend - 1.0,
             "full " + fmt(full, 2) + " < blend - 1 (" + fmt(blend - 1.0, 2) + ")");
  out.note("suite bit acc: " + fmt(none, 2) + " / " + fmt(noise, 2) + " / " +
           fmt(blend, 2) + " / " + fmt(full, 2));
  return out;
}

// ---------------------------------------------------------------------------
// 7. similarity branch and mixed supervision improve localization

Outcome criterion_localizer_ablations() {
  Outcome out;
  const double full = tamper_f1(arm_report(kAugFull));
  const double seg = tamper_f1(arm_report(kSegOnly));
  const double genuine = tamper_f1(arm_report(kGenuineOnly));
  out.expect(full >= seg + 0.01,
             "similarity F1 " + fmt(full, 3) + " < seg-only " + fmt(seg, 3) +
                 " + 0.01");
  out.expect(full >= genuine + 0.01,
             "mixed F1 " + fmt(full, 3) + " < genuine-only " + fmt(genuine, 3) +
                 " + 0.01");
  out.note("F1 full " + fmt(full, 3) + ", seg-only " + fmt(seg, 3) +
           ", genuine-pairs " + fmt(genuine, 3));
  return out;
}

// ---------------------------------------------------------------------------
// 8. larger face latents improve recovery without hurting decode

Outcome criterion_latent_capacity() {
  Outcome out;
  const EvalReport& r256 = arm_report(kAugFull);
  const EvalReport& r576 = arm_report(kLatent576);
  const EvalReport& r1024 = arm_report(kLatent1024);
  const double p256 = find_row(r256, "blend").psnr_rec;
  const double p576 = find_row(r576, "blend").psnr_rec;
  const double p1024 = find_row(r1024, "blend").psnr_rec;
  out.expect(p256 <= p576 && p576 <= p1024,
             "recovery psnr not non-decreasing: " + fmt(p256, 2) + " / " +
                 fmt(p576, 2) + " / " + fmt(p1024, 2));
  const double b256 = suite_bit_acc(r256), b576 = suite_bit_acc(r576),
               b1024 = suite_bit_acc(r1024);
  const double spread = std::max({b256, b576, b1024}) -
                        std::min({b256, b576, b1024});
  out.expect(spread <= 3.0, "bit acc spread " + fmt(spread, 2) + " > 3");
  out.note("psnr_rec " + fmt(p256, 2) + " / " + fmt(p576, 2) + " / " +
           fmt(p1024, 2) + "; bit acc spread " + fmt(spread, 2));
  return out;
}

// ---------------------------------------------------------------------------
// 9. seed determinism of training logs and evaluation reports

Outcome criterion_determinism() {
  Outcome out;
  RunConfig cfg;
  cfg.seed = 5;
  cfg.corpus_size = 120;
  cfg.train.epochs = 1;
  cfg.train.steps_per_epoch = 10;
  cfg.attack = ablation_attack_config(cfg.ablation);
  std::vector<Image> corpus =
      synth_corpus(cfg.corpus_size, cfg.resolution, cfg.seed);

  auto run_once = [&] {
    Pipeline p(cfg);
    std::ostringstream log;
    train_joint(p, corpus, &log);
    return log.str();
  };
  const std::string log_a = run_once(), log_b = run_once();
  out.expect(!log_a.empty() && log_a == log_b,
             "10-step training logs differ between identical runs");

  auto eval_once = [&] {
    Pipeline p(cfg);
    std::vector<Image> held(corpus.begin(), corpus.begin() + 6);
    return report_json_lines(
        evaluate(p, held, {"noise", "blend", "blend+mix"}, 6, 99));
  };
  const std::string rep_a = eval_once(), rep_b = eval_once();
  out.expect(!rep_a.empty() && rep_a == rep_b,
             "evaluation reports differ between identical runs");
  out.note("training log and report bitwise stable");
  return out;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* title;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "gradient-domain blend solver matches a dense direct solve",
       criterion_blend_oracle},
      {2, "similarity, gating and mixing examples and properties hold",
       criterion_formula_examples},
      {3, "loss and attention gradients pass finite-difference checks",
       criterion_gradient_checks},
      {4, "localization AUC matches brute-force pair enumeration",
       criterion_auc_oracle},
      {5, "trained default pipeline meets desk-scale quality targets",
       criterion_desk_targets},
      {6, "attack-augmentation ladder orders decode robustness",
       criterion_augmentation_ladder},
      {7, "similarity branch and mixed supervision improve localization",
       criterion_localizer_ablations},
      {8, "larger face latents improve recovery at stable decode",
       criterion_latent_capacity},
      {9, "training and evaluation are seed-deterministic",
       criterion_determinism},
  };

  std::string only;
  if (const char* e = std::getenv("PROVMARK_ACCEPT_ONLY")) only = e;
  auto selected = [&](int id) {
    if (only.empty()) return true;
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty() && std::stoi(tok) == id) return true;
    return false;
  };

  int failures = 0;
  for (const Entry& e : entries) {
    if (!selected(e.id)) continue;
    Outcome o;
    try {
      o = e.fn();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.notes = {std::string("exception: ") + ex.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << e.id << ". " << e.title
              << " — " << o.detail() << "\n";
    std::cout.flush();
  }
  return failures;
}
