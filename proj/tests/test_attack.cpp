#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <queue>
#include <vector>

#include "provmark/attack_sim.hpp"
#include "provmark/config.hpp"
#include "provmark/corpus.hpp"
#include "provmark/face_codec.hpp"
#include "provmark/metrics.hpp"
#include "provmark/rng.hpp"

using namespace provmark;

namespace {

// independent 4-connectivity component counter (BFS), used as the oracle for
// the mask generator's single-region guarantee
int component_count(const ManipulationMask& m) {
  const int h = m.height, w = m.width;
  std::vector<uint8_t> seen(size_t(h) * w, 0);
  int comps = 0;
  for (int start = 0; start < h * w; ++start) {
    if (m.data[start] < 0.5 || seen[size_t(start)]) continue;
    ++comps;
    std::queue<int> q;
    q.push(start);
    seen[size_t(start)] = 1;
    while (!q.empty()) {
      int cur = q.front();
      q.pop();
      int y = cur / w, x = cur % w;
      const int dy[4] = {1, -1, 0, 0}, dx[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int ny = y + dy[k], nx = x + dx[k];
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        int ni = ny * w + nx;
        if (m.data[ni] >= 0.5 && !seen[size_t(ni)]) {
          seen[size_t(ni)] = 1;
          q.push(ni);
        }
      }
    }
  }
  return comps;
}

bool touches_border(const ManipulationMask& m) {
  const int h = m.height, w = m.width;
  for (int x = 0; x < w; ++x)
    if (m.data[x] >= 0.5 || m.data[(h - 1) * w + x] >= 0.5) return true;
  for (int y = 0; y < h; ++y)
    if (m.data[y * w] >= 0.5 || m.data[y * w + w - 1] >= 0.5) return true;
  return false;
}

LatentCode make_latent(int c, int h, int w, Scalar base) {
  LatentCode z{c, h, w, ArrayX(c * h * w)};
  for (int i = 0; i < z.data.size(); ++i) z.data[i] = base + 0.01 * i;
  return z;
}

}  // namespace

TEST_CASE("channel mask statistics and determinism") {
  Rng r(1);
  int ones = 0;
  const int draws = 10000, c = 4;
  for (int i = 0; i < draws; ++i) {
    ChannelMask m = sample_channel_mask(c, 0.5, r);
    REQUIRE(int(m.values.size()) == c);
    for (uint8_t v : m.values) {
      CHECK((v == 0 || v == 1));
      ones += v;
    }
  }
  double mean = double(ones) / (draws * c);
  CHECK(mean > 0.48);
  CHECK(mean < 0.52);

  // seeded reproducibility
  Rng a(9), b(9);
  ChannelMask ma = sample_channel_mask(8, 0.3, a);
  ChannelMask mb = sample_channel_mask(8, 0.3, b);
  CHECK(ma.values == mb.values);

  // skewed density also lands near p
  Rng s(2);
  ones = 0;
  for (int i = 0; i < draws; ++i) {
    ChannelMask m = sample_channel_mask(c, 0.2, s);
    for (uint8_t v : m.values) ones += v;
  }
  mean = double(ones) / (draws * c);
  CHECK(mean > 0.18);
  CHECK(mean < 0.22);

  Rng e(3);
  CHECK_THROWS_AS(sample_channel_mask(4, 0.0, e), Error);
  CHECK_THROWS_AS(sample_channel_mask(4, 1.0, e), Error);
  ChannelMask single = sample_channel_mask(1, 0.5, e);
  CHECK(single.values.size() == 1);
}

TEST_CASE("mix_latents selects channels") {
  LatentCode z_pro = make_latent(2, 1, 1, 0);
  z_pro.data[0] = 5;
  z_pro.data[1] = 7;
  LatentCode z_src = make_latent(2, 1, 1, 0);
  z_src.data[0] = 2;
  z_src.data[1] = 3;

  ChannelMask zeros{{0, 0}}, ones{{1, 1}}, mixed{{1, 0}};
  CHECK((mix_latents(z_pro, z_src, zeros).data == z_pro.data).all());
  CHECK((mix_latents(z_pro, z_src, ones).data == z_src.data).all());
  LatentCode got = mix_latents(z_pro, z_src, mixed);
  CHECK(got.data[0] == 2);
  CHECK(got.data[1] == 7);
}

TEST_CASE("mix_latents broadcasts over spatial dims and projects") {
  LatentCode a = make_latent(3, 4, 4, 0.0);
  LatentCode b = make_latent(3, 4, 4, 1.0);
  ChannelMask m{{0, 1, 0}};
  LatentCode got = mix_latents(a, b, m);
  for (int i = 0; i < 16; ++i) {
    CHECK(got.data[i] == a.data[i]);            // channel 0 kept
    CHECK(got.data[16 + i] == b.data[16 + i]);  // channel 1 replaced
    CHECK(got.data[32 + i] == a.data[32 + i]);  // channel 2 kept
  }
  // projection: mixing a latent with itself is the identity for any mask
  Rng r(4);
  for (int t = 0; t < 8; ++t) {
    ChannelMask rm = sample_channel_mask(3, 0.5, r);
    CHECK((mix_latents(a, a, rm).data == a.data).all());
  }

  LatentCode wrong = make_latent(3, 2, 2, 0.0);
  CHECK_THROWS_AS(mix_latents(a, wrong, m), Error);
  ChannelMask short_mask{{1, 0}};
  CHECK_THROWS_AS(mix_latents(a, b, short_mask), Error);
}

TEST_CASE("blend masks honor every contract clause") {
  Rng r(11);
  const int h = 64, w = 64;
  int small_area = 0, large_area = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    ManipulationMask m = generate_blend_mask(h, w, r);
    REQUIRE(m.height == h);
    REQUIRE(m.width == w);
    CHECK(m.binary);
    Scalar area = m.data.sum() / (h * w);
    CHECK(area >= 0.05);
    CHECK(area <= 0.60);
    CHECK(!touches_border(m));
    if (area < 0.20) ++small_area;
    if (area > 0.40) ++large_area;
    if (i % 20 == 0) {
      CHECK(component_count(m) == 1);
      // centroid inside the central 2/3 of the frame
      Scalar cy = 0, cx = 0, s = m.data.sum();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (m.data[y * w + x] >= 0.5) {
            cy += y;
            cx += x;
          }
      cy /= s;
      cx /= s;
      CHECK(cy >= h / 6.0);
      CHECK(cy <= 5.0 * h / 6.0);
      CHECK(cx >= w / 6.0);
      CHECK(cx <= 5.0 * w / 6.0);
    }
  }
  // histogram covers both regimes
  CHECK(small_area > draws / 50);
  CHECK(large_area > draws / 50);
}

TEST_CASE("blend masks are deterministic and sized from the frame") {
  Rng a(5), b(5);
  ManipulationMask ma = generate_blend_mask(48, 80, a);
  ManipulationMask mb = generate_blend_mask(48, 80, b);
  CHECK((ma.data == mb.data).all());
  CHECK(ma.height == 48);
  CHECK(ma.width == 80);
  CHECK(component_count(ma) == 1);
}

TEST_CASE("degrade identity configuration changes pixels by at most one step") {
  Rng r(21);
  Image face = synth_face(32, r);
  Tensor t = image_to_tensor(face);
  DegradeConfig spec;
  spec.jpeg = true;
  spec.jpeg_q_min = spec.jpeg_q_max = 100;
  spec.noise = true;
  spec.sigma_min = spec.sigma_max = 0.0;
  spec.jitter = true;
  spec.jitter_min = spec.jitter_max = 1.0;
  std::vector<std::string> tags;
  Rng dr(22);
  Tensor out = degrade(t, spec, dr, &tags);
  CHECK(tags.size() == 3);
  CHECK((out.value() - t.value()).abs().maxCoeff() <= 1.0 / 255 + 1e-12);
}

TEST_CASE("jpeg quality 30 lands in the expected distortion band") {
  Rng r(23);
  Image face = synth_face(64, r);
  Tensor out = approx_jpeg(image_to_tensor(face), 30);
  Image outi = tensor_to_image(out);
  Scalar p = psnr(outi, face);
  CHECK(p >= 24.0);
  CHECK(p <= 38.0);
  // and it must actually distort
  CHECK(p < 60.0);
}

TEST_CASE("jpeg is deterministic and respects the pixel grid") {
  Rng r(24);
  Image face = synth_face(32, r);
  Tensor a = approx_jpeg(image_to_tensor(face), 50);
  Tensor b = approx_jpeg(image_to_tensor(face), 50);
  CHECK((a.value() == b.value()).all());
  // every output value sits on the 8-bit grid
  for (int i = 0; i < a.value().size(); ++i) {
    Scalar v = a.value()[i] * 255.0;
    CHECK(std::abs(v - std::round(v)) < 1e-9);
  }
}

TEST_CASE("gaussian noise has the configured std before clamping") {
  Rng r(25);
  Image base = Image::zeros(3, 64, 64);
  base.data.setConstant(0.5);
  Tensor t = image_to_tensor(base);
  Tensor noisy = add_gaussian_noise(t, 0.04, r);
  ArrayX diff = noisy.value() - t.value();
  Scalar mean = diff.mean();
  Scalar sd = std::sqrt((diff - mean).square().mean());
  CHECK(std::abs(sd - 0.04) <= 0.005);
}

TEST_CASE("color jitter closed form") {
  Image base = Image::zeros(3, 8, 8);
  base.data.setConstant(0.25);
  Tensor out = color_jitter(image_to_tensor(base), 1.2, 1.0);
  // contrast about 0.5: 0.5 + 1.2*(0.25-0.5) = 0.2
  CHECK(std::abs(out.value()[0] - 0.2) < 1e-12);
  Tensor out2 = color_jitter(image_to_tensor(base), 1.0, 1.1);
  CHECK(std::abs(out2.value()[0] - 0.275) < 1e-12);
}

TEST_CASE("simulate_attack with everything disabled is the identity") {
  Rng r(31);
  Image pro = synth_face(32, r);
  Image src = synth_face(32, r);
  AttackConfig cfg = ablation_attack_config("none");
  Rng ar(32);
  AttackOutcome out = simulate_attack(pro, src, cfg, nullptr, ar);
  CHECK((out.edited.data == pro.data).all());
  CHECK(out.ground_truth_mask.data.sum() == 0.0);
  CHECK(out.stages.empty());
}

TEST_CASE("blending-only attack: mask bookkeeping and spatial containment") {
  Rng r(33);
  Image pro = synth_face(64, r);
  Image src = synth_face(64, r);
  AttackConfig cfg = ablation_attack_config("blend");
  cfg.enable_degradations = false;  // isolate the blend stage
  Rng ar(34);
  AttackOutcome out = simulate_attack(pro, src, cfg, nullptr, ar);
  REQUIRE(out.stages.size() == 1);
  CHECK(out.stages[0] == "blend");
  const ManipulationMask& m = out.ground_truth_mask;
  CHECK(m.binary);
  Scalar area = m.data.sum() / (64 * 64);
  CHECK(area >= 0.05);
  CHECK(area <= 0.60);
  // outside the mask the poisson solve leaves dst untouched
  int changed_outside = 0, changed_inside = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 64 * 64; ++i) {
      bool diff = std::abs(out.edited.data[c * 64 * 64 + i] -
                           pro.data[c * 64 * 64 + i]) > 2.0 / 255;
      if (diff && m.data[i] < 0.5) ++changed_outside;
      if (diff && m.data[i] >= 0.5) ++changed_inside;
    }
  CHECK(changed_outside == 0);
  CHECK(changed_inside > 0);  // the attack must actually edit content
}

TEST_CASE("mask consistency holds across many blend draws") {
  Rng r(35);
  AttackConfig cfg = ablation_attack_config("blend");
  cfg.enable_degradations = false;
  int total_diff = 0, covered = 0;
  for (int t = 0; t < 12; ++t) {
    Image pro = synth_face(48, r);
    Image src = synth_face(48, r);
    Rng ar(100 + uint64_t(t));
    AttackOutcome out = simulate_attack(pro, src, cfg, nullptr, ar);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 48 * 48; ++i) {
        bool diff = std::abs(out.edited.data[c * 48 * 48 + i] -
                             pro.data[c * 48 * 48 + i]) > 2.0 / 255;
        if (!diff) continue;
        ++total_diff;
        if (out.ground_truth_mask.data[i] >= 0.5) ++covered;
      }
  }
  REQUIRE(total_diff > 0);
  CHECK(double(covered) / total_diff >= 0.99);
}

TEST_CASE("noise arm fires only degradations and keeps the mask empty") {
  Rng r(41);
  Image pro = synth_face(32, r);
  Image src = synth_face(32, r);
  AttackConfig cfg = ablation_attack_config("noise");
  Rng ar(42);
  AttackOutcome out = simulate_attack(pro, src, cfg, nullptr, ar);
  CHECK(out.ground_truth_mask.data.sum() == 0.0);
  CHECK(!out.stages.empty());
  for (const auto& s : out.stages) {
    CHECK(s != "blend");
    CHECK(s != "latent_mixing");
  }
}

TEST_CASE("full arm records both content stages and uses the blend mask") {
  FaceCodecConfig fcfg;  // latent 256, encode at 32
  FaceCodec codec(fcfg, 7);
  Rng r(51);
  Image pro = synth_face(64, r);
  Image src = synth_face(64, r);
  AttackConfig cfg = ablation_attack_config("full");
  cfg.enable_degradations = false;
  Rng ar(52);
  AttackOutcome out = simulate_attack(pro, src, cfg, &codec, ar);
  REQUIRE(out.stages.size() == 2);
  CHECK(out.stages[0] == "latent_mixing");
  CHECK(out.stages[1] == "blend");
  Scalar area = out.ground_truth_mask.data.sum() / (64 * 64);
  CHECK(area >= 0.05);
  CHECK(area <= 0.60);
}

TEST_CASE("mixing without blending marks the whole frame") {
  FaceCodecConfig fcfg;
  FaceCodec codec(fcfg, 7);
  Rng r(61);
  Image pro = synth_face(32, r);
  Image src = synth_face(32, r);
  AttackConfig cfg;
  cfg.enable_latent_mixing = true;
  cfg.enable_blending = false;
  cfg.enable_degradations = false;
  Rng ar(62);
  AttackOutcome out = simulate_attack(pro, src, cfg, &codec, ar);
  CHECK(out.ground_truth_mask.data.sum() == 32.0 * 32.0);
  REQUIRE(out.stages.size() == 1);
  CHECK(out.stages[0] == "latent_mixing");
  CHECK(out.edited.data.minCoeff() >= 0.0);
  CHECK(out.edited.data.maxCoeff() <= 1.0);
}

TEST_CASE("latent mixing requires a codec") {
  Rng r(71);
  Image pro = synth_face(32, r);
  Image src = synth_face(32, r);
  AttackConfig cfg = ablation_attack_config("full");
  Rng ar(72);
  CHECK_THROWS_AS(simulate_attack(pro, src, cfg, nullptr, ar), Error);
}

TEST_CASE("attacks are deterministic given the rng stream") {
  FaceCodecConfig fcfg;
  FaceCodec codec(fcfg, 7);
  Rng r(81);
  Image pro = synth_face(32, r);
  Image src = synth_face(32, r);
  AttackConfig cfg = ablation_attack_config("full");
  Rng a1(99), a2(99);
  AttackOutcome o1 = simulate_attack(pro, src, cfg, &codec, a1);
  AttackOutcome o2 = simulate_attack(pro, src, cfg, &codec, a2);
  CHECK((o1.edited.data == o2.edited.data).all());
  CHECK((o1.ground_truth_mask.data == o2.ground_truth_mask.data).all());
  CHECK(o1.stages == o2.stages);
}
