#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "provmark/losses.hpp"
#include "provmark/perceptual.hpp"
#include "provmark/rng.hpp"
#include "provmark/tensor.hpp"

using namespace provmark;

namespace {

Tensor rand_tensor(std::vector<int> shape, uint64_t seed, Scalar lo, Scalar hi,
                   bool rg) {
  Rng r(seed);
  int n = 1;
  for (int d : shape) n *= d;
  ArrayX a(n);
  for (int i = 0; i < n; ++i) a[i] = r.uniform(lo, hi);
  return Tensor::from_array(std::move(shape), std::move(a), rg);
}

// relative-error finite-difference check over a few coordinates of `leaf`
void check_grads(const std::function<Tensor()>& make_loss, Tensor leaf,
                 std::vector<int> idxs, Scalar tol = 1e-3) {
  leaf.zero_grad();  // earlier checks may have accumulated into this leaf
  Tensor l = make_loss();
  l.backward();
  ArrayX analytic = leaf.grad();
  for (int idx : idxs) {
    Scalar orig = leaf.mutable_value()[idx];
    const Scalar h = 1e-5;
    leaf.mutable_value()[idx] = orig + h;
    Scalar up = make_loss().value()[0];
    leaf.mutable_value()[idx] = orig - h;
    Scalar dn = make_loss().value()[0];
    leaf.mutable_value()[idx] = orig;
    Scalar fd = (up - dn) / (2 * h);
    Scalar denom = std::max({std::abs(fd), std::abs(analytic[idx]), 1e-4});
    CHECK(std::abs(fd - analytic[idx]) / denom <= tol);
  }
}

}  // namespace

TEST_CASE("embed loss closed forms") {
  PerceptualExtractor phi = PerceptualExtractor::identity();
  Tensor img = rand_tensor({3, 8, 8}, 1, 0.2, 0.8, false);
  CHECK(embed_loss(img, img, phi).value()[0] == 0.0);

  Tensor shifted = add_scalar(img, 0.1);
  Scalar got = embed_loss(shifted, img, phi).value()[0];
  CHECK(std::abs(got - 0.11) < 1e-12);  // mse 0.01 + identity-layer L1 0.1

  Tensor other = rand_tensor({3, 8, 8}, 2, 0, 1, false);
  CHECK(embed_loss(other, img, phi).value()[0] >= 0.0);

  Tensor wrong = rand_tensor({3, 4, 4}, 3, 0, 1, false);
  CHECK_THROWS_AS(embed_loss(wrong, img, phi), Error);
}

TEST_CASE("decode loss closed forms") {
  const int n = 16;
  ArrayX logits(n), targets(n);
  for (int i = 0; i < n; ++i) {
    targets[i] = i % 2;
    logits[i] = targets[i] > 0.5 ? 10.0 : -10.0;
  }
  Tensor lt = Tensor::from_array({n}, logits);
  Tensor tt = Tensor::from_array({n}, targets);
  Tensor z = rand_tensor({4, 2, 2}, 4, -1, 1, false);

  Scalar got = decode_loss(lt, tt, z, z).value()[0];
  Scalar bce10 = std::log1p(std::exp(-10.0));  // ~4.54e-5
  CHECK(std::abs(got - bce10) < 1e-9);
  CHECK(std::abs(got - 4.54e-5) < 1e-6);

  Tensor zeros = Tensor::zeros({n});
  Scalar maxent = decode_loss(zeros, tt, z, z).value()[0];
  CHECK(std::abs(maxent - std::log(2.0)) < 1e-12);

  Tensor zh = add_scalar(z, 0.1);
  Scalar latent_term = decode_loss(lt, tt, zh, z).value()[0] - got;
  CHECK(std::abs(latent_term - 0.01) < 1e-10);

  Tensor short_logits = Tensor::zeros({n - 1});
  CHECK_THROWS_AS(decode_loss(short_logits, tt, z, z), Error);
}

TEST_CASE("dice loss formula and limits") {
  // identical nonempty binary masks: exact zero for any eps
  ArrayX half(4);
  half << 1, 1, 0, 0;
  Tensor m = Tensor::from_array({1, 2, 2}, half);
  CHECK(dice_loss(m, m, 1.0).value()[0] == 0.0);
  CHECK(std::abs(dice_loss(m, m, 1e-9).value()[0]) < 1e-12);

  // disjoint nonempty masks -> eps-limit 1
  ArrayX other(4);
  other << 0, 0, 1, 1;
  Tensor d = Tensor::from_array({1, 2, 2}, other);
  CHECK(dice_loss(m, d, 1e-9).value()[0] > 1.0 - 1e-8);

  // uniform 0.5 prediction vs half-ones truth on 2x2
  Tensor u = Tensor::constant({1, 2, 2}, 0.5);
  Scalar small_eps = dice_loss(u, m, 1e-9).value()[0];
  CHECK(std::abs(small_eps - 0.5) < 1e-8);  // 1 - 2/4
  Scalar smooth = dice_loss(u, m, 1.0).value()[0];
  CHECK(std::abs(smooth - (1.0 - 3.0 / 5.0)) < 1e-12);  // 1 - (2+1)/(4+1)

  CHECK_THROWS_AS(dice_loss(u, m, 0.0), Error);
  Tensor wrong = Tensor::zeros({1, 3, 3});
  CHECK_THROWS_AS(dice_loss(u, wrong, 1.0), Error);
}

TEST_CASE("rec loss closed forms") {
  PerceptualExtractor phi = PerceptualExtractor::identity();
  Tensor img = rand_tensor({3, 8, 8}, 5, 0.3, 0.7, false);
  CHECK(rec_loss(img, img, phi).value()[0] == 0.0);
  Tensor shifted = add_scalar(img, 0.2);
  Scalar got = rec_loss(shifted, img, phi).value()[0];
  CHECK(std::abs(got - 0.4) < 1e-12);  // l1 0.2 + identity-layer 0.2
}

TEST_CASE("total loss weighting") {
  LossWeights w;  // 1, 1, 2
  Tensor one = Tensor::constant({1}, 1.0);
  Tensor zero = Tensor::constant({1}, 0.0);
  CHECK(total_loss(one, one, one, one, w).value()[0] == 5.0);
  CHECK(total_loss(zero, zero, zero, zero, w).value()[0] == 0.0);

  LossWeights no_rec = w;
  no_rec.lambda3 = 0.0;
  Tensor seven = Tensor::constant({1}, 7.0);
  CHECK(total_loss(zero, zero, zero, seven, no_rec).value()[0] == 0.0);

  // linear in each part
  Tensor three = Tensor::constant({1}, 3.0);
  CHECK(total_loss(zero, three, zero, zero, w).value()[0] == 3.0);
  CHECK(total_loss(zero, zero, three, zero, w).value()[0] == 3.0);
  CHECK(total_loss(zero, zero, zero, three, w).value()[0] == 6.0);

  Tensor bad = Tensor::constant({1}, std::nan(""));
  try {
    total_loss(one, bad, one, one, w);
    FAIL("expected NonFinitePart");
  } catch (const Error& e) {
    CHECK(e.kind() == "NonFinitePart");
  }
}

TEST_CASE("embed loss gradient matches finite differences") {
  PerceptualExtractor phi = PerceptualExtractor::random_pyramid(3);
  Tensor pred = rand_tensor({3, 8, 8}, 6, 0.2, 0.8, true);
  Tensor target = rand_tensor({3, 8, 8}, 7, 0.2, 0.8, false);
  check_grads([&] { return embed_loss(pred, target, phi); }, pred,
              {0, 17, 63, 100, 191});
}

TEST_CASE("decode loss gradient matches finite differences") {
  Rng r(8);
  ArrayX logits(16), targets(16);
  for (int i = 0; i < 16; ++i) {
    logits[i] = r.uniform(-2, 2);
    targets[i] = r.bernoulli(0.5) ? 1.0 : 0.0;
  }
  Tensor lt = Tensor::from_array({16}, logits, true);
  Tensor tt = Tensor::from_array({16}, targets);
  Tensor zh = rand_tensor({4, 2, 2}, 9, -1, 1, true);
  Tensor z = rand_tensor({4, 2, 2}, 10, -1, 1, false);
  check_grads([&] { return decode_loss(lt, tt, zh, z); }, lt, {0, 5, 15});
  check_grads([&] { return decode_loss(lt, tt, zh, z); }, zh, {0, 7, 15});
}

TEST_CASE("dice loss gradient matches finite differences") {
  Tensor pred = rand_tensor({1, 8, 8}, 11, 0.05, 0.95, true);
  Rng r(12);
  ArrayX truth(64);
  for (int i = 0; i < 64; ++i) truth[i] = r.bernoulli(0.4) ? 1.0 : 0.0;
  Tensor tt = Tensor::from_array({1, 8, 8}, truth);
  check_grads([&] { return dice_loss(pred, tt, 1.0); }, pred, {0, 9, 33, 63});
}

TEST_CASE("rec loss gradient matches finite differences") {
  PerceptualExtractor phi = PerceptualExtractor::random_pyramid(13);
  Tensor pred = rand_tensor({3, 8, 8}, 14, 0.25, 0.75, true);
  Tensor target = rand_tensor({3, 8, 8}, 15, 0.2, 0.8, false);
  // keep |pred-target| away from 0 so the L1 kink cannot sit inside the
  // finite-difference stencil
  for (int i = 0; i < 192; ++i)
    if (std::abs(pred.value()[i] - target.value()[i]) < 1e-3)
      pred.mutable_value()[i] += 5e-3;
  check_grads([&] { return rec_loss(pred, target, phi); }, pred,
              {1, 20, 77, 150});
}

TEST_CASE("total loss gradient flows into every part") {
  Tensor a = Tensor::from_array({1}, (ArrayX(1) << 0.5).finished(), true);
  Tensor b = Tensor::from_array({1}, (ArrayX(1) << 0.25).finished(), true);
  Tensor c = Tensor::from_array({1}, (ArrayX(1) << 0.75).finished(), true);
  Tensor d = Tensor::from_array({1}, (ArrayX(1) << 1.5).finished(), true);
  LossWeights w;
  Tensor l = total_loss(a, b, c, d, w);
  l.backward();
  CHECK(a.grad()[0] == 1.0);
  CHECK(b.grad()[0] == w.lambda1);
  CHECK(c.grad()[0] == w.lambda2);
  CHECK(d.grad()[0] == w.lambda3);
}
