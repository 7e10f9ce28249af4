#include "provmark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace provmark {

Scalar psnr(const Image& a, const Image& b) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width)
    throw Error("ShapeMismatch", "psnr image shapes differ");
  Scalar mse = (a.data - b.data).square().mean();
  if (mse <= 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<Scalar> gaussian_window11() {
  std::vector<Scalar> w(11);
  Scalar sum = 0;
  for (int i = 0; i < 11; ++i) {
    Scalar d = i - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += w[i];
  }
  for (Scalar& v : w) v /= sum;
  return w;
}

}  // namespace

Scalar ssim(const Image& a, const Image& b) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width)
    throw Error("ShapeMismatch", "ssim image shapes differ");
  if (a.height < 11 || a.width < 11)
    throw Error("TooSmall", "ssim needs at least an 11x11 image");
  static const std::vector<Scalar> win = gaussian_window11();
  const Scalar c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  int h = a.height, w = a.width;
  Scalar total = 0;
  int64_t count = 0;
  // separable pass: horizontal blur of x, y, x^2, y^2, xy, then vertical
  int rw = w - 10;  // valid columns after horizontal pass
  std::vector<Scalar> hx(h * rw), hy(h * rw), hxx(h * rw), hyy(h * rw), hxy(h * rw);
  for (int ch = 0; ch < a.channels; ++ch) {
    const Scalar* pa = a.data.data() + (int64_t)ch * h * w;
    const Scalar* pb = b.data.data() + (int64_t)ch * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < rw; ++x) {
        Scalar sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int k = 0; k < 11; ++k) {
          Scalar va = pa[y * w + x + k], vb = pb[y * w + x + k];
          sx += win[k] * va;
          sy += win[k] * vb;
          sxx += win[k] * va * va;
          syy += win[k] * vb * vb;
          sxy += win[k] * va * vb;
        }
        int i = y * rw + x;
        hx[i] = sx; hy[i] = sy; hxx[i] = sxx; hyy[i] = syy; hxy[i] = sxy;
      }
    for (int y = 0; y + 10 < h; ++y)
      for (int x = 0; x < rw; ++x) {
        Scalar mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int k = 0; k < 11; ++k) {
          int i = (y + k) * rw + x;
          mx += win[k] * hx[i];
          my += win[k] * hy[i];
          mxx += win[k] * hxx[i];
          myy += win[k] * hyy[i];
          mxy += win[k] * hxy[i];
        }
        Scalar vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
        Scalar num = (2 * mx * my + c1) * (2 * cov + c2);
        Scalar den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
        ++count;
      }
  }
  return total / count;
}

Scalar bit_accuracy(const OwnershipCode& decoded, const OwnershipCode& truth) {
  if (decoded.bits.size() != truth.bits.size())
    throw Error("LengthMismatch", "ownership codes have different lengths");
  if (truth.bits.empty()) throw Error("LengthMismatch", "empty codes");
  int match = 0;
  for (size_t i = 0; i < truth.bits.size(); ++i)
    if (decoded.bits[i] == truth.bits[i]) ++match;
  return 100.0 * match / truth.bits.size();
}

LocalizationScores localization_scores(const ManipulationMask& soft,
                                       const ManipulationMask& truth,
                                       Scalar tau) {
  if (soft.height != truth.height || soft.width != truth.width)
    throw Error("ShapeMismatch", "mask shapes differ");
  ManipulationMask pred = binarize_mask(soft, tau);
  int64_t n = (int64_t)truth.height * truth.width;
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (int64_t i = 0; i < n; ++i) {
    bool p = pred.data[i] >= 0.5, t = truth.data[i] >= 0.5;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
    else ++tn;
  }
  LocalizationScores out;
  out.f1 = (tp + fp + fn == 0) ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  Scalar iou_t = (tp + fp + fn == 0) ? 1.0 : Scalar(tp) / (tp + fp + fn);
  Scalar iou_a = (tn + fp + fn == 0) ? 1.0 : Scalar(tn) / (tn + fp + fn);
  out.miou = 0.5 * (iou_t + iou_a);

  int64_t pos = tp + fn, negs = n - pos;
  if (pos == 0 || negs == 0) {
    out.auc_defined = false;  // DegenerateTruth: rank statistic undefined
    return out;
  }
  // Mann-Whitney with average ranks for ties
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
    return soft.data[x] < soft.data[y];
  });
  Scalar rank_sum_pos = 0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && soft.data[order[j + 1]] == soft.data[order[i]]) ++j;
    Scalar avg_rank = 0.5 * (i + j) + 1.0;  // ranks are 1-based
    for (int64_t k = i; k <= j; ++k)
      if (truth.data[order[k]] >= 0.5) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  out.auc = (rank_sum_pos - 0.5 * pos * (pos + 1)) / (Scalar(pos) * negs);
  out.auc_defined = true;
  return out;
}

}  // namespace provmark
