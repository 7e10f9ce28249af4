#include "provmark/perceptual.hpp"

namespace provmark {

PerceptualExtractor PerceptualExtractor::random_pyramid(uint64_t seed) {
  PerceptualExtractor p;
  p.ps_ = ParamStore(seed);
  p.convs_.emplace_back(p.ps_, "p1", 3, 8, 3, 1, 1);
  p.convs_.emplace_back(p.ps_, "p2", 8, 16, 3, 2, 1);
  p.convs_.emplace_back(p.ps_, "p3", 16, 32, 3, 2, 1);
  p.convs_.emplace_back(p.ps_, "p4", 32, 32, 3, 2, 1);
  return p;
}

PerceptualExtractor PerceptualExtractor::identity() {
  PerceptualExtractor p;
  p.identity_ = true;
  return p;
}

std::vector<Tensor> PerceptualExtractor::features(const Tensor& img) const {
  if (identity_) return {img};
  std::vector<Tensor> feats;
  Tensor x = img;
  for (const Conv2d& c : convs_) {
    x = relu(c(x));
    feats.push_back(x);
  }
  return feats;
}

}  // namespace provmark
