#pragma once

#include <vector>

#include "provmark/nn.hpp"
#include "provmark/tensor.hpp"

namespace provmark {

// Frozen feature pyramid for perceptual distances. The default is a seeded
// random 4-layer conv stack (random deep features are a serviceable
// perceptual proxy and keep the artifact self-contained); identity() swaps
// in a single passthrough layer so loss values have closed forms in tests.
class PerceptualExtractor {
 public:
  static PerceptualExtractor random_pyramid(uint64_t seed);
  static PerceptualExtractor identity();

  // one feature tensor per layer, gradients flow to the input only as far
  // as the caller's optimizer ignores these weights
  std::vector<Tensor> features(const Tensor& img) const;

  bool is_identity() const { return identity_; }

 private:
  PerceptualExtractor() : ps_(0) {}

  bool identity_ = false;
  ParamStore ps_;
  std::vector<Conv2d> convs_;
};

}  // namespace provmark
