#pragma once

#include "provmark/datamodel.hpp"

namespace provmark {

// peak 1.0; identical images report the 100dB cap
Scalar psnr(const Image& a, const Image& b);

// single-scale SSIM, 11x11 Gaussian window sigma=1.5, C1=0.01^2, C2=0.03^2,
// averaged over channels and valid window positions
Scalar ssim(const Image& a, const Image& b);

// 100 * matching bits / n
Scalar bit_accuracy(const OwnershipCode& decoded, const OwnershipCode& truth);

struct LocalizationScores {
  Scalar f1 = 0;
  Scalar miou = 0;
  bool auc_defined = false;  // false when truth is all-0s or all-1s
  Scalar auc = 0;
};

// F1/mIoU on the thresholded prediction; AUC is the rank statistic
// P(score_tampered > score_authentic) with ties counting one half
LocalizationScores localization_scores(const ManipulationMask& soft,
                                       const ManipulationMask& truth,
                                       Scalar tau = 0.5);

}  // namespace provmark
