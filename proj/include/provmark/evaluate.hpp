#pragma once

#include <string>
#include <vector>

#include "provmark/metrics.hpp"
#include "provmark/pipeline.hpp"

namespace provmark {

struct EvalRow {
  std::string attack;  // "clean" or a suite arm
  int samples = 0;
  Scalar psnr_embed = 0, ssim_embed = 0;  // protected vs original
  Scalar bit_acc = 0;
  Scalar f1 = 0, miou = 0;
  bool auc_defined = false;  // false when every truth mask was degenerate
  Scalar auc = 0;
  Scalar psnr_rec = 0, ssim_rec = 0;  // recovered vs original
};

struct EvalReport {
  std::string dataset_tag;
  uint64_t seed = 0;
  uint64_t checkpoint_hash = 0;
  std::vector<EvalRow> rows;
};

// Known suite arms: "noise", "blend", "blend+mix". A "clean" fidelity row is
// always produced first; an empty suite therefore yields a fidelity-only
// report. Deterministic given seed. max_samples caps the corpus prefix used.
EvalReport evaluate(const Pipeline& p, const std::vector<Image>& corpus,
                    const std::vector<std::string>& suite, int max_samples,
                    uint64_t seed);

std::string report_json_lines(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace provmark
