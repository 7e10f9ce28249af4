#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "provmark/pipeline.hpp"

namespace provmark {

struct TrainLogEntry {
  int step = 0;
  Scalar l_embed = 0, l_decode = 0, l_loc = 0, l_rec = 0, total = 0, lr = 0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;  // one entry per optimizer step
  int steps = 0;
};

std::string train_log_line(const TrainLogEntry& e);

// Joint optimization of embedder, extractor, localizer, and recovery (the
// face codec stays frozen). Per step: sample a batch, draw payloads, embed,
// run the attack simulator (or a hard-paste composite when supervision is
// "mixed"), extract, localize, recover, and take one Adam step on the
// weighted sum of the four losses. Deterministic given cfg.seed. Throws
// CorpusTooSmall (< 100 images) and Diverged (non-finite loss).
// checkpoint_cb, when set, runs at each epoch boundary.
TrainResult train_joint(Pipeline& p, const std::vector<Image>& corpus,
                        std::ostream* log_stream = nullptr,
                        const std::function<void(int epoch)>& checkpoint_cb = {});

}  // namespace provmark
