#include "provmark/evaluate.hpp"

#include <iomanip>
#include <sstream>

#include "provmark/attack_sim.hpp"

namespace provmark {

namespace {

AttackConfig suite_config(const std::string& arm) {
  if (arm == "noise") return ablation_attack_config("noise");
  if (arm == "blend") return ablation_attack_config("blend");
  if (arm == "blend+mix") return ablation_attack_config("full");
  throw Error("BadConfig", "unknown attack-suite arm: " + arm);
}

struct RowAccum {
  Scalar psnr_e = 0, ssim_e = 0, bits = 0, f1 = 0, miou = 0, auc = 0;
  Scalar psnr_r = 0, ssim_r = 0;
  int n = 0, n_auc = 0;

  EvalRow finish(const std::string& name) const {
    EvalRow r;
    r.attack = name;
    r.samples = n;
    if (n > 0) {
      r.psnr_embed = psnr_e / n;
      r.ssim_embed = ssim_e / n;
      r.bit_acc = bits / n;
      r.f1 = f1 / n;
      r.miou = miou / n;
      r.psnr_rec = psnr_r / n;
      r.ssim_rec = ssim_r / n;
    }
    if (n_auc > 0) {
      r.auc_defined = true;
      r.auc = auc / n_auc;
    }
    return r;
  }
};

}  // namespace

EvalReport evaluate(const Pipeline& p, const std::vector<Image>& corpus,
                    const std::vector<std::string>& suite, int max_samples,
                    uint64_t seed) {
  if (corpus.empty()) throw Error("EmptyCorpus", "evaluation corpus is empty");
  int n = std::min<int>(corpus.size(), max_samples);

  EvalReport report;
  report.seed = seed;

  std::vector<std::string> rows;
  rows.push_back("clean");
  for (const std::string& s : suite) rows.push_back(s);

  Rng root(Rng(seed).split(2024).next_u64());
  for (size_t r = 0; r < rows.size(); ++r) {
    const std::string& arm = rows[r];
    RowAccum acc;
    for (int i = 0; i < n; ++i) {
      Rng rng = root.split(r * 100003 + i);
      const Image& original = corpus[i];
      const Image& source = corpus[(i + 1 + rng.uniform_int(0, (int)corpus.size() - 2)) % corpus.size()];

      OwnershipCode code = random_code(p.cfg.urw.n_bits, rng);
      WatermarkPayload payload = p.make_payload(original, code);
      Image protected_img = p.embed(original, payload);

      Image edited = protected_img;
      ManipulationMask truth =
          ManipulationMask::zeros(original.height, original.width);
      if (arm != "clean") {
        AttackOutcome out =
            simulate_attack(protected_img, source, suite_config(arm), &p.face, rng);
        edited = out.edited;
        truth = out.ground_truth_mask;
      }

      VerifyResult v = run_verify(p, edited);

      acc.psnr_e += psnr(protected_img, original);
      acc.ssim_e += ssim(protected_img, original);
      acc.bits += bit_accuracy(v.code, code);
      LocalizationScores ls = localization_scores(v.mask_soft, truth, 0.5);
      acc.f1 += ls.f1;
      acc.miou += ls.miou;
      if (ls.auc_defined) {
        acc.auc += ls.auc;
        ++acc.n_auc;
      }
      acc.psnr_r += psnr(v.recovered, original);
      acc.ssim_r += ssim(v.recovered, original);
      ++acc.n;
    }
    report.rows.push_back(acc.finish(arm));
  }
  return report;
}

std::string report_json_lines(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "{\"dataset\":\"" << r.dataset_tag << "\",\"seed\":" << r.seed
     << ",\"checkpoint_hash\":\"" << std::hex << r.checkpoint_hash << std::dec
     << "\"}\n";
  for (const EvalRow& row : r.rows) {
    os << "{\"attack\":\"" << row.attack << "\",\"samples\":" << row.samples
       << ",\"psnr_embed\":" << row.psnr_embed
       << ",\"ssim_embed\":" << row.ssim_embed
       << ",\"bit_acc\":" << row.bit_acc << ",\"f1\":" << row.f1
       << ",\"miou\":" << row.miou << ",\"auc\":";
    if (row.auc_defined)
      os << row.auc;
    else
      os << "null";
    os << ",\"psnr_rec\":" << row.psnr_rec << ",\"ssim_rec\":" << row.ssim_rec
       << "}\n";
  }
  return os.str();
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "dataset=" << r.dataset_tag << " seed=" << r.seed
     << " checkpoint=" << std::hex << r.checkpoint_hash << std::dec << "\n";
  os << std::left << std::setw(11) << "attack" << std::right << std::setw(8)
     << "n" << std::setw(11) << "psnr_emb" << std::setw(10) << "ssim_emb"
     << std::setw(9) << "bit_acc" << std::setw(8) << "f1" << std::setw(8)
     << "miou" << std::setw(8) << "auc" << std::setw(11) << "psnr_rec"
     << std::setw(10) << "ssim_rec" << "\n";
  os << std::fixed;
  for (const EvalRow& row : r.rows) {
    os << std::left << std::setw(11) << row.attack << std::right
       << std::setw(8) << row.samples << std::setprecision(2) << std::setw(11)
       << row.psnr_embed << std::setprecision(4) << std::setw(10)
       << row.ssim_embed << std::setprecision(2) << std::setw(9) << row.bit_acc
       << std::setprecision(4) << std::setw(8) << row.f1 << std::setw(8)
       << row.miou;
    if (row.auc_defined)
      os << std::setw(8) << row.auc;
    else
      os << std::setw(8) << "-";
    os << std::setprecision(2) << std::setw(11) << row.psnr_rec
       << std::setprecision(4) << std::setw(10) << row.ssim_rec << "\n";
  }
  return os.str();
}

}  // namespace provmark
