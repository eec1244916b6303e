#include "sredge/benchmark.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "sredge/errors.hpp"
#include "sredge/imageproc.hpp"
#include "sredge/mergenet.hpp"
#include "sredge/training.hpp"

namespace fs = std::filesystem;

namespace sredge {

BenchmarkTable evaluate_benchmark(const fs::path& pred_dir, const fs::path& gt_dir, int scale) {
  const std::vector<std::string> pred = list_png_stems(pred_dir);
  const std::vector<std::string> gt = list_png_stems(gt_dir);
  const std::set<std::string> pred_set(pred.begin(), pred.end()), gt_set(gt.begin(), gt.end());
  BenchmarkTable t;
  for (const std::string& n : pred)
    if (!gt_set.count(n)) t.orphan_pred.push_back(n);
  for (const std::string& n : gt)
    if (!pred_set.count(n)) t.orphan_gt.push_back(n);

  double sp = 0.0, ss = 0.0;
  for (const std::string& n : gt) {
    if (!pred_set.count(n)) continue;
    const ImageBuffer a = load_png(pred_dir / (n + ".png"));
    const ImageBuffer b = load_png(gt_dir / (n + ".png"));
    if (a.height() != b.height() || a.width() != b.width()) {
      throw SizeError(n + ": prediction " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                      " vs ground truth " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
    }
    BenchmarkRow r{n, imageproc::psnr(a, b, scale), imageproc::ssim(a, b)};
    sp += r.psnr;
    ss += r.ssim;
    t.rows.push_back(r);
  }
  if (!t.rows.empty()) {
    t.mean_psnr = sp / static_cast<double>(t.rows.size());
    t.mean_ssim = ss / static_cast<double>(t.rows.size());
  }
  return t;
}

std::string format_metric(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string format_table(const BenchmarkTable& t) {
  std::size_t w = 5;
  for (const BenchmarkRow& r : t.rows) w = std::max(w, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "image" << "  " << std::right << std::setw(9) << "PSNR" << "  "
     << std::setw(7) << "SSIM" << "\n";
  for (const BenchmarkRow& r : t.rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.name << "  " << std::right << std::setw(9) << format_metric(r.psnr, 3)
       << "  " << std::setw(7) << format_metric(r.ssim, 4) << "\n";
  }
  os << std::left << std::setw(static_cast<int>(w)) << "mean" << "  " << std::right << std::setw(9)
     << format_metric(t.mean_psnr, 3) << "  " << std::setw(7) << format_metric(t.mean_ssim, 4) << "\n";
  return os.str();
}

std::string format_csv(const BenchmarkTable& t) {
  std::ostringstream os;
  os << "image,psnr,ssim\n";
  for (const BenchmarkRow& r : t.rows) os << r.name << ',' << format_metric(r.psnr, 6) << ',' << format_metric(r.ssim, 6) << '\n';
  os << "mean," << format_metric(t.mean_psnr, 6) << ',' << format_metric(t.mean_ssim, 6) << '\n';
  return os.str();
}

AblationReport run_edge_skip_ablation(const KeyValues& kv, const fs::path& data, const fs::path& eval, const fs::path& out,
                                      std::ostream* log) {
  KeyValues base = kv;
  base.set("train.module", "merge");
  const TrainConfig tc = TrainConfig::from(base);
  const MergeDataset test = load_merge_dataset(eval.empty() ? data : eval, tc.scale);

  AblationReport rep;
  for (bool skip : {true, false}) {
    KeyValues v = base;
    v.set("merge.edge_skip", skip ? "true" : "false");
    const fs::path dir = out / (skip ? "with_edge_skip" : "without_edge_skip");
    if (log) *log << "training MergeNet " << (skip ? "with" : "without") << " edge skip" << std::endl;
    train_module(v, data, dir, false, log);
    const Checkpoint ck = load_checkpoint(dir / "merge.ckpt");
    const MergeNet net(MergeConfig::from(ck.config));
    double p = 0.0, s = 0.0;
    for (std::size_t i = 0; i < test.hr.size(); ++i) {
      const ImageBuffer pred = quantize8(net.merge(ck.params, test.sr[i], test.edge[i]));
      p += imageproc::psnr(pred, test.hr[i], tc.scale);
      s += imageproc::ssim(pred, test.hr[i]);
    }
    const double n = static_cast<double>(test.hr.size());
    (skip ? rep.psnr_with : rep.psnr_without) = p / n;
    (skip ? rep.ssim_with : rep.ssim_without) = s / n;
  }
  return rep;
}

std::string format_ablation(const AblationReport& r) {
  std::ostringstream os;
  os << "variant              PSNR     SSIM\n";
  os << "with edge skip    " << std::setw(7) << format_metric(r.psnr_with, 3) << "  " << format_metric(r.ssim_with, 4) << "\n";
  os << "without edge skip " << std::setw(7) << format_metric(r.psnr_without, 3) << "  " << format_metric(r.ssim_without, 4)
     << "\n";
  os << "delta (with-without) PSNR " << format_metric(r.delta_psnr(), 3) << " dB, SSIM " << format_metric(r.delta_ssim(), 4) << "\n";
  return os.str();
}

}  // namespace sredge
