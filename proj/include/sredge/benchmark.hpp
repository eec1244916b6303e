#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sredge/config.hpp"

namespace sredge {

struct BenchmarkRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  /// Files present on only one side.
  std::vector<std::string> orphan_pred, orphan_gt;
  bool complete() const { return orphan_pred.empty() && orphan_gt.empty(); }
};

/// Pairs `<name>.png` files of the two directories and scores every pair
/// (Y-channel PSNR with a `scale`-pixel border crop, SSIM). Orphans are
/// reported, not scored.
BenchmarkTable evaluate_benchmark(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir, int scale);

/// "inf" for the identical-input sentinel, fixed decimals otherwise.
std::string format_metric(double v, int decimals);
std::string format_table(const BenchmarkTable& t);
std::string format_csv(const BenchmarkTable& t);

struct AblationReport {
  double psnr_with = 0.0, ssim_with = 0.0;
  double psnr_without = 0.0, ssim_without = 0.0;
  double delta_psnr() const { return psnr_with - psnr_without; }
  double delta_ssim() const { return ssim_with - ssim_without; }
};

/// Trains MergeNet with and without the edge skip connection from the same
/// seed and data (`hr/`, `sr_x<s>/`, `edge_x<s>/` under `data`) and scores
/// both on `eval` (same layout; defaults to `data`). Checkpoints go to
/// `out/with_edge_skip` and `out/without_edge_skip`.
AblationReport run_edge_skip_ablation(const KeyValues& kv, const std::filesystem::path& data, const std::filesystem::path& eval,
                                      const std::filesystem::path& out, std::ostream* log);

std::string format_ablation(const AblationReport& r);

}  // namespace sredge
