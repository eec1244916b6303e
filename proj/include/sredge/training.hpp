#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sredge/checkpoint.hpp"
#include "sredge/config.hpp"
#include "sredge/edgenet.hpp"
#include "sredge/image.hpp"
#include "sredge/mergenet.hpp"
#include "sredge/params.hpp"
#include "sredge/srnet.hpp"

namespace sredge {

/// Where a training patch came from and how it was transformed. The origin
/// is in LR pixels; the HR crop starts at scale * origin.
struct SampleRecord {
  std::size_t image = 0;
  std::size_t x = 0, y = 0;
  int rotation = 0;  // quarter turns counter-clockwise, 0..3
  bool hflip = false;
  bool vflip = false;
  bool operator==(const SampleRecord&) const = default;
};

/// Flips first (horizontal, then vertical), then rotation.
ImageBuffer augment(const ImageBuffer& img, int rotation, bool hflip, bool vflip);
ImageBuffer unaugment(const ImageBuffer& img, int rotation, bool hflip, bool vflip);

/// Uniform origin over an LR grid of lr_h x lr_w and a uniform augmentation.
SampleRecord draw_record(std::size_t lr_h, std::size_t lr_w, std::size_t lr_patch, Rng& rng);
/// Crop (scale*lr_patch)^2 at scale * origin, then augment.
ImageBuffer extract_patch(const ImageBuffer& img, const SampleRecord& rec, int scale, std::size_t lr_patch);

struct PatchPair {
  ImageBuffer lr, hr;
  SampleRecord record;
};

PatchPair sample_patch_pair(const ImageBuffer& lr, const ImageBuffer& hr, int scale, std::size_t lr_patch, Rng& rng);

/// Per-slot stream of a training step; independent of any other slot.
Rng sample_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t slot);

/// sr/merge: base_lr * 0.5^floor(epoch / halving_period); edge: base_lr.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// ---------------------------------------------------------------------------
// Datasets

/// Aligned LR/HR pairs: `hr/<name>.png` and `lr_x<s>/<name>.png`.
struct SrDataset {
  std::vector<std::string> names;
  std::vector<ImageBuffer> lr, hr;
  int scale = 2;
};

/// HR images and their Canny-derived targets.
struct EdgeDataset {
  std::vector<std::string> names;
  std::vector<ImageBuffer> hr;
  std::vector<EdgeTargets> targets;
  int scale = 2;
};

/// Frozen upstream outputs: `sr_x<s>/`, `edge_x<s>/` next to `hr/`.
struct MergeDataset {
  std::vector<std::string> names;
  std::vector<ImageBuffer> sr, edge, hr;
  int scale = 2;
};

SrDataset load_sr_dataset(const std::filesystem::path& dir, int scale);
EdgeDataset load_edge_dataset(const std::filesystem::path& dir, int scale, const EdgeNetConfig& cfg);
MergeDataset load_merge_dataset(const std::filesystem::path& dir, int scale);
EdgeDataset make_edge_dataset(std::vector<ImageBuffer> hr, int scale, const EdgeNetConfig& cfg);

/// Builds the scalar training loss of one optimizer step.
using StepLoss = std::function<Var<float>(const Binder<float>& b, std::uint64_t step)>;

StepLoss sr_step_loss(const EdsrStar& net, const SrDataset& data, const TrainConfig& cfg);
StepLoss edge_step_loss(const DenseEdgeNet& net, const EdgeDataset& data, const TrainConfig& cfg, EdgeBranch branch);
StepLoss merge_step_loss(const MergeNet& net, const MergeDataset& data, const TrainConfig& cfg);

/// Single-writer optimisation loop over a checkpoint state.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<ParamSpec> specs, StepLoss loss, KeyValues config_echo);

  /// Fresh parameters from the seed, or continue from `ck`.
  void start_fresh();
  void resume(Checkpoint ck);

  /// One step: forward, backward, ADAM at the scheduled rate. Returns the
  /// loss before the update. A non-finite loss raises NumericalError.
  double step();
  std::uint64_t total_steps() const { return cfg_.epochs * cfg_.steps_per_epoch; }
  const Checkpoint& state() const { return ck_; }
  Checkpoint& state() { return ck_; }

 private:
  TrainConfig cfg_;
  std::vector<ParamSpec> specs_;
  StepLoss loss_;
  Checkpoint ck_;
};

/// Parameter initialisation stream for a training run.
std::uint64_t init_seed(std::uint64_t seed);

struct TrainReport {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<double> final_losses;  // one per run
};

/// Runs `train` for one module. All module configs are read from `kv`
/// (defaults otherwise). With `resume`, each run continues from its
/// checkpoint in `out` when present. Losses go to `<run>_loss.csv`.
TrainReport train_module(const KeyValues& kv, const std::filesystem::path& data, const std::filesystem::path& out, bool resume,
                         std::ostream* log);

/// Names of the PNG files (without extension) in `dir`, sorted.
std::vector<std::string> list_png_stems(const std::filesystem::path& dir);

}  // namespace sredge
