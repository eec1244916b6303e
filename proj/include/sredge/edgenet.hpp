#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sredge/config.hpp"
#include "sredge/image.hpp"
#include "sredge/layers.hpp"

namespace sredge {

enum class EdgeBranch { classifier, regressor };
std::string to_string(EdgeBranch b);

/// Residual block over a 1x1 projection of concat(x, priors):
///   p = proj(concat(x, priors)); out = p + conv(relu(conv(p))).
/// Without priors and with matching widths the projection is skipped and the
/// block is a plain residual block.
struct DenseResBlock {
  std::string name;
  std::size_t in_width = 0;
  std::vector<std::size_t> prior_widths;
  std::size_t width = 0;
  bool has_projection = false;
  Conv2d proj, conv1, conv2;

  DenseResBlock(std::string name, std::size_t in_width, std::vector<std::size_t> prior_widths, std::size_t width);
  std::size_t projection_inputs() const;
  void declare(std::vector<ParamSpec>& specs) const;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> x, const std::vector<Var<T>>& priors) const;
};

/// Per-stage side output producing one full-resolution logit channel.
struct SideOutput {
  std::size_t stage = 0;  // number of x2 upsampling steps
  Conv2d reduce;
  std::vector<PyramidPool> pools;
  std::vector<Conv2d> expand;
  std::optional<Conv2d> to_logit;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> stage_feat, const std::vector<Var<T>>& earlier, std::size_t out_h,
                    std::size_t out_w) const;
};

template <typename T>
struct EdgeForward {
  std::vector<Var<T>> stages;
  std::vector<Var<T>> sides;    // raw side logits, full resolution
  std::vector<Var<T>> refined;  // after short connections
  Var<T> fused;                 // final logit map
};

/// Five-stage dense-residual edge detector with side outputs, shallow<-deep
/// short connections and a final 1x1 fusion. One instance describes one
/// (width, branch) member; the branches share the architecture but never
/// parameters.
class DenseEdgeNet {
 public:
  explicit DenseEdgeNet(EdgeNetConfig cfg);

  const EdgeNetConfig& config() const { return cfg_; }
  std::size_t stage_width(std::size_t s) const { return cfg_.nr * cfg_.stage_mults[s]; }
  std::vector<ParamSpec> param_specs() const;

  template <typename T>
  std::vector<Var<T>> backbone(const Binder<T>& b, Var<T> x) const;

  /// (N,3,H,W) with H, W divisible by 16.
  template <typename T>
  EdgeForward<T> forward(const Binder<T>& b, Var<T> x) const;

  /// Deep supervision: loss on the fused map plus the mean loss of the
  /// refined side maps. BCE on logits for the classifier, l1 for the
  /// regressor.
  template <typename T>
  Var<T> loss(const EdgeForward<T>& f, Var<T> target, EdgeBranch branch) const;

  /// Reflect-pads to a multiple of 16, runs the net and crops back. The
  /// classifier applies a sigmoid, the regressor clamps to [0,1].
  EdgeMap predict(const ParameterSet<float>& params, const ImageBuffer& img, EdgeBranch branch) const;

 private:
  EdgeNetConfig cfg_;
  Conv2d stem_;
  std::vector<std::optional<Conv2d>> down_;
  std::vector<std::vector<DenseResBlock>> blocks_;
  std::vector<SideOutput> sides_;
  std::vector<Conv2d> short_;
  Conv2d fuse_;
};

/// Mirror padding (without repeating the border sample) on the bottom and
/// right edges, periodic for pads longer than the image.
ImageBuffer reflect_pad(const ImageBuffer& img, std::size_t out_h, std::size_t out_w);
ImageBuffer crop(const ImageBuffer& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

EdgeMap branch_average(const EdgeMap& classifier, const EdgeMap& regressor);
EdgeMap multi_complexity_fuse(const std::vector<EdgeMap>& maps);

struct EdgeTargets {
  EdgeMap binary;
  EdgeMap soft;
};

/// Canny on the Y plane (relative thresholds) and its Gaussian-blurred,
/// peak-normalised soft version.
EdgeTargets make_edge_target(const ImageBuffer& hr, const EdgeNetConfig& cfg);

/// One trained member of the multi-complexity ensemble.
struct EdgeMember {
  EdgeNetConfig cfg;
  ParameterSet<float> classifier;
  ParameterSet<float> regressor;
};

/// Manifest: `member.<nr>.classifier=<ckpt>` / `member.<nr>.regressor=<ckpt>`,
/// paths relative to the manifest. Each checkpoint carries its own config.
class EdgeEnsemble {
 public:
  EdgeEnsemble() = default;
  explicit EdgeEnsemble(std::vector<EdgeMember> members);

  struct ManifestEntry {
    std::size_t nr = 0;
    std::string classifier, regressor;
  };

  static EdgeEnsemble load(const std::filesystem::path& manifest);
  static void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);

  const std::vector<EdgeMember>& members() const { return members_; }
  /// Mean over members of the branch-averaged prediction.
  EdgeMap predict(const ImageBuffer& img) const;

 private:
  std::vector<EdgeMember> members_;
};

}  // namespace sredge
