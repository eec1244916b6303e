#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sredge/autodiff.hpp"
#include "sredge/params.hpp"

namespace sredge {

/// Resolves parameter names to tape nodes for one forward pass.
template <typename T>
struct Binder {
  Tape<T>& tape;
  const ParameterSet<T>& params;
  bool trainable = true;

  Var<T> get(const std::string& name) const { return tape.param(name, params.at(name), trainable); }
};

struct Conv2d {
  std::string name;
  std::size_t in = 0, out = 0, kernel = 3;
  int stride = 1;
  int padding = 1;
  Init weight_init = Init::kaiming_uniform;
  double weight_fill = 0.0;

  static Conv2d k3(std::string name, std::size_t in, std::size_t out, int stride = 1) {
    return Conv2d{std::move(name), in, out, 3, stride, 1};
  }
  static Conv2d k1(std::string name, std::size_t in, std::size_t out) { return Conv2d{std::move(name), in, out, 1, 1, 0}; }

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
  void declare(std::vector<ParamSpec>& specs) const;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> x) const;
};

/// EDSR residual block without normalisation: x + res_scale * conv(relu(conv(x))).
struct ResBlock {
  Conv2d conv1, conv2;
  double res_scale = 1.0;

  ResBlock(const std::string& name, std::size_t feats, double res_scale);
  void declare(std::vector<ParamSpec>& specs) const;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> x) const;
};

/// Pyramid pooling: for each bin b, average-pool to b x b, 1x1 conv to
/// width/|bins| channels, bilinear back to the input extent; concatenate
/// with the input (2*width channels) and fuse with a 1x1 conv to `width`.
struct PyramidPool {
  std::string name;
  std::size_t width = 0;
  std::vector<std::size_t> bins;
  /// Bins larger than the feature map shrink to its extent instead of
  /// raising a dimension error.
  bool clamp_bins = false;
  std::vector<Conv2d> branches;
  Conv2d fuse;

  PyramidPool(std::string name, std::size_t width, std::vector<std::size_t> bins, bool clamp_bins = false);
  std::size_t branch_width() const { return width / bins.size(); }
  void declare(std::vector<ParamSpec>& specs) const;

  template <typename T>
  Var<T> operator()(const Binder<T>& b, Var<T> x) const;
};

}  // namespace sredge
