#include "sredge/layers.hpp"

#include <algorithm>

#include "sredge/errors.hpp"
#include "sredge/ops.hpp"

namespace sredge {

void Conv2d::declare(std::vector<ParamSpec>& specs) const {
  specs.push_back({weight_name(), Shape{out, in, kernel, kernel}, weight_init, weight_fill});
  specs.push_back({bias_name(), Shape{out}, Init::zeros, 0.0});
}

template <typename T>
Var<T> Conv2d::operator()(const Binder<T>& b, Var<T> x) const {
  if (x.shape().size() == 4 && x.shape()[1] != in) {
    throw DimensionError(name + ": expected " + std::to_string(in) + " input channels, got " + std::to_string(x.shape()[1]));
  }
  return ops::conv2d(x, b.get(weight_name()), std::optional<Var<T>>(b.get(bias_name())), stride, padding);
}

ResBlock::ResBlock(const std::string& name, std::size_t feats, double scale)
    : conv1(Conv2d::k3(name + ".conv1", feats, feats)), conv2(Conv2d::k3(name + ".conv2", feats, feats)), res_scale(scale) {}

void ResBlock::declare(std::vector<ParamSpec>& specs) const {
  conv1.declare(specs);
  conv2.declare(specs);
}

template <typename T>
Var<T> ResBlock::operator()(const Binder<T>& b, Var<T> x) const {
  Var<T> r = conv2(b, ops::relu(conv1(b, x)));
  if (res_scale != 1.0) r = ops::scalar_mul(r, res_scale);
  return ops::add(x, r);
}

PyramidPool::PyramidPool(std::string n, std::size_t w, std::vector<std::size_t> bs, bool clamp)
    : name(std::move(n)), width(w), bins(std::move(bs)), clamp_bins(clamp) {
  if (bins.empty() || width % bins.size() != 0) {
    throw DimensionError(name + ": width " + std::to_string(width) + " not divisible by " + std::to_string(bins.size()) +
                         " pyramid bins");
  }
  for (std::size_t i = 0; i < bins.size(); ++i) {
    branches.push_back(Conv2d::k1(name + ".branch" + std::to_string(i), width, branch_width()));
  }
  fuse = Conv2d::k1(name + ".fuse", width + bins.size() * branch_width(), width);
}

void PyramidPool::declare(std::vector<ParamSpec>& specs) const {
  for (const Conv2d& c : branches) c.declare(specs);
  fuse.declare(specs);
}

template <typename T>
Var<T> PyramidPool::operator()(const Binder<T>& b, Var<T> x) const {
  const Shape& s = x.shape();
  const std::size_t h = s.at(2), w = s.at(3);
  std::vector<Var<T>> parts{x};
  for (std::size_t i = 0; i < bins.size(); ++i) {
    std::size_t bh = bins[i], bw = bins[i];
    if (clamp_bins) {
      bh = std::min(bh, h);
      bw = std::min(bw, w);
    } else if (bh > h || bw > w) {
      throw DimensionError(name + ": spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                           " is below pyramid bin " + std::to_string(bins[i]));
    }
    Var<T> pooled = ops::adaptive_avg_pool2d(x, bh, bw);
    parts.push_back(ops::bilinear_upsample(branches[i](b, pooled), h, w));
  }
  return fuse(b, ops::channel_concat<T>(std::span<const Var<T>>(parts)));
}

template Var<float> Conv2d::operator()(const Binder<float>&, Var<float>) const;
template Var<double> Conv2d::operator()(const Binder<double>&, Var<double>) const;
template Var<float> ResBlock::operator()(const Binder<float>&, Var<float>) const;
template Var<double> ResBlock::operator()(const Binder<double>&, Var<double>) const;
template Var<float> PyramidPool::operator()(const Binder<float>&, Var<float>) const;
template Var<double> PyramidPool::operator()(const Binder<double>&, Var<double>) const;

}  // namespace sredge
