#include "sredge/srnet.hpp"

#include <algorithm>

#include "sredge/errors.hpp"
#include "sredge/ops.hpp"

namespace sredge {
namespace {

int log2_scale(int scale) {
  switch (scale) {
    case 2:
      return 1;
    case 4:
      return 2;
    case 8:
      return 3;
    default:
      throw ConfigError("scale must be 2, 4 or 8 (got " + std::to_string(scale) + ")");
  }
}

}  // namespace

UpsampleHead::UpsampleHead(const std::string& name, std::size_t feats, int scale, const std::vector<std::size_t>& bins)
    : pool(name + ".pool", feats, bins) {
  for (int i = 0; i < log2_scale(scale); ++i) stages.push_back(Conv2d::k3(name + ".conv" + std::to_string(i), feats, 4 * feats));
}

void UpsampleHead::declare(std::vector<ParamSpec>& specs) const {
  pool.declare(specs);
  for (const Conv2d& c : stages) c.declare(specs);
}

template <typename T>
Var<T> UpsampleHead::operator()(const Binder<T>& b, Var<T> x) const {
  Var<T> y = pool(b, x);
  for (const Conv2d& c : stages) y = ops::pixel_shuffle(c(b, y), 2);
  return y;
}

EdsrStar::EdsrStar(SRConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      head_(Conv2d::k3("sr.head", 3, cfg_.n_feats)),
      body_tail_(Conv2d::k3("sr.body_tail", cfg_.n_feats, cfg_.n_feats)),
      up_("sr.up", cfg_.n_feats, cfg_.scale, cfg_.pyramid_bins),
      tail_(Conv2d::k3("sr.tail", cfg_.n_feats, 3)) {
  for (std::size_t i = 0; i < cfg_.n_resblocks; ++i) body_.emplace_back("sr.body" + std::to_string(i), cfg_.n_feats, cfg_.res_scale);
}

std::vector<ParamSpec> EdsrStar::param_specs() const {
  std::vector<ParamSpec> specs;
  head_.declare(specs);
  for (const ResBlock& r : body_) r.declare(specs);
  body_tail_.declare(specs);
  up_.declare(specs);
  tail_.declare(specs);
  return specs;
}

template <typename T>
Var<T> EdsrStar::head_features(const Binder<T>& b, Var<T> lr) const {
  const Shape& s = lr.shape();
  if (s.size() != 4 || s[1] != 3) throw DimensionError("EDSR*: expected (N,3,H,W) input, got " + shape_str(s));
  const std::size_t need = *std::max_element(cfg_.pyramid_bins.begin(), cfg_.pyramid_bins.end());
  if (s[2] < need || s[3] < need) {
    throw DimensionError("EDSR*: LR extent " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                         " is below the largest pyramid bin " + std::to_string(need));
  }
  return head_(b, lr);
}

template <typename T>
Var<T> EdsrStar::trunk(const Binder<T>& b, Var<T> lr) const {
  Var<T> h = head_features(b, lr);
  Var<T> x = h;
  for (const ResBlock& r : body_) x = r(b, x);
  return ops::add(body_tail_(b, x), h);
}

template <typename T>
Var<T> EdsrStar::forward(const Binder<T>& b, Var<T> lr) const {
  return tail_(b, up_(b, trunk(b, lr)));
}

ImageBuffer EdsrStar::upscale(const ParameterSet<float>& params, const ImageBuffer& lr) const {
  if (lr.channels() != 3) throw DimensionError("EDSR*: expected an RGB image");
  Tape<float> tape;
  Binder<float> b{tape, params, false};
  ImageBuffer out = from_tensor(forward(b, tape.constant(to_tensor<float>(lr))).value());
  out.clamp01();
  return out;
}

template Var<float> UpsampleHead::operator()(const Binder<float>&, Var<float>) const;
template Var<double> UpsampleHead::operator()(const Binder<double>&, Var<double>) const;
template Var<float> EdsrStar::forward(const Binder<float>&, Var<float>) const;
template Var<double> EdsrStar::forward(const Binder<double>&, Var<double>) const;
template Var<float> EdsrStar::trunk(const Binder<float>&, Var<float>) const;
template Var<double> EdsrStar::trunk(const Binder<double>&, Var<double>) const;
template Var<float> EdsrStar::head_features(const Binder<float>&, Var<float>) const;
template Var<double> EdsrStar::head_features(const Binder<double>&, Var<double>) const;

}  // namespace sredge
