#include "sredge/mergenet.hpp"

#include "sredge/errors.hpp"
#include "sredge/ops.hpp"

namespace sredge {

MergeNet::MergeNet(MergeConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      head_(Conv2d::k3("merge.head", 4, cfg_.n_feats)),
      body_tail_(Conv2d::k3("merge.body_tail", cfg_.n_feats, cfg_.n_feats)),
      embed_(Conv2d::k3("merge.edge_embed", 1, cfg_.n_feats)),
      tail_(Conv2d::k3("merge.tail", cfg_.n_feats, 3)) {
  for (std::size_t i = 0; i < cfg_.n_resblocks; ++i) body_.emplace_back("merge.body" + std::to_string(i), cfg_.n_feats, cfg_.res_scale);
}

std::vector<ParamSpec> MergeNet::param_specs() const {
  std::vector<ParamSpec> specs;
  head_.declare(specs);
  for (const ResBlock& r : body_) r.declare(specs);
  body_tail_.declare(specs);
  if (cfg_.edge_skip) embed_.declare(specs);
  tail_.declare(specs);
  return specs;
}

template <typename T>
Var<T> MergeNet::edge_embed(const Binder<T>& b, Var<T> edge) const {
  return embed_(b, edge);
}

template <typename T>
Var<T> MergeNet::forward(const Binder<T>& b, Var<T> sr, Var<T> edge) const {
  const Shape& s = sr.shape();
  const Shape& e = edge.shape();
  if (s.size() != 4 || s[1] != 3) throw DimensionError("merge net: expected (N,3,H,W) SR input, got " + shape_str(s));
  if (e.size() != 4 || e[1] != 1) throw DimensionError("merge net: expected (N,1,H,W) edge input, got " + shape_str(e));
  if (s[0] != e[0] || s[2] != e[2] || s[3] != e[3]) {
    throw DimensionError("merge net: SR " + shape_str(s) + " and edge " + shape_str(e) + " differ on axes N/H/W");
  }
  Var<T> h = head_(b, ops::channel_concat<T>({sr, edge}));
  Var<T> x = h;
  for (const ResBlock& r : body_) x = r(b, x);
  Var<T> t = ops::add(body_tail_(b, x), h);
  if (cfg_.edge_skip) t = ops::add(t, edge_embed(b, edge));
  return tail_(b, t);
}

ImageBuffer MergeNet::merge(const ParameterSet<float>& params, const ImageBuffer& sr, const EdgeMap& edge) const {
  if (sr.channels() != 3 || edge.channels() != 1) throw DimensionError("merge net: expected an RGB image and a 1-channel edge map");
  Tape<float> tape;
  Binder<float> b{tape, params, false};
  ImageBuffer out =
      from_tensor(forward(b, tape.constant(to_tensor<float>(sr)), tape.constant(to_tensor<float>(edge))).value());
  out.clamp01();
  return out;
}

template Var<float> MergeNet::forward(const Binder<float>&, Var<float>, Var<float>) const;
template Var<double> MergeNet::forward(const Binder<double>&, Var<double>, Var<double>) const;
template Var<float> MergeNet::edge_embed(const Binder<float>&, Var<float>) const;
template Var<double> MergeNet::edge_embed(const Binder<double>&, Var<double>) const;

}  // namespace sredge
