#include "sredge/edgenet.hpp"

#include <algorithm>
#include <fstream>

#include "sredge/checkpoint.hpp"
#include "sredge/errors.hpp"
#include "sredge/imageproc.hpp"
#include "sredge/ops.hpp"

namespace sredge {

std::string to_string(EdgeBranch b) { return b == EdgeBranch::classifier ? "classifier" : "regressor"; }

// ---------------------------------------------------------------------------
// DenseResBlock

DenseResBlock::DenseResBlock(std::string n, std::size_t in_w, std::vector<std::size_t> priors, std::size_t w)
    : name(std::move(n)), in_width(in_w), prior_widths(std::move(priors)), width(w) {
  has_projection = !prior_widths.empty() || in_width != width;
  proj = Conv2d::k1(name + ".proj", projection_inputs(), width);
  conv1 = Conv2d::k3(name + ".conv1", width, width);
  conv2 = Conv2d::k3(name + ".conv2", width, width);
}

std::size_t DenseResBlock::projection_inputs() const {
  std::size_t c = in_width;
  for (std::size_t p : prior_widths) c += p;
  return c;
}

void DenseResBlock::declare(std::vector<ParamSpec>& specs) const {
  if (has_projection) proj.declare(specs);
  conv1.declare(specs);
  conv2.declare(specs);
}

template <typename T>
Var<T> DenseResBlock::operator()(const Binder<T>& b, Var<T> x, const std::vector<Var<T>>& priors) const {
  if (priors.size() != prior_widths.size()) {
    throw DimensionError(name + ": expected " + std::to_string(prior_widths.size()) + " dense inputs, got " +
                         std::to_string(priors.size()));
  }
  Var<T> p = x;
  if (has_projection) {
    std::vector<Var<T>> parts{x};
    for (const Var<T>& q : priors) {
      if (q.shape().at(2) != x.shape().at(2) || q.shape().at(3) != x.shape().at(3)) {
        throw DimensionError(name + ": dense input extent " + shape_str(q.shape()) + " differs from " + shape_str(x.shape()) +
                             " on axes H/W");
      }
      parts.push_back(q);
    }
    p = proj(b, parts.size() == 1 ? x : ops::channel_concat<T>(std::span<const Var<T>>(parts)));
  }
  return ops::add(p, conv2(b, ops::relu(conv1(b, p))));
}

// ---------------------------------------------------------------------------
// SideOutput

template <typename T>
Var<T> SideOutput::operator()(const Binder<T>& b, Var<T> stage_feat, const std::vector<Var<T>>& earlier, std::size_t out_h,
                              std::size_t out_w) const {
  const std::size_t h = stage_feat.shape()[2], w = stage_feat.shape()[3];
  std::vector<Var<T>> parts{stage_feat};
  for (const Var<T>& e : earlier) parts.push_back(e.shape()[2] == h && e.shape()[3] == w ? e : ops::adaptive_avg_pool2d(e, h, w));
  Var<T> y = reduce(b, parts.size() == 1 ? stage_feat : ops::channel_concat<T>(std::span<const Var<T>>(parts)));
  for (std::size_t j = 0; j < pools.size(); ++j) y = ops::pixel_shuffle(expand[j](b, pools[j](b, y)), 2);
  if (y.shape()[2] != out_h || y.shape()[3] != out_w) y = ops::bilinear_upsample(y, out_h, out_w);
  if (to_logit) y = (*to_logit)(b, y);
  return y;
}

// ---------------------------------------------------------------------------
// DenseEdgeNet

DenseEdgeNet::DenseEdgeNet(EdgeNetConfig cfg) : cfg_((cfg.validate(), std::move(cfg))) {
  const std::size_t n = cfg_.n_stages;
  const std::size_t sw = cfg_.side_width;
  stem_ = Conv2d::k3("edge.stem", 3, stage_width(0));
  for (std::size_t s = 0; s < n; ++s) {
    const std::string st = "edge.s" + std::to_string(s);
    if (s == 0) {
      down_.emplace_back(std::nullopt);
    } else {
      down_.emplace_back(Conv2d::k3(st + ".down", stage_width(s - 1), stage_width(s), 2));
    }
    std::vector<DenseResBlock> stage;
    for (std::size_t k = 0; k < cfg_.blocks_per_stage; ++k) {
      stage.emplace_back(st + ".b" + std::to_string(k), stage_width(s), std::vector<std::size_t>(k, stage_width(s)),
                         stage_width(s));
    }
    blocks_.push_back(std::move(stage));

    SideOutput side;
    side.stage = s;
    const std::string sn = "edge.side" + std::to_string(s);
    if (s == 0) {
      side.reduce = Conv2d::k1(sn, stage_width(0), 1);
    } else {
      side.reduce = Conv2d::k1(sn + ".reduce", stage_width(s) + s, sw);
      for (std::size_t j = 0; j < s; ++j) {
        const std::string un = sn + ".up" + std::to_string(j);
        side.pools.emplace_back(un + ".pool", sw, cfg_.side_bins, true);
        side.expand.push_back(Conv2d::k3(un + ".conv", sw, 4 * sw));
      }
      side.to_logit = Conv2d::k1(sn + ".logit", sw, 1);
    }
    sides_.push_back(std::move(side));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Conv2d c = Conv2d::k1("edge.short" + std::to_string(i), n - i, 1);
    c.weight_init = Init::identity_first;
    short_.push_back(c);
  }
  fuse_ = Conv2d::k1("edge.fuse", n, 1);
  fuse_.weight_init = Init::constant;
  fuse_.weight_fill = 1.0 / static_cast<double>(n);
}

std::vector<ParamSpec> DenseEdgeNet::param_specs() const {
  std::vector<ParamSpec> specs;
  stem_.declare(specs);
  for (std::size_t s = 0; s < cfg_.n_stages; ++s) {
    if (down_[s]) down_[s]->declare(specs);
    for (const DenseResBlock& blk : blocks_[s]) blk.declare(specs);
  }
  for (const SideOutput& side : sides_) {
    side.reduce.declare(specs);
    for (std::size_t j = 0; j < side.pools.size(); ++j) {
      side.pools[j].declare(specs);
      side.expand[j].declare(specs);
    }
    if (side.to_logit) side.to_logit->declare(specs);
  }
  for (const Conv2d& c : short_) c.declare(specs);
  fuse_.declare(specs);
  return specs;
}

template <typename T>
std::vector<Var<T>> DenseEdgeNet::backbone(const Binder<T>& b, Var<T> x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3) throw DimensionError("edge net: expected (N,3,H,W) input, got " + shape_str(s));
  const std::size_t m = std::size_t{1} << (cfg_.n_stages - 1);
  if (s[2] % m != 0 || s[3] % m != 0 || s[2] == 0 || s[3] == 0) {
    throw DimensionError("edge net: input extent " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                         " is not divisible by " + std::to_string(m) + " on axes H/W");
  }
  std::vector<Var<T>> feats;
  Var<T> h = stem_(b, x);
  for (std::size_t st = 0; st < cfg_.n_stages; ++st) {
    if (down_[st]) h = (*down_[st])(b, h);
    std::vector<Var<T>> outs;
    Var<T> y = h;
    for (const DenseResBlock& blk : blocks_[st]) {
      y = blk(b, h, outs);
      outs.push_back(y);
    }
    feats.push_back(y);
    h = y;
  }
  return feats;
}

template <typename T>
EdgeForward<T> DenseEdgeNet::forward(const Binder<T>& b, Var<T> x) const {
  EdgeForward<T> f;
  f.stages = backbone(b, x);
  const std::size_t out_h = x.shape()[2], out_w = x.shape()[3];
  for (std::size_t s = 0; s < cfg_.n_stages; ++s) f.sides.push_back(sides_[s](b, f.stages[s], f.sides, out_h, out_w));
  for (std::size_t i = 0; i < cfg_.n_stages; ++i) {
    if (i + 1 == cfg_.n_stages) {
      f.refined.push_back(f.sides[i]);
      continue;
    }
    std::vector<Var<T>> parts(f.sides.begin() + static_cast<std::ptrdiff_t>(i), f.sides.end());
    f.refined.push_back(short_[i](b, ops::channel_concat<T>(std::span<const Var<T>>(parts))));
  }
  f.fused = fuse_(b, ops::channel_concat<T>(std::span<const Var<T>>(f.refined)));
  return f;
}

template <typename T>
Var<T> DenseEdgeNet::loss(const EdgeForward<T>& f, Var<T> target, EdgeBranch branch) const {
  auto one = [&](Var<T> logits) {
    return branch == EdgeBranch::classifier ? ops::loss_bce_logits(logits, target) : ops::loss_l1(logits, target);
  };
  Var<T> sides = one(f.refined[0]);
  for (std::size_t i = 1; i < f.refined.size(); ++i) sides = ops::add(sides, one(f.refined[i]));
  return ops::add(one(f.fused), ops::scalar_mul(sides, 1.0 / static_cast<double>(f.refined.size())));
}

EdgeMap DenseEdgeNet::predict(const ParameterSet<float>& params, const ImageBuffer& img, EdgeBranch branch) const {
  if (img.channels() != 3) throw DimensionError("edge net: expected an RGB image");
  const std::size_t m = std::size_t{1} << (cfg_.n_stages - 1);
  const std::size_t ph = std::max(m, (img.height() + m - 1) / m * m);
  const std::size_t pw = std::max(m, (img.width() + m - 1) / m * m);
  Tape<float> tape;
  Binder<float> b{tape, params, false};
  Var<float> fused = forward(b, tape.constant(to_tensor<float>(reflect_pad(img, ph, pw)))).fused;
  if (branch == EdgeBranch::classifier) fused = ops::sigmoid(fused);
  EdgeMap out = crop(from_tensor(fused.value()), 0, 0, img.height(), img.width());
  out.clamp01();
  return out;
}

// ---------------------------------------------------------------------------
// Free functions

namespace {

std::size_t mirror(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * n - 2;
  i %= period;
  return i < n ? i : period - i;
}

void require_same_extent(const EdgeMap& a, const EdgeMap& b, const char* what) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": extent " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " differs from " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

}  // namespace

ImageBuffer reflect_pad(const ImageBuffer& img, std::size_t out_h, std::size_t out_w) {
  if (out_h < img.height() || out_w < img.width()) throw SizeError("reflect_pad: target smaller than the image");
  ImageBuffer out(img.channels(), out_h, out_w);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = mirror(y, img.height());
      for (std::size_t x = 0; x < out_w; ++x) out.at(c, y, x) = img.at(c, sy, mirror(x, img.width()));
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > img.height() || x0 + w > img.width()) throw SizeError("crop: window exceeds the image");
  ImageBuffer out(img.channels(), h, w);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

EdgeMap branch_average(const EdgeMap& classifier, const EdgeMap& regressor) {
  require_same_extent(classifier, regressor, "branch_average");
  EdgeMap out = classifier;
  const auto& r = regressor.samples();
  auto& o = out.samples();
  // Exact in double, so the result is symmetric and idempotent bit for bit.
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>((static_cast<double>(o[i]) + r[i]) * 0.5);
  return out;
}

EdgeMap multi_complexity_fuse(const std::vector<EdgeMap>& maps) {
  if (maps.empty()) throw UsageError("multi_complexity_fuse: no maps");
  for (const EdgeMap& m : maps) require_same_extent(maps[0], m, "multi_complexity_fuse");
  EdgeMap out = maps[0];
  std::vector<float> vals(maps.size());
  for (std::size_t i = 0; i < out.samples().size(); ++i) {
    for (std::size_t k = 0; k < maps.size(); ++k) vals[k] = maps[k].samples()[i];
    // Summing in sorted order makes the mean independent of member order.
    std::sort(vals.begin(), vals.end());
    double s = 0.0;
    for (float v : vals) s += v;
    out.samples()[i] = static_cast<float>(s / static_cast<double>(maps.size()));
  }
  return out;
}

EdgeTargets make_edge_target(const ImageBuffer& hr, const EdgeNetConfig& cfg) {
  const Plane y = imageproc::luma255(hr);
  const Plane bin = imageproc::canny_relative(y, cfg.canny_sigma, cfg.canny_low, cfg.canny_high);
  Plane soft = imageproc::gaussian_blur(bin, cfg.gt_sigma);
  const double peak = *std::max_element(soft.v.begin(), soft.v.end());
  if (peak > 0.0) {
    for (double& v : soft.v) v /= peak;
  }
  return {image_from(bin), image_from(soft)};
}

// ---------------------------------------------------------------------------
// EdgeEnsemble

EdgeEnsemble::EdgeEnsemble(std::vector<EdgeMember> members) : members_(std::move(members)) {}

EdgeEnsemble EdgeEnsemble::load(const std::filesystem::path& manifest) {
  const KeyValues kv = KeyValues::load(manifest);
  std::map<std::size_t, std::pair<std::string, std::string>> entries;
  for (const auto& [key, value] : kv.entries()) {
    const auto a = key.find('.'), z = key.rfind('.');
    if (key.rfind("member.", 0) != 0 || a == z) throw ConfigError(manifest.string() + ": unexpected key '" + key + "'");
    const std::string nr_text = key.substr(a + 1, z - a - 1);
    const std::string branch = key.substr(z + 1);
    std::size_t nr = 0;
    try {
      nr = std::stoul(nr_text);
    } catch (const std::exception&) {
      throw ConfigError(manifest.string() + ": bad member width in '" + key + "'");
    }
    if (branch == "classifier") {
      entries[nr].first = value;
    } else if (branch == "regressor") {
      entries[nr].second = value;
    } else {
      throw ConfigError(manifest.string() + ": unknown branch in '" + key + "'");
    }
  }
  if (entries.empty()) throw ConfigError(manifest.string() + ": no ensemble members");
  const std::filesystem::path dir = manifest.parent_path();
  std::vector<EdgeMember> members;
  for (const auto& [nr, paths] : entries) {
    if (paths.first.empty() || paths.second.empty()) {
      throw ConfigError(manifest.string() + ": member " + std::to_string(nr) + " needs both a classifier and a regressor");
    }
    const Checkpoint c = load_checkpoint(dir / paths.first);
    const Checkpoint r = load_checkpoint(dir / paths.second);
    EdgeMember m{EdgeNetConfig::from(c.config), c.params, r.params};
    if (m.cfg.nr != nr) {
      throw ConfigError(manifest.string() + ": member " + std::to_string(nr) + " checkpoint has edge.nr=" + std::to_string(m.cfg.nr));
    }
    // Fail fast on a checkpoint that does not match its architecture.
    const DenseEdgeNet net(m.cfg);
    for (const ParamSpec& s : net.param_specs()) {
      for (const ParameterSet<float>* p : {&m.classifier, &m.regressor}) {
        if (p->at(s.name).shape() != s.shape) throw FormatError(manifest.string() + ": parameter " + s.name + " has the wrong shape");
      }
    }
    members.push_back(std::move(m));
  }
  return EdgeEnsemble(std::move(members));
}

void EdgeEnsemble::write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
  KeyValues kv;
  for (const ManifestEntry& e : entries) {
    kv.set("member." + std::to_string(e.nr) + ".classifier", e.classifier);
    kv.set("member." + std::to_string(e.nr) + ".regressor", e.regressor);
  }
  std::ofstream f(manifest, std::ios::binary);
  if (!f) throw IoError("cannot write " + manifest.string());
  f << kv.to_text();
  if (!f) throw IoError("write failed: " + manifest.string());
}

EdgeMap EdgeEnsemble::predict(const ImageBuffer& img) const {
  if (members_.empty()) throw UsageError("edge ensemble has no members");
  std::vector<EdgeMap> maps;
  for (const EdgeMember& m : members_) {
    const DenseEdgeNet net(m.cfg);
    maps.push_back(branch_average(net.predict(m.classifier, img, EdgeBranch::classifier),
                                  net.predict(m.regressor, img, EdgeBranch::regressor)));
  }
  return multi_complexity_fuse(maps);
}

#define SREDGE_INSTANTIATE_EDGE(T)                                                                                       \
  template Var<T> DenseResBlock::operator()(const Binder<T>&, Var<T>, const std::vector<Var<T>>&) const;                \
  template Var<T> SideOutput::operator()(const Binder<T>&, Var<T>, const std::vector<Var<T>>&, std::size_t, std::size_t) \
      const;                                                                                                             \
  template std::vector<Var<T>> DenseEdgeNet::backbone(const Binder<T>&, Var<T>) const;                                  \
  template EdgeForward<T> DenseEdgeNet::forward(const Binder<T>&, Var<T>) const;                                        \
  template Var<T> DenseEdgeNet::loss(const EdgeForward<T>&, Var<T>, EdgeBranch) const;

SREDGE_INSTANTIATE_EDGE(float)
SREDGE_INSTANTIATE_EDGE(double)

}  // namespace sredge
