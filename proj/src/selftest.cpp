#include "sredge/selftest.hpp"

#include <cstdio>
#include <ostream>

#include "sredge/edgenet.hpp"
#include "sredge/errors.hpp"
#include "sredge/gradcheck.hpp"
#include "sredge/mergenet.hpp"
#include "sredge/ops.hpp"
#include "sredge/srnet.hpp"

namespace sredge {
namespace {

constexpr double kLinear = 1e-6;
constexpr double kNonlinear = 1e-4;
// Linear maps have no truncation error, so a wide step only reduces rounding.
constexpr double kLinearStep = 1e-3;
constexpr double kStep = 1e-5;

Tensor<double> random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

/// sum(y * R) for a fixed random R: every output coordinate matters.
Var<double> project(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> r(y.shape());
  for (double& v : r.values()) v = rng.normal();
  return ops::sum(ops::mul(y, y.tape().constant(std::move(r))));
}

class Suite {
 public:
  Suite(std::string module, std::ostream* progress) : module_(std::move(module)), progress_(progress) {}

  void run(const std::string& name, double threshold, const Tensor<double>& x, const ScalarFn& f, double h,
           GradCheckOptions opts = {}) {
    opts.resolve_rtol = threshold;
    const GradCheckResult r = grad_check(f, x, h, opts);
    GradCheckCase c{module_, name, r.max_rel_error, threshold, r.checked, r.skipped_nonsmooth, r.skipped_unresolved};
    if (progress_) *progress_ << format_case(c) << std::endl;
    cases.push_back(c);
  }

  std::vector<GradCheckCase> cases;

 private:
  std::string module_;
  std::ostream* progress_;
};

GradCheckOptions kinked() {
  GradCheckOptions o;
  o.skip_nonsmooth = true;
  return o;
}

ParameterSet<double> params_for(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  return init_parameters(specs, seed).cast<double>();
}

// Random biases so that zero-initialised ones do not hide gradient paths.
void randomise_biases(ParameterSet<double>& p, Rng& rng) {
  for (const auto& [name, t] : p.tensors()) {
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".bias") == 0) p.set(name, random_tensor(t.shape(), rng, -0.1, 0.1));
  }
}

void core_suite(Suite& s) {
  Rng rng(11);
  const Tensor<double> x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor<double> w = random_tensor({4, 3, 3, 3}, rng);
  const Tensor<double> bias = random_tensor({4}, rng);

  s.run("conv2d+bias / input", kNonlinear, x, [&](Tape<double>& t, Var<double> v) {
    return project(ops::conv2d(v, t.constant(w), std::optional(t.constant(bias)), 2, 1), 1);
  }, kStep);
  s.run("conv2d+bias / weight", kNonlinear, w, [&](Tape<double>& t, Var<double> v) {
    return project(ops::conv2d(t.constant(x), v, std::optional(t.constant(bias)), 2, 1), 2);
  }, kStep);
  s.run("conv2d+bias / bias", kNonlinear, bias, [&](Tape<double>& t, Var<double> v) {
    return project(ops::conv2d(t.constant(x), t.constant(w), std::optional(v), 2, 1), 3);
  }, kStep);
  const Tensor<double> w1 = random_tensor({5, 3, 1, 1}, rng);
  s.run("conv2d 1x1 / input", kLinear, x, [&](Tape<double>& t, Var<double> v) {
    return project(ops::conv2d(v, t.constant(w1), std::optional<Var<double>>(), 1, 0), 4);
  }, kLinearStep);

  s.run("relu", kNonlinear, x, [](Tape<double>&, Var<double> v) { return project(ops::relu(v), 5); }, kStep, kinked());
  const Tensor<double> y = random_tensor(x.shape(), rng);
  s.run("add", kLinear, x, [&](Tape<double>& t, Var<double> v) { return project(ops::add(v, t.constant(y)), 6); }, kLinearStep);
  s.run("scalar_mul", kLinear, x, [](Tape<double>&, Var<double> v) { return project(ops::scalar_mul(v, -0.7), 7); }, kLinearStep);
  s.run("mul", kNonlinear, x, [&](Tape<double>& t, Var<double> v) { return project(ops::mul(v, ops::add(v, t.constant(y))), 8); },
        kStep);
  const Tensor<double> z = random_tensor({2, 1, 8, 8}, rng);
  s.run("channel_concat", kLinear, x, [&](Tape<double>& t, Var<double> v) {
    return project(ops::channel_concat<double>({t.constant(z), v, t.constant(z)}), 9);
  }, kLinearStep);
  s.run("sum", kLinear, x, [](Tape<double>&, Var<double> v) { return ops::sum(v); }, kLinearStep);
  s.run("mean", kLinear, x, [](Tape<double>&, Var<double> v) { return ops::mean(v); }, kLinearStep);
  s.run("sigmoid", kNonlinear, x, [](Tape<double>&, Var<double> v) { return project(ops::sigmoid(ops::scalar_mul(v, 3.0)), 10); },
        kStep);

  const Tensor<double> p5 = random_tensor({1, 2, 5, 7}, rng);
  s.run("adaptive_avg_pool2d", kLinear, p5, [](Tape<double>&, Var<double> v) {
    return project(ops::adaptive_avg_pool2d(v, 2, 3), 11);
  }, kLinearStep);
  const Tensor<double> sh = random_tensor({1, 8, 3, 3}, rng);
  s.run("pixel_shuffle", kLinear, sh, [](Tape<double>&, Var<double> v) { return project(ops::pixel_shuffle(v, 2), 12); },
        kLinearStep);
  const Tensor<double> ush = random_tensor({1, 2, 6, 4}, rng);
  s.run("pixel_unshuffle", kLinear, ush, [](Tape<double>&, Var<double> v) { return project(ops::pixel_unshuffle(v, 2), 13); },
        kLinearStep);
  const Tensor<double> bl = random_tensor({1, 2, 3, 4}, rng);
  s.run("bilinear_upsample", kLinear, bl, [](Tape<double>&, Var<double> v) {
    return project(ops::bilinear_upsample(v, 7, 5), 14);
  }, kLinearStep);

  const Tensor<double> target = random_tensor(x.shape(), rng);
  const Tensor<double> prob = random_tensor(x.shape(), rng, 0.0, 1.0);
  s.run("loss_l1", kNonlinear, x, [&](Tape<double>& t, Var<double> v) { return ops::loss_l1(v, t.constant(target)); }, kStep,
        kinked());
  s.run("loss_bce_logits", kNonlinear, x, [&](Tape<double>& t, Var<double> v) {
    return ops::loss_bce_logits(ops::scalar_mul(v, 4.0), t.constant(prob));
  }, kStep);
  const Tensor<double> xs = random_tensor({1, 3, 6, 6}, rng);
  const Tensor<double> ts = random_tensor({1, 4, 6, 6}, rng);
  s.run("conv2d -> relu -> l1", kNonlinear, xs, [&](Tape<double>& t, Var<double> v) {
    return ops::loss_l1(ops::relu(ops::conv2d(v, t.constant(w), std::optional(t.constant(bias)), 1, 1)), t.constant(ts));
  }, kStep, kinked());
}

void sr_suite(Suite& s) {
  Rng rng(21);
  SRConfig cfg;
  cfg.n_resblocks = 2;
  cfg.n_feats = 4;
  cfg.scale = 2;
  const EdsrStar net(cfg);
  ParameterSet<double> p = params_for(net.param_specs(), 5);
  randomise_biases(p, rng);

  std::vector<ParamSpec> rs;
  const ResBlock r0("t.r0", 4, 1.0), r1("t.r1", 4, 0.5);
  r0.declare(rs);
  r1.declare(rs);
  const ParameterSet<double> rp = params_for(rs, 6);
  const Tensor<double> f = random_tensor({1, 4, 6, 6}, rng);
  s.run("res_block x2 / input", kNonlinear, f, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, rp, true};
    return project(r1(b, r0(b, v)), 1);
  }, kStep, kinked());

  std::vector<ParamSpec> ps;
  const PyramidPool pool("t.pool", 4, {1, 2, 3, 6});
  pool.declare(ps);
  ParameterSet<double> pp = params_for(ps, 7);
  randomise_biases(pp, rng);
  s.run("pyramid_pool_block / input", kLinear, f, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, pp, true};
    return project(pool(b, v), 2);
  }, kLinearStep);

  std::vector<ParamSpec> us;
  const UpsampleHead head("t.up", 4, 4, {1, 2, 3, 6});
  head.declare(us);
  const ParameterSet<double> up = params_for(us, 8);
  s.run("upsample_head x4 / input", kLinear, f, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, up, true};
    return project(head(b, v), 3);
  }, kLinearStep);

  const Tensor<double> lr = random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0);
  s.run("edsr* forward / input", kNonlinear, lr, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, p, true};
    return project(net.forward(b, v), 4);
  }, kStep, kinked());
  for (const char* name : {"sr.head.weight", "sr.body0.conv1.weight", "sr.up.pool.branch3.weight", "sr.tail.bias"}) {
    s.run(std::string("edsr* forward / ") + name, kNonlinear, p.at(name), [&, name](Tape<double>& t, Var<double> v) {
      t.bind(name, v);
      Binder<double> b{t, p, true};
      return project(net.forward(b, t.constant(lr)), 5);
    }, kStep, kinked());
  }
}

EdgeNetConfig tiny_edge() {
  EdgeNetConfig c;
  c.nr = 2;
  c.complexities = {2};
  return c;
}

void edge_suite(Suite& s) {
  Rng rng(31);
  std::vector<ParamSpec> ds;
  const DenseResBlock b0("t.b0", 4, {}, 4), b1("t.b1", 4, {4}, 4), b2("t.b2", 4, {4, 4}, 4);
  for (const DenseResBlock* blk : {&b0, &b1, &b2}) blk->declare(ds);
  ParameterSet<double> dp = params_for(ds, 9);
  randomise_biases(dp, rng);
  const Tensor<double> f = random_tensor({1, 4, 5, 5}, rng);
  s.run("dense_res_block x3 / input", kNonlinear, f, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, dp, true};
    const Var<double> y0 = b0(b, v, {});
    const Var<double> y1 = b1(b, v, {y0});
    return project(b2(b, v, {y0, y1}), 1);
  }, kStep, kinked());

  const EdgeNetConfig cfg = tiny_edge();
  const DenseEdgeNet net(cfg);
  ParameterSet<double> p = params_for(net.param_specs(), 10);
  randomise_biases(p, rng);

  // Short connection followed by the final fusion: linear in the side maps.
  std::vector<ParamSpec> fs;
  Conv2d sc = Conv2d::k1("t.short", 3, 1), fu = Conv2d::k1("t.fuse", 4, 1);
  sc.declare(fs);
  fu.declare(fs);
  ParameterSet<double> fp = params_for(fs, 12);
  randomise_biases(fp, rng);
  const Tensor<double> sides = random_tensor({1, 3, 4, 4}, rng);
  s.run("short_connection + fuse_final / sides", kLinear, sides, [&](Tape<double>& t, Var<double> v) {
    Binder<double> b{t, fp, true};
    const Var<double> refined = sc(b, v);
    return project(fu(b, ops::channel_concat<double>({refined, v})), 2);
  }, kLinearStep);

  const Tensor<double> img = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor<double> binary({1, 1, 16, 16});
  Tensor<double> soft({1, 1, 16, 16});
  for (std::size_t i = 0; i < binary.numel(); ++i) {
    binary[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;
    soft[i] = rng.uniform();
  }
  for (EdgeBranch br : {EdgeBranch::classifier, EdgeBranch::regressor}) {
    const Tensor<double>& tgt = br == EdgeBranch::classifier ? binary : soft;
    const std::string tag = "dense_edge " + to_string(br);
    s.run(tag + " / input", kNonlinear, img, [&, br](Tape<double>& t, Var<double> v) {
      Binder<double> b{t, p, true};
      return net.loss(net.forward(b, v), t.constant(tgt), br);
    }, kStep, kinked());
    for (const char* name : {"edge.s0.b1.proj.weight", "edge.side4.up3.pool.fuse.weight", "edge.short0.weight", "edge.fuse.weight"}) {
      s.run(tag + " / " + name, kNonlinear, p.at(name), [&, br, name](Tape<double>& t, Var<double> v) {
        t.bind(name, v);
        Binder<double> b{t, p, true};
        return net.loss(net.forward(b, t.constant(img)), t.constant(tgt), br);
      }, kStep, kinked());
    }
  }
}

void merge_suite(Suite& s) {
  Rng rng(41);
  const Tensor<double> sr = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  const Tensor<double> edge = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
  for (bool skip : {true, false}) {
    MergeConfig cfg;
    cfg.n_resblocks = 2;
    cfg.n_feats = 4;
    cfg.edge_skip = skip;
    const MergeNet net(cfg);
    ParameterSet<double> p = params_for(net.param_specs(), 13);
    randomise_biases(p, rng);
    const std::string tag = skip ? "merge (edge skip)" : "merge (no edge skip)";
    if (skip) {
      s.run("edge_skip_embed / edge", kLinear, edge, [&](Tape<double>& t, Var<double> v) {
        Binder<double> b{t, p, true};
        return project(net.edge_embed(b, v), 1);
      }, kLinearStep);
    }
    s.run(tag + " / sr", kNonlinear, sr, [&](Tape<double>& t, Var<double> v) {
      Binder<double> b{t, p, true};
      return project(net.forward(b, v, t.constant(edge)), 2);
    }, kStep, kinked());
    s.run(tag + " / edge", kNonlinear, edge, [&](Tape<double>& t, Var<double> v) {
      Binder<double> b{t, p, true};
      return project(net.forward(b, t.constant(sr), v), 3);
    }, kStep, kinked());
    s.run(tag + " / merge.head.weight", kNonlinear, p.at("merge.head.weight"), [&](Tape<double>& t, Var<double> v) {
      t.bind("merge.head.weight", v);
      Binder<double> b{t, p, true};
      return project(net.forward(b, t.constant(sr), t.constant(edge)), 4);
    }, kStep, kinked());
  }
}

}  // namespace

std::string format_case(const GradCheckCase& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-52s err %.3e  thr %.0e  coords %4zu  kinks %3zu  unresolved %3zu  %s", c.module.c_str(),
                c.name.c_str(), c.error, c.threshold, c.checked, c.skipped_nonsmooth, c.skipped_unresolved, c.pass() ? "PASS" : "FAIL");
  return buf;
}

std::vector<GradCheckCase> run_gradcheck_suite(const std::string& module, std::ostream* progress) {
  const bool all = module == "all";
  if (!all && module != "core" && module != "sr" && module != "edge" && module != "merge") {
    throw UsageError("unknown gradcheck module '" + module + "' (expected all, core, sr, edge or merge)");
  }
  std::vector<GradCheckCase> out;
  auto run = [&](const char* name, void (*fn)(Suite&)) {
    if (!all && module != name) return;
    Suite s(name, progress);
    fn(s);
    out.insert(out.end(), s.cases.begin(), s.cases.end());
  };
  run("core", core_suite);
  run("sr", sr_suite);
  run("edge", edge_suite);
  run("merge", merge_suite);
  return out;
}

}  // namespace sredge
