#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sredge/errors.hpp"
#include "sredge/imageproc.hpp"
#include "sredge/ops.hpp"
#include "sredge/srnet.hpp"
#include "sredge/training.hpp"

using namespace sredge;
using test::random_tensor;

namespace {

ParameterSet<float> init(const std::vector<ParamSpec>& specs, std::uint64_t seed = 1) { return init_parameters(specs, seed); }

void zero(ParameterSet<float>& p, const std::string& name) { p.set(name, Tensor<float>(p.at(name).shape())); }

std::size_t conv(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

std::size_t edsr_count(const SRConfig& c) {
  const std::size_t f = c.n_feats, nb = c.pyramid_bins.size(), bw = f / nb;
  std::size_t n = conv(3, f, 3) + c.n_resblocks * 2 * conv(f, f, 3) + conv(f, f, 3);
  n += nb * conv(f, bw, 1) + conv(f + nb * bw, f, 1);
  for (int s = c.scale; s > 1; s /= 2) n += conv(f, 4 * f, 3);
  return n + conv(f, 3, 3);
}

}  // namespace

TEST(ResBlock, ZeroSecondConvIsIdentity) {
  ResBlock blk("t", 8, 1.0);
  std::vector<ParamSpec> specs;
  blk.declare(specs);
  ParameterSet<float> p = init(specs);
  zero(p, "t.conv2.weight");
  zero(p, "t.conv2.bias");
  Rng rng(1);
  Tape<float> tape;
  Binder<float> b{tape, p};
  const Tensor<float> x = random_tensor({1, 8, 16, 16}, rng).cast<float>();
  const auto y = blk(b, tape.constant(x));
  EXPECT_EQ(y.shape(), (Shape{1, 8, 16, 16}));
  EXPECT_EQ(y.value(), x);
}

TEST(ResBlock, ChannelMismatchIsDimensionError) {
  ResBlock blk("t", 8, 1.0);
  std::vector<ParamSpec> specs;
  blk.declare(specs);
  const ParameterSet<float> p = init(specs);
  Tape<float> tape;
  Binder<float> b{tape, p};
  EXPECT_THROW(blk(b, tape.constant(Tensor<float>(Shape{1, 4, 8, 8}))), DimensionError);
}

TEST(PyramidPool, ShapeAndConcatWidth) {
  PyramidPool pool("pp", 8, {1, 2, 3, 6});
  std::vector<ParamSpec> specs;
  pool.declare(specs);
  for (const ParamSpec& s : specs)
    if (s.name == "pp.fuse.weight") EXPECT_EQ(s.shape, (Shape{8, 16, 1, 1}));
  EXPECT_EQ(pool.branch_width(), 2u);
  const ParameterSet<float> p = init(specs);
  Rng rng(2);
  Tape<float> tape;
  Binder<float> b{tape, p};
  EXPECT_EQ(pool(b, tape.constant(random_tensor({1, 8, 12, 12}, rng).cast<float>())).shape(), (Shape{1, 8, 12, 12}));
  EXPECT_THROW(pool(b, tape.constant(Tensor<float>(Shape{1, 8, 5, 5}))), DimensionError);
}

TEST(PyramidPool, ConstantInputGivesConstantOutput) {
  PyramidPool pool("pp", 8, {1, 2, 3, 6});
  std::vector<ParamSpec> specs;
  pool.declare(specs);
  ParameterSet<float> p = init(specs);
  // Identity on the input half of the concatenation, zero on the branches.
  Tensor<float> w(Shape{8, 16, 1, 1});
  for (std::size_t o = 0; o < 8; ++o) w.at(o, o, 0, 0) = 1.0f;
  p.set("pp.fuse.weight", w);
  zero(p, "pp.fuse.bias");
  Tape<float> tape;
  Binder<float> b{tape, p};
  const auto y = pool(b, tape.constant(Tensor<float>(Shape{1, 8, 12, 12}, 0.375f)));
  for (float v : y.value().values()) EXPECT_FLOAT_EQ(v, 0.375f);

  // With random fusion weights every channel is still spatially constant.
  const ParameterSet<float> q = init(specs, 5);
  Tape<float> t2;
  Binder<float> b2{t2, q};
  const auto z = pool(b2, t2.constant(Tensor<float>(Shape{1, 8, 12, 12}, 0.375f)));
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < 144; ++i) EXPECT_NEAR(z.value()[c * 144 + i], z.value()[c * 144], 1e-6);
}

TEST(UpsampleHead, ShapeGrowth) {
  Rng rng(3);
  for (auto [scale, in, out] : {std::array<std::size_t, 3>{8, 12, 96}, {2, 24, 48}, {4, 6, 24}}) {
    UpsampleHead up("up", 8, static_cast<int>(scale), {1, 2, 3, 6});
    std::vector<ParamSpec> specs;
    up.declare(specs);
    const ParameterSet<float> p = init(specs);
    Tape<float> tape;
    Binder<float> b{tape, p};
    EXPECT_EQ(up(b, tape.constant(random_tensor({1, 8, in, in}, rng).cast<float>())).shape(), (Shape{1, 8, out, out}));
  }
}

TEST(EdsrStar, OutputIsScaleTimesInput) {
  Rng rng(4);
  for (auto [scale, h, w] : {std::array<std::size_t, 3>{4, 24, 24}, {8, 12, 12}, {2, 17, 23}}) {
    SRConfig c;
    c.n_feats = 8;
    c.n_resblocks = 2;
    c.scale = static_cast<int>(scale);
    const EdsrStar net(c);
    const ParameterSet<float> p = init(net.param_specs());
    const ImageBuffer sr = net.upscale(p, test::random_image(3, h, w, rng));
    EXPECT_EQ(sr.height(), scale * h);
    EXPECT_EQ(sr.width(), scale * w);
    for (float v : sr.samples()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(EdsrStar, TooSmallInputIsDimensionError) {
  const EdsrStar net(SRConfig{});
  const ParameterSet<float> p = init(net.param_specs());
  Rng rng(5);
  EXPECT_THROW(net.upscale(p, test::random_image(3, 5, 12, rng)), DimensionError);
  EXPECT_THROW(net.upscale(p, ImageBuffer(1, 12, 12)), DimensionError);
}

TEST(EdsrStar, InertTrunkAtInit) {
  SRConfig c;
  c.res_scale = 0.0;
  c.n_feats = 8;
  const EdsrStar net(c);
  ParameterSet<float> p = init(net.param_specs());
  zero(p, "sr.body_tail.weight");
  zero(p, "sr.body_tail.bias");
  Rng rng(6);
  Tape<float> tape;
  Binder<float> b{tape, p};
  const auto x = tape.constant(random_tensor({1, 3, 12, 12}, rng, 0.0, 1.0).cast<float>());
  const Tensor<float> trunk = net.trunk(b, x).value();
  const Tensor<float> head = net.head_features(b, x).value();
  EXPECT_EQ(trunk, head);
}

TEST(EdsrStar, ParameterCountIsClosedForm) {
  for (int scale : {2, 4, 8})
    for (std::size_t feats : {8, 16, 32}) {
      SRConfig c;
      c.scale = scale;
      c.n_feats = feats;
      c.n_resblocks = feats / 4;
      EXPECT_EQ(spec_scalar_count(EdsrStar(c).param_specs()), edsr_count(c)) << scale << "/" << feats;
      EXPECT_EQ(init(EdsrStar(c).param_specs()).scalar_count(), edsr_count(c));
    }
}

TEST(EdsrStar, InvalidConfigRejected) {
  SRConfig c;
  c.n_feats = 10;
  EXPECT_THROW(EdsrStar{c}, ConfigError);
  c.n_feats = 16;
  c.scale = 3;
  EXPECT_THROW(EdsrStar{c}, ConfigError);
}

TEST(EdsrStar, TinyOverfitLowersLoss) {
  const ImageBuffer hr = test::textured_image(32);
  const imageproc::DegradedPair d = imageproc::degrade_pair(hr, 2);
  SrDataset data{{"a"}, {quantize8(d.lr)}, {d.hr}, 2};
  SRConfig c;
  c.n_resblocks = 2;
  c.n_feats = 8;
  TrainConfig tc;
  tc.batch_size = 1;
  tc.lr_patch = 16;
  tc.base_lr = 1e-3;
  tc.epochs = 4;
  const EdsrStar net(c);
  Trainer t(tc, net.param_specs(), sr_step_loss(net, data, tc), KeyValues{});
  t.start_fresh();
  const double first = t.step();
  double last = first;
  for (int i = 1; i < 200; ++i) last = t.step();
  EXPECT_LT(last, first);
  EXPECT_EQ(t.state().step, 200u);
}
