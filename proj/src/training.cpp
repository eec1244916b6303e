#include "sredge/training.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "sredge/adam.hpp"
#include "sredge/errors.hpp"
#include "sredge/ops.hpp"

namespace fs = std::filesystem;

namespace sredge {
namespace {

ImageBuffer hflip_img(const ImageBuffer& in) {
  ImageBuffer out(in.channels(), in.height(), in.width());
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::size_t y = 0; y < in.height(); ++y)
      for (std::size_t x = 0; x < in.width(); ++x) out.at(c, y, x) = in.at(c, y, in.width() - 1 - x);
  return out;
}

ImageBuffer vflip_img(const ImageBuffer& in) {
  ImageBuffer out(in.channels(), in.height(), in.width());
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::size_t y = 0; y < in.height(); ++y)
      for (std::size_t x = 0; x < in.width(); ++x) out.at(c, y, x) = in.at(c, in.height() - 1 - y, x);
  return out;
}

// One quarter turn counter-clockwise.
ImageBuffer rot90(const ImageBuffer& in) {
  const std::size_t h = in.width(), w = in.height();
  ImageBuffer out(in.channels(), h, w);
  for (std::size_t c = 0; c < in.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = in.at(c, x, in.width() - 1 - y);
  return out;
}

ImageBuffer rotate(ImageBuffer img, int quarter_turns) {
  for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i) img = rot90(img);
  return img;
}

ImageBuffer load_required(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("missing training image " + p.string());
  return load_png(p);
}

void require_aligned(const ImageBuffer& lr, const ImageBuffer& hr, int scale, const std::string& what) {
  const auto s = static_cast<std::size_t>(scale);
  if (lr.height() * s != hr.height() || lr.width() * s != hr.width()) {
    throw SizeError(what + ": LR " + std::to_string(lr.height()) + "x" + std::to_string(lr.width()) + " times " +
                    std::to_string(scale) + " does not match HR " + std::to_string(hr.height()) + "x" + std::to_string(hr.width()));
  }
}

Var<float> module_loss(Var<float> pred, Var<float> target, LossKind kind) {
  return kind == LossKind::l1 ? ops::loss_l1(pred, target) : ops::loss_bce_logits(pred, target);
}

std::string scale_dir(const std::string& prefix, int scale) { return prefix + "_x" + std::to_string(scale); }

}  // namespace

ImageBuffer augment(const ImageBuffer& img, int rotation, bool hflip, bool vflip) {
  ImageBuffer out = hflip ? hflip_img(img) : img;
  if (vflip) out = vflip_img(out);
  return rotate(std::move(out), rotation);
}

ImageBuffer unaugment(const ImageBuffer& img, int rotation, bool hflip, bool vflip) {
  ImageBuffer out = rotate(img, 4 - (rotation % 4));
  if (vflip) out = vflip_img(out);
  return hflip ? hflip_img(out) : out;
}

SampleRecord draw_record(std::size_t lr_h, std::size_t lr_w, std::size_t lr_patch, Rng& rng) {
  if (lr_patch == 0 || lr_h < lr_patch || lr_w < lr_patch) {
    throw SizeError("image " + std::to_string(lr_h) + "x" + std::to_string(lr_w) + " (LR) is smaller than the patch size " +
                    std::to_string(lr_patch));
  }
  SampleRecord r;
  r.x = static_cast<std::size_t>(rng.below(lr_w - lr_patch + 1));
  r.y = static_cast<std::size_t>(rng.below(lr_h - lr_patch + 1));
  r.rotation = static_cast<int>(rng.below(4));
  r.hflip = rng.below(2) != 0;
  r.vflip = rng.below(2) != 0;
  return r;
}

ImageBuffer extract_patch(const ImageBuffer& img, const SampleRecord& rec, int scale, std::size_t lr_patch) {
  const auto s = static_cast<std::size_t>(scale);
  return augment(crop(img, s * rec.y, s * rec.x, s * lr_patch, s * lr_patch), rec.rotation, rec.hflip, rec.vflip);
}

PatchPair sample_patch_pair(const ImageBuffer& lr, const ImageBuffer& hr, int scale, std::size_t lr_patch, Rng& rng) {
  require_aligned(lr, hr, scale, "sample_patch_pair");
  PatchPair p;
  p.record = draw_record(lr.height(), lr.width(), lr_patch, rng);
  p.lr = extract_patch(lr, p.record, 1, lr_patch);
  p.hr = extract_patch(hr, p.record, scale, lr_patch);
  return p;
}

Rng sample_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t slot) { return Rng(Rng::mix({seed, step, slot})); }

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.module == ModuleKind::edge) return cfg.base_lr;
  return cfg.base_lr * std::ldexp(1.0, -static_cast<int>(epoch / cfg.halving_period_epochs));
}

std::uint64_t init_seed(std::uint64_t seed) { return Rng::mix({seed, 0x696e6974ull}); }

// ---------------------------------------------------------------------------
// Datasets

std::vector<std::string> list_png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing directory " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

SrDataset load_sr_dataset(const fs::path& dir, int scale) {
  SrDataset d;
  d.scale = scale;
  d.names = list_png_stems(dir / "hr");
  if (d.names.empty()) throw IoError("no training images in " + (dir / "hr").string());
  for (const std::string& n : d.names) {
    d.hr.push_back(load_required(dir / "hr" / (n + ".png")));
    d.lr.push_back(load_required(dir / scale_dir("lr", scale) / (n + ".png")));
    require_aligned(d.lr.back(), d.hr.back(), scale, n);
  }
  return d;
}

EdgeDataset make_edge_dataset(std::vector<ImageBuffer> hr, int scale, const EdgeNetConfig& cfg) {
  EdgeDataset d;
  d.scale = scale;
  d.hr = std::move(hr);
  for (std::size_t i = 0; i < d.hr.size(); ++i) {
    d.names.push_back("image" + std::to_string(i));
    d.targets.push_back(make_edge_target(d.hr[i], cfg));
  }
  return d;
}

EdgeDataset load_edge_dataset(const fs::path& dir, int scale, const EdgeNetConfig& cfg) {
  const std::vector<std::string> names = list_png_stems(dir / "hr");
  if (names.empty()) throw IoError("no training images in " + (dir / "hr").string());
  std::vector<ImageBuffer> hr;
  for (const std::string& n : names) hr.push_back(load_required(dir / "hr" / (n + ".png")));
  EdgeDataset d = make_edge_dataset(std::move(hr), scale, cfg);
  d.names = names;
  return d;
}

MergeDataset load_merge_dataset(const fs::path& dir, int scale) {
  MergeDataset d;
  d.scale = scale;
  d.names = list_png_stems(dir / "hr");
  if (d.names.empty()) throw IoError("no training images in " + (dir / "hr").string());
  for (const std::string& n : d.names) {
    d.hr.push_back(load_required(dir / "hr" / (n + ".png")));
    d.sr.push_back(load_required(dir / scale_dir("sr", scale) / (n + ".png")));
    d.edge.push_back(load_required(dir / scale_dir("edge", scale) / (n + ".png")));
    for (const ImageBuffer* img : {&d.sr.back(), &d.edge.back()}) require_aligned(*img, d.hr.back(), 1, n);
    if (d.edge.back().channels() != 1) throw FormatError(n + ": edge map must be single-channel");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Per-module step losses

StepLoss sr_step_loss(const EdsrStar& net, const SrDataset& data, const TrainConfig& cfg) {
  if (data.scale != net.config().scale || cfg.scale != data.scale) throw ConfigError("sr: scale mismatch between config and data");
  return [&net, &data, cfg](const Binder<float>& b, std::uint64_t step) {
    std::vector<ImageBuffer> lr, hr;
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      Rng rng = sample_rng(cfg.seed, step, k);
      const auto i = static_cast<std::size_t>(rng.below(data.lr.size()));
      PatchPair p = sample_patch_pair(data.lr[i], data.hr[i], data.scale, cfg.lr_patch, rng);
      lr.push_back(std::move(p.lr));
      hr.push_back(std::move(p.hr));
    }
    Var<float> pred = net.forward(b, b.tape.constant(batch_to_tensor<float>(lr)));
    return module_loss(pred, b.tape.constant(batch_to_tensor<float>(hr)), cfg.loss);
  };
}

StepLoss edge_step_loss(const DenseEdgeNet& net, const EdgeDataset& data, const TrainConfig& cfg, EdgeBranch branch) {
  const std::size_t patch = cfg.lr_patch * static_cast<std::size_t>(data.scale);
  if (patch % 16 != 0) {
    throw ConfigError("edge: HR patch size train.lr_patch * scale = " + std::to_string(patch) + " must be a multiple of 16");
  }
  return [&net, &data, cfg, branch](const Binder<float>& b, std::uint64_t step) {
    std::vector<ImageBuffer> img, tgt;
    const auto s = static_cast<std::size_t>(data.scale);
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      Rng rng = sample_rng(cfg.seed, step, k);
      const auto i = static_cast<std::size_t>(rng.below(data.hr.size()));
      const SampleRecord rec = draw_record(data.hr[i].height() / s, data.hr[i].width() / s, cfg.lr_patch, rng);
      img.push_back(extract_patch(data.hr[i], rec, data.scale, cfg.lr_patch));
      const EdgeMap& t = branch == EdgeBranch::classifier ? data.targets[i].binary : data.targets[i].soft;
      tgt.push_back(extract_patch(t, rec, data.scale, cfg.lr_patch));
    }
    EdgeForward<float> f = net.forward(b, b.tape.constant(batch_to_tensor<float>(img)));
    return net.loss(f, b.tape.constant(batch_to_tensor<float>(tgt)), branch);
  };
}

StepLoss merge_step_loss(const MergeNet& net, const MergeDataset& data, const TrainConfig& cfg) {
  if (cfg.scale != data.scale) throw ConfigError("merge: scale mismatch between config and data");
  return [&net, &data, cfg](const Binder<float>& b, std::uint64_t step) {
    std::vector<ImageBuffer> sr, edge, hr;
    const auto s = static_cast<std::size_t>(data.scale);
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      Rng rng = sample_rng(cfg.seed, step, k);
      const auto i = static_cast<std::size_t>(rng.below(data.hr.size()));
      const SampleRecord rec = draw_record(data.hr[i].height() / s, data.hr[i].width() / s, cfg.lr_patch, rng);
      sr.push_back(extract_patch(data.sr[i], rec, data.scale, cfg.lr_patch));
      edge.push_back(extract_patch(data.edge[i], rec, data.scale, cfg.lr_patch));
      hr.push_back(extract_patch(data.hr[i], rec, data.scale, cfg.lr_patch));
    }
    Var<float> pred =
        net.forward(b, b.tape.constant(batch_to_tensor<float>(sr)), b.tape.constant(batch_to_tensor<float>(edge)));
    return module_loss(pred, b.tape.constant(batch_to_tensor<float>(hr)), cfg.loss);
  };
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig cfg, std::vector<ParamSpec> specs, StepLoss loss, KeyValues config_echo)
    : cfg_((cfg.validate(), std::move(cfg))), specs_(std::move(specs)), loss_(std::move(loss)) {
  ck_.config = std::move(config_echo);
}

void Trainer::start_fresh() {
  KeyValues echo = std::move(ck_.config);
  ck_ = Checkpoint{};
  ck_.params = init_parameters(specs_, init_seed(cfg_.seed));
  ck_.config = std::move(echo);
}

void Trainer::resume(Checkpoint ck) {
  for (const ParamSpec& s : specs_) {
    if (!ck.params.contains(s.name)) throw FormatError("resume: checkpoint lacks parameter " + s.name);
    if (ck.params.at(s.name).shape() != s.shape) throw FormatError("resume: parameter " + s.name + " has the wrong shape");
  }
  if (ck.params.size() != specs_.size()) throw FormatError("resume: checkpoint has unexpected parameters");
  ck.config = std::move(ck_.config);
  ck_ = std::move(ck);
}

double Trainer::step() {
  Tape<float> tape;
  Binder<float> b{tape, ck_.params, true};
  Var<float> loss = loss_(b, ck_.step);
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss at step " + std::to_string(ck_.step));
  const Gradients<float> grads = tape.backward(loss);
  GradMap gm;
  for (const auto& [name, t] : ck_.params.tensors()) {
    auto v = tape.bound(name);
    gm.emplace(name, v ? grads.of(*v) : Tensor<float>(t.shape()));
  }
  adam_step(ck_.params, gm, ck_.adam, lr_at_epoch(cfg_, static_cast<std::size_t>(ck_.step / cfg_.steps_per_epoch)));
  ++ck_.step;
  ck_.epoch = ck_.step / cfg_.steps_per_epoch;
  return value;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

double run_to_completion(Trainer& t, const TrainConfig& cfg, const std::string& name, const fs::path& out, bool resume,
                         std::ostream* log, TrainReport& report) {
  const fs::path ck_path = out / (name + ".ckpt");
  const fs::path csv_path = out / (name + "_loss.csv");
  const bool resuming = resume && fs::exists(ck_path);
  if (resuming) {
    t.resume(load_checkpoint(ck_path));
  } else {
    t.start_fresh();
  }
  std::ofstream csv(csv_path, resuming ? std::ios::app : std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  if (!resuming) csv << "step,loss\n";

  double last = std::nan("");
  double epoch_sum = 0.0;
  std::size_t epoch_n = 0;
  while (t.state().step < t.total_steps()) {
    const std::uint64_t s = t.state().step;
    last = t.step();
    csv << s << ',' << format_double(last) << '\n';
    epoch_sum += last;
    ++epoch_n;
    if (t.state().step % cfg.steps_per_epoch == 0) {
      const std::uint64_t e = t.state().epoch;
      if (log) {
        *log << name << " epoch " << e << "/" << cfg.epochs << " loss " << epoch_sum / static_cast<double>(epoch_n) << " lr "
             << lr_at_epoch(cfg, static_cast<std::size_t>(e - 1)) << std::endl;
      }
      epoch_sum = 0.0;
      epoch_n = 0;
      if (cfg.checkpoint_every != 0 && e % cfg.checkpoint_every == 0 && t.state().step < t.total_steps()) {
        const fs::path p = out / (name + "_e" + std::to_string(e) + ".ckpt");
        save_checkpoint(t.state(), p);
        report.checkpoints.push_back(p);
      }
    }
  }
  if (!csv) throw IoError("write failed: " + csv_path.string());
  save_checkpoint(t.state(), ck_path);
  report.checkpoints.push_back(ck_path);
  report.final_losses.push_back(last);
  return last;
}

}  // namespace

TrainReport train_module(const KeyValues& kv, const fs::path& data, const fs::path& out, bool resume, std::ostream* log) {
  const TrainConfig tc = TrainConfig::from(kv);
  fs::create_directories(out);
  KeyValues echo;
  tc.write(echo);
  TrainReport report;

  switch (tc.module) {
    case ModuleKind::sr: {
      SRConfig sc = SRConfig::from(kv);
      if (kv.has("sr.scale") && sc.scale != tc.scale) throw ConfigError("sr.scale and train.scale disagree");
      sc.scale = tc.scale;
      sc.write(echo);
      const SrDataset ds = load_sr_dataset(data, tc.scale);
      const EdsrStar net(sc);
      Trainer t(tc, net.param_specs(), sr_step_loss(net, ds, tc), echo);
      run_to_completion(t, tc, "sr", out, resume, log, report);
      break;
    }
    case ModuleKind::edge: {
      const EdgeNetConfig ec = EdgeNetConfig::from(kv);
      const EdgeDataset ds = load_edge_dataset(data, tc.scale, ec);
      std::vector<EdgeEnsemble::ManifestEntry> manifest;
      for (std::size_t nr : ec.complexities) {
        EdgeNetConfig member = ec;
        member.nr = nr;
        KeyValues member_echo = echo;
        member.write(member_echo);
        const DenseEdgeNet net(member);
        EdgeEnsemble::ManifestEntry entry{nr, {}, {}};
        for (EdgeBranch br : {EdgeBranch::classifier, EdgeBranch::regressor}) {
          const std::string name = "edge_nr" + std::to_string(nr) + "_" + to_string(br);
          Trainer t(tc, net.param_specs(), edge_step_loss(net, ds, tc, br), member_echo);
          run_to_completion(t, tc, name, out, resume, log, report);
          (br == EdgeBranch::classifier ? entry.classifier : entry.regressor) = name + ".ckpt";
        }
        manifest.push_back(entry);
      }
      EdgeEnsemble::write_manifest(out / "edge.manifest", manifest);
      break;
    }
    case ModuleKind::merge: {
      const MergeConfig mc = MergeConfig::from(kv);
      mc.write(echo);
      const MergeDataset ds = load_merge_dataset(data, tc.scale);
      const MergeNet net(mc);
      Trainer t(tc, net.param_specs(), merge_step_loss(net, ds, tc), echo);
      run_to_completion(t, tc, "merge", out, resume, log, report);
      break;
    }
  }
  return report;
}

}  // namespace sredge
