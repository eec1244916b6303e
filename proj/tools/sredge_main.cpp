// sredge: dataset preparation, training, staged inference and evaluation for
// the three-stage SR -> edge -> merge pipeline.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sredge/benchmark.hpp"
#include "sredge/errors.hpp"
#include "sredge/imageproc.hpp"
#include "sredge/pipeline.hpp"
#include "sredge/selftest.hpp"
#include "sredge/training.hpp"

namespace fs = std::filesystem;
using namespace sredge;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Input PNGs of a file-or-directory argument, with the output path each maps to.
struct Job {
  fs::path in, out;
  std::string stem;
};

std::vector<Job> plan_jobs(const fs::path& input, const fs::path& output) {
  std::vector<Job> jobs;
  if (fs::is_directory(input)) {
    fs::create_directories(output);
    for (const std::string& n : list_png_stems(input)) jobs.push_back({input / (n + ".png"), output / (n + ".png"), n});
    if (jobs.empty()) throw IoError("no PNG files in " + input.string());
  } else {
    if (!fs::exists(input)) throw IoError("missing input " + input.string());
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    jobs.push_back({input, output, input.stem().string()});
  }
  return jobs;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + suffix + ".png");
}

struct DegradeArgs {
  int scale = 2;
  fs::path input, output;
};

int cmd_degrade(const DegradeArgs& a) {
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.input)) {
    for (const std::string& n : list_png_stems(a.input)) inputs.push_back(a.input / (n + ".png"));
  } else {
    inputs.push_back(a.input);
  }
  if (inputs.empty()) throw IoError("no PNG files in " + a.input.string());
  const fs::path hr_dir = a.output / "hr";
  const fs::path lr_dir = a.output / ("lr_x" + std::to_string(a.scale));
  fs::create_directories(hr_dir);
  fs::create_directories(lr_dir);
  for (const fs::path& p : inputs) {
    const imageproc::DegradedPair d = imageproc::degrade_pair(load_png(p), a.scale);
    const std::string name = p.stem().string() + ".png";
    save_png(d.hr, hr_dir / name);
    save_png(d.lr, lr_dir / name);
    std::cout << p.filename().string() << ": HR " << d.hr.width() << "x" << d.hr.height() << ", LR " << d.lr.width() << "x"
              << d.lr.height() << "\n";
  }
  return kOk;
}

struct TrainArgs {
  std::string module;
  fs::path config, data, out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
};

KeyValues train_config(const fs::path& config, const std::string& module, std::optional<std::uint64_t> seed) {
  KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
  if (!module.empty()) kv.set("train.module", module);
  if (seed) kv.set("train.seed", std::to_string(*seed));
  return kv;
}

int cmd_train(const TrainArgs& a) {
  const KeyValues kv = train_config(a.config, a.module, a.seed);
  const TrainReport r = train_module(kv, a.data, a.out, a.resume, &std::cout);
  for (const fs::path& p : r.checkpoints) std::cout << "wrote " << p.string() << "\n";
  return kOk;
}

struct InferArgs {
  std::string stage;
  int scale = 2;
  fs::path input, output, sr_ckpt, edge_manifest, merge_ckpt, edge;
  bool intermediates = false;
};

int cmd_infer(const InferArgs& a) {
  PipelinePaths paths;
  auto need = [&](const fs::path& p, const char* flag) {
    if (p.empty()) throw UsageError(std::string("--stage ") + a.stage + " requires " + flag);
    return p;
  };
  if (a.stage == "sr" || a.stage == "full") paths.sr_ckpt = need(a.sr_ckpt, "--sr-ckpt");
  if (a.stage == "edge" || a.stage == "full") paths.edge_manifest = need(a.edge_manifest, "--edge-manifest");
  if (a.stage == "merge" || a.stage == "full") paths.merge_ckpt = need(a.merge_ckpt, "--merge-ckpt");
  if (a.stage == "merge") need(a.edge, "--edge");

  // Fail fast: every model and every input is checked before computing.
  const PipelineModels models = load_pipeline(paths, a.scale);
  const std::vector<Job> jobs = plan_jobs(a.input, a.output);
  std::vector<fs::path> edge_inputs;
  if (a.stage == "merge") {
    for (const Job& j : jobs) {
      const fs::path e = fs::is_directory(a.edge) ? a.edge / (j.stem + ".png") : a.edge;
      if (!fs::exists(e)) throw IoError("missing edge map " + e.string());
      edge_inputs.push_back(e);
    }
  }

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const Job& j = jobs[i];
    const ImageBuffer in = load_png(j.in);
    if (a.stage == "sr") {
      save_png(run_sr_stage(in, *models.sr), j.out);
    } else if (a.stage == "edge") {
      save_png(run_edge_stage(in, *models.edge), j.out);
    } else if (a.stage == "merge") {
      save_png(run_merge_stage(in, load_png(edge_inputs[i]), *models.merge), j.out);
    } else {
      const PipelineOutput o = run_full_pipeline(in, models);
      save_png(o.final_image, j.out);
      if (a.intermediates) {
        save_png(o.sr, sibling(j.out, "_sr"));
        save_png(o.edge, sibling(j.out, "_edge"));
      }
    }
    std::cout << "wrote " << j.out.string() << "\n";
  }
  return kOk;
}

struct EvalArgs {
  fs::path pred, gt, csv;
  int scale = 2;
};

int cmd_eval(const EvalArgs& a) {
  const BenchmarkTable t = evaluate_benchmark(a.pred, a.gt, a.scale);
  std::cout << format_table(t);
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    if (!f) throw IoError("cannot write " + a.csv.string());
    f << format_csv(t);
  }
  if (!t.complete()) {
    for (const std::string& n : t.orphan_pred) std::cerr << "orphan prediction: " << n << ".png\n";
    for (const std::string& n : t.orphan_gt) std::cerr << "orphan ground truth: " << n << ".png\n";
    return kData;
  }
  return kOk;
}

int cmd_gradcheck(const std::string& module) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<GradCheckCase> cases = run_gradcheck_suite(module, &std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t failed = 0;
  for (const GradCheckCase& c : cases) failed += c.pass() ? 0 : 1;
  std::cout << cases.size() - failed << "/" << cases.size() << " gradient checks passed in " << secs << " s\n";
  return failed == 0 ? kOk : kNumeric;
}

struct AblationArgs {
  fs::path config, data, eval, out;
  std::optional<std::uint64_t> seed;
};

int cmd_ablation(const AblationArgs& a) {
  const KeyValues kv = train_config(a.config, "merge", a.seed);
  const AblationReport r = run_edge_skip_ablation(kv, a.data, a.eval, a.out, &std::cout);
  std::cout << format_ablation(r);
  return kOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kUsage;
  } catch (const ParameterError& e) {
    std::cerr << "parameter: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage super-resolution: EDSR* -> DenseEdgeNet -> MergeNet"};
  app.require_subcommand(1);
  int rc = kOk;

  DegradeArgs dg;
  auto* degrade = app.add_subcommand("degrade", "Offset-fix HR images and write bicubic LR pairs");
  degrade->add_option("--scale", dg.scale)->required()->check(CLI::IsMember({2, 4, 8}));
  degrade->add_option("--input", dg.input, "PNG file or directory")->required();
  degrade->add_option("--output", dg.output, "Writes hr/ and lr_x<s>/")->required();
  degrade->callback([&] { rc = guarded([&] { return cmd_degrade(dg); }); });

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train one module");
  train->add_option("--module", tr.module)->required()->check(CLI::IsMember({"sr", "edge", "merge"}));
  train->add_option("--config", tr.config, "key=value file");
  train->add_option("--data", tr.data)->required();
  train->add_option("--out", tr.out)->required();
  train->add_option("--seed", tr.seed);
  train->add_flag("--resume", tr.resume, "Continue from checkpoints already in --out");
  train->callback([&] { rc = guarded([&] { return cmd_train(tr); }); });

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Run one stage or the full pipeline");
  infer->add_option("--stage", inf.stage)->required()->check(CLI::IsMember({"sr", "edge", "merge", "full"}));
  infer->add_option("--scale", inf.scale)->required()->check(CLI::IsMember({2, 4, 8}));
  infer->add_option("--input", inf.input, "PNG file or directory")->required();
  infer->add_option("--output", inf.output, "PNG file or directory")->required();
  infer->add_option("--sr-ckpt", inf.sr_ckpt);
  infer->add_option("--edge-manifest", inf.edge_manifest);
  infer->add_option("--merge-ckpt", inf.merge_ckpt);
  infer->add_option("--edge", inf.edge, "Edge map(s) for --stage merge");
  infer->add_flag("--emit-intermediates", inf.intermediates, "Also write <out>_sr.png and <out>_edge.png");
  infer->callback([&] { rc = guarded([&] { return cmd_infer(inf); }); });

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of predictions against ground truth");
  eval->add_option("--pred", ev.pred)->required();
  eval->add_option("--gt", ev.gt)->required();
  eval->add_option("--scale", ev.scale)->required();
  eval->add_option("--csv", ev.csv);
  eval->callback([&] { rc = guarded([&] { return cmd_eval(ev); }); });

  std::string gc_module = "all";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--module", gc_module)->check(CLI::IsMember({"all", "core", "sr", "edge", "merge"}));
  gradcheck->callback([&] { rc = guarded([&] { return cmd_gradcheck(gc_module); }); });

  AblationArgs ab;
  auto* ablation = app.add_subcommand("ablation", "Train and score MergeNet with and without the edge skip");
  ablation->add_option("--config", ab.config);
  ablation->add_option("--data", ab.data, "hr/, sr_x<s>/, edge_x<s>/")->required();
  ablation->add_option("--eval", ab.eval, "Evaluation set (defaults to --data)");
  ablation->add_option("--out", ab.out)->required();
  ablation->add_option("--seed", ab.seed);
  ablation->callback([&] { rc = guarded([&] { return cmd_ablation(ab); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  return rc;
}
