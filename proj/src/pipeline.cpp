#include "sredge/pipeline.hpp"

#include "sredge/checkpoint.hpp"
#include "sredge/errors.hpp"

namespace sredge {
namespace {

void check_trained_scale(const KeyValues& kv, const std::string& key, int scale, const std::string& what) {
  if (!kv.has(key)) return;
  const long s = kv.get_int(key, 0);
  if (s != scale) {
    throw ConfigError(what + " was trained at scale " + std::to_string(s) + " but --scale is " + std::to_string(scale));
  }
}

void check_params(const std::vector<ParamSpec>& specs, const ParameterSet<float>& p, const std::string& what) {
  for (const ParamSpec& s : specs) {
    if (!p.contains(s.name)) throw FormatError(what + ": missing parameter " + s.name);
    if (p.at(s.name).shape() != s.shape) throw FormatError(what + ": parameter " + s.name + " has shape " + shape_str(p.at(s.name).shape()));
  }
}

}  // namespace

PipelineModels load_pipeline(const PipelinePaths& paths, int scale) {
  PipelineModels m;
  if (!paths.sr_ckpt.empty()) {
    Checkpoint ck = load_checkpoint(paths.sr_ckpt);
    check_trained_scale(ck.config, "sr.scale", scale, paths.sr_ckpt.string());
    check_trained_scale(ck.config, "train.scale", scale, paths.sr_ckpt.string());
    SRConfig cfg = SRConfig::from(ck.config);
    EdsrStar net(cfg);
    check_params(net.param_specs(), ck.params, paths.sr_ckpt.string());
    m.sr.emplace(SrModel{std::move(net), std::move(ck.params)});
  }
  if (!paths.edge_manifest.empty()) m.edge = EdgeEnsemble::load(paths.edge_manifest);
  if (!paths.merge_ckpt.empty()) {
    Checkpoint ck = load_checkpoint(paths.merge_ckpt);
    check_trained_scale(ck.config, "train.scale", scale, paths.merge_ckpt.string());
    MergeNet net(MergeConfig::from(ck.config));
    check_params(net.param_specs(), ck.params, paths.merge_ckpt.string());
    m.merge.emplace(MergeModel{std::move(net), std::move(ck.params)});
  }
  return m;
}

ImageBuffer run_sr_stage(const ImageBuffer& lr, const SrModel& m) { return quantize8(m.net.upscale(m.params, lr)); }

EdgeMap run_edge_stage(const ImageBuffer& sr, const EdgeEnsemble& e) { return quantize8(e.predict(sr)); }

ImageBuffer run_merge_stage(const ImageBuffer& sr, const EdgeMap& edge, const MergeModel& m) {
  if (sr.height() != edge.height() || sr.width() != edge.width()) {
    throw DimensionError("merge: SR " + std::to_string(sr.height()) + "x" + std::to_string(sr.width()) + " and edge " +
                         std::to_string(edge.height()) + "x" + std::to_string(edge.width()) + " extents differ");
  }
  return quantize8(m.net.merge(m.params, sr, edge));
}

PipelineOutput run_full_pipeline(const ImageBuffer& lr, const PipelineModels& models) {
  if (!models.sr || !models.edge || !models.merge) throw UsageError("full pipeline needs SR, edge and merge models");
  PipelineOutput out;
  out.sr = run_sr_stage(lr, *models.sr);
  out.edge = run_edge_stage(out.sr, *models.edge);
  out.final_image = run_merge_stage(out.sr, out.edge, *models.merge);
  return out;
}

}  // namespace sredge
