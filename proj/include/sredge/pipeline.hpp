#pragma once

#include <filesystem>
#include <optional>

#include "sredge/edgenet.hpp"
#include "sredge/image.hpp"
#include "sredge/mergenet.hpp"
#include "sredge/params.hpp"
#include "sredge/srnet.hpp"

namespace sredge {

struct PipelinePaths {
  std::filesystem::path sr_ckpt;
  std::filesystem::path edge_manifest;
  std::filesystem::path merge_ckpt;
};

struct SrModel {
  EdsrStar net;
  ParameterSet<float> params;
};

struct MergeModel {
  MergeNet net;
  ParameterSet<float> params;
};

/// Loaded, validated stage models. Empty paths leave a stage unloaded.
struct PipelineModels {
  std::optional<SrModel> sr;
  std::optional<EdgeEnsemble> edge;
  std::optional<MergeModel> merge;
};

/// Loads and checks every referenced file before any computation. A
/// checkpoint trained at a different scale is a ConfigError.
PipelineModels load_pipeline(const PipelinePaths& paths, int scale);

struct PipelineOutput {
  ImageBuffer sr;
  EdgeMap edge;
  ImageBuffer final_image;
};

/// I_SR = SR(I_LR); I_Edge = E(I_SR); I_SR+ = M(I_SR, I_Edge). Each stage
/// boundary is quantised to 8 bits, so the result equals running the stages
/// one at a time through PNG files.
PipelineOutput run_full_pipeline(const ImageBuffer& lr, const PipelineModels& models);

ImageBuffer run_sr_stage(const ImageBuffer& lr, const SrModel& m);
EdgeMap run_edge_stage(const ImageBuffer& sr, const EdgeEnsemble& e);
ImageBuffer run_merge_stage(const ImageBuffer& sr, const EdgeMap& edge, const MergeModel& m);

}  // namespace sredge
