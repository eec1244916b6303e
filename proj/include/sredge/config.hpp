#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sredge {

/// Flat `key=value` configuration. `#` starts a comment; blank lines are
/// ignored; keys are module-prefixed (`sr.n_feats=16`).
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  /// Keys with the given prefix (including the trailing dot).
  KeyValues with_prefix(const std::string& prefix) const;
  void merge(const KeyValues& other);

  std::string to_text() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::string origin_;
};

std::string format_double(double v);
std::string join_sizes(const std::vector<std::size_t>& v);

struct SRConfig {
  std::size_t n_resblocks = 4;
  std::size_t n_feats = 16;
  int scale = 2;
  double res_scale = 1.0;
  std::vector<std::size_t> pyramid_bins{1, 2, 3, 6};

  void validate() const;
  static SRConfig from(const KeyValues& kv);
  void write(KeyValues& kv) const;
};

struct EdgeNetConfig {
  std::size_t nr = 8;
  std::vector<std::size_t> stage_mults{1, 2, 4, 8, 8};
  std::size_t n_stages = 5;
  std::vector<std::size_t> complexities{4, 8, 16};
  double gt_sigma = 1.0;
  std::size_t blocks_per_stage = 2;
  std::size_t side_width = 4;
  std::vector<std::size_t> side_bins{1, 2, 3, 6};
  double canny_sigma = 1.4;
  double canny_low = 0.1;
  double canny_high = 0.2;

  void validate() const;
  static EdgeNetConfig from(const KeyValues& kv);
  void write(KeyValues& kv) const;
};

struct MergeConfig {
  std::size_t n_resblocks = 4;
  std::size_t n_feats = 16;
  double res_scale = 1.0;
  bool edge_skip = true;

  void validate() const;
  static MergeConfig from(const KeyValues& kv);
  void write(KeyValues& kv) const;
};

enum class ModuleKind { sr, edge, merge };
enum class LossKind { l1, bce };

std::string to_string(ModuleKind m);
ModuleKind parse_module(const std::string& s);

struct TrainConfig {
  ModuleKind module = ModuleKind::sr;
  std::size_t batch_size = 4;
  std::size_t lr_patch = 24;
  int scale = 2;
  double base_lr = 1e-4;
  std::size_t halving_period_epochs = 100;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::l1;
  std::size_t steps_per_epoch = 50;
  /// Write a numbered checkpoint every this many epochs (0: final only).
  std::size_t checkpoint_every = 0;

  void validate() const;
  /// Module defaults: base_lr 1e-4 (sr, merge) or 1e-6 (edge); l1 loss except bce for edge.
  static TrainConfig from(const KeyValues& kv);
  void write(KeyValues& kv) const;
};

}  // namespace sredge
