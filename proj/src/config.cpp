#include "sredge/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sredge/errors.hpp"

namespace sredge {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.entries_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& KeyValues::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

long KeyValues::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("config key '" + key + "': not an integer: '" + s + "'");
  return v;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + s + "'");
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + s + "'");
}

std::vector<std::size_t> KeyValues::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ConfigError("config key '" + key + "': bad list element '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

KeyValues KeyValues::with_prefix(const std::string& prefix) const {
  KeyValues out;
  out.origin_ = origin_;
  for (const auto& [k, v] : entries_)
    if (k.rfind(prefix, 0) == 0) out.entries_[k] = v;
  return out;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char s[64];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::stod(s) == v) return s;
  }
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

namespace {

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const long v = kv.get_int(key, static_cast<long>(fallback));
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

void check_scale(int scale, const char* where) {
  if (scale != 2 && scale != 4 && scale != 8) {
    throw ConfigError(std::string(where) + ": scale must be 2, 4 or 8 (got " + std::to_string(scale) + ")");
  }
}

}  // namespace

void SRConfig::validate() const {
  check_scale(scale, "sr.scale");
  if (n_resblocks == 0 && n_feats == 0) throw ConfigError("sr: empty network");
  if (pyramid_bins.empty()) throw ConfigError("sr.pyramid_bins must not be empty");
  if (n_feats == 0 || n_feats % pyramid_bins.size() != 0) {
    throw ConfigError("sr.n_feats (" + std::to_string(n_feats) + ") must be divisible by the number of pyramid bins (" +
                      std::to_string(pyramid_bins.size()) + ")");
  }
  for (std::size_t b : pyramid_bins)
    if (b == 0) throw ConfigError("sr.pyramid_bins entries must be >= 1");
}

SRConfig SRConfig::from(const KeyValues& kv) {
  SRConfig c;
  c.n_resblocks = get_size(kv, "sr.n_resblocks", c.n_resblocks);
  c.n_feats = get_size(kv, "sr.n_feats", c.n_feats);
  c.scale = static_cast<int>(kv.get_int("sr.scale", c.scale));
  c.res_scale = kv.get_double("sr.res_scale", c.res_scale);
  c.pyramid_bins = kv.get_sizes("sr.pyramid_bins", c.pyramid_bins);
  c.validate();
  return c;
}

void SRConfig::write(KeyValues& kv) const {
  kv.set("sr.n_resblocks", std::to_string(n_resblocks));
  kv.set("sr.n_feats", std::to_string(n_feats));
  kv.set("sr.scale", std::to_string(scale));
  kv.set("sr.res_scale", format_double(res_scale));
  kv.set("sr.pyramid_bins", join_sizes(pyramid_bins));
}

void EdgeNetConfig::validate() const {
  if (n_stages != 5) throw ConfigError("edge.n_stages must be 5");
  if (stage_mults.size() != n_stages) throw ConfigError("edge.stage_mults must list one multiplier per stage");
  if (nr == 0) throw ConfigError("edge.nr must be >= 1");
  if (complexities.empty()) throw ConfigError("edge.complexities must not be empty");
  for (std::size_t i = 0; i < complexities.size(); ++i) {
    if (complexities[i] == 0) throw ConfigError("edge.complexities entries must be >= 1");
    if (i && complexities[i] <= complexities[i - 1]) throw ConfigError("edge.complexities must be strictly ascending");
  }
  if (blocks_per_stage == 0) throw ConfigError("edge.blocks_per_stage must be >= 1");
  if (side_bins.empty() || side_width == 0 || side_width % side_bins.size() != 0) {
    throw ConfigError("edge.side_width must be a positive multiple of the number of edge.side_bins");
  }
  if (!(gt_sigma > 0.0)) throw ConfigError("edge.gt_sigma must be > 0");
  if (!(canny_sigma > 0.0) || !(canny_low > 0.0 && canny_low < canny_high)) {
    throw ConfigError("edge canny parameters need sigma > 0 and 0 < low < high");
  }
}

EdgeNetConfig EdgeNetConfig::from(const KeyValues& kv) {
  EdgeNetConfig c;
  c.nr = get_size(kv, "edge.nr", c.nr);
  c.stage_mults = kv.get_sizes("edge.stage_mults", c.stage_mults);
  c.n_stages = get_size(kv, "edge.n_stages", c.n_stages);
  c.complexities = kv.get_sizes("edge.complexities", c.complexities);
  c.gt_sigma = kv.get_double("edge.gt_sigma", c.gt_sigma);
  c.blocks_per_stage = get_size(kv, "edge.blocks_per_stage", c.blocks_per_stage);
  c.side_width = get_size(kv, "edge.side_width", c.side_width);
  c.side_bins = kv.get_sizes("edge.side_bins", c.side_bins);
  c.canny_sigma = kv.get_double("edge.canny_sigma", c.canny_sigma);
  c.canny_low = kv.get_double("edge.canny_low", c.canny_low);
  c.canny_high = kv.get_double("edge.canny_high", c.canny_high);
  c.validate();
  return c;
}

void EdgeNetConfig::write(KeyValues& kv) const {
  kv.set("edge.nr", std::to_string(nr));
  kv.set("edge.stage_mults", join_sizes(stage_mults));
  kv.set("edge.n_stages", std::to_string(n_stages));
  kv.set("edge.complexities", join_sizes(complexities));
  kv.set("edge.gt_sigma", format_double(gt_sigma));
  kv.set("edge.blocks_per_stage", std::to_string(blocks_per_stage));
  kv.set("edge.side_width", std::to_string(side_width));
  kv.set("edge.side_bins", join_sizes(side_bins));
  kv.set("edge.canny_sigma", format_double(canny_sigma));
  kv.set("edge.canny_low", format_double(canny_low));
  kv.set("edge.canny_high", format_double(canny_high));
}

void MergeConfig::validate() const {
  if (n_resblocks < 1) throw ConfigError("merge.n_resblocks must be >= 1");
  if (n_feats < 4) throw ConfigError("merge.n_feats must be >= 4");
}

MergeConfig MergeConfig::from(const KeyValues& kv) {
  MergeConfig c;
  c.n_resblocks = get_size(kv, "merge.n_resblocks", c.n_resblocks);
  c.n_feats = get_size(kv, "merge.n_feats", c.n_feats);
  c.res_scale = kv.get_double("merge.res_scale", c.res_scale);
  c.edge_skip = kv.get_bool("merge.edge_skip", c.edge_skip);
  c.validate();
  return c;
}

void MergeConfig::write(KeyValues& kv) const {
  kv.set("merge.n_resblocks", std::to_string(n_resblocks));
  kv.set("merge.n_feats", std::to_string(n_feats));
  kv.set("merge.res_scale", format_double(res_scale));
  kv.set("merge.edge_skip", edge_skip ? "true" : "false");
}

std::string to_string(ModuleKind m) {
  switch (m) {
    case ModuleKind::sr:
      return "sr";
    case ModuleKind::edge:
      return "edge";
    case ModuleKind::merge:
      return "merge";
  }
  return "?";
}

ModuleKind parse_module(const std::string& s) {
  if (s == "sr") return ModuleKind::sr;
  if (s == "edge") return ModuleKind::edge;
  if (s == "merge") return ModuleKind::merge;
  throw ConfigError("unknown module '" + s + "' (expected sr, edge or merge)");
}

void TrainConfig::validate() const {
  check_scale(scale, "train.scale");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (lr_patch == 0) throw ConfigError("train.lr_patch must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be > 0");
  if (halving_period_epochs == 0) throw ConfigError("train.halving_period_epochs must be >= 1");
  if (steps_per_epoch == 0) throw ConfigError("train.steps_per_epoch must be >= 1");
}

TrainConfig TrainConfig::from(const KeyValues& kv) {
  TrainConfig c;
  c.module = parse_module(kv.get_string("train.module", "sr"));
  c.base_lr = c.module == ModuleKind::edge ? 1e-6 : 1e-4;
  c.loss = c.module == ModuleKind::edge ? LossKind::bce : LossKind::l1;
  c.batch_size = get_size(kv, "train.batch_size", c.batch_size);
  c.lr_patch = get_size(kv, "train.lr_patch", c.lr_patch);
  c.scale = static_cast<int>(kv.get_int("train.scale", c.scale));
  c.base_lr = kv.get_double("train.base_lr", c.base_lr);
  c.halving_period_epochs = get_size(kv, "train.halving_period_epochs", c.halving_period_epochs);
  c.epochs = get_size(kv, "train.epochs", c.epochs);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 0));
  const std::string loss = kv.get_string("train.loss", c.loss == LossKind::l1 ? "l1" : "bce");
  if (loss == "l1") c.loss = LossKind::l1;
  else if (loss == "bce") c.loss = LossKind::bce;
  else throw ConfigError("train.loss must be l1 or bce");
  c.steps_per_epoch = get_size(kv, "train.steps_per_epoch", c.steps_per_epoch);
  c.checkpoint_every = get_size(kv, "train.checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

void TrainConfig::write(KeyValues& kv) const {
  kv.set("train.module", to_string(module));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.lr_patch", std::to_string(lr_patch));
  kv.set("train.scale", std::to_string(scale));
  kv.set("train.base_lr", format_double(base_lr));
  kv.set("train.halving_period_epochs", std::to_string(halving_period_epochs));
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.loss", loss == LossKind::l1 ? "l1" : "bce");
  kv.set("train.steps_per_epoch", std::to_string(steps_per_epoch));
  kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
}

}  // namespace sredge
