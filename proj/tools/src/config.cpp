#include "jras_cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"

namespace jras::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ArgumentError(key + ": '" + v + "' is not a valid number");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ArgumentError(key + ": '" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgumentError(key + ": expected true or false, got '" + v + "'");
}

std::string path_text(const std::filesystem::path& p) {
  return p.empty() ? "" : std::filesystem::weakly_canonical(p).string();
}

struct KeyDef {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define JRAS_INT(NAME, FIELD, HELP)                                                        \
  KeyDef{NAME, HELP, [](const RunConfig& c) { return std::to_string(c.FIELD); },           \
         [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<int>(NAME, v); }}
#define JRAS_REAL(NAME, FIELD, HELP)                                              \
  KeyDef{NAME, HELP, [](const RunConfig& c) { return fmt(c.FIELD); },             \
         [](RunConfig& c, const std::string& v) { c.FIELD = parse_real(NAME, v); }}
#define JRAS_BOOL(NAME, FIELD, HELP)                                                   \
  KeyDef{NAME, HELP, [](const RunConfig& c) { return c.FIELD ? "true" : "false"; },    \
         [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); }}
#define JRAS_PATH(NAME, FIELD, HELP)                                          \
  KeyDef{NAME, HELP, [](const RunConfig& c) { return path_text(c.FIELD); },   \
         [](RunConfig& c, const std::string& v) { c.FIELD = v; }}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      KeyDef{"preset", "defaults bundle (acdc-style-toy)", [](const RunConfig& c) { return c.preset; },
             [](RunConfig& c, const std::string& v) {
               if (v != "acdc-style-toy") throw ArgumentError("preset: unknown preset '" + v + "'");
               c.preset = v;
             }},
      JRAS_PATH("train_manifest", train_manifest, "training dataset (manifest or directory)"),
      JRAS_PATH("test_manifest", test_manifest, "test dataset; empty splits train_manifest by patient"),
      JRAS_PATH("gallery_manifest", gallery_manifest, "external gallery for gallery_source = external"),
      JRAS_PATH("output_dir", output_dir, "run directory"),
      JRAS_REAL("split_train_fraction", split_train_fraction, "patient fraction kept for training"),
      KeyDef{"backbone", "registered segmentation backbone", [](const RunConfig& c) { return c.backbone; },
             [](RunConfig& c, const std::string& v) { c.backbone = v; }},
      JRAS_INT("base_channels", base_channels, "backbone width"),
      JRAS_INT("embedding_dim", embedding_dim, "retrieval embedding dimension"),
      KeyDef{"seed", "global seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
             [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("seed", v); }},
      JRAS_INT("epochs_pretrain_ret", train.epochs_pretrain_ret, "contrastive pretraining epochs"),
      JRAS_INT("epochs_pretrain_seg", train.epochs_pretrain_seg, "baseline segmentation epochs"),
      JRAS_INT("epochs_joint", train.epochs_joint, "joint training epochs"),
      JRAS_INT("batch_size", train.batch_size, "contrastive positive pairs per batch"),
      JRAS_REAL("lr_ret", train.learning_rate_ret, "retrieval pretraining learning rate"),
      JRAS_REAL("lr_seg", train.learning_rate_seg, "segmentation pretraining learning rate"),
      JRAS_REAL("lr_ret_joint", train.learning_rate_ret_joint, "retrieval learning rate, joint stage"),
      JRAS_REAL("lr_seg_joint", train.learning_rate_seg_joint, "segmentation learning rate, joint stage"),
      JRAS_INT("topk", train.retrieval.k, "guides per query (0 = no retrieval at eval)"),
      JRAS_BOOL("dynamic_topk", train.retrieval.dynamic, "threshold-driven k"),
      JRAS_REAL("theta", train.retrieval.theta_threshold, "dynamic top-k similarity threshold"),
      JRAS_INT("k_min", train.retrieval.k_min, "dynamic top-k lower bound"),
      JRAS_INT("k_max", train.retrieval.k_max, "dynamic top-k upper bound"),
      JRAS_REAL("contrastive_tau", train.retrieval.contrastive_tau, "NT-Xent temperature"),
      KeyDef{"fusion", "early, xattn or dual",
             [](const RunConfig& c) { return std::string(fusion_strategy_name(c.train.fusion.strategy)); },
             [](RunConfig& c, const std::string& v) { c.train.fusion.strategy = parse_fusion_strategy(v); }},
      JRAS_REAL("fusion_tau", train.fusion.tau_fusion, "fusion softmax temperature"),
      KeyDef{"train_noise", "guide noise during joint training (none, gaussian, sp, dropout)",
             [](const RunConfig& c) { return std::string(noise_kind_name(c.train.noise.kind)); },
             [](RunConfig& c, const std::string& v) { c.train.noise.kind = parse_noise_kind(v); }},
      JRAS_REAL("noise_sigma", train.noise.sigma, "gaussian guide noise sigma"),
      JRAS_REAL("noise_density", train.noise.density, "salt-and-pepper density"),
      JRAS_REAL("noise_drop_rate", train.noise.drop_rate, "dropout rate"),
      KeyDef{"noise_seed", "guide noise seed", [](const RunConfig& c) { return std::to_string(c.train.noise.seed); },
             [](RunConfig& c, const std::string& v) {
               c.train.noise.seed = parse_number<std::uint64_t>("noise_seed", v);
             }},
      KeyDef{"gallery_source", "train or external",
             [](const RunConfig& c) { return std::string(gallery_source_name(c.train.gallery_source)); },
             [](RunConfig& c, const std::string& v) { c.train.gallery_source = parse_gallery_source(v); }},
      JRAS_REAL("seg_contrast_jitter", train.seg_contrast_jitter, "contrast jitter in seg pretraining"),
      JRAS_BOOL("augment_rotate", train.contrastive_augment.rotate, "contrastive rotations"),
      JRAS_BOOL("augment_flip", train.contrastive_augment.flip, "contrastive flips"),
      JRAS_REAL("augment_contrast_lo", train.contrastive_augment.contrast_lo, "contrast scale lower bound"),
      JRAS_REAL("augment_contrast_hi", train.contrastive_augment.contrast_hi, "contrast scale upper bound"),
      JRAS_BOOL("from_scratch", train.from_scratch, "joint training without pretrained checkpoints"),
      KeyDef{"hd_policy", "penalty or missing",
             [](const RunConfig& c) { return std::string(c.hd_policy == HdEmptyPolicy::Missing ? "missing" : "penalty"); },
             [](RunConfig& c, const std::string& v) {
               if (v == "penalty") c.hd_policy = HdEmptyPolicy::Penalty;
               else if (v == "missing") c.hd_policy = HdEmptyPolicy::Missing;
               else throw ArgumentError("hd_policy: expected penalty or missing, got '" + v + "'");
             }},
      KeyDef{"threads", "worker threads for gallery embedding and evaluation",
             [](const RunConfig& c) { return std::to_string(c.threads); },
             [](RunConfig& c, const std::string& v) {
               c.threads = parse_number<int>("threads", v);
               c.train.kb_threads = std::max(1, c.threads);
             }},
      KeyDef{"eval_noise", "guide noise at evaluation (none, gaussian, sp, dropout)",
             [](const RunConfig& c) { return std::string(noise_kind_name(c.eval_noise.kind)); },
             [](RunConfig& c, const std::string& v) { c.eval_noise.kind = parse_noise_kind(v); }},
      JRAS_REAL("eval_noise_sigma", eval_noise.sigma, "evaluation gaussian sigma"),
      JRAS_REAL("eval_noise_density", eval_noise.density, "evaluation salt-and-pepper density"),
      JRAS_REAL("eval_noise_drop_rate", eval_noise.drop_rate, "evaluation dropout rate"),
      KeyDef{"eval_noise_seed", "evaluation noise seed",
             [](const RunConfig& c) { return std::to_string(c.eval_noise.seed); },
             [](RunConfig& c, const std::string& v) {
               c.eval_noise.seed = parse_number<std::uint64_t>("eval_noise_seed", v);
             }},
      JRAS_BOOL("eval_baseline", eval_baseline, "also evaluate the no-retrieval path"),
      KeyDef{"report_formats", "plot formats for report (svg, ppm)",
             [](const RunConfig& c) { return c.report_formats; },
             [](RunConfig& c, const std::string& v) { c.report_formats = v; }},
  };
  return defs;
}

#undef JRAS_INT
#undef JRAS_REAL
#undef JRAS_BOOL
#undef JRAS_PATH

}  // namespace

RunConfig preset_config(const std::string& name) {
  if (name != "acdc-style-toy") throw ArgumentError("unknown preset '" + name + "'");
  RunConfig c;
  c.preset = name;
  c.train.retrieval.k = 2;
  c.train.fusion.strategy = FusionStrategy::Early;
  c.train.gallery_source = GallerySource::TrainSplit;
  return c;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back({d.name, d.help});
    return out;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   std::vector<std::string>& errors) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      errors.push_back("line " + std::to_string(n) + ": expected 'key = value'");
      continue;
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                   std::vector<std::string>& errors) {
  const auto& defs = key_defs();
  auto it = std::find_if(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.name == key; });
  if (it == defs.end()) {
    errors.push_back("unknown config key '" + key + "'");
    return;
  }
  try {
    it->set(cfg, value);
  } catch (const std::exception& e) {
    errors.emplace_back(e.what());
  }
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides,
                         std::vector<std::string>& errors) {
  std::vector<std::pair<std::string, std::string>> settings;
  if (!file.empty()) {
    try {
      settings = parse_config_text(io::read_file(file), errors);
    } catch (const std::exception& e) {
      errors.push_back("config file: " + std::string(e.what()));
    }
  }
  settings.insert(settings.end(), overrides.begin(), overrides.end());
  std::string preset = "acdc-style-toy";
  for (const auto& [k, v] : settings) {
    if (k == "preset") preset = v;
  }
  RunConfig cfg;
  try {
    cfg = preset_config(preset);
  } catch (const std::exception& e) {
    errors.emplace_back(e.what());
  }
  for (const auto& [k, v] : settings) {
    if (k != "preset") apply_setting(cfg, k, v, errors);
  }
  for (auto& p : config_problems(cfg)) errors.push_back(std::move(p));
  return cfg;
}

std::vector<std::string> config_problems(const RunConfig& cfg) {
  std::vector<std::string> out = cfg.train.problems();
  if (!(cfg.split_train_fraction > 0 && cfg.split_train_fraction < 1)) {
    out.push_back("split_train_fraction must lie in (0, 1)");
  }
  if (cfg.base_channels < 1) out.push_back("base_channels must be >= 1");
  if (cfg.embedding_dim < 1) out.push_back("embedding_dim must be >= 1");
  if (cfg.threads < 1) out.push_back("threads must be >= 1");
  const auto names = registered_backbones();
  if (std::find(names.begin(), names.end(), cfg.backbone) == names.end()) {
    out.push_back("backbone '" + cfg.backbone + "' is not registered");
  }
  try {
    cfg.eval_noise.validate();
  } catch (const std::exception& e) {
    out.push_back(std::string("eval noise: ") + e.what());
  }
  for (const auto& f : split_formats(cfg.report_formats)) {
    if (f != "svg" && f != "ppm") out.push_back("report_formats: unknown format '" + f + "'");
  }
  if (cfg.train.gallery_source == GallerySource::External && cfg.gallery_manifest.empty()) {
    out.push_back("gallery_source = external requires gallery_manifest");
  }
  return out;
}

std::string config_to_text(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& d : key_defs()) rows.emplace_back(d.name, d.get(cfg));
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& [k, v] : rows) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> split_formats(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return io::content_hash(config_to_text(cfg)); }

}  // namespace jras::cli
