#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jras/metrics.hpp"
#include "jras/trainer.hpp"

namespace jras::cli {

// Everything a run needs. Resolved as preset defaults, then the config file,
// then command-line overrides. Serialised next to every run output.
struct RunConfig {
  std::string preset = "acdc-style-toy";
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;     // empty: split train_manifest by patient
  std::filesystem::path gallery_manifest;  // used when gallery_source = external
  std::filesystem::path output_dir;
  double split_train_fraction = 0.8;
  std::string backbone = "tiny-cnn";
  int base_channels = 8;
  int embedding_dim = kDefaultEmbeddingDim;
  TrainConfig train;
  HdEmptyPolicy hd_policy = HdEmptyPolicy::Penalty;
  int threads = 1;
  // Evaluation-only settings; training ignores them.
  NoiseConfig eval_noise;
  bool eval_baseline = false;
  std::string report_formats = "svg";  // comma separated: svg, ppm
};

// Preset defaults; throws ArgumentError for an unknown preset name.
RunConfig preset_config(const std::string& name);

struct ConfigKey {
  std::string name;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

// Parsed `key = value` lines. '#' starts a comment; blank lines are ignored.
// Syntax problems are appended to `errors` with line numbers.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   std::vector<std::string>& errors);

// Sets one key; appends a message to `errors` on an unknown key or bad value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                   std::vector<std::string>& errors);

// preset (from the file's `preset` key if present) + file + overrides. All
// problems, syntax and semantic, are collected into `errors`.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides,
                         std::vector<std::string>& errors);

// Semantic checks that need no filesystem access.
std::vector<std::string> config_problems(const RunConfig& cfg);

// Sorted `key = value` lines covering every key.
std::string config_to_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// "svg, ppm" -> {"svg", "ppm"}
std::vector<std::string> split_formats(const std::string& text);

}  // namespace jras::cli
