#pragma once

// Run-directory layout and the glue between RunConfig and the core library.

#include <filesystem>
#include <string>
#include <vector>

#include "jras/trainer.hpp"
#include "jras_cli/config.hpp"

namespace jras::cli {

namespace fs = std::filesystem;

namespace files {
inline constexpr const char* kResolvedConfig = "config.resolved";
inline constexpr const char* kRetrievalPretrained = "retrieval_pretrained.bin";
inline constexpr const char* kSegPretrained = "seg_pretrained.bin";
inline constexpr const char* kRetrievalJoint = "retrieval_joint.bin";
inline constexpr const char* kSegJoint = "seg_joint.bin";
inline constexpr const char* kAdamRet = "adam_ret.bin";
inline constexpr const char* kAdamSeg = "adam_seg.bin";
inline constexpr const char* kJointState = "joint_state.json";
inline constexpr const char* kKbPretrained = "kb_pretrained";
inline constexpr const char* kKbJoint = "kb_joint";
inline constexpr const char* kEvalDir = "eval";
}  // namespace files

struct RunData {
  Dataset train;
  Dataset test;
  Dataset gallery;
};

// Loads (and if needed splits) every dataset the config names. Throws
// LoadError / ValidationError before anything is written.
RunData load_run_data(const RunConfig& cfg);

RetrievalModel make_retrieval_model(const RunConfig& cfg);
SegmentationModel make_seg_model(const RunConfig& cfg, const Dataset& shape_source);

// `config.resolved`: a loadable config file whose first line records the hash.
void write_resolved_config(const fs::path& dir, const RunConfig& cfg);

// Checkpoint plus `<stem>.json` sidecar (kind, config hash, parameter count).
void save_checkpoint(const fs::path& path, const nn::ParameterList& params, const std::string& kind,
                     const RunConfig& cfg);
// Throws LoadError naming the file when it does not exist.
void load_checkpoint(const fs::path& path, nn::ParameterList& params);

std::string metrics_csv(const std::vector<EpochMetrics>& history);
nlohmann::json metrics_to_json(const EpochMetrics& m);
EpochMetrics metrics_from_json(const nlohmann::json& j);

// Throws LoadError when a required input file is absent.
void require_file(const fs::path& path, const std::string& what);

}  // namespace jras::cli
