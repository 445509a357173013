#include "jras_cli/run_io.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"

namespace jras::cli {

RunData load_run_data(const RunConfig& cfg) {
  if (cfg.train_manifest.empty()) throw ArgumentError("train_manifest is not set");
  RunData data;
  Dataset all = load_dataset(cfg.train_manifest);
  if (cfg.test_manifest.empty()) {
    auto [train, test] = split_by_patient(all, {cfg.split_train_fraction, cfg.train.seed});
    data.train = std::move(train);
    data.test = std::move(test);
  } else {
    data.train = std::move(all);
    data.test = load_dataset(cfg.test_manifest);
  }
  if (cfg.train.gallery_source == GallerySource::External) {
    data.gallery = load_dataset(cfg.gallery_manifest);
  } else {
    data.gallery = data.train;
  }
  const auto same_geometry = [&](const Dataset& d, const char* what) {
    if (d.height() != data.train.height() || d.width() != data.train.width() ||
        d.num_classes() != data.train.num_classes()) {
      throw ValidationError(std::string(what) + " dataset geometry differs from the training set");
    }
  };
  same_geometry(data.test, "test");
  same_geometry(data.gallery, "gallery");
  return data;
}

RetrievalModel make_retrieval_model(const RunConfig& cfg) {
  RetrievalModelConfig rc;
  rc.embedding_dim = cfg.embedding_dim;
  rc.seed = cfg.train.seed;
  return RetrievalModel(rc);
}

SegmentationModel make_seg_model(const RunConfig& cfg, const Dataset& shape_source) {
  BackboneSpec spec;
  spec.num_classes = shape_source.num_classes();
  spec.height = shape_source.height();
  spec.width = shape_source.width();
  spec.base_channels = cfg.base_channels;
  spec.seed = cfg.train.seed;
  return SegmentationModel(make_backbone(cfg.backbone, spec), cfg.train.fusion.strategy, cfg.train.seed);
}

void write_resolved_config(const fs::path& dir, const RunConfig& cfg) {
  io::write_file_atomic(dir / files::kResolvedConfig,
                        "# config_hash " + config_hash(cfg) + "\n" + config_to_text(cfg));
}

void save_checkpoint(const fs::path& path, const nn::ParameterList& params, const std::string& kind,
                     const RunConfig& cfg) {
  io::save_parameters(path, params);
  nlohmann::json side;
  side["kind"] = kind;
  side["config_hash"] = config_hash(cfg);
  side["seed"] = cfg.train.seed;
  side["parameter_count"] = nn::count_parameters(params);
  side["tensors"] = params.size();
  fs::path json_path = path;
  json_path.replace_extension(".json");
  io::write_file_atomic(json_path, side.dump(2) + "\n");
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw LoadError(what + " not found: " + path.string());
}

void load_checkpoint(const fs::path& path, nn::ParameterList& params) {
  require_file(path, "checkpoint");
  io::load_parameters(path, params);
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "stage,epoch,steps,loss,dice_term,ce_term,kb_epoch_tag\n";
  char buf[256];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.10g,%.10g,%.10g,%d\n", m.stage.c_str(), m.epoch,
                  m.steps, m.loss, m.dice_term, m.ce_term, m.kb_epoch_tag);
    out += buf;
  }
  return out;
}

nlohmann::json metrics_to_json(const EpochMetrics& m) {
  return {{"stage", m.stage}, {"epoch", m.epoch}, {"steps", m.steps}, {"loss", m.loss},
          {"dice_term", m.dice_term}, {"ce_term", m.ce_term}, {"kb_epoch_tag", m.kb_epoch_tag}};
}

EpochMetrics metrics_from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.stage = j.at("stage").get<std::string>();
  m.epoch = j.at("epoch").get<int>();
  m.steps = j.at("steps").get<int>();
  m.loss = j.at("loss").get<double>();
  m.dice_term = j.at("dice_term").get<double>();
  m.ce_term = j.at("ce_term").get<double>();
  m.kb_epoch_tag = j.at("kb_epoch_tag").get<int>();
  return m;
}

}  // namespace jras::cli
