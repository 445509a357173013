#include "jras_cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"
#include "jras_cli/plot.hpp"
#include "jras_cli/run_io.hpp"

namespace jras::cli {

namespace {

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "\n") + s;
  return out;
}

void require_output_dir(const RunConfig& cfg) {
  if (cfg.output_dir.empty()) throw ConfigError({"output_dir is not set (use --out)"});
}

template <typename T>
void push_opt(std::vector<std::pair<std::string, std::string>>& into, const char* key,
              const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    into.emplace_back(key, *v);
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    into.emplace_back(key, buf);
  } else {
    into.emplace_back(key, std::to_string(*v));
  }
}

EvalOptions eval_options(const RunConfig& cfg, const std::string& label) {
  EvalOptions e;
  e.label = label;
  e.retrieval = cfg.train.retrieval;
  e.tau_fusion = cfg.train.fusion.tau_fusion;
  e.noise = cfg.eval_noise;
  e.hd_policy = cfg.hd_policy;
  e.with_baseline = cfg.eval_baseline;
  e.threads = cfg.threads;
  return e;
}

void write_report_files(const fs::path& dir, const EvalReport& report, const RunConfig& cfg) {
  fs::create_directories(dir);
  io::write_file_atomic(dir / "report.json", report_to_json(report).dump(2) + "\n");
  io::write_file_atomic(dir / "cases.csv", report_cases_csv(report));
  io::write_file_atomic(dir / "slices.csv", report_slices_csv(report));
  if (report.baseline_comparison) {
    io::write_file_atomic(dir / "deltas.csv", deltas_csv(*report.baseline_comparison));
  }
  write_resolved_config(dir, cfg);
}

std::string fmt_stat(const Stat& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f +/- %.4f", s.mean, s.std);
  return buf;
}

void print_summary(std::ostream& out, const std::string& name, const EvalReport& r) {
  out << name << ": mean Dice " << fmt_stat(r.aggregate.mean_dice);
  if (r.aggregate.mean_hd.count > 0) out << ", mean HD " << fmt_stat(r.aggregate.mean_hd);
  out << ", " << r.cases.size() << " cases";
  if (r.baseline_comparison) {
    out << ", improved " << r.baseline_comparison->improved << " / degraded "
        << r.baseline_comparison->degraded << " / unchanged " << r.baseline_comparison->unchanged;
  }
  out << "\n";
}

std::string resolve_stage(const fs::path& dir, const std::string& stage) {
  if (stage == "joint" || stage == "pretrained") return stage;
  if (stage != "auto") throw ArgumentError("--stage must be auto, joint or pretrained");
  return fs::exists(dir / files::kKbJoint / "kb_index.json") ? "joint" : "pretrained";
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

RunConfig resolve(const CommonOptions& opts) {
  std::vector<std::string> errors;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      errors.push_back("--set expects key=value, got '" + s + "'");
      continue;
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (opts.out) overrides.emplace_back("output_dir", opts.out->string());
  if (opts.data) overrides.emplace_back("train_manifest", opts.data->string());
  push_opt(overrides, "seed", opts.seed);
  push_opt(overrides, "threads", opts.threads);
  overrides.insert(overrides.end(), opts.extra.begin(), opts.extra.end());
  RunConfig cfg = resolve_config(opts.config, overrides, errors);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) throw std::invalid_argument("");
    std::size_t u1 = 0, u2 = 0;
    const std::string a = text.substr(0, dots), b = text.substr(dots + 2);
    const int lo = std::stoi(a, &u1), hi = std::stoi(b, &u2);
    if (u1 != a.size() || u2 != b.size() || lo < 0 || hi < lo) throw std::invalid_argument("");
    return {lo, hi};
  } catch (const std::exception&) {
    throw ArgumentError("expected a range like 1..10, got '" + text + "'");
  }
}

int cmd_make_toy(const MakeToyOptions& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("make-toy: --out is required");
  const Dataset ds = generate_toy_dataset(o.spec);
  save_dataset(ds, o.out);
  out << "wrote " << ds.patient_ids().size() << " patients, " << ds.case_ids().size() << " cases, "
      << ds.size() << " slices (" << 2 * ds.size() << " files) at " << ds.height() << "x" << ds.width()
      << " to " << o.out.string() << "\n";
  return 0;
}

int cmd_validate(const ValidateOptions& o, std::ostream& out) {
  std::vector<fs::path> targets = o.datasets;
  std::vector<std::string> problems;
  if (!o.common.config.empty() || !o.common.sets.empty() || o.common.data) {
    try {
      const RunConfig cfg = resolve(o.common);
      for (const auto& p : {cfg.train_manifest, cfg.test_manifest, cfg.gallery_manifest}) {
        if (!p.empty()) targets.push_back(p);
      }
      out << "config OK (hash " << config_hash(cfg) << ")\n";
    } catch (const ConfigError& e) {
      for (const auto& p : e.problems()) problems.push_back("config: " + p);
    }
  }
  if (targets.empty() && problems.empty()) throw ArgumentError("validate: nothing to validate");
  for (const auto& t : targets) {
    const auto found = validate_dataset(t);
    if (found.empty()) {
      const DatasetManifest m = read_manifest(fs::is_directory(t) ? t / "manifest.json" : t);
      out << "OK " << t.string() << ": " << m.patients.size() << " patients, " << m.total_slices()
          << " slices, " << m.height << "x" << m.width << ", " << m.num_classes << " classes\n";
    }
    for (const auto& p : found) problems.push_back(t.string() + ": " + p);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return 0;
}

int cmd_pretrain_retrieval(const PretrainOptions& o, std::ostream& out) {
  CommonOptions common = o.common;
  push_opt(common.extra, "epochs_pretrain_ret", o.epochs);
  const RunConfig cfg = resolve(common);
  require_output_dir(cfg);
  const RunData data = load_run_data(cfg);
  RetrievalModel model = make_retrieval_model(cfg);
  if (!o.init.empty()) {
    auto params = model.parameters();
    load_checkpoint(o.init, params);
  }

  fs::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir, cfg);
  const auto history = pretrain_retrieval(model, data.train, cfg.train);
  save_checkpoint(cfg.output_dir / files::kRetrievalPretrained, model.parameters(), "retrieval_pretrained", cfg);
  io::write_file_atomic(cfg.output_dir / "metrics_retrieval.csv", metrics_csv(history));
  KnowledgeBase::build(model, data.gallery, 0, cfg.threads).export_snapshot(cfg.output_dir / files::kKbPretrained);
  out << "retrieval pretraining: " << history.size() << " epochs";
  if (!history.empty()) out << ", NT-Xent " << history.front().loss << " -> " << history.back().loss;
  out << "\n";
  return 0;
}

int cmd_pretrain_seg(const PretrainOptions& o, std::ostream& out) {
  CommonOptions common = o.common;
  push_opt(common.extra, "epochs_pretrain_seg", o.epochs);
  const RunConfig cfg = resolve(common);
  require_output_dir(cfg);
  const RunData data = load_run_data(cfg);
  SegmentationModel model = make_seg_model(cfg, data.train);
  if (!o.init.empty()) {
    auto params = model.backbone_parameters();
    load_checkpoint(o.init, params);
  }

  fs::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir, cfg);
  const auto history = pretrain_segmentation(model, data.train, cfg.train);
  save_checkpoint(cfg.output_dir / files::kSegPretrained, model.backbone_parameters(), "seg_pretrained", cfg);
  io::write_file_atomic(cfg.output_dir / "metrics_seg.csv", metrics_csv(history));
  out << "segmentation pretraining: " << history.size() << " epochs";
  if (!history.empty()) out << ", loss " << history.front().loss << " -> " << history.back().loss;
  out << "\n";
  return 0;
}

int cmd_joint_train(const JointOptions& o, std::ostream& out) {
  CommonOptions common = o.common;
  push_opt(common.extra, "epochs_joint", o.epochs);
  const RunConfig cfg = resolve(common);
  require_output_dir(cfg);
  const fs::path dir = cfg.output_dir;
  const RunData data = load_run_data(cfg);
  // epochs_joint is left out so a finished run can be extended with --resume.
  RunConfig hashed = cfg;
  hashed.train.epochs_joint = 0;
  const std::string hash = config_hash(hashed);

  TrainState state;
  state.retrieval = make_retrieval_model(cfg);
  state.seg = make_seg_model(cfg, data.train);
  if (o.resume) {
    require_file(dir / files::kJointState, "joint state");
    const auto js = nlohmann::json::parse(io::read_file(dir / files::kJointState));
    if (js.at("config_hash").get<std::string>() != hash) {
      throw ConfigError({"--resume: config hash " + hash + " differs from the interrupted run's " +
                         js.at("config_hash").get<std::string>()});
    }
    auto rp = state.retrieval.parameters();
    load_checkpoint(dir / files::kRetrievalJoint, rp);
    auto sp = state.seg.parameters();
    load_checkpoint(dir / files::kSegJoint, sp);
    require_file(dir / files::kAdamRet, "optimizer state");
    require_file(dir / files::kAdamSeg, "optimizer state");
    state.adam_ret = io::load_adam_state(dir / files::kAdamRet);
    state.adam_seg = io::load_adam_state(dir / files::kAdamSeg);
    state.epoch = js.at("epoch").get<int>();
    for (const auto& m : js.at("history")) state.history.push_back(metrics_from_json(m));
  } else if (!cfg.train.from_scratch) {
    auto rp = state.retrieval.parameters();
    load_checkpoint(dir / files::kRetrievalPretrained, rp);
    auto bp = state.seg.backbone_parameters();
    load_checkpoint(dir / files::kSegPretrained, bp);
    state.seg.sync_guide_encoder();
  }

  write_resolved_config(dir, cfg);
  // The hook's state is `state` itself; saving goes through the mutable name.
  const auto save_all = [&] {
    TrainState& s = state;
    save_checkpoint(dir / files::kRetrievalJoint, s.retrieval.parameters(), "retrieval_joint", cfg);
    save_checkpoint(dir / files::kSegJoint, s.seg.parameters(), "seg_joint", cfg);
    io::save_adam_state(dir / files::kAdamRet, s.adam_ret);
    io::save_adam_state(dir / files::kAdamSeg, s.adam_seg);
    if (!s.kb.empty()) s.kb.export_snapshot(dir / files::kKbJoint);
    io::write_file_atomic(dir / "metrics_joint.csv", metrics_csv(s.history));
    nlohmann::json js;
    js["epoch"] = s.epoch;
    js["epochs_total"] = cfg.train.epochs_joint;
    js["config_hash"] = hash;
    js["history"] = nlohmann::json::array();
    for (const auto& m : s.history) js["history"].push_back(metrics_to_json(m));
    // Written last: its presence marks a consistent checkpoint set.
    io::write_file_atomic(dir / files::kJointState, js.dump(2) + "\n");
  };

  const int start = state.epoch;
  JointHooks hooks;
  hooks.on_epoch_end = [&](const TrainState& s) {
    save_all();
    const EpochMetrics& m = s.history.back();
    out << "joint epoch " << m.epoch << ": loss " << m.loss << " (dice " << m.dice_term << ", ce "
        << m.ce_term << ")\n";
  };
  joint_train(state, data.train, data.gallery, cfg.train, hooks, o.max_epochs);
  if (state.epoch == start) save_all();
  out << "joint training: " << state.epoch << "/" << cfg.train.epochs_joint << " epochs complete\n";
  return 0;
}

int cmd_eval(const EvalCommandOptions& o, std::ostream& out) {
  CommonOptions common = o.common;
  auto& ex = common.extra;
  push_opt(ex, "topk", o.topk);
  if (o.dynamic) ex.emplace_back("dynamic_topk", "true");
  if (o.topk && !o.dynamic) ex.emplace_back("dynamic_topk", "false");
  push_opt(ex, "theta", o.theta);
  if (o.baseline) ex.emplace_back("eval_baseline", "true");
  push_opt(ex, "eval_noise", o.noise);
  push_opt(ex, "eval_noise_sigma", o.sigma);
  push_opt(ex, "eval_noise_density", o.density);
  push_opt(ex, "eval_noise_drop_rate", o.drop_rate);
  push_opt(ex, "eval_noise_seed", o.noise_seed);
  push_opt(ex, "fusion", o.fusion);
  push_opt(ex, "fusion_tau", o.fusion_tau);
  push_opt(ex, "backbone", o.backbone);
  const RunConfig cfg = resolve(common);
  require_output_dir(cfg);
  const fs::path dir = cfg.output_dir;

  std::vector<int> ks;
  if (!o.sweep.empty()) {
    if (o.dynamic) throw ArgumentError("--sweep-topk and --dynamic-topk are exclusive");
    const auto [lo, hi] = parse_range(o.sweep);
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
  }
  const bool dynamic = cfg.train.retrieval.dynamic && ks.empty();
  const bool needs_joint = dynamic || cfg.train.retrieval.k > 0 ||
                           std::any_of(ks.begin(), ks.end(), [](int k) { return k > 0; });
  const bool needs_baseline = cfg.eval_baseline || (!dynamic && cfg.train.retrieval.k == 0 && ks.empty()) ||
                              std::find(ks.begin(), ks.end(), 0) != ks.end();

  std::string name = o.name;
  if (name.empty()) {
    name = !ks.empty() ? "sweep" : dynamic ? "dynamic" : "k" + std::to_string(cfg.train.retrieval.k);
    if (cfg.eval_noise.kind != NoiseKind::None) name += "-" + std::string(noise_kind_name(cfg.eval_noise.kind));
  }
  if (name.find('/') != std::string::npos || name == "." || name == "..") {
    throw ArgumentError("--name must be a plain directory name");
  }

  // Everything is loaded before the first write.
  const RunData data = load_run_data(cfg);
  RetrievalModel ret = make_retrieval_model(cfg);
  SegmentationModel seg = make_seg_model(cfg, data.train);
  std::optional<SegmentationModel> base;
  if (needs_joint) {
    auto rp = ret.parameters();
    load_checkpoint(dir / files::kRetrievalJoint, rp);
    auto sp = seg.parameters();
    load_checkpoint(dir / files::kSegJoint, sp);
  }
  if (needs_baseline) {
    base = make_seg_model(cfg, data.train);
    auto bp = base->backbone_parameters();
    load_checkpoint(dir / files::kSegPretrained, bp);
  }
  const SegmentationModel& model = needs_joint ? seg : *base;
  const SegmentationModel* baseline = base ? &*base : nullptr;

  const fs::path eval_dir = dir / files::kEvalDir / name;
  if (ks.empty()) {
    EvalOptions eo = eval_options(cfg, name);
    eo.retrieval.dynamic = dynamic;
    const EvalReport report = evaluate(ret, model, data.test, data.gallery, eo, baseline);
    write_report_files(eval_dir, report, cfg);
    print_summary(out, name, report);
    return 0;
  }

  std::string summary = "k,mean_dice,mean_dice_std,mean_hd,mean_hd_std";
  for (int c = 1; c < data.train.num_classes(); ++c) summary += ",dice_" + class_name(c, data.train.num_classes());
  summary += ",retrieval_calls\n";
  for (int k : ks) {
    RunConfig kc = cfg;
    kc.train.retrieval.k = k;
    kc.train.retrieval.dynamic = false;
    const std::string label = "k" + std::to_string(k);
    EvalOptions eo = eval_options(kc, label);
    const std::uint64_t calls0 = retrieval_call_count();
    const EvalReport report = evaluate(ret, k == 0 ? *base : model, data.test, data.gallery, eo, baseline);
    const std::uint64_t calls = retrieval_call_count() - calls0;
    write_report_files(eval_dir / label, report, kc);
    print_summary(out, label, report);
    char buf[128];
    const Aggregate& a = report.aggregate;
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g", k, a.mean_dice.mean, a.mean_dice.std,
                  a.mean_hd.mean, a.mean_hd.std);
    summary += buf;
    for (int c = 1; c < data.train.num_classes(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.10g", a.dice.at(c).mean);
      summary += buf;
    }
    summary += "," + std::to_string(calls) + "\n";
  }
  io::write_file_atomic(eval_dir / "sweep_summary.csv", summary);
  write_resolved_config(eval_dir, cfg);
  out << "sweep summary: " << (eval_dir / "sweep_summary.csv").string() << "\n";
  return 0;
}

int cmd_retrieve(const RetrieveOptions& o, std::ostream& out) {
  const RunConfig cfg = resolve(o.common);
  require_output_dir(cfg);
  if (o.k < 1) throw ArgumentError("--k must be >= 1");
  const SliceRef ref = parse_slice_ref(o.query);
  const RunData data = load_run_data(cfg);
  const SliceRecord* query = data.test.find(ref);
  if (!query) query = data.train.find(ref);
  if (!query) query = data.gallery.find(ref);
  if (!query) throw ArgumentError("unknown slice ref " + ref.str());

  const std::string stage = resolve_stage(cfg.output_dir, o.stage);
  const fs::path kb_dir = cfg.output_dir / (stage == "joint" ? files::kKbJoint : files::kKbPretrained);
  require_file(kb_dir / "kb_index.json", "knowledge-base snapshot");
  RetrievalModel model = make_retrieval_model(cfg);
  auto params = model.parameters();
  load_checkpoint(cfg.output_dir / (stage == "joint" ? files::kRetrievalJoint : files::kRetrievalPretrained), params);
  const KnowledgeBase kb = KnowledgeBase::import_snapshot(kb_dir, data.gallery);

  RetrievalConfig rc;
  rc.k = o.k;
  rc.k_max = std::max(rc.k_max, o.k);
  ag::NoGradGuard guard;
  const Tensor q3 = to_three_channel(query->image);
  const RetrievalResult res = kb.retrieve(model.embed(ag::constant(q3)), ref.patient_id, rc);

  out << "query " << ref.str() << " (" << stage << " snapshot, epoch " << kb.epoch_tag() << ", "
      << kb.size() << " entries)\n";
  out << "rank,slice_ref,similarity\n";
  char buf[128];
  for (std::size_t i = 0; i < res.hits.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.6f\n", i + 1, res.hits[i].entry->ref.str().c_str(),
                  res.hits[i].similarity);
    out << buf;
  }
  if (!o.overlay.empty()) {
    const int scale = std::max(1, 256 / std::max(query->mask.height(), query->mask.width()));
    std::vector<Raster> panels{overlay_panel(query->image, query->mask, scale)};
    for (const auto& h : res.hits) {
      const Tensor& g = h.entry->guide_image;
      Tensor plane({g.shape()[1], g.shape()[2]});
      std::copy(g.data(), g.data() + plane.numel(), plane.data());
      panels.push_back(overlay_panel(plane, h.entry->guide_mask, scale));
    }
    if (o.overlay.has_parent_path()) fs::create_directories(o.overlay.parent_path());
    io::write_file_atomic(o.overlay, hstack(panels).to_ppm());
    out << "overlay: " << o.overlay.string() << "\n";
  }
  return 0;
}

}  // namespace jras::cli
