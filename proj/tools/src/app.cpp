#include "jras_cli/app.hpp"

#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "jras/errors.hpp"
#include "jras_cli/commands.hpp"

namespace jras::cli {

namespace {

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "key = value config file");
  cmd->add_option("--set", o.sets, "override one config key (key=value), repeatable");
  cmd->add_option("-o,--out", o.out, "run directory (config key output_dir)");
  cmd->add_option("--data", o.data, "training dataset (config key train_manifest)");
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--threads", o.threads, "worker threads");
}

std::string keys_help() {
  std::string s = "Config keys:\n";
  for (const auto& k : config_keys()) s += "  " + k.name + "  " + k.help + "\n";
  return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Jointly trained retrieval-augmented segmentation toolkit", "jras"};
  app.require_subcommand(1);
  app.footer(keys_help());

  MakeToyOptions toy;
  auto* make_toy = app.add_subcommand("make-toy", "write a synthetic cardiac phantom dataset");
  make_toy->add_option("--out", toy.out, "output directory")->required();
  make_toy->add_option("--patients", toy.spec.num_patients, "number of patients")->capture_default_str();
  make_toy->add_option("--slices", toy.spec.slices_per_phase, "slices per phase")->capture_default_str();
  make_toy->add_option("--height", toy.spec.height, "image height")->capture_default_str();
  make_toy->add_option("--width", toy.spec.width, "image width")->capture_default_str();
  make_toy->add_option("--seed", toy.spec.seed, "generator seed")->capture_default_str();
  make_toy->add_option("--id-prefix", toy.spec.id_prefix, "patient id prefix")->capture_default_str();
  make_toy->add_option("--id-offset", toy.spec.id_offset, "first patient number")->capture_default_str();

  ValidateOptions val;
  auto* validate = app.add_subcommand("validate", "check datasets and/or a config");
  validate->add_option("datasets", val.datasets, "dataset directories or manifest files");
  add_common(validate, val.common);

  PretrainOptions pre_ret, pre_seg;
  auto* pretrain_ret = app.add_subcommand("pretrain-retrieval", "contrastive pretraining of the retrieval model");
  add_common(pretrain_ret, pre_ret.common);
  pretrain_ret->add_option("--epochs", pre_ret.epochs, "override epochs_pretrain_ret");
  pretrain_ret->add_option("--init", pre_ret.init, "start from this checkpoint");
  auto* pretrain_seg = app.add_subcommand("pretrain-seg", "baseline segmentation pretraining");
  add_common(pretrain_seg, pre_seg.common);
  pretrain_seg->add_option("--epochs", pre_seg.epochs, "override epochs_pretrain_seg");
  pretrain_seg->add_option("--init", pre_seg.init, "start from this backbone checkpoint");

  JointOptions joint;
  auto* joint_cmd = app.add_subcommand("joint-train", "joint training of retrieval and segmentation");
  add_common(joint_cmd, joint.common);
  joint_cmd->add_option("--epochs", joint.epochs, "override epochs_joint");
  joint_cmd->add_flag("--resume", joint.resume, "continue from joint_state.json");
  joint_cmd->add_option("--max-epochs", joint.max_epochs, "stop after this many new epochs");

  EvalCommandOptions ev;
  auto* eval = app.add_subcommand("eval", "evaluate trained checkpoints on the test split");
  add_common(eval, ev.common);
  eval->add_option("--name", ev.name, "report directory name under eval/");
  auto* topk = eval->add_option("--topk", ev.topk, "guides per query; 0 = baseline, no retrieval");
  auto* dyn = eval->add_flag("--dynamic-topk", ev.dynamic, "threshold-driven k");
  eval->add_option("--theta", ev.theta, "dynamic top-k threshold");
  eval->add_flag("--baseline", ev.baseline, "also evaluate the no-retrieval path and emit deltas");
  auto* sweep = eval->add_option("--sweep-topk", ev.sweep, "one report per K in a..b plus a summary");
  topk->excludes(dyn);
  sweep->excludes(topk)->excludes(dyn);
  eval->add_option("--guide-noise", ev.noise, "none, gaussian, sp or dropout");
  eval->add_option("--noise-sigma", ev.sigma, "gaussian sigma");
  eval->add_option("--noise-density", ev.density, "salt-and-pepper density");
  eval->add_option("--noise-drop-rate", ev.drop_rate, "dropout rate");
  eval->add_option("--noise-seed", ev.noise_seed, "noise seed");
  eval->add_option("--fusion", ev.fusion, "early, xattn or dual (must match training)");
  eval->add_option("--fusion-tau", ev.fusion_tau, "fusion temperature");
  eval->add_option("--backbone", ev.backbone, "registered backbone (must match training)");

  RetrieveOptions rq;
  auto* retrieve = app.add_subcommand("retrieve", "inspect the knowledge base for one query slice");
  add_common(retrieve, rq.common);
  retrieve->add_option("--query", rq.query, "slice ref, e.g. P001/ED/2")->required();
  retrieve->add_option("--k", rq.k, "number of hits")->capture_default_str();
  retrieve->add_option("--overlay", rq.overlay, "write a PPM panel: query then guides, masks tinted");
  retrieve->add_option("--stage", rq.stage, "auto, joint or pretrained snapshot")->capture_default_str();

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "aggregate tables and plots over run directories");
  report->add_option("runs", rep.runs, "run directories or report directories")->required();
  report->add_option("--out", rep.out, "output directory")->required();
  report->add_option("--formats", rep.formats, "comma separated: svg, ppm")->capture_default_str();
  report->add_option("--select", rep.select, "report name compared across runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*make_toy) return cmd_make_toy(toy, out);
    if (*validate) return cmd_validate(val, out);
    if (*pretrain_ret) return cmd_pretrain_retrieval(pre_ret, out);
    if (*pretrain_seg) return cmd_pretrain_seg(pre_seg, out);
    if (*joint_cmd) return cmd_joint_train(joint, out);
    if (*eval) return cmd_eval(ev, out);
    if (*retrieve) return cmd_retrieve(rq, out);
    if (*report) return cmd_report(rep, out);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) err << "error: " << p << "\n";
    return kExitValidation;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"jras"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace jras::cli
