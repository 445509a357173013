// Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jras/backbones.hpp"
#include "jras/errors.hpp"
#include "jras/phantom.hpp"
#include "jras/trainer.hpp"
#include "jras_cli/app.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace jras;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void info(const std::string& msg) { std::cout << "  INFO " << msg << "\n"; }

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  Stopwatch clock;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  int dice_bad = 0, hd_bad = 0;
  for (int t = 0; t < 5000; ++t) {
    // Densities from empty to full so the degenerate branches are hit too.
    const double dp = t % 50 == 0 ? 0.0 : u(rng), dg = t % 70 == 0 ? 0.0 : u(rng);
    LabelMap p(16, 16), g(16, 16);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng) < dp ? 1 : 0;
      g[i] = u(rng) < dg ? 1 : 0;
    }
    for (int c = 0; c < 2; ++c) {
      if (std::abs(dice_score(p, g, c) - testing::dice_oracle(p, g, c)) > 1e-9) ++dice_bad;
      for (auto policy : {HdEmptyPolicy::Penalty, HdEmptyPolicy::Missing}) {
        const auto a = hausdorff(p, g, c, policy);
        const auto b = testing::hd_oracle(p, g, c, policy);
        if (a.has_value() != b.has_value() || (a && *a != *b)) ++hd_bad;
      }
    }
  }

  int hand_bad = 0;
  auto check = [&](bool ok) { hand_bad += ok ? 0 : 1; };
  const LabelMap a = testing::from_rows({"1100", "1100"});
  const LabelMap b = testing::from_rows({"0110", "0110"});
  const LabelMap empty(2, 4);
  check(dice_score(a, a, 1) == 1.0);
  check(dice_score(empty, empty, 1) == 1.0);
  check(std::abs(dice_score(a, b, 1) - 0.5) < 1e-12);
  check(hausdorff(a, a, 1) == 0.0);
  LabelMap p1(5, 5), p2(5, 5);
  p1.at(0, 0) = 1;
  p2.at(3, 4) = 1;
  check(hausdorff(p1, p2, 1) == 5.0);
  LabelMap big_empty(64, 64), big(64, 64);
  big.at(10, 10) = 1;
  check(std::abs(*hausdorff(big_empty, big, 1) - 90.50966799187809) < 1e-9);
  check(hausdorff(big_empty, big_empty, 1) == 0.0);
  check(!hausdorff(big_empty, big, 1, HdEmptyPolicy::Missing).has_value());

  const double t = clock.seconds();
  Outcome o;
  o.pass = dice_bad == 0 && hd_bad == 0 && hand_bad == 0 && t < 60;
  o.detail = "5000 fixtures, dice mismatches " + std::to_string(dice_bad) + ", hd mismatches " +
             std::to_string(hd_bad) + ", hand fixture failures " + std::to_string(hand_bad) + ", " +
             fmt("%.1f s", t);
  return o;
}

// ---------------------------------------------------------------------------

Outcome fusion_math() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(1, 10);
  std::uniform_real_distribution<double> sim(-1, 1), logtau(std::log(0.01), std::log(10.0));
  int simplex_bad = 0, order_bad = 0, hot_bad = 0, cold_bad = 0, cold_checked = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> s(static_cast<std::size_t>(len(rng)));
    for (auto& v : s) v = sim(rng);
    const auto w = fusion_weights(s, std::exp(logtau(rng)));
    double total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      total += w[i];
      if (w[i] < 0) ++simplex_bad;
      for (std::size_t j = 0; j < w.size(); ++j)
        if (s[i] > s[j] && !(w[i] > w[j])) ++order_bad;
    }
    if (std::abs(total - 1.0) > 1e-6) ++simplex_bad;

    const auto hot = fusion_weights(s, 1e6);
    for (double v : hot)
      if (std::abs(v - 1.0 / static_cast<double>(s.size())) > 1e-3) ++hot_bad;

    // The cold limit concentrates on the argmax once it is separated from the
    // runner-up by more than the temperature resolves.
    std::vector<double> sorted = s;
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted.size() == 1 || sorted[0] - sorted[1] > 1e-4) {
      ++cold_checked;
      const auto cold = fusion_weights(s, 1e-6);
      const auto top = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
      if (!(cold[top] > 1 - 1e-3)) ++cold_bad;
    }
  }
  const auto hand = fusion_weights(std::vector<double>{0.9, 0.7}, 0.1);
  const bool hand_ok = std::abs(hand[0] - 0.8808) < 1e-4 && std::abs(hand[1] - 0.1192) < 1e-4;
  Outcome o;
  o.pass = simplex_bad == 0 && order_bad == 0 && hot_bad == 0 && cold_bad == 0 && hand_ok;
  o.detail = "10^4 vectors: simplex " + std::to_string(simplex_bad) + ", order " + std::to_string(order_bad) +
             ", tau=1e6 " + std::to_string(hot_bad) + ", tau=1e-6 " + std::to_string(cold_bad) + "/" +
             std::to_string(cold_checked) + " failures; [0.9,0.7] -> [" + fmt("%.4f", hand[0]) + ", " +
             fmt("%.4f", hand[1]) + "]";
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient_flow() {
  Stopwatch clock;
  std::mt19937_64 rng(5);
  std::vector<SliceRecord> records;
  for (int p = 1; p <= 3; ++p) {
    for (int i = 0; i < 2; ++i) {
      SliceRecord r;
      r.ref = {"P00" + std::to_string(p), Phase::ED, i};
      r.image = testing::random_tensor({8, 8}, rng, 0, 1);
      r.mask = testing::random_mask(8, 8, 4, rng);
      records.push_back(std::move(r));
    }
  }
  const Dataset data(std::move(records), 4);

  RetrievalModelConfig rc;
  rc.stage_channels = {4, 4};
  rc.hidden = 8;
  rc.embedding_dim = 8;
  rc.seed = 3;
  RetrievalModel ret(rc);
  BackboneSpec bs;
  bs.height = 8;
  bs.width = 8;
  bs.base_channels = 2;
  bs.seed = 4;
  SegmentationModel seg(make_backbone("tiny-cnn", bs), FusionStrategy::Early, 4);
  // Off the identity, so the guide channels carry gradient to the adapter
  // and on to theta.
  Tensor& aw = seg.adapter().conv().weight.mutable_value();
  for (std::int64_t i = 0; i < aw.numel(); ++i) aw[i] += 0.3 * std::sin(0.7 * static_cast<double>(i) + 1.0);

  const KnowledgeBase built = KnowledgeBase::build(ret, data, 0);
  // Gallery matrix registered as a trainable leaf: retrieval must still keep
  // it out of the graph.
  const ag::Var gallery = ag::parameter(built.embeddings().value());
  const KnowledgeBase kb(built.entries(), gallery, 0);

  const SliceRecord& q = data[0];
  const ag::Var query = ag::constant(to_three_channel(q.image));
  RetrievalConfig cfg;
  cfg.k = 2;
  auto loss = [&] {
    const RetrievalResult hits = kb.retrieve(ret.embed(query), q.ref.patient_id, cfg);
    const FusedGuide guide = fuse_guides(hits.hits, fusion_weights(hits.similarities, 0.1), 4);
    return seg_loss(seg.forward_fused(query, guide), q.mask).total;
  };

  const auto head = testing::check_gradients(loss, nn::vars(ret.head_parameters()));
  const auto adapter = testing::check_gradients(loss, nn::vars(seg.adapter().parameters("adapter.")));
  gallery.node()->grad = Tensor();
  ag::backward(loss());
  bool gallery_zero = true;
  if (gallery.has_grad()) {
    for (std::int64_t i = 0; i < gallery.grad().numel(); ++i) gallery_zero &= gallery.grad()[i] == 0.0;
  }
  const double t = clock.seconds();
  Outcome o;
  o.pass = head.relative_error < 1e-3 && adapter.relative_error < 1e-3 && head.analytic_norm > 0 &&
           adapter.analytic_norm > 0 && gallery_zero && t < 120;
  o.detail = "head rel err " + fmt("%.2e", head.relative_error) + " (|g| " + fmt("%.2e", head.analytic_norm) +
             "), adapter rel err " + fmt("%.2e", adapter.relative_error) + ", gallery grad " +
             (gallery_zero ? "zero" : "NONZERO") + ", " + fmt("%.1f s", t);
  return o;
}

// ---------------------------------------------------------------------------

Dataset toy(int patients, int spp, int size, std::uint64_t seed, int offset = 1) {
  ToySpec s;
  s.num_patients = patients;
  s.slices_per_phase = spp;
  s.height = size;
  s.width = size;
  s.seed = seed;
  s.id_offset = offset;
  return generate_toy_dataset(s);
}

Outcome algorithm_fidelity() {
  const Dataset train = toy(4, 3, 32, 41);
  TrainConfig cfg;
  cfg.seed = 8;
  cfg.epochs_pretrain_ret = 2;
  cfg.epochs_pretrain_seg = 3;
  cfg.epochs_joint = 3;
  cfg.batch_size = 4;
  RetrievalModelConfig rc;
  rc.seed = 8;
  TrainState state;
  state.retrieval = RetrievalModel(rc);
  BackboneSpec bs;
  bs.height = 32;
  bs.width = 32;
  bs.base_channels = 4;
  bs.seed = 8;
  state.seg = SegmentationModel(make_backbone("tiny-cnn", bs), FusionStrategy::Early, 8);
  pretrain_retrieval(state.retrieval, train, cfg);
  pretrain_segmentation(state.seg, train, cfg);
  const SegmentationModel pretrained = state.seg;

  std::vector<Tensor> epoch_embeddings;
  int fresh_mismatch = 0, within_epoch_changes = 0, same_patient = 0, multi_backward = 0, non_scalar = 0;
  int steps = 0;
  double step0_diff = -1;
  JointHooks hooks;
  hooks.on_epoch_begin = [&](int epoch, const KnowledgeBase& kb) {
    epoch_embeddings.push_back(kb.embeddings().value());
    // The snapshot is the current theta applied to the gallery.
    if (KnowledgeBase::build(state.retrieval, train, epoch).embeddings().value() != kb.embeddings().value()) {
      ++fresh_mismatch;
    }
  };
  hooks.on_step = [&](const StepInfo& s) {
    ++steps;
    if (s.kb->embeddings().value() != epoch_embeddings.back()) ++within_epoch_changes;
    for (const auto& h : s.retrieval->hits) same_patient += h.entry->ref.patient_id == s.query.patient_id;
    multi_backward += s.backward_calls != 1;
    non_scalar += s.loss->total.numel() != 1;
    if (s.epoch == 0 && s.step == 0) {
      const Tensor x = to_three_channel(train.find(s.query)->image);
      step0_diff = max_abs_diff(pretrained.forward_baseline(ag::constant(x)).value(), s.logits->value());
    }
  };
  const std::uint64_t calls0 = retrieval_call_count();
  const std::uint64_t backward0 = ag::backward_call_count();
  joint_train(state, train, train, cfg, hooks);
  const auto calls = static_cast<int>(retrieval_call_count() - calls0);
  const auto backwards = static_cast<int>(ag::backward_call_count() - backward0);

  bool across = epoch_embeddings.size() == 3;
  for (std::size_t e = 1; across && e < epoch_embeddings.size(); ++e) {
    across &= epoch_embeddings[e] != epoch_embeddings[e - 1];
  }
  const bool a = across && within_epoch_changes == 0 && fresh_mismatch == 0;
  const bool b = same_patient == 0 && calls == steps;
  const bool c = multi_backward == 0 && non_scalar == 0 && backwards == steps;
  const bool d = step0_diff >= 0 && step0_diff <= 1e-6;
  Outcome o;
  o.pass = a && b && c && d;
  o.detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " (b) " + std::to_string(calls) + " calls audited, " +
             std::to_string(same_patient) + " same-patient (c) " + std::to_string(backwards) + " backward for " +
             std::to_string(steps) + " steps (d) step-0 logit diff " + fmt("%.1e", step0_diff);
  return o;
}

// ---------------------------------------------------------------------------

struct SeedResult {
  double baseline = 0, jras = 0, control = 0;
  int improved = 0, degraded = 0;
  std::map<NoiseKind, double> noisy;
};

constexpr NoiseKind kNoiseKinds[] = {NoiseKind::Gaussian, NoiseKind::SaltPepper, NoiseKind::Dropout};

SeedResult toy_experiment(std::uint64_t seed) {
  const Dataset train = toy(12, 3, 64, 100 + seed);
  const Dataset test = toy(4, 3, 64, 200 + seed, 13);
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs_pretrain_seg = 6;
  cfg.epochs_joint = 2;
  RetrievalModelConfig rc;
  rc.seed = seed;
  RetrievalModel ret(rc);
  pretrain_retrieval(ret, train, cfg);
  BackboneSpec bs;
  bs.seed = seed;
  SegmentationModel seg(make_backbone("tiny-cnn", bs), FusionStrategy::Early, seed);
  pretrain_segmentation(seg, train, cfg);
  const SegmentationModel baseline = seg;

  TrainState state;
  state.retrieval = ret;
  state.seg = seg;
  joint_train(state, train, train, cfg);

  SeedResult r;
  EvalOptions eo;
  eo.retrieval = cfg.retrieval;
  eo.with_baseline = true;
  const EvalReport rep = evaluate(state.retrieval, state.seg, test, train, eo, &baseline);
  r.jras = rep.aggregate.mean_dice.mean;
  r.improved = rep.baseline_comparison->improved;
  r.degraded = rep.baseline_comparison->degraded;
  EvalOptions base_only;
  base_only.retrieval.k = 0;
  r.baseline = evaluate(state.retrieval, baseline, test, train, base_only).aggregate.mean_dice.mean;
  for (NoiseKind kind : kNoiseKinds) {
    EvalOptions noisy = eo;
    noisy.with_baseline = false;
    noisy.noise.kind = kind;
    noisy.noise.seed = seed;
    r.noisy[kind] = evaluate(state.retrieval, state.seg, test, train, noisy).aggregate.mean_dice.mean;
  }

  // Control: the same number of extra epochs without retrieval, to separate
  // the effect of guides from that of more training.
  SegmentationModel control = baseline;
  TrainConfig more = cfg;
  more.epochs_pretrain_seg = cfg.epochs_joint;
  more.learning_rate_seg = cfg.learning_rate_seg_joint;
  pretrain_segmentation(control, train, more);
  r.control = evaluate(state.retrieval, control, test, train, base_only).aggregate.mean_dice.mean;
  return r;
}

std::vector<SeedResult> g_toy;  // shared by criteria 5 and 8
double g_toy_seconds = 0;

void run_toy_experiments() {
  if (!g_toy.empty()) return;
  Stopwatch clock;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    g_toy.push_back(toy_experiment(seed));
    const SeedResult& r = g_toy.back();
    info("seed " + std::to_string(seed) + ": baseline " + fmt("%.4f", r.baseline) + ", jras " +
         fmt("%.4f", r.jras) + ", continued-training control " + fmt("%.4f", r.control) + ", improved " +
         std::to_string(r.improved) + " / degraded " + std::to_string(r.degraded));
  }
  g_toy_seconds = clock.seconds();
}

Outcome toy_improvement() {
  run_toy_experiments();
  std::vector<double> base, jras;
  int improved = 0, degraded = 0;
  for (const auto& r : g_toy) {
    base.push_back(r.baseline);
    jras.push_back(r.jras);
    improved += r.improved;
    degraded += r.degraded;
  }
  Outcome o;
  o.pass = median(jras) >= median(base) && improved >= degraded && g_toy_seconds <= 600;
  o.detail = "median dice jras " + fmt("%.4f", median(jras)) + " vs baseline " + fmt("%.4f", median(base)) +
             ", cases improved " + std::to_string(improved) + " / degraded " + std::to_string(degraded) + ", " +
             fmt("%.0f s", g_toy_seconds);
  return o;
}

// ---------------------------------------------------------------------------

Outcome dynamic_topk() {
  int bad = 0, checked = 0;
  for (int count = 0; count <= 20; ++count) {
    std::vector<double> sims(static_cast<std::size_t>(count), 0.9);
    sims.resize(25, 0.1);
    ++checked;
    if (dynamic_k(sims, 0.5, 1, 10) != std::max(1, std::min(count, 10))) ++bad;
    // The comparison is strict: a similarity equal to theta does not count.
    std::vector<double> at(static_cast<std::size_t>(count), 0.5);
    ++checked;
    if (dynamic_k(at, 0.5, 1, 10) != 1) ++bad;
  }
  Outcome o;
  o.pass = bad == 0;
  o.detail = std::to_string(checked) + " inputs, " + std::to_string(bad) + " mismatches";
  return o;
}

// ---------------------------------------------------------------------------

struct Cli {
  int code;
  std::string out, err;
};

Cli cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void require(const Cli& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " exited " + std::to_string(r.code) + ": " + r.err);
}

// Toy dataset plus a short pretrain -> joint run under `dir`.
fs::path train_cli_run(const fs::path& dir, const fs::path& config = {}) {
  const fs::path data = dir / "toy";
  require(cli({"make-toy", "--out", data.string(), "--patients", "6", "--slices", "3", "--height", "32", "--width",
               "32", "--seed", "12"}),
          "make-toy");
  fs::path cfg = config;
  if (cfg.empty()) {
    cfg = dir / "run.cfg";
    std::ofstream(cfg) << "train_manifest = " << data.string() << "\nbase_channels = 4\nembedding_dim = 32\n"
                       << "epochs_pretrain_ret = 2\nepochs_pretrain_seg = 3\nepochs_joint = 2\nbatch_size = 4\n"
                       << "seed = 6\n";
  }
  const fs::path run = dir / "run";
  for (const char* c : {"pretrain-retrieval", "pretrain-seg", "joint-train"}) {
    require(cli({c, "-c", cfg.string(), "--out", run.string()}), c);
  }
  return run;
}

Outcome sweep_harness() {
  testing::ScratchDir dir("accept_sweep");
  const fs::path run = train_cli_run(dir.path());
  const std::vector<std::string> c{"-c", (dir / "run.cfg").string(), "--out", run.string()};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), c.begin(), c.end());
    return head;
  };
  require(cli(with({"eval", "--sweep-topk", "1..10", "--name", "sweep"})), "eval sweep");
  const std::uint64_t before = retrieval_call_count();
  require(cli(with({"eval", "--topk", "0", "--name", "k0"})), "eval k0");
  const std::uint64_t k0_calls = retrieval_call_count() - before;

  std::vector<fs::path> reports{run / "eval/k0/report.json"};
  for (int k = 1; k <= 10; ++k) reports.push_back(run / "eval/sweep" / ("k" + std::to_string(k)) / "report.json");
  int found = 0, inconsistent = 0;
  std::set<std::string> slice_sets;
  for (const auto& p : reports) {
    if (!fs::exists(p)) continue;
    ++found;
    const EvalReport r = report_from_json(nlohmann::json::parse(slurp(p)));
    std::string refs;
    for (const auto& s : r.slices) refs += s.ref.str() + ";";
    slice_sets.insert(refs);
    if (r.cases.empty() || r.aggregate.mean_dice.count != static_cast<int>(r.cases.size())) ++inconsistent;
  }
  std::istringstream summary(slurp(run / "eval/sweep/sweep_summary.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(summary, line)) ++rows;

  Outcome o;
  o.pass = found == 11 && inconsistent == 0 && slice_sets.size() == 1 && rows == 10 && k0_calls == 0;
  o.detail = std::to_string(found) + " reports, " + std::to_string(inconsistent) + " inconsistent, summary rows " +
             std::to_string(rows) + ", K=0 retrieval calls " + std::to_string(k0_calls);
  return o;
}

// ---------------------------------------------------------------------------

Outcome noise_robustness() {
  run_toy_experiments();
  std::vector<double> base, clean;
  for (const auto& r : g_toy) {
    base.push_back(r.baseline);
    clean.push_back(r.jras);
  }
  const double lo = median(base) - 0.05, hi = median(clean);
  int within = 0;
  std::string detail;
  for (NoiseKind kind : kNoiseKinds) {
    std::vector<double> v;
    for (const auto& r : g_toy) v.push_back(r.noisy.at(kind));
    const double m = median(v);
    const bool ok = m >= lo && m <= hi;
    within += ok;
    detail += std::string(noise_kind_name(kind)) + " " + fmt("%.4f", m) + (ok ? "" : " (out)") + ", ";
  }
  Outcome o;
  o.pass = within >= 2;
  o.detail = detail + "band [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], " + std::to_string(within) +
             "/3 within";
  return o;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Same shape, numeric cells within `tol`, everything else identical.
bool csv_close(const std::string& a, const std::string& b, double tol) {
  const auto ra = csv_rows(a), rb = csv_rows(b);
  if (ra.size() != rb.size() || ra.empty()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].size() != rb[i].size()) return false;
    for (std::size_t j = 0; j < ra[i].size(); ++j) {
      if (ra[i][j] == rb[i][j]) continue;
      char* ea = nullptr;
      char* eb = nullptr;
      const double x = std::strtod(ra[i][j].c_str(), &ea);
      const double y = std::strtod(rb[i][j].c_str(), &eb);
      if (*ea != '\0' || *eb != '\0' || !(std::abs(x - y) <= tol)) return false;
    }
  }
  return true;
}

Outcome determinism() {
  testing::ScratchDir a("accept_det_a"), b("accept_det_b");
  const fs::path run_a = train_cli_run(a.path());
  // The second run starts from the first run's resolved config file.
  const fs::path run_b = train_cli_run(b.path(), run_a / "config.resolved");

  std::vector<std::string> failed;
  int compared = 0;
  auto same_bytes = [&](const fs::path& x, const fs::path& y, const std::string& what) {
    ++compared;
    if (!fs::exists(x) || slurp(x) != slurp(y)) failed.push_back(what);
  };
  auto same_csv = [&](const std::string& x, const std::string& y, const std::string& what) {
    ++compared;
    if (!csv_close(x, y, 1e-6)) failed.push_back(what);
  };
  for (const auto& e : fs::recursive_directory_iterator(a / "toy")) {
    if (e.is_regular_file()) same_bytes(e.path(), b / "toy" / fs::relative(e.path(), a / "toy"), "make-toy");
  }
  for (const char* f : {"metrics_retrieval.csv", "metrics_seg.csv", "metrics_joint.csv"}) {
    same_csv(slurp(run_a / f), slurp(run_b / f), f);
  }

  const std::vector<std::pair<std::string, std::vector<std::string>>> evals{
      {"k2", {"eval", "--topk", "2", "--baseline", "--name", "k2"}},
      {"dyn", {"eval", "--dynamic-topk", "--theta", "0.6", "--name", "dyn"}},
      {"sweep", {"eval", "--sweep-topk", "0..3", "--name", "sweep"}},
      {"sp", {"eval", "--topk", "2", "--guide-noise", "sp", "--name", "sp"}}};
  std::vector<std::string> cfg_a{"-c", (run_a / "config.resolved").string(), "--out", run_a.string()};
  std::vector<std::string> cfg_b{"-c", (run_a / "config.resolved").string(), "--out", run_b.string()};
  auto with = [](std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  for (const auto& [name, args] : evals) {
    require(cli(with(args, cfg_a)), "eval " + name);
    require(cli(with(args, cfg_b)), "eval " + name);
  }
  for (const char* f : {"k2/cases.csv", "k2/slices.csv", "k2/deltas.csv", "dyn/cases.csv", "sp/cases.csv",
                        "sweep/sweep_summary.csv", "sweep/k3/slices.csv"}) {
    same_csv(slurp(run_a / "eval" / f), slurp(run_b / "eval" / f), std::string("eval/") + f);
  }
  const Cli ra = cli(with({"retrieve", "--query", "P002/ES/1", "--k", "5"}, cfg_a));
  const Cli rb = cli(with({"retrieve", "--query", "P002/ES/1", "--k", "5"}, cfg_b));
  require(ra, "retrieve");
  const auto table = [](const std::string& s) { return s.substr(s.find("rank,")); };
  same_csv(table(ra.out), table(rb.out), "retrieve");
  require(cli({"report", run_a.string(), "--out", (a / "rep").string()}), "report");
  require(cli({"report", run_b.string(), "--out", (b / "rep").string()}), "report");
  same_csv(slurp(a / "rep/aggregate_table.csv"), slurp(b / "rep/aggregate_table.csv"), "report");

  // Rerunning into the same directory reproduces the file it overwrites.
  const std::string before = slurp(run_a / "eval/k2/cases.csv");
  require(cli(with(evals[0].second, cfg_a)), "eval rerun");
  same_csv(before, slurp(run_a / "eval/k2/cases.csv"), "eval rerun");

  Outcome o;
  o.pass = failed.empty();
  o.detail = std::to_string(compared) + " outputs compared";
  if (!failed.empty()) {
    o.detail += ", differing:";
    for (const auto& f : failed) o.detail += " " + f;
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracles", metric_oracles},
      {"fusion math", fusion_math},
      {"gradient flow", gradient_flow},
      {"joint loop fidelity", algorithm_fidelity},
      {"toy-scale improvement", toy_improvement},
      {"dynamic top-k", dynamic_topk},
      {"top-K sweep harness", sweep_harness},
      {"noise robustness", noise_robustness},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "CRITERION " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
