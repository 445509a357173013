#include "jras/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "jras/errors.hpp"

namespace jras {

std::string_view gallery_source_name(GallerySource g) noexcept {
  return g == GallerySource::External ? "external" : "train";
}

GallerySource parse_gallery_source(std::string_view text) {
  if (text == "train") return GallerySource::TrainSplit;
  if (text == "external") return GallerySource::External;
  throw ArgumentError("unknown gallery source '" + std::string(text) + "' (train, external)");
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) out.push_back(msg);
  };
  need(epochs_pretrain_ret >= 0, "epochs_pretrain_ret must be >= 0");
  need(epochs_pretrain_seg >= 0, "epochs_pretrain_seg must be >= 0");
  need(epochs_joint >= 0, "epochs_joint must be >= 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(learning_rate_ret > 0, "learning_rate_ret must be > 0");
  need(learning_rate_seg > 0, "learning_rate_seg must be > 0");
  need(learning_rate_ret_joint > 0, "learning_rate_ret_joint must be > 0");
  need(learning_rate_seg_joint > 0, "learning_rate_seg_joint must be > 0");
  need(seg_contrast_jitter >= 0 && seg_contrast_jitter < 1, "seg_contrast_jitter must lie in [0, 1)");
  need(kb_threads >= 1, "kb_threads must be >= 1");
  need(contrastive_augment.contrast_lo > 0 && contrastive_augment.contrast_lo <= contrastive_augment.contrast_hi,
       "augment contrast range must satisfy 0 < lo <= hi");
  auto collect = [&](auto&& f) {
    try {
      f();
    } catch (const ArgumentError& e) {
      out.emplace_back(e.what());
    }
  };
  collect([&] { retrieval.validate(); });
  collect([&] { fusion.validate(); });
  collect([&] { noise.validate(); });
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ArgumentError(msg);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage, std::int64_t epoch,
                          std::int64_t index) {
  std::uint32_t tag = 2166136261u;
  for (char c : stage) tag = (tag ^ static_cast<unsigned char>(c)) * 16777619u;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  return rng();
}

std::uint64_t slice_stream(const SliceRef& ref) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : ref.str()) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

namespace {

void check_finite(double v, const std::string& stage, int epoch, int step) {
  if (!std::isfinite(v)) {
    throw NumericError(stage + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<EpochMetrics> pretrain_retrieval(RetrievalModel& model, const Dataset& data,
                                             const TrainConfig& cfg) {
  cfg.validate();
  std::vector<EpochMetrics> history;
  if (cfg.epochs_pretrain_ret == 0) return history;
  const std::size_t pairs = count_consecutive_pairs(data);
  const int batches = std::max<int>(1, static_cast<int>(pairs) / cfg.batch_size);
  optim::Adam adam(nn::vars(model.parameters()), {cfg.learning_rate_ret});
  for (int epoch = 0; epoch < cfg.epochs_pretrain_ret; ++epoch) {
    EpochMetrics m{"retrieval", epoch};
    for (int b = 0; b < batches; ++b) {
      const ContrastiveBatch batch = make_contrastive_pairs(
          data, cfg.batch_size, derive_seed(cfg.seed, "retrieval", epoch, b), cfg.contrastive_augment);
      std::vector<ag::Var> rows;
      for (const auto& v : batch.views) {
        rows.push_back(ag::reshape(model.embed(ag::constant(v)), {1, model.embedding_dim()}));
      }
      const ag::Var loss = nt_xent_loss(ag::concat(rows), batch.positive, cfg.retrieval.contrastive_tau);
      check_finite(loss.item(), "pretrain_retrieval", epoch, b);
      adam.zero_grad();
      ag::backward(loss);
      adam.step();
      m.loss += loss.item();
      ++m.steps;
    }
    m.loss /= m.steps;
    history.push_back(m);
  }
  return history;
}

std::vector<EpochMetrics> pretrain_segmentation(SegmentationModel& model, const Dataset& data,
                                                const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("pretrain_segmentation: empty dataset");
  std::vector<EpochMetrics> history;
  if (cfg.epochs_pretrain_seg == 0) return history;
  optim::Adam adam(nn::vars(model.backbone_parameters()), {cfg.learning_rate_seg});
  AugmentConfig jitter{false, false, 1.0 - cfg.seg_contrast_jitter, 1.0 + cfg.seg_contrast_jitter};
  for (int epoch = 0; epoch < cfg.epochs_pretrain_seg; ++epoch) {
    EpochMetrics m{"seg", epoch};
    std::mt19937_64 rng(derive_seed(cfg.seed, "seg", epoch));
    for (std::size_t i : shuffled_order(data.size(), rng())) {
      const SliceRecord& s = data[i];
      Tensor x = to_three_channel(s.image);
      if (cfg.seg_contrast_jitter > 0) x = augment(x, rng, jitter);
      const LossValue loss = seg_loss(model.forward_baseline(ag::constant(std::move(x))), s.mask);
      check_finite(loss.total.item(), "pretrain_segmentation", epoch, m.steps);
      adam.zero_grad();
      ag::backward(loss.total);
      adam.step();
      m.loss += loss.total.item();
      m.dice_term += loss.dice_term;
      m.ce_term += loss.ce_term;
      ++m.steps;
    }
    m.loss /= m.steps;
    m.dice_term /= m.steps;
    m.ce_term /= m.steps;
    history.push_back(m);
  }
  return history;
}

void joint_train(TrainState& state, const Dataset& train, const Dataset& gallery,
                 const TrainConfig& cfg, const JointHooks& hooks, int max_epochs) {
  cfg.validate();
  if (train.empty()) throw ArgumentError("joint_train: empty training set");
  if (gallery.empty()) throw ArgumentError("joint_train: empty gallery");
  if (cfg.retrieval.k < 1 && !cfg.retrieval.dynamic) {
    throw ArgumentError("joint_train: retrieval k must be >= 1");
  }
  const int num_classes = state.seg.num_classes();
  const auto ret_params = nn::vars(state.retrieval.parameters());
  const auto seg_params = nn::vars(state.seg.parameters());
  optim::Adam adam_ret(ret_params, {cfg.learning_rate_ret_joint}, state.adam_ret);
  optim::Adam adam_seg(seg_params, {cfg.learning_rate_seg_joint}, state.adam_seg);

  int run = 0;
  while (state.epoch < cfg.epochs_joint && (max_epochs < 0 || run < max_epochs)) {
    const int epoch = state.epoch;
    state.kb = KnowledgeBase::build(state.retrieval, gallery, epoch, cfg.kb_threads);
    if (hooks.on_epoch_begin) hooks.on_epoch_begin(epoch, state.kb);

    EpochMetrics m{"joint", epoch};
    m.kb_epoch_tag = state.kb.epoch_tag();
    for (std::size_t i : shuffled_order(train.size(), derive_seed(cfg.seed, "joint", epoch))) {
      const SliceRecord& s = train[i];
      const ag::Var query = ag::constant(to_three_channel(s.image));
      const ag::Var q = state.retrieval.embed(query);
      const RetrievalResult hits = state.kb.retrieve(q, s.ref.patient_id, cfg.retrieval);
      for (const auto& h : hits.hits) {
        if (h.entry->ref.patient_id == s.ref.patient_id) {
          throw std::logic_error("joint_train: same-patient guide for " + s.ref.str());
        }
      }
      const ag::Var w = fusion_weights(hits.similarities, cfg.fusion.tau_fusion);
      FusedGuide guide = fuse_guides(hits.hits, w, num_classes);
      guide = apply_guide_noise(guide, cfg.noise,
                                slice_stream(s.ref) ^ derive_seed(cfg.seed, "noise", epoch));
      const ag::Var logits = state.seg.forward_fused(query, guide);
      const LossValue loss = seg_loss(logits, s.mask);
      check_finite(loss.total.item(), "joint_train", epoch, m.steps);

      adam_ret.zero_grad();
      adam_seg.zero_grad();
      const std::uint64_t before = ag::backward_call_count();
      ag::backward(loss.total);
      const std::uint64_t calls = ag::backward_call_count() - before;
      if (calls != 1) throw std::logic_error("joint_train: expected exactly one backward per step");
      if (hooks.on_step) {
        hooks.on_step({epoch, m.steps, s.ref, &hits, &logits, &loss, calls, &state.kb});
      }
      adam_ret.step();
      adam_seg.step();

      m.loss += loss.total.item();
      m.dice_term += loss.dice_term;
      m.ce_term += loss.ce_term;
      ++m.steps;
    }
    m.loss /= m.steps;
    m.dice_term /= m.steps;
    m.ce_term /= m.steps;
    state.history.push_back(m);
    state.adam_ret = adam_ret.state();
    state.adam_seg = adam_seg.state();
    state.epoch = epoch + 1;
    ++run;
    if (hooks.on_epoch_end) hooks.on_epoch_end(state);
  }
}

}  // namespace jras
