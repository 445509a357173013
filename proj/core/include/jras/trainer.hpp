#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jras/contrastive.hpp"
#include "jras/dataset.hpp"
#include "jras/fusion.hpp"
#include "jras/knowledge_base.hpp"
#include "jras/metrics.hpp"
#include "jras/optim.hpp"
#include "jras/perturb.hpp"
#include "jras/retrieval.hpp"
#include "jras/segmentation.hpp"

namespace jras {

enum class GallerySource { TrainSplit, External };

std::string_view gallery_source_name(GallerySource g) noexcept;  // train / external
GallerySource parse_gallery_source(std::string_view text);

struct TrainConfig {
  int epochs_pretrain_ret = 8;
  int epochs_pretrain_seg = 20;
  int epochs_joint = 3;
  int batch_size = 8;
  double learning_rate_ret = 1e-3;
  double learning_rate_seg = 3e-3;
  // Joint-stage rates; the pretrained models are fine-tuned, not retrained.
  double learning_rate_ret_joint = 1e-4;
  double learning_rate_seg_joint = 1e-3;
  std::uint64_t seed = 0;
  RetrievalConfig retrieval;
  FusionConfig fusion;
  NoiseConfig noise;  // applied to guides during joint training
  GallerySource gallery_source = GallerySource::TrainSplit;
  AugmentConfig contrastive_augment;
  // Contrast scale in [1 - j, 1 + j] on seg-pretraining queries; 0 disables.
  double seg_contrast_jitter = 0.1;
  // Joint training without pretrained weights (ablation only).
  bool from_scratch = false;
  int kb_threads = 1;

  // Every violated constraint, empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;  // throws ArgumentError listing problems()
};

struct EpochMetrics {
  std::string stage;  // retrieval / seg / joint
  int epoch = 0;
  int steps = 0;
  double loss = 0.0;
  double dice_term = 0.0;  // seg and joint only
  double ce_term = 0.0;
  int kb_epoch_tag = -1;   // joint only
};

// Deterministic per-(stage, epoch, index) seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage, std::int64_t epoch,
                          std::int64_t index = 0);

// Contrastive pretraining. Epochs hold max(1, pairs / B) batches. Returns one
// entry per epoch.
std::vector<EpochMetrics> pretrain_retrieval(RetrievalModel& model, const Dataset& data,
                                             const TrainConfig& cfg);

// Baseline pretraining of the backbone on plain queries; one Adam step per
// slice.
std::vector<EpochMetrics> pretrain_segmentation(SegmentationModel& model, const Dataset& data,
                                                const TrainConfig& cfg);

struct TrainState {
  RetrievalModel retrieval;
  SegmentationModel seg;
  optim::AdamState adam_ret;
  optim::AdamState adam_seg;
  KnowledgeBase kb;
  int epoch = 0;  // joint epochs completed
  std::vector<EpochMetrics> history;
};

struct StepInfo {
  int epoch = 0;
  int step = 0;  // within the epoch
  SliceRef query;
  const RetrievalResult* retrieval = nullptr;
  const ag::Var* logits = nullptr;
  const LossValue* loss = nullptr;
  std::uint64_t backward_calls = 0;  // during this step
  const KnowledgeBase* kb = nullptr;
};

struct JointHooks {
  std::function<void(int epoch, const KnowledgeBase& kb)> on_epoch_begin;
  // After backward, before the optimiser step.
  std::function<void(const StepInfo&)> on_step;
  // After the epoch's metrics are appended; state is consistent for saving.
  std::function<void(const TrainState&)> on_epoch_end;
};

// Algorithm: per epoch rebuild the knowledge base without gradients, then
// for each query embed, retrieve (same patient excluded), fuse, segment and
// take one Adam step on theta and phi from the segmentation loss alone.
// Resumes at state.epoch; stops after `max_epochs` new epochs when >= 0.
void joint_train(TrainState& state, const Dataset& train, const Dataset& gallery,
                 const TrainConfig& cfg, const JointHooks& hooks = {}, int max_epochs = -1);

struct EvalOptions {
  std::string label = "jras";
  RetrievalConfig retrieval;
  double tau_fusion = 0.1;
  NoiseConfig noise;
  HdEmptyPolicy hd_policy = HdEmptyPolicy::Penalty;
  // Also run the no-retrieval path and attach case_analysis.
  bool with_baseline = false;
  int threads = 1;
};

// K = 0 (fixed) means no retrieval at all. The no-retrieval path uses
// `baseline` when given, else the backbone of `seg`.
EvalReport evaluate(const RetrievalModel& retrieval, const SegmentationModel& seg,
                    const Dataset& test, const Dataset& gallery, const EvalOptions& opts,
                    const SegmentationModel* baseline = nullptr);

// Noise stream for a query, stable across runs.
std::uint64_t slice_stream(const SliceRef& ref);

}  // namespace jras
