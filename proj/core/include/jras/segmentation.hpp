#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "jras/autograd.hpp"
#include "jras/dataset.hpp"
#include "jras/fusion.hpp"
#include "jras/nn.hpp"

namespace jras {

inline constexpr double kDiceSmoothing = 1e-6;

struct LossValue {
  ag::Var total;  // {1}
  double dice_term = 0.0;
  double ce_term = 0.0;
};

// Mean over all C classes (background included) of
// (2 sum p_c g_c + eps) / (sum p_c + sum g_c + eps). Probabilities are
// {C,H,W} and must sum to one per pixel within 1e-5.
double soft_dice_mean(const Tensor& probabilities, const LabelMap& gt, int num_classes);

// Per-pixel softmax over the class axis of {C,H,W} logits.
Tensor softmax_channels(const Tensor& logits);

// (1 - soft dice mean) + pixel-mean cross-entropy, as one fused op whose
// gradient flows into `logits`.
LossValue seg_loss(const ag::Var& logits, const LabelMap& gt);

// Per-pixel argmax, ties to the lowest class index.
LabelMap predict_mask(const Tensor& logits);

struct EncoderOutput {
  ag::Var deepest;
  std::vector<ag::Var> skips;
};

// A segmentation network mapping {3,H,W} to {C,H,W} logits, split at its
// deepest encoder level so guide features can be merged there.
class SegBackbone {
 public:
  virtual ~SegBackbone() = default;

  virtual std::string name() const = 0;
  virtual int num_classes() const = 0;
  // Channels of EncoderOutput::deepest.
  virtual int feature_channels() const = 0;
  virtual EncoderOutput encode(const ag::Var& x) const = 0;
  virtual ag::Var decode(const EncoderOutput& features) const = 0;
  virtual nn::ParameterList parameters() = 0;
  // Deep copy with independent parameters.
  virtual std::unique_ptr<SegBackbone> clone() const = 0;

  ag::Var forward(const ag::Var& x) const { return decode(encode(x)); }
};

struct BackboneSpec {
  int num_classes = 4;
  int height = 64;
  int width = 64;
  int base_channels = 8;
  std::uint64_t seed = 0;
};

using BackboneFactory = std::function<std::unique_ptr<SegBackbone>(const BackboneSpec&)>;

// Registration point for external backbones. "tiny-cnn" and "tiny-vit" are
// always present. Re-registering a name replaces its factory.
void register_backbone(const std::string& name, BackboneFactory factory);
std::unique_ptr<SegBackbone> make_backbone(const std::string& name, const BackboneSpec& spec);
std::vector<std::string> registered_backbones();

// The segmentation side phi: a backbone plus whatever the fusion strategy
// adds (adapter, attention block, or guide encoder with merge conv). Every
// fusion component starts out as the identity, so forward_fused equals
// forward_baseline until training moves it.
class SegmentationModel {
 public:
  SegmentationModel() = default;
  SegmentationModel(std::unique_ptr<SegBackbone> backbone, FusionStrategy strategy,
                    std::uint64_t seed = 0);
  SegmentationModel(const SegmentationModel& other);
  SegmentationModel& operator=(const SegmentationModel& other);
  SegmentationModel(SegmentationModel&&) noexcept = default;
  SegmentationModel& operator=(SegmentationModel&&) noexcept = default;

  // {3,H,W} query -> logits, no guide.
  ag::Var forward_baseline(const ag::Var& query) const;
  ag::Var forward_fused(const ag::Var& query, const FusedGuide& guide) const;
  // Logits and, for EARLY, the fused input that produced them.
  ag::Var forward_fused(const ag::Var& query, const FusedGuide& guide, FusedInput* early_input) const;

  // backbone.* only; what baseline pretraining optimises.
  nn::ParameterList backbone_parameters();
  // Backbone plus fusion components.
  nn::ParameterList parameters();

  // Re-seeds the guide encoder from the current backbone (DUAL only). Call
  // after loading pretrained backbone weights.
  void sync_guide_encoder();

  SegBackbone& backbone() { return *backbone_; }
  const SegBackbone& backbone() const { return *backbone_; }
  FusionStrategy strategy() const noexcept { return strategy_; }
  Adapter& adapter() noexcept { return adapter_; }
  CrossAttention& cross_attention() noexcept { return xattn_; }
  int num_classes() const { return backbone_->num_classes(); }

 private:
  std::unique_ptr<SegBackbone> backbone_;
  FusionStrategy strategy_ = FusionStrategy::Early;
  Adapter adapter_;
  CrossAttention xattn_;
  std::unique_ptr<SegBackbone> guide_encoder_;
  nn::Conv2d merge_;
};

}  // namespace jras
