#include "jras/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "jras/backbones.hpp"
#include "jras/errors.hpp"

namespace jras {

Tensor softmax_channels(const Tensor& logits) {
  if (logits.rank() != 3) throw ArgumentError("softmax_channels expects {C,H,W}");
  const auto c = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
  Tensor p(logits.shape());
  for (std::int64_t i = 0; i < hw; ++i) {
    double mx = logits[i];
    for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, logits[k * hw + i]);
    double z = 0.0;
    for (std::int64_t k = 0; k < c; ++k) z += (p[k * hw + i] = std::exp(logits[k * hw + i] - mx));
    for (std::int64_t k = 0; k < c; ++k) p[k * hw + i] /= z;
  }
  return p;
}

namespace {

void check_probabilities(const Tensor& p, const LabelMap& gt, int num_classes) {
  if (p.rank() != 3 || p.dim(0) != num_classes || p.dim(1) != gt.height() || p.dim(2) != gt.width()) {
    throw ArgumentError("soft_dice_mean: probabilities " + shape_to_string(p.shape()) +
                        " do not match mask " + std::to_string(gt.height()) + "x" +
                        std::to_string(gt.width()) + " with C=" + std::to_string(num_classes));
  }
  const auto hw = p.dim(1) * p.dim(2);
  for (std::int64_t i = 0; i < hw; ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < num_classes; ++k) {
      const double v = p[k * hw + i];
      if (!(v >= -1e-12)) throw ArgumentError("soft_dice_mean: negative or NaN probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-5) throw ArgumentError("soft_dice_mean: pixel probabilities do not sum to 1");
  }
}

// Per class: intersection and prediction mass.
struct DiceParts {
  std::vector<double> inter, pred, gt;
};

DiceParts dice_parts(const Tensor& p, const LabelMap& gt, int c) {
  const auto hw = static_cast<std::int64_t>(gt.size());
  DiceParts d{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t i = 0; i < hw; ++i) d.pred[k] += p[k * hw + i];
  }
  for (std::int64_t i = 0; i < hw; ++i) {
    const int y = gt[static_cast<std::size_t>(i)];
    d.inter[y] += p[y * hw + i];
    d.gt[y] += 1.0;
  }
  return d;
}

double mean_dice(const DiceParts& d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d.inter.size(); ++k) {
    s += (2.0 * d.inter[k] + kDiceSmoothing) / (d.pred[k] + d.gt[k] + kDiceSmoothing);
  }
  return s / static_cast<double>(d.inter.size());
}

}  // namespace

double soft_dice_mean(const Tensor& probabilities, const LabelMap& gt, int num_classes) {
  check_probabilities(probabilities, gt, num_classes);
  if (gt.max_label() >= num_classes) throw ArgumentError("soft_dice_mean: label >= C");
  return mean_dice(dice_parts(probabilities, gt, num_classes));
}

LossValue seg_loss(const ag::Var& logits, const LabelMap& gt) {
  const Tensor& z = logits.value();
  if (z.rank() != 3 || z.dim(1) != gt.height() || z.dim(2) != gt.width()) {
    throw ArgumentError("seg_loss: logits " + shape_to_string(z.shape()) + " vs mask " +
                        std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  const auto c = static_cast<int>(z.dim(0));
  if (gt.max_label() >= c) {
    throw ArgumentError("seg_loss: mask label " + std::to_string(gt.max_label()) + " >= C=" +
                        std::to_string(c));
  }
  if (!z.all_finite()) throw NumericError("seg_loss: non-finite logits");
  const auto hw = static_cast<std::int64_t>(gt.size());
  const double inv_n = 1.0 / static_cast<double>(hw);
  const double inv_c = 1.0 / static_cast<double>(c);

  auto p = std::make_shared<Tensor>(softmax_channels(z));
  const DiceParts d = dice_parts(*p, gt, c);
  const double dice = mean_dice(d);

  double ce = 0.0;
  for (std::int64_t i = 0; i < hw; ++i) {
    const int y = gt[static_cast<std::size_t>(i)];
    // log p_y via log-sum-exp of the logits, not log of a rounded softmax.
    double mx = z[i];
    for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, z[k * hw + i]);
    double s = 0.0;
    for (std::int64_t k = 0; k < c; ++k) s += std::exp(z[k * hw + i] - mx);
    ce += mx + std::log(s) - z[y * hw + i];
  }
  ce *= inv_n;

  LossValue out;
  out.dice_term = 1.0 - dice;
  out.ce_term = ce;
  // dTotal/dp for the dice term; CE is handled directly in logit space.
  auto a_num = std::make_shared<std::vector<double>>(c);
  auto a_den = std::make_shared<std::vector<double>>(c);
  for (int k = 0; k < c; ++k) {
    const double den = d.pred[k] + d.gt[k] + kDiceSmoothing;
    (*a_num)[k] = -inv_c * 2.0 / den;                                        // times g
    (*a_den)[k] = inv_c * (2.0 * d.inter[k] + kDiceSmoothing) / (den * den);  // every pixel
  }
  auto labels = std::make_shared<std::vector<std::uint8_t>>(gt.labels());
  out.total = ag::make_op(Tensor({1}, out.dice_term + out.ce_term), {logits},
                          [p, a_num, a_den, labels, c, hw, inv_n](ag::Node& self) {
    ag::Node& nz = *self.inputs[0];
    if (!nz.requires_grad) return;
    const double g = self.grad[0];
    Tensor& gz = nz.grad_buffer();
    std::vector<double> a(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < hw; ++i) {
      const int y = (*labels)[static_cast<std::size_t>(i)];
      double pa = 0.0;
      for (int k = 0; k < c; ++k) {
        a[k] = (*a_den)[k] + (k == y ? (*a_num)[k] : 0.0);
        pa += (*p)[k * hw + i] * a[k];
      }
      for (int k = 0; k < c; ++k) {
        const double pk = (*p)[k * hw + i];
        const double dice_grad = pk * (a[k] - pa);
        const double ce_grad = inv_n * (pk - (k == y ? 1.0 : 0.0));
        gz[k * hw + i] += g * (dice_grad + ce_grad);
      }
    }
  });
  return out;
}

LabelMap predict_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(0) < 1 || logits.dim(0) > 256) {
    throw ArgumentError("predict_mask expects {C,H,W} logits");
  }
  const auto c = logits.dim(0);
  const int h = static_cast<int>(logits.dim(1)), w = static_cast<int>(logits.dim(2));
  const auto hw = static_cast<std::int64_t>(h) * w;
  LabelMap out(h, w);
  for (std::int64_t i = 0; i < hw; ++i) {
    std::int64_t best = 0;
    for (std::int64_t k = 1; k < c; ++k) {
      if (logits[k * hw + i] > logits[best * hw + i]) best = k;
    }
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// ---- registry --------------------------------------------------------------

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, BackboneFactory> factories;
  Registry() {
    factories["tiny-cnn"] = [](const BackboneSpec& s) { return std::make_unique<TinyCnn>(s); };
    factories["tiny-vit"] = [](const BackboneSpec& s) { return std::make_unique<TinyVit>(s); };
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_backbone(const std::string& name, BackboneFactory factory) {
  if (name.empty() || !factory) throw ArgumentError("register_backbone: empty name or factory");
  std::lock_guard lock(registry().mu);
  registry().factories[name] = std::move(factory);
}

std::unique_ptr<SegBackbone> make_backbone(const std::string& name, const BackboneSpec& spec) {
  BackboneFactory f;
  {
    std::lock_guard lock(registry().mu);
    auto it = registry().factories.find(name);
    if (it == registry().factories.end()) {
      std::string known;
      for (const auto& [k, v] : registry().factories) known += (known.empty() ? "" : ", ") + k;
      throw ArgumentError("unknown backbone '" + name + "' (registered: " + known + ")");
    }
    f = it->second;
  }
  auto b = f(spec);
  if (!b || b->num_classes() != spec.num_classes) {
    throw ArgumentError("backbone factory '" + name + "' returned an incompatible model");
  }
  return b;
}

std::vector<std::string> registered_backbones() {
  std::lock_guard lock(registry().mu);
  std::vector<std::string> names;
  for (const auto& [k, v] : registry().factories) names.push_back(k);
  return names;
}

// ---- SegmentationModel -----------------------------------------------------

SegmentationModel::SegmentationModel(std::unique_ptr<SegBackbone> backbone, FusionStrategy strategy,
                                     std::uint64_t seed)
    : backbone_(std::move(backbone)), strategy_(strategy) {
  if (!backbone_) throw ArgumentError("SegmentationModel: null backbone");
  std::mt19937_64 rng(seed ^ 0x5eed'f00dULL);
  const int fc = backbone_->feature_channels();
  if (strategy_ == FusionStrategy::CrossAttention) xattn_ = CrossAttention(fc, rng);
  if (strategy_ == FusionStrategy::DualEncoder) {
    guide_encoder_ = backbone_->clone();
    merge_ = nn::Conv2d(2 * fc, fc, 1, 1, 0, rng);
    Tensor& w = merge_.weight.mutable_value();
    w.fill(0.0);
    for (int c = 0; c < fc; ++c) w[static_cast<std::int64_t>(c) * 2 * fc + c] = 1.0;
  }
}

SegmentationModel::SegmentationModel(const SegmentationModel& other)
    : backbone_(other.backbone_ ? other.backbone_->clone() : nullptr),
      strategy_(other.strategy_),
      adapter_(other.adapter_),
      xattn_(other.xattn_),
      guide_encoder_(other.guide_encoder_ ? other.guide_encoder_->clone() : nullptr),
      merge_(other.merge_) {}

SegmentationModel& SegmentationModel::operator=(const SegmentationModel& other) {
  if (this != &other) {
    SegmentationModel tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

ag::Var SegmentationModel::forward_baseline(const ag::Var& query) const {
  return backbone_->forward(query);
}

ag::Var SegmentationModel::forward_fused(const ag::Var& query, const FusedGuide& guide) const {
  return forward_fused(query, guide, nullptr);
}

ag::Var SegmentationModel::forward_fused(const ag::Var& query, const FusedGuide& guide,
                                         FusedInput* early_input) const {
  switch (strategy_) {
    case FusionStrategy::Early: {
      FusedInput in = early_fuse(query, guide, adapter_);
      ag::Var logits = backbone_->forward(in.projected);
      if (early_input) *early_input = std::move(in);
      return logits;
    }
    case FusionStrategy::CrossAttention: {
      EncoderOutput q = backbone_->encode(query);
      const ag::Var g = backbone_->encode(guide.image).deepest;
      q.deepest = xattn_(q.deepest, g);
      return backbone_->decode(q);
    }
    case FusionStrategy::DualEncoder: {
      EncoderOutput q = backbone_->encode(query);
      const ag::Var g = guide_encoder_->encode(guide.image).deepest;
      q.deepest = merge_(dual_encoder_fuse(q.deepest, g, guide.mask));
      return backbone_->decode(q);
    }
  }
  throw ArgumentError("forward_fused: unknown strategy");
}

nn::ParameterList SegmentationModel::backbone_parameters() {
  nn::ParameterList out;
  nn::append(out, "backbone.", backbone_->parameters());
  return out;
}

nn::ParameterList SegmentationModel::parameters() {
  nn::ParameterList out = backbone_parameters();
  switch (strategy_) {
    case FusionStrategy::Early: nn::append(out, "", adapter_.parameters("adapter.")); break;
    case FusionStrategy::CrossAttention: nn::append(out, "", xattn_.parameters("xattn.")); break;
    case FusionStrategy::DualEncoder:
      nn::append(out, "guide_encoder.", guide_encoder_->parameters());
      nn::append(out, "", merge_.parameters("merge."));
      break;
  }
  return out;
}

void SegmentationModel::sync_guide_encoder() {
  if (strategy_ == FusionStrategy::DualEncoder) guide_encoder_ = backbone_->clone();
}

}  // namespace jras
