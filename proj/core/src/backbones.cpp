#include "jras/backbones.hpp"

#include <cmath>

#include "jras/errors.hpp"

namespace jras {

namespace {

void check_input(const ag::Var& x, int divisor, const char* who) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] % divisor != 0 || s[2] % divisor != 0) {
    throw ArgumentError(std::string(who) + ": input must be {3,H,W} with H, W divisible by " +
                        std::to_string(divisor) + ", got " + shape_to_string(s));
  }
}

}  // namespace

// ---- TinyCnn ---------------------------------------------------------------

TinyCnn::TinyCnn(const BackboneSpec& spec) : num_classes_(spec.num_classes), width_(spec.base_channels) {
  if (spec.num_classes < 2 || spec.base_channels < 1) throw ArgumentError("tiny-cnn: bad spec");
  std::mt19937_64 rng(spec.seed);
  const int c = width_;
  e1a_ = nn::Conv2d(3, c, 3, 1, 1, rng);
  e1b_ = nn::Conv2d(c, c, 3, 1, 1, rng);
  e2a_ = nn::Conv2d(c, 2 * c, 3, 2, 1, rng);
  e2b_ = nn::Conv2d(2 * c, 2 * c, 3, 1, 1, rng);
  e3a_ = nn::Conv2d(2 * c, 4 * c, 3, 2, 1, rng);
  e3b_ = nn::Conv2d(4 * c, 4 * c, 3, 1, 1, rng);
  d2_ = nn::Conv2d(6 * c, 2 * c, 3, 1, 1, rng);
  d1_ = nn::Conv2d(3 * c, c, 3, 1, 1, rng);
  head_ = nn::Conv2d(c, num_classes_, 1, 1, 0, rng);
}

EncoderOutput TinyCnn::encode(const ag::Var& x) const {
  check_input(x, 4, "tiny-cnn");
  EncoderOutput out;
  const ag::Var l1 = ag::relu(e1b_(ag::relu(e1a_(x))));
  const ag::Var l2 = ag::relu(e2b_(ag::relu(e2a_(l1))));
  out.deepest = ag::relu(e3b_(ag::relu(e3a_(l2))));
  out.skips = {l1, l2};
  return out;
}

ag::Var TinyCnn::decode(const EncoderOutput& f) const {
  if (f.skips.size() != 2) throw ArgumentError("tiny-cnn decode: expected two skip tensors");
  const ag::Var u2 = ag::relu(d2_(ag::concat({ag::upsample_nearest(f.deepest, 2), f.skips[1]})));
  const ag::Var u1 = ag::relu(d1_(ag::concat({ag::upsample_nearest(u2, 2), f.skips[0]})));
  return head_(u1);
}

nn::ParameterList TinyCnn::parameters() {
  nn::ParameterList out;
  nn::append(out, "", e1a_.parameters("enc1a."));
  nn::append(out, "", e1b_.parameters("enc1b."));
  nn::append(out, "", e2a_.parameters("enc2a."));
  nn::append(out, "", e2b_.parameters("enc2b."));
  nn::append(out, "", e3a_.parameters("enc3a."));
  nn::append(out, "", e3b_.parameters("enc3b."));
  nn::append(out, "", d2_.parameters("dec2."));
  nn::append(out, "", d1_.parameters("dec1."));
  nn::append(out, "", head_.parameters("head."));
  return out;
}

// ---- TinyVit ---------------------------------------------------------------

TinyVit::TinyVit(const BackboneSpec& spec)
    : num_classes_(spec.num_classes), dim_(4 * spec.base_channels) {
  if (spec.num_classes < 2 || spec.base_channels < 1 || spec.height % kPatch != 0 ||
      spec.width % kPatch != 0) {
    throw ArgumentError("tiny-vit: bad spec (H, W must be divisible by " + std::to_string(kPatch) + ")");
  }
  std::mt19937_64 rng(spec.seed);
  grid_h_ = spec.height / kPatch;
  grid_w_ = spec.width / kPatch;
  const int cs = spec.base_channels;
  stem_ = nn::Conv2d(3, cs, 3, 1, 1, rng);
  patch_ = nn::Conv2d(3, dim_, kPatch, kPatch, 0, rng);
  Tensor pos({static_cast<std::int64_t>(grid_h_) * grid_w_, dim_});
  std::normal_distribution<double> nd(0.0, 0.02);
  for (auto& v : pos.values()) v = nd(rng);
  pos_ = nn::Parameter(std::move(pos));
  for (int b = 0; b < 2; ++b) {
    Block blk;
    blk.ln1 = nn::LayerNorm(dim_);
    blk.ln2 = nn::LayerNorm(dim_);
    blk.q = nn::Linear(dim_, dim_, rng);
    blk.k = nn::Linear(dim_, dim_, rng);
    blk.v = nn::Linear(dim_, dim_, rng);
    blk.o = nn::Linear(dim_, dim_, rng);
    blk.fc1 = nn::Linear(dim_, 2 * dim_, rng);
    blk.fc2 = nn::Linear(2 * dim_, dim_, rng);
    blocks_.push_back(std::move(blk));
  }
  fuse_ = nn::Conv2d(dim_ + cs, cs, 3, 1, 1, rng);
  head_ = nn::Conv2d(cs, num_classes_, 1, 1, 0, rng);
}

EncoderOutput TinyVit::encode(const ag::Var& x) const {
  check_input(x, kPatch, "tiny-vit");
  if (x.shape()[1] / kPatch != grid_h_ || x.shape()[2] / kPatch != grid_w_) {
    throw ArgumentError("tiny-vit: built for a " + std::to_string(grid_h_ * kPatch) + "x" +
                        std::to_string(grid_w_ * kPatch) + " input, got " + shape_to_string(x.shape()));
  }
  EncoderOutput out;
  out.skips = {ag::relu(stem_(x))};
  const std::int64_t n = static_cast<std::int64_t>(grid_h_) * grid_w_;
  ag::Var t = ag::add(ag::transpose(ag::reshape(patch_(x), {dim_, n})), pos_.var());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (const auto& b : blocks_) {
    const ag::Var h = b.ln1(t);
    const ag::Var att = ag::softmax_rows(ag::scale(ag::matmul(b.q(h), ag::transpose(b.k(h))), inv_sqrt));
    t = ag::add(t, b.o(ag::matmul(att, b.v(h))));
    t = ag::add(t, b.fc2(ag::relu(b.fc1(b.ln2(t)))));
  }
  out.deepest = ag::reshape(ag::transpose(t), {dim_, grid_h_, grid_w_});
  return out;
}

ag::Var TinyVit::decode(const EncoderOutput& f) const {
  if (f.skips.size() != 1) throw ArgumentError("tiny-vit decode: expected the stem skip");
  const ag::Var up = ag::upsample_nearest(f.deepest, kPatch);
  return head_(ag::relu(fuse_(ag::concat({up, f.skips[0]}))));
}

nn::ParameterList TinyVit::parameters() {
  nn::ParameterList out;
  nn::append(out, "", stem_.parameters("stem."));
  nn::append(out, "", patch_.parameters("patch."));
  out.push_back({"pos", &pos_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string p = "block" + std::to_string(i) + ".";
    nn::append(out, "", b.ln1.parameters(p + "ln1."));
    nn::append(out, "", b.ln2.parameters(p + "ln2."));
    nn::append(out, "", b.q.parameters(p + "q."));
    nn::append(out, "", b.k.parameters(p + "k."));
    nn::append(out, "", b.v.parameters(p + "v."));
    nn::append(out, "", b.o.parameters(p + "o."));
    nn::append(out, "", b.fc1.parameters(p + "fc1."));
    nn::append(out, "", b.fc2.parameters(p + "fc2."));
  }
  nn::append(out, "", fuse_.parameters("fuse."));
  nn::append(out, "", head_.parameters("head."));
  return out;
}

}  // namespace jras
