#include "jras/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>

#include "eigen_maps.hpp"
#include "jras/errors.hpp"

namespace jras {

namespace {

// out(y, x) = in at the source pixel after `quarter_turns` counter-clockwise
// rotations followed by optional flips.
Tensor transform_geometry(const Tensor& in, int quarter_turns, bool flip_h, bool flip_v) {
  const auto c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const bool swap = quarter_turns % 2 == 1;
  const auto oh = swap ? w : h, ow = swap ? h : w;
  Tensor out({c, oh, ow});
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      const std::int64_t fy = flip_v ? oh - 1 - y : y;
      const std::int64_t fx = flip_h ? ow - 1 - x : x;
      std::int64_t sy = fy, sx = fx;
      switch (quarter_turns) {
        case 1: sy = fx; sx = w - 1 - fy; break;
        case 2: sy = h - 1 - fy; sx = w - 1 - fx; break;
        case 3: sy = h - 1 - fx; sx = fy; break;
        default: break;
      }
      for (std::int64_t ch = 0; ch < c; ++ch) out.at(ch, y, x) = in.at(ch, sy, sx);
    }
  }
  return out;
}

struct PairCandidate {
  CaseId volume;
  int first = 0;  // slices first and first+1
};

}  // namespace

Tensor augment(const Tensor& image, std::mt19937_64& rng, const AugmentConfig& cfg) {
  if (image.rank() != 3) throw ArgumentError("augment expects {C,H,W}");
  if (!(cfg.contrast_lo > 0.0 && cfg.contrast_lo <= cfg.contrast_hi)) {
    throw ArgumentError("augment: need 0 < contrast_lo <= contrast_hi");
  }
  const bool square = image.dim(1) == image.dim(2);
  int turns = 0;
  if (cfg.rotate) {
    turns = std::uniform_int_distribution<int>(0, 3)(rng);
    if (!square) turns = (turns / 2) * 2;
  }
  std::bernoulli_distribution coin(0.5);
  const bool fh = cfg.flip && coin(rng);
  const bool fv = cfg.flip && coin(rng);
  const double scale = std::uniform_real_distribution<double>(cfg.contrast_lo, cfg.contrast_hi)(rng);

  Tensor out = transform_geometry(image, turns, fh, fv);
  if (scale == 1.0) return out;
  double mean = 0.0;
  for (double v : out.values()) mean += v;
  mean /= static_cast<double>(out.numel());
  for (auto& v : out.values()) v = std::clamp(mean + scale * (v - mean), 0.0, 1.0);
  return out;
}

namespace {

std::vector<PairCandidate> all_pairs(const Dataset& dataset) {
  std::vector<PairCandidate> pairs;
  for (const auto& s : dataset) {
    SliceRef next = s.ref;
    next.slice_index += 1;
    if (dataset.find(next)) pairs.push_back({s.case_id(), s.ref.slice_index});
  }
  return pairs;
}

}  // namespace

std::size_t count_consecutive_pairs(const Dataset& dataset) {
  // Greedy from the lowest index is optimal per volume: pairs 0, 3, 6, ...
  std::map<CaseId, int> last;
  std::size_t n = 0;
  for (const auto& p : all_pairs(dataset)) {
    auto it = last.find(p.volume);
    if (it == last.end() || p.first - it->second >= 3) {
      last[p.volume] = p.first;
      ++n;
    }
  }
  return n;
}

ContrastiveBatch make_contrastive_pairs(const Dataset& dataset, int batch_size, std::uint64_t seed,
                                        const AugmentConfig& aug) {
  if (batch_size < 1) throw ArgumentError("contrastive batch size must be >= 1");
  if (dataset.patient_ids().size() < 2) {
    throw ArgumentError("contrastive pairs need at least 2 patients for negatives");
  }
  std::vector<PairCandidate> pool = all_pairs(dataset);
  if (pool.empty()) {
    throw ArgumentError("no (patient, phase) volume has two consecutive slices");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);

  // Two pairs of one volume must be >= 3 apart in their first slice so no
  // cross-pair views are identical or adjacent.
  std::vector<PairCandidate> chosen;
  for (const auto& c : pool) {
    if (static_cast<int>(chosen.size()) == batch_size) break;
    const bool clash = std::any_of(chosen.begin(), chosen.end(), [&](const PairCandidate& o) {
      return o.volume == c.volume && std::abs(o.first - c.first) < 3;
    });
    if (!clash) chosen.push_back(c);
  }
  if (static_cast<int>(chosen.size()) < batch_size) {
    throw ArgumentError("batch size " + std::to_string(batch_size) + " exceeds the " +
                        std::to_string(chosen.size()) +
                        " non-overlapping consecutive-slice pairs available");
  }

  ContrastiveBatch batch;
  for (const auto& c : chosen) {
    for (int off = 0; off < 2; ++off) {
      const SliceRef ref{c.volume.patient_id, c.volume.phase, c.first + off};
      const SliceRecord* rec = dataset.find(ref);
      batch.views.push_back(augment(to_three_channel(rec->image), rng, aug));
      batch.refs.push_back(ref);
    }
  }
  for (std::size_t i = 0; i < batch.views.size(); ++i) batch.positive.push_back(i ^ 1U);
  return batch;
}

Tensor similarity_matrix(const Tensor& embeddings) {
  if (embeddings.rank() != 2) throw ArgumentError("similarity_matrix expects {N,D}");
  const auto n = embeddings.dim(0), d = embeddings.dim(1);
  Tensor s({n, n});
  auto e = ConstMatMap(embeddings.data(), n, d);
  MatMap(s.data(), n, n).noalias() = e * e.transpose();
  return s;
}

ag::Var nt_xent_loss(const ag::Var& embeddings, const std::vector<std::size_t>& positive,
                     double tau) {
  if (!(tau > 0.0)) throw ArgumentError("nt_xent_loss: tau must be > 0");
  if (embeddings.value().rank() != 2) throw ArgumentError("nt_xent_loss: embeddings must be {2B,D}");
  const auto n = embeddings.shape()[0], d = embeddings.shape()[1];
  if (n < 2 || static_cast<std::int64_t>(positive.size()) != n) {
    throw ArgumentError("nt_xent_loss: need one positive index per anchor (>= 2 anchors)");
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const auto p = positive[static_cast<std::size_t>(i)];
    if (p >= static_cast<std::size_t>(n) || p == static_cast<std::size_t>(i) || positive[p] != static_cast<std::size_t>(i)) {
      throw ArgumentError("nt_xent_loss: positive indices must form disjoint pairs");
    }
  }
  const Tensor s = similarity_matrix(embeddings.value());
  // dL/dS, filled during the forward pass.
  auto gs = std::make_shared<Tensor>(Shape{n, n});
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto p = static_cast<std::int64_t>(positive[static_cast<std::size_t>(i)]);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < n; ++j) if (j != i) mx = std::max(mx, s.at(i, j) / tau);
    double z = 0.0;
    for (std::int64_t j = 0; j < n; ++j) if (j != i) z += std::exp(s.at(i, j) / tau - mx);
    total += mx + std::log(z) - s.at(i, p) / tau;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double prob = std::exp(s.at(i, j) / tau - mx) / z;
      gs->at(i, j) = inv_n * (prob - (j == p ? 1.0 : 0.0)) / tau;
    }
  }
  Tensor out({1}, total * inv_n);
  return ag::make_op(std::move(out), {embeddings}, [gs, n, d](ag::Node& self) {
    ag::Node& ne = *self.inputs[0];
    if (!ne.requires_grad) return;
    const double g = self.grad[0];
    auto gsm = ConstMatMap(gs->data(), n, n);
    auto e = ConstMatMap(ne.value.data(), n, d);
    MatMap(ne.grad_buffer().data(), n, d).noalias() += g * ((gsm + gsm.transpose()) * e);
  });
}

}  // namespace jras
