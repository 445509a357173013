#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "jras/autograd.hpp"
#include "jras/dataset.hpp"

namespace jras {

struct AugmentConfig {
  bool rotate = true;  // multiples of 90 degrees (180 only on non-square)
  bool flip = true;    // horizontal and vertical, p = 0.5 each
  double contrast_lo = 0.8;
  double contrast_hi = 1.2;
};

// Random rotation/flip/contrast of a {C,H,W} image, clamped to [0,1].
Tensor augment(const Tensor& image, std::mt19937_64& rng, const AugmentConfig& cfg);

// 2B views. Views 2i and 2i+1 are augmentations of consecutive slices of one
// (patient, phase) volume; every other view is a negative for both.
struct ContrastiveBatch {
  std::vector<Tensor> views;           // {3,H,W}
  std::vector<SliceRef> refs;          // source slice per view
  std::vector<std::size_t> positive;   // positive[i] = index of i's partner
  std::size_t size() const noexcept { return views.size(); }
};

// Pairs are drawn so that no two views from different pairs come from the
// same or adjacent slices of one volume. Throws ArgumentError when no
// volume has two slices or when B such pairs do not exist.
ContrastiveBatch make_contrastive_pairs(const Dataset& dataset, int batch_size, std::uint64_t seed,
                                        const AugmentConfig& aug = {});

// Number of disjoint consecutive-slice pairs the dataset can supply.
std::size_t count_consecutive_pairs(const Dataset& dataset);

// Pairwise cosine similarities of row-normalised embeddings {2B,D}.
Tensor similarity_matrix(const Tensor& embeddings);

// NT-Xent: for each anchor i, cross-entropy over [s_ip, s_in...]/tau with the
// positive as target; mean over anchors. `embeddings` rows must be unit norm.
ag::Var nt_xent_loss(const ag::Var& embeddings, const std::vector<std::size_t>& positive,
                     double tau);

}  // namespace jras
