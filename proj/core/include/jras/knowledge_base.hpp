#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "jras/autograd.hpp"
#include "jras/dataset.hpp"
#include "jras/retrieval.hpp"

namespace jras {

struct KBEntry {
  SliceRef ref;
  Tensor guide_image;  // {3,H,W}
  LabelMap guide_mask;
};

struct RetrievalHit {
  std::size_t index = 0;  // into KnowledgeBase::entries()
  const KBEntry* entry = nullptr;
  double similarity = 0.0;
};

struct RetrievalResult {
  std::vector<RetrievalHit> hits;
  // {k}, hit order; carries gradient to the query embedding.
  ag::Var similarities;
};

// Gallery of embeddings paired with guide image/mask. Embeddings are held as
// one {N,D} matrix and are always detached from the query graph on use.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(std::vector<KBEntry> entries, ag::Var embeddings, int epoch_tag);

  // Embeds every gallery slice with gradients disabled. `num_threads` > 1
  // fans out over slices.
  static KnowledgeBase build(const RetrievalModel& model, const Dataset& gallery, int epoch,
                             int num_threads = 1);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<KBEntry>& entries() const noexcept { return entries_; }
  const ag::Var& embeddings() const noexcept { return embeddings_; }
  Tensor embedding(std::size_t i) const;
  int epoch_tag() const noexcept { return epoch_tag_; }
  int embedding_dim() const;

  // Top-k by cosine similarity, excluding entries of `query_patient`.
  // Sorted by similarity descending, ties by slice ref ascending. Throws
  // RetrievalError when exclusion leaves no candidate.
  RetrievalResult retrieve(const ag::Var& query, const std::string& query_patient,
                           const RetrievalConfig& cfg) const;

  // kb_embeddings.bin (tensor bundle) + kb_index.json.
  void export_snapshot(const std::filesystem::path& dir) const;
  // Guide data are looked up in `gallery` by slice ref.
  static KnowledgeBase import_snapshot(const std::filesystem::path& dir, const Dataset& gallery);

 private:
  std::vector<KBEntry> entries_;
  ag::Var embeddings_;
  int epoch_tag_ = 0;
};

// Process-wide count of KnowledgeBase::retrieve calls.
std::uint64_t retrieval_call_count() noexcept;

inline RetrievalResult retrieve_topk(const KnowledgeBase& kb, const ag::Var& query,
                                     const std::string& query_patient, const RetrievalConfig& cfg) {
  return kb.retrieve(query, query_patient, cfg);
}

}  // namespace jras
