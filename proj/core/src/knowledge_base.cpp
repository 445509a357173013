#include "jras/knowledge_base.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"

namespace jras {

namespace {
std::atomic<std::uint64_t> g_retrieve_calls{0};
}

std::uint64_t retrieval_call_count() noexcept { return g_retrieve_calls.load(); }

KnowledgeBase::KnowledgeBase(std::vector<KBEntry> entries, ag::Var embeddings, int epoch_tag)
    : entries_(std::move(entries)), embeddings_(std::move(embeddings)), epoch_tag_(epoch_tag) {
  if (entries_.empty()) throw ArgumentError("knowledge base needs at least one entry");
  if (!embeddings_.defined() || embeddings_.value().rank() != 2 ||
      embeddings_.shape()[0] != static_cast<std::int64_t>(entries_.size())) {
    throw ArgumentError("knowledge base: embedding matrix must be {N,D} with N = entry count");
  }
}

KnowledgeBase KnowledgeBase::build(const RetrievalModel& model, const Dataset& gallery, int epoch,
                                   int num_threads) {
  if (gallery.empty()) throw ArgumentError("build_knowledge_base: empty gallery");
  const std::size_t n = gallery.size();
  const auto d = static_cast<std::int64_t>(model.embedding_dim());
  std::vector<KBEntry> entries(n);
  Tensor emb({static_cast<std::int64_t>(n), d});

  std::mutex mu;
  std::exception_ptr failure;
  auto work = [&](std::size_t begin, std::size_t end) {
    ag::NoGradGuard guard;
    try {
    for (std::size_t i = begin; i < end; ++i) {
      const SliceRecord& s = gallery[i];
      entries[i].ref = s.ref;
      entries[i].guide_image = to_three_channel(s.image);
      entries[i].guide_mask = s.mask;
      const Tensor e = model.embed_value(entries[i].guide_image);
      std::copy(e.data(), e.data() + d, emb.data() + static_cast<std::int64_t>(i) * d);
    }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(num_threads, 1)), 1, n);
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return KnowledgeBase(std::move(entries), ag::constant(std::move(emb)), epoch);
}

Tensor KnowledgeBase::embedding(std::size_t i) const {
  const auto d = embeddings_.shape()[1];
  const double* row = embeddings_.value().data() + static_cast<std::int64_t>(i) * d;
  return Tensor({d}, std::vector<double>(row, row + d));
}

int KnowledgeBase::embedding_dim() const {
  return embeddings_.defined() ? static_cast<int>(embeddings_.shape()[1]) : 0;
}

RetrievalResult KnowledgeBase::retrieve(const ag::Var& query, const std::string& query_patient,
                                        const RetrievalConfig& cfg) const {
  g_retrieve_calls.fetch_add(1);
  if (empty()) throw ArgumentError("retrieve: empty knowledge base");
  if (query.value().rank() != 1 || query.numel() != embeddings_.shape()[1]) {
    throw ArgumentError("retrieve: query embedding " + shape_to_string(query.shape()) +
                        " does not match gallery dimension " + std::to_string(embedding_dim()));
  }
  if (!cfg.dynamic && cfg.k < 1) throw ArgumentError("retrieve: k must be >= 1");

  // Gallery side never joins the graph.
  const ag::Var sims_all = ag::linear(query, ag::detach(embeddings_), ag::Var{});
  const Tensor& s = sims_all.value();

  std::vector<std::int64_t> cand;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].ref.patient_id != query_patient) cand.push_back(static_cast<std::int64_t>(i));
  }
  if (cand.empty()) {
    throw RetrievalError("retrieval: every gallery entry belongs to query patient '" +
                         query_patient + "'; enlarge the gallery with other patients");
  }
  std::sort(cand.begin(), cand.end(), [&](std::int64_t a, std::int64_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return entries_[static_cast<std::size_t>(a)].ref < entries_[static_cast<std::size_t>(b)].ref;
  });
  int k = cfg.k;
  if (cfg.dynamic) {
    std::vector<double> cs;
    cs.reserve(cand.size());
    for (auto i : cand) cs.push_back(s[i]);
    k = dynamic_k(cs, cfg.theta_threshold, cfg.k_min, cfg.k_max);
  }
  cand.resize(std::min(cand.size(), static_cast<std::size_t>(k)));

  RetrievalResult out;
  for (auto i : cand) {
    const auto& e = entries_[static_cast<std::size_t>(i)];
    if (e.ref.patient_id == query_patient) throw std::logic_error("retrieval exclusion violated");
    out.hits.push_back({static_cast<std::size_t>(i), &e, s[i]});
  }
  out.similarities = ag::gather(sims_all, cand);
  return out;
}

void KnowledgeBase::export_snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::save_tensors(dir / "kb_embeddings.bin", {{"embeddings", embeddings_.value()}});
  nlohmann::json j;
  j["epoch_tag"] = epoch_tag_;
  j["embedding_dim"] = embedding_dim();
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries_) j["entries"].push_back(e.ref.str());
  io::write_file_atomic(dir / "kb_index.json", j.dump(2) + "\n");
}

KnowledgeBase KnowledgeBase::import_snapshot(const std::filesystem::path& dir,
                                             const Dataset& gallery) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(dir / "kb_index.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("kb_index.json: " + std::string(e.what()));
  }
  const auto tensors = io::load_tensors(dir / "kb_embeddings.bin");
  if (tensors.size() != 1 || tensors[0].first != "embeddings") {
    throw ValidationError("kb_embeddings.bin: expected a single 'embeddings' tensor");
  }
  std::vector<KBEntry> entries;
  try {
    for (const auto& r : j.at("entries")) {
      const SliceRef ref = parse_slice_ref(r.get<std::string>());
      const SliceRecord* rec = gallery.find(ref);
      if (!rec) throw ValidationError("snapshot entry " + ref.str() + " is not in the gallery dataset");
      entries.push_back({ref, to_three_channel(rec->image), rec->mask});
    }
    return KnowledgeBase(std::move(entries), ag::constant(tensors[0].second),
                         j.at("epoch_tag").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("kb_index.json: " + std::string(e.what()));
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("knowledge base snapshot: ") + e.what());
  }
}

}  // namespace jras
