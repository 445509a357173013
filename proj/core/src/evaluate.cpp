#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

#include "jras/errors.hpp"
#include "jras/trainer.hpp"

namespace jras {

namespace {

template <typename F>
void parallel_for(std::size_t n, int threads, F&& body) {
  const std::size_t t = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                std::max<std::size_t>(n, 1));
  std::mutex mu;
  std::exception_ptr failure;
  auto run = [&](std::size_t b, std::size_t e) {
    ag::NoGradGuard guard;
    try {
      for (std::size_t i = b; i < e; ++i) body(i);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  };
  if (t == 1) {
    run(0, n);
    if (failure) std::rethrow_exception(failure);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + t - 1) / t;
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t b = k * chunk, e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back(run, b, e);
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<SliceEval> predict_baseline(const SegmentationModel& model, const Dataset& test, int threads) {
  std::vector<SliceEval> out(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    const SliceRecord& s = test[i];
    const ag::Var logits = model.forward_baseline(ag::constant(to_three_channel(s.image)));
    out[i] = {s.ref, predict_mask(logits.value()), s.mask};
  });
  return out;
}

}  // namespace

EvalReport evaluate(const RetrievalModel& retrieval, const SegmentationModel& seg,
                    const Dataset& test, const Dataset& gallery, const EvalOptions& opts,
                    const SegmentationModel* baseline) {
  if (test.empty()) throw ArgumentError("evaluate: empty test set");
  const SegmentationModel& base = baseline ? *baseline : seg;
  const bool use_retrieval = opts.retrieval.dynamic || opts.retrieval.k > 0;
  if (use_retrieval) {
    opts.retrieval.validate();
    if (!(opts.tau_fusion > 0)) throw ArgumentError("evaluate: tau_fusion must be > 0");
    opts.noise.validate();
    if (gallery.empty()) throw ArgumentError("evaluate: empty gallery");
  }

  std::vector<SliceEval> evals;
  if (!use_retrieval) {
    evals = predict_baseline(base, test, opts.threads);
  } else {
    const KnowledgeBase kb = KnowledgeBase::build(retrieval, gallery, 0, opts.threads);
    evals.resize(test.size());
    parallel_for(test.size(), opts.threads, [&](std::size_t i) {
      const SliceRecord& s = test[i];
      const ag::Var query = ag::constant(to_three_channel(s.image));
      const RetrievalResult hits = kb.retrieve(retrieval.embed(query), s.ref.patient_id, opts.retrieval);
      for (const auto& h : hits.hits) {
        if (h.entry->ref.patient_id == s.ref.patient_id) {
          throw std::logic_error("evaluate: same-patient guide for " + s.ref.str());
        }
      }
      FusedGuide guide = fuse_guides(hits.hits, fusion_weights(hits.similarities, opts.tau_fusion),
                                     seg.num_classes());
      guide = apply_guide_noise(guide, opts.noise, slice_stream(s.ref));
      const ag::Var logits = seg.forward_fused(query, guide);
      evals[i] = {s.ref, predict_mask(logits.value()), s.mask};
    });
  }
  EvalReport report = make_report(opts.label, evals, seg.num_classes(), opts.hd_policy);
  if (opts.with_baseline) {
    const EvalReport b = make_report("baseline", predict_baseline(base, test, opts.threads),
                                     seg.num_classes(), opts.hd_policy);
    report.baseline_comparison = case_analysis(report.cases, b.cases);
  }
  return report;
}

}  // namespace jras
