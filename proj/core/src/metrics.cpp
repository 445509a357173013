#include "jras/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "jras/errors.hpp"

namespace jras {

namespace {

void check_same_shape(const LabelMap& a, const LabelMap& b, const char* who) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ArgumentError(std::string(who) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()));
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "MISSING"; }

// 1-D lower envelope of parabolas (q - p)^2 + f[p], squared distances exact.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  auto meet = [&](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
  };
  for (int q = 1; q < n; ++q) {
    // z[0] = -inf stops the scan.
    double s = meet(q, v[k]);
    while (s <= z[k]) s = meet(q, v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Squared distance from every pixel to the nearest site.
std::vector<double> squared_edt(const std::vector<std::pair<int, int>>& sites, int h, int w) {
  // Far larger than any real squared distance, still exact in a double.
  const double far = 1e12;
  std::vector<double> grid(static_cast<std::size_t>(h) * w, far);
  for (const auto& [y, x] : sites) grid[static_cast<std::size_t>(y) * w + x] = 0.0;
  const int n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  return grid;
}

std::optional<double> empty_case(bool pred_empty, bool gt_empty, int h, int w, HdEmptyPolicy policy) {
  if (pred_empty && gt_empty) return 0.0;
  if (policy == HdEmptyPolicy::Missing) return std::nullopt;
  return std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
}

}  // namespace

double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id) {
  check_same_shape(pred, gt, "dice_score");
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == class_id, b = gt[i] == class_id;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& mask, int class_id) {
  std::vector<std::pair<int, int>> out;
  const int h = mask.height(), w = mask.width();
  auto in = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && mask.at(y, x) == class_id; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!in(y, x)) continue;
      if (!in(y - 1, x) || !in(y + 1, x) || !in(y, x - 1) || !in(y, x + 1)) out.emplace_back(y, x);
    }
  }
  return out;
}

std::optional<double> hausdorff(const LabelMap& pred, const LabelMap& gt, int class_id,
                                HdEmptyPolicy policy) {
  check_same_shape(pred, gt, "hausdorff");
  const auto bp = boundary_pixels(pred, class_id);
  const auto bg = boundary_pixels(gt, class_id);
  const int h = pred.height(), w = pred.width();
  if (bp.empty() || bg.empty()) return empty_case(bp.empty(), bg.empty(), h, w, policy);
  const auto dg = squared_edt(bg, h, w);
  const auto dp = squared_edt(bp, h, w);
  double worst = 0.0;
  for (const auto& [y, x] : bp) worst = std::max(worst, dg[static_cast<std::size_t>(y) * w + x]);
  for (const auto& [y, x] : bg) worst = std::max(worst, dp[static_cast<std::size_t>(y) * w + x]);
  return std::sqrt(worst);
}

std::optional<double> hausdorff_brute_force(const LabelMap& pred, const LabelMap& gt, int class_id,
                                            HdEmptyPolicy policy) {
  check_same_shape(pred, gt, "hausdorff");
  const auto bp = boundary_pixels(pred, class_id);
  const auto bg = boundary_pixels(gt, class_id);
  if (bp.empty() || bg.empty()) {
    return empty_case(bp.empty(), bg.empty(), pred.height(), pred.width(), policy);
  }
  auto directed = [](const auto& a, const auto& b) {
    double worst = 0.0;
    for (const auto& [ay, ax] : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [by, bx] : b) {
        const double dy = ay - by, dx = ax - bx;
        best = std::min(best, std::sqrt(dy * dy + dx * dx));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(bp, bg), directed(bg, bp));
}

std::string class_name(int class_id, int num_classes) {
  static const char* kCardiac[] = {"BG", "RV", "MYO", "LV"};
  if (num_classes == 4 && class_id >= 0 && class_id < 4) return kCardiac[class_id];
  return "class" + std::to_string(class_id);
}

// ---- aggregation -----------------------------------------------------------

namespace {

Stat stat_of(const std::vector<double>& xs, int missing) {
  Stat s;
  s.count = static_cast<int>(xs.size());
  s.missing = missing;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

Aggregate aggregate(const std::vector<CaseResult>& cases) {
  if (cases.empty()) throw ArgumentError("aggregate: no cases");
  Aggregate a;
  std::map<int, std::vector<double>> dice, hd;
  std::map<int, int> hd_missing;
  std::vector<double> md, mh;
  int mh_missing = 0;
  for (const auto& c : cases) {
    for (const auto& [k, v] : c.per_class_dice) dice[k].push_back(v);
    for (const auto& [k, v] : c.per_class_hd) {
      if (v) hd[k].push_back(*v);
      else ++hd_missing[k];
      hd[k];
    }
    md.push_back(c.mean_dice);
    if (c.mean_hd) mh.push_back(*c.mean_hd);
    else ++mh_missing;
  }
  for (const auto& [k, xs] : dice) a.dice[k] = stat_of(xs, 0);
  for (const auto& [k, xs] : hd) a.hd[k] = stat_of(xs, hd_missing[k]);
  a.mean_dice = stat_of(md, 0);
  a.mean_hd = stat_of(mh, mh_missing);
  return a;
}

CaseAnalysis case_analysis(const std::vector<CaseResult>& jras, const std::vector<CaseResult>& baseline,
                           int top_n) {
  std::map<CaseId, double> base;
  for (const auto& c : baseline) base[c.case_id] = c.mean_dice;
  std::set<CaseId> seen;
  CaseAnalysis out;
  for (const auto& c : jras) {
    auto it = base.find(c.case_id);
    if (it == base.end() || !seen.insert(c.case_id).second) {
      throw ArgumentError("case_analysis: case " + c.case_id.str() + " missing from baseline or repeated");
    }
    out.deltas.push_back({c.case_id, c.mean_dice, it->second, c.mean_dice - it->second});
  }
  if (seen.size() != base.size()) throw ArgumentError("case_analysis: baseline has cases J-RAS lacks");
  std::sort(out.deltas.begin(), out.deltas.end(), [](const CaseDelta& a, const CaseDelta& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return a.case_id < b.case_id;
  });
  for (const auto& d : out.deltas) {
    if (d.delta > 0) {
      ++out.improved;
      if (static_cast<int>(out.top_improved.size()) < top_n) out.top_improved.push_back(d);
    } else if (d.delta < 0) {
      ++out.degraded;
    } else {
      ++out.unchanged;
    }
  }
  for (auto it = out.deltas.rbegin(); it != out.deltas.rend(); ++it) {
    if (it->delta >= 0 || static_cast<int>(out.top_degraded.size()) >= top_n) break;
    out.top_degraded.push_back(*it);
  }
  return out;
}

std::string format_delta(double delta) {
  char buf[32];
  // Avoid "-0.0000" for tiny negative values.
  const double shown = std::abs(delta) < 5e-5 ? 0.0 : delta;
  std::snprintf(buf, sizeof buf, "%+.4f", shown);
  return buf;
}

// ---- per-slice / per-case scoring -----------------------------------------

SliceResult score_slice(const SliceEval& s, int num_classes, HdEmptyPolicy policy) {
  SliceResult r;
  r.ref = s.ref;
  for (int k = 1; k < num_classes; ++k) {
    r.dice[k] = dice_score(s.pred, s.gt, k);
    r.hd[k] = hausdorff(s.pred, s.gt, k, policy);
  }
  return r;
}

EvalReport make_report(std::string label, const std::vector<SliceEval>& slices, int num_classes,
                       HdEmptyPolicy policy) {
  if (slices.empty()) throw ArgumentError("make_report: no slices");
  EvalReport rep;
  rep.label = std::move(label);
  rep.num_classes = num_classes;
  rep.hd_policy = policy;

  struct Pool {
    std::map<int, std::int64_t> inter, total;
    std::map<int, std::vector<double>> hd;
    int slices = 0;
  };
  std::map<CaseId, Pool> pools;
  for (const auto& s : slices) {
    SliceResult r = score_slice(s, num_classes, policy);
    Pool& pool = pools[CaseId{s.ref.patient_id, s.ref.phase}];
    ++pool.slices;
    for (int k = 1; k < num_classes; ++k) {
      for (std::size_t i = 0; i < s.pred.size(); ++i) {
        const bool a = s.pred[i] == k, b = s.gt[i] == k;
        pool.inter[k] += a && b;
        pool.total[k] += static_cast<int>(a) + static_cast<int>(b);
      }
      pool.hd[k];
      if (r.hd[k]) pool.hd[k].push_back(*r.hd[k]);
    }
    rep.slices.push_back(std::move(r));
  }
  std::sort(rep.slices.begin(), rep.slices.end(),
            [](const SliceResult& a, const SliceResult& b) { return a.ref < b.ref; });
  for (auto& [id, pool] : pools) {
    CaseResult c;
    c.case_id = id;
    c.num_slices = pool.slices;
    double dsum = 0.0, hsum = 0.0;
    int hcount = 0;
    for (int k = 1; k < num_classes; ++k) {
      const auto t = pool.total[k];
      c.per_class_dice[k] = t == 0 ? 1.0 : 2.0 * static_cast<double>(pool.inter[k]) / static_cast<double>(t);
      dsum += c.per_class_dice[k];
      const auto& hs = pool.hd[k];
      if (hs.empty()) {
        c.per_class_hd[k] = std::nullopt;
      } else {
        double s = 0.0;
        for (double v : hs) s += v;
        c.per_class_hd[k] = s / static_cast<double>(hs.size());
        hsum += *c.per_class_hd[k];
        ++hcount;
      }
    }
    c.mean_dice = dsum / static_cast<double>(num_classes - 1);
    if (hcount > 0) c.mean_hd = hsum / hcount;
    rep.cases.push_back(std::move(c));
  }
  rep.aggregate = aggregate(rep.cases);
  return rep;
}

// ---- serialisation ---------------------------------------------------------

namespace {

using nlohmann::json;

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json stat_json(const Stat& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}, {"missing", s.missing}};
}

Stat stat_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("count").get<int>(),
          j.at("missing").get<int>()};
}

json delta_json(const CaseDelta& d) {
  return {{"case", d.case_id.str()}, {"jras", d.jras}, {"baseline", d.baseline},
          {"delta", d.delta}, {"delta_text", format_delta(d.delta)}};
}

CaseId parse_case(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) throw ValidationError("bad case id '" + s + "'");
  return {s.substr(0, slash), parse_phase(s.substr(slash + 1))};
}

CaseDelta delta_from(const json& j) {
  return {parse_case(j.at("case").get<std::string>()), j.at("jras").get<double>(),
          j.at("baseline").get<double>(), j.at("delta").get<double>()};
}

template <typename V, typename F>
json class_map(const std::map<int, V>& m, int num_classes, F f) {
  json o = json::object();
  for (const auto& [k, v] : m) o[class_name(k, num_classes)] = f(v);
  return o;
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
  json j;
  j["label"] = r.label;
  j["num_classes"] = r.num_classes;
  j["hd_policy"] = r.hd_policy == HdEmptyPolicy::Penalty ? "penalty" : "missing";
  j["class_ids"] = json::array();
  for (int k = 1; k < r.num_classes; ++k) j["class_ids"].push_back({{"id", k}, {"name", class_name(k, r.num_classes)}});
  auto id = [](double v) { return v; };
  j["slices"] = json::array();
  for (const auto& s : r.slices) {
    j["slices"].push_back({{"slice", s.ref.str()},
                           {"dice", class_map(s.dice, r.num_classes, id)},
                           {"hd", class_map(s.hd, r.num_classes, opt_json)}});
  }
  j["cases"] = json::array();
  for (const auto& c : r.cases) {
    j["cases"].push_back({{"case", c.case_id.str()},
                          {"num_slices", c.num_slices},
                          {"dice", class_map(c.per_class_dice, r.num_classes, id)},
                          {"hd", class_map(c.per_class_hd, r.num_classes, opt_json)},
                          {"mean_dice", c.mean_dice},
                          {"mean_hd", opt_json(c.mean_hd)}});
  }
  j["aggregate"] = {{"dice", class_map(r.aggregate.dice, r.num_classes, stat_json)},
                    {"hd", class_map(r.aggregate.hd, r.num_classes, stat_json)},
                    {"mean_dice", stat_json(r.aggregate.mean_dice)},
                    {"mean_hd", stat_json(r.aggregate.mean_hd)}};
  if (r.baseline_comparison) {
    const auto& a = *r.baseline_comparison;
    json d = json::array(), ti = json::array(), td = json::array();
    for (const auto& x : a.deltas) d.push_back(delta_json(x));
    for (const auto& x : a.top_improved) ti.push_back(delta_json(x));
    for (const auto& x : a.top_degraded) td.push_back(delta_json(x));
    j["baseline_comparison"] = {{"improved", a.improved}, {"degraded", a.degraded},
                                {"unchanged", a.unchanged}, {"deltas", d},
                                {"top_improved", ti}, {"top_degraded", td}};
  }
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.label = j.at("label").get<std::string>();
    r.num_classes = j.at("num_classes").get<int>();
    r.hd_policy = j.at("hd_policy").get<std::string>() == "missing" ? HdEmptyPolicy::Missing
                                                                    : HdEmptyPolicy::Penalty;
    std::map<std::string, int> ids;
    for (int k = 1; k < r.num_classes; ++k) ids[class_name(k, r.num_classes)] = k;
    auto dmap = [&](const json& o) {
      std::map<int, double> m;
      for (const auto& [name, v] : o.items()) m[ids.at(name)] = v.get<double>();
      return m;
    };
    auto hmap = [&](const json& o) {
      std::map<int, std::optional<double>> m;
      for (const auto& [name, v] : o.items()) {
        m[ids.at(name)] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      }
      return m;
    };
    for (const auto& s : j.at("slices")) {
      r.slices.push_back({parse_slice_ref(s.at("slice").get<std::string>()), dmap(s.at("dice")), hmap(s.at("hd"))});
    }
    for (const auto& c : j.at("cases")) {
      CaseResult cr;
      cr.case_id = parse_case(c.at("case").get<std::string>());
      cr.num_slices = c.at("num_slices").get<int>();
      cr.per_class_dice = dmap(c.at("dice"));
      cr.per_class_hd = hmap(c.at("hd"));
      cr.mean_dice = c.at("mean_dice").get<double>();
      if (!c.at("mean_hd").is_null()) cr.mean_hd = c.at("mean_hd").get<double>();
      r.cases.push_back(std::move(cr));
    }
    const json& a = j.at("aggregate");
    for (const auto& [name, v] : a.at("dice").items()) r.aggregate.dice[ids.at(name)] = stat_from(v);
    for (const auto& [name, v] : a.at("hd").items()) r.aggregate.hd[ids.at(name)] = stat_from(v);
    r.aggregate.mean_dice = stat_from(a.at("mean_dice"));
    r.aggregate.mean_hd = stat_from(a.at("mean_hd"));
    if (j.contains("baseline_comparison")) {
      const json& b = j["baseline_comparison"];
      CaseAnalysis ca;
      ca.improved = b.at("improved").get<int>();
      ca.degraded = b.at("degraded").get<int>();
      ca.unchanged = b.at("unchanged").get<int>();
      for (const auto& x : b.at("deltas")) ca.deltas.push_back(delta_from(x));
      for (const auto& x : b.at("top_improved")) ca.top_improved.push_back(delta_from(x));
      for (const auto& x : b.at("top_degraded")) ca.top_degraded.push_back(delta_from(x));
      r.baseline_comparison = std::move(ca);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ValidationError(std::string("malformed report: unknown class name (") + e.what() + ")");
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

std::string report_cases_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "case,num_slices";
  for (int k = 1; k < r.num_classes; ++k) os << ",dice_" << class_name(k, r.num_classes);
  os << ",mean_dice";
  for (int k = 1; k < r.num_classes; ++k) os << ",hd_" << class_name(k, r.num_classes);
  os << ",mean_hd\n";
  for (const auto& c : r.cases) {
    os << c.case_id.str() << ',' << c.num_slices;
    for (const auto& [k, v] : c.per_class_dice) os << ',' << num(v);
    os << ',' << num(c.mean_dice);
    for (const auto& [k, v] : c.per_class_hd) os << ',' << opt_num(v);
    os << ',' << opt_num(c.mean_hd) << '\n';
  }
  return os.str();
}

std::string report_slices_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "slice,class,dice,hd\n";
  for (const auto& s : r.slices) {
    for (const auto& [k, d] : s.dice) {
      os << s.ref.str() << ',' << class_name(k, r.num_classes) << ',' << num(d) << ','
         << opt_num(s.hd.at(k)) << '\n';
    }
  }
  return os.str();
}

std::string deltas_csv(const CaseAnalysis& a) {
  std::ostringstream os;
  os << "case,jras_mean_dice,baseline_mean_dice,delta\n";
  for (const auto& d : a.deltas) {
    os << d.case_id.str() << ',' << num(d.jras) << ',' << num(d.baseline) << ','
       << format_delta(d.delta) << '\n';
  }
  return os.str();
}

}  // namespace jras
