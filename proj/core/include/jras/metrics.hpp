#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jras/dataset.hpp"

namespace jras {

// 2|P n G| / (|P| + |G|) for P = (pred == c), G = (gt == c). Both empty -> 1,
// one empty -> 0.
double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id);

enum class HdEmptyPolicy {
  Penalty,  // one empty mask scores the image diagonal
  Missing,  // one empty mask yields no value
};

// Pixels of the class that have a 4-neighbour outside the class or outside
// the image, as (y, x).
std::vector<std::pair<int, int>> boundary_pixels(const LabelMap& mask, int class_id);

// Exact symmetric Hausdorff distance between class boundaries, in pixels.
// Uses squared Euclidean distance transforms; equals the brute-force pairwise
// maximum bit for bit.
std::optional<double> hausdorff(const LabelMap& pred, const LabelMap& gt, int class_id,
                                HdEmptyPolicy policy = HdEmptyPolicy::Penalty);
// O(|P||G|) reference.
std::optional<double> hausdorff_brute_force(const LabelMap& pred, const LabelMap& gt, int class_id,
                                            HdEmptyPolicy policy = HdEmptyPolicy::Penalty);

// Display name of a class: BG/RV/MYO/LV when C = 4, otherwise "class<k>".
std::string class_name(int class_id, int num_classes);

// Foreground classes 1..C-1 only.
struct SliceResult {
  SliceRef ref;
  std::map<int, double> dice;
  std::map<int, std::optional<double>> hd;
};

struct CaseResult {
  CaseId case_id;
  std::map<int, double> per_class_dice;
  std::map<int, std::optional<double>> per_class_hd;
  double mean_dice = 0.0;
  std::optional<double> mean_hd;
  int num_slices = 0;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
  int count = 0;
  int missing = 0;
};

struct Aggregate {
  std::map<int, Stat> dice;
  std::map<int, Stat> hd;
  Stat mean_dice;  // over per-case means
  Stat mean_hd;
};

// Per-class means and mean/std of per-case means, MISSING HD excluded and
// counted. Throws ArgumentError on an empty list.
Aggregate aggregate(const std::vector<CaseResult>& cases);

struct CaseDelta {
  CaseId case_id;
  double jras = 0.0;
  double baseline = 0.0;
  double delta = 0.0;
};

struct CaseAnalysis {
  std::vector<CaseDelta> deltas;  // delta descending, then case id
  int improved = 0;
  int degraded = 0;
  int unchanged = 0;
  std::vector<CaseDelta> top_improved;   // largest positive deltas
  std::vector<CaseDelta> top_degraded;   // most negative first
};

// Throws ArgumentError when the case-id sets differ.
CaseAnalysis case_analysis(const std::vector<CaseResult>& jras,
                           const std::vector<CaseResult>& baseline, int top_n = 5);

// "+0.1462" / "-0.0078" / "+0.0000"
std::string format_delta(double delta);

struct SliceEval {
  SliceRef ref;
  LabelMap pred;
  LabelMap gt;
};

struct EvalReport {
  std::string label;
  int num_classes = 0;
  HdEmptyPolicy hd_policy = HdEmptyPolicy::Penalty;
  std::vector<SliceResult> slices;
  std::vector<CaseResult> cases;
  Aggregate aggregate;
  std::optional<CaseAnalysis> baseline_comparison;
};

SliceResult score_slice(const SliceEval& s, int num_classes, HdEmptyPolicy policy);

// Case Dice pools pixel counts over all slices of a (patient, phase); case
// HD is the mean of the slice HDs that are present.
EvalReport make_report(std::string label, const std::vector<SliceEval>& slices, int num_classes,
                       HdEmptyPolicy policy = HdEmptyPolicy::Penalty);

nlohmann::json report_to_json(const EvalReport& report);
// Throws ValidationError naming the missing/bad field.
EvalReport report_from_json(const nlohmann::json& j);
// One row per case.
std::string report_cases_csv(const EvalReport& report);
// One row per (slice, foreground class).
std::string report_slices_csv(const EvalReport& report);
std::string deltas_csv(const CaseAnalysis& analysis);

}  // namespace jras
