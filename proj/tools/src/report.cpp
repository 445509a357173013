#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <regex>

#include <nlohmann/json.hpp>

#include "jras/checkpoint.hpp"
#include "jras/errors.hpp"
#include "jras_cli/commands.hpp"
#include "jras_cli/plot.hpp"
#include "jras_cli/run_io.hpp"

namespace jras::cli {

namespace {

struct LoadedReport {
  std::string run;   // run directory label
  std::string name;  // path below eval/, e.g. "k2" or "sweep/k3"
  fs::path file;
  EvalReport report;
};

EvalReport read_report(const fs::path& file) {
  try {
    return report_from_json(nlohmann::json::parse(io::read_file(file)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed report " + file.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("malformed report " + file.string() + ": " + e.what());
  }
}

std::string run_label(const fs::path& p) {
  const fs::path clean = p.lexically_normal();
  const std::string name = (clean.has_filename() ? clean : clean.parent_path()).filename().string();
  return name.empty() ? clean.string() : name;
}

std::vector<LoadedReport> collect(const fs::path& arg) {
  std::vector<LoadedReport> out;
  const std::string run = run_label(arg);
  if (fs::exists(arg / "report.json")) {
    out.push_back({run, run, arg / "report.json", read_report(arg / "report.json")});
    return out;
  }
  const fs::path root = arg / files::kEvalDir;
  if (!fs::is_directory(root)) throw LoadError("no reports under " + arg.string());
  std::vector<fs::path> found;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "report.json") found.push_back(e.path());
  }
  std::sort(found.begin(), found.end());
  for (const auto& f : found) {
    out.push_back({run, f.parent_path().lexically_relative(root).generic_string(), f, read_report(f)});
  }
  if (out.empty()) throw LoadError("no reports under " + arg.string());
  return out;
}

const LoadedReport& primary(const std::vector<LoadedReport>& reports, const std::string& select) {
  if (!select.empty()) {
    for (const auto& r : reports)
      if (r.name == select) return r;
    throw ArgumentError("run " + reports.front().run + " has no report named '" + select + "'");
  }
  if (reports.size() == 1) return reports.front();
  std::string names;
  for (const auto& r : reports) names += " " + r.name;
  throw ArgumentError("run " + reports.front().run + " has several reports (" + names +
                      " ); pick one with --select");
}

std::string g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string aggregate_table(const std::vector<LoadedReport>& all) {
  int classes = 0;
  for (const auto& r : all) classes = std::max(classes, r.report.num_classes);
  std::string out = "run,report,label,cases,mean_dice,mean_dice_std,mean_hd,mean_hd_std,hd_missing";
  for (int c = 1; c < classes; ++c) out += ",dice_" + class_name(c, classes) + ",hd_" + class_name(c, classes);
  out += "\n";
  for (const auto& r : all) {
    const Aggregate& a = r.report.aggregate;
    out += r.run + "," + r.name + "," + r.report.label + "," + std::to_string(r.report.cases.size()) + "," +
           g(a.mean_dice.mean) + "," + g(a.mean_dice.std) + ",";
    out += a.mean_hd.count > 0 ? g(a.mean_hd.mean) + "," + g(a.mean_hd.std) : "MISSING,MISSING";
    out += "," + std::to_string(a.mean_hd.missing);
    for (int c = 1; c < classes; ++c) {
      const auto d = a.dice.find(c);
      const auto h = a.hd.find(c);
      out += "," + (d != a.dice.end() ? g(d->second.mean) : "MISSING");
      out += "," + (h != a.hd.end() && h->second.count > 0 ? g(h->second.mean) : "MISSING");
    }
    out += "\n";
  }
  return out;
}

}  // namespace

int cmd_report(const ReportOptions& o, std::ostream& out) {
  if (o.runs.empty()) throw ArgumentError("report: at least one run directory is required");
  if (o.out.empty()) throw ArgumentError("report: --out is required");
  const auto formats = split_formats(o.formats);
  if (formats.empty()) throw ArgumentError("report: no output format given");
  for (const auto& f : formats) {
    if (f != "svg" && f != "ppm") throw ArgumentError("report: unknown format '" + f + "'");
  }

  std::vector<std::vector<LoadedReport>> runs;
  for (const auto& r : o.runs) runs.push_back(collect(r));
  std::vector<LoadedReport> all;
  for (const auto& r : runs) all.insert(all.end(), r.begin(), r.end());

  struct Comparison {
    std::string name;
    const LoadedReport* reference;
    const LoadedReport* compared;
    CaseAnalysis analysis;
  };
  std::vector<Comparison> comparisons;
  if (runs.size() >= 2) {
    const LoadedReport& ref = primary(runs.front(), o.select);
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const LoadedReport& cmp = primary(runs[i], o.select);
      comparisons.push_back({cmp.run + "/" + cmp.name + " vs " + ref.run + "/" + ref.name, &ref, &cmp,
                             case_analysis(cmp.report.cases, ref.report.cases)});
    }
  }

  fs::create_directories(o.out);
  io::write_file_atomic(o.out / "aggregate_table.csv", aggregate_table(all));
  if (!comparisons.empty()) {
    std::string table =
        "reference,compared,improved,degraded,unchanged,reference_mean_dice,compared_mean_dice,delta\n";
    for (std::size_t i = 0; i < comparisons.size(); ++i) {
      const auto& c = comparisons[i];
      const double rd = c.reference->report.aggregate.mean_dice.mean;
      const double cd = c.compared->report.aggregate.mean_dice.mean;
      table += c.reference->run + "/" + c.reference->name + "," + c.compared->run + "/" + c.compared->name +
               "," + std::to_string(c.analysis.improved) + "," + std::to_string(c.analysis.degraded) + "," +
               std::to_string(c.analysis.unchanged) + "," + g(rd) + "," + g(cd) + "," + format_delta(cd - rd) +
               "\n";
      io::write_file_atomic(o.out / ("deltas_" + std::to_string(i + 1) + ".csv"), deltas_csv(c.analysis));
    }
    io::write_file_atomic(o.out / "deltas_table.csv", table);
  }

  // Dice vs K: one series per (run, parent directory) over reports named kN.
  static const std::regex k_name(R"((?:(.*)/)?k(\d+))");
  std::map<std::string, Series> curves;
  for (const auto& r : all) {
    std::smatch m;
    if (!std::regex_match(r.name, m, k_name)) continue;
    const std::string key = r.run + (m[1].matched ? "/" + m[1].str() : "");
    curves[key].name = key;
    curves[key].points.emplace_back(std::stod(m[2].str()), r.report.aggregate.mean_dice.mean);
  }
  LineChart dice_k{"Mean Dice vs top-K", "K (0 = no retrieval)", "mean Dice", {}};
  for (auto& [key, s] : curves) {
    std::sort(s.points.begin(), s.points.end());
    dice_k.series.push_back(s);
  }

  BarChart per_class{"Per-class Dice", "Dice", {}, {}, {}};
  int classes = 0;
  for (const auto& r : all) classes = std::max(classes, r.report.num_classes);
  for (int c = 1; c < classes; ++c) per_class.categories.push_back(class_name(c, classes));
  for (const auto& r : all) {
    per_class.groups.push_back(r.run + "/" + r.name);
    std::vector<double> v;
    for (int c = 1; c < classes; ++c) {
      const auto it = r.report.aggregate.dice.find(c);
      v.push_back(it == r.report.aggregate.dice.end() ? 0.0 : it->second.mean);
    }
    per_class.values.push_back(v);
  }

  BarChart improvement{"Cases improved / degraded", "cases", {}, {"improved", "degraded", "unchanged"}, {{}, {}, {}}};
  const auto add_counts = [&](const std::string& label, const CaseAnalysis& a) {
    improvement.categories.push_back(label);
    improvement.values[0].push_back(a.improved);
    improvement.values[1].push_back(a.degraded);
    improvement.values[2].push_back(a.unchanged);
  };
  for (const auto& r : all) {
    if (r.report.baseline_comparison) add_counts(r.run + "/" + r.name, *r.report.baseline_comparison);
  }
  for (const auto& c : comparisons) add_counts(c.name, c.analysis);

  int written = 0;
  for (const auto& f : formats) {
    const bool svg = f == "svg";
    io::write_file_atomic(o.out / ("dice_vs_k." + f), svg ? render_svg(dice_k) : render_ppm(dice_k));
    io::write_file_atomic(o.out / ("class_dice." + f), svg ? render_svg(per_class) : render_ppm(per_class));
    io::write_file_atomic(o.out / ("improvement." + f), svg ? render_svg(improvement) : render_ppm(improvement));
    written += 3;
  }
  out << "report: " << all.size() << " reports from " << runs.size() << " runs, " << comparisons.size()
      << " comparisons, " << written << " plots in " << o.out.string() << "\n";
  for (const auto& c : comparisons) {
    out << "  " << c.name << ": improved " << c.analysis.improved << ", degraded " << c.analysis.degraded
        << ", unchanged " << c.analysis.unchanged << "\n";
  }
  return 0;
}

}  // namespace jras::cli
