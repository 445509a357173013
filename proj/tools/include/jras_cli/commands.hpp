#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jras/phantom.hpp"
#include "jras_cli/config.hpp"

namespace jras::cli {

// Aggregates every configuration problem; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

// Flags shared by every config-driven command. Explicit flags win over
// --set, which wins over the config file.
struct CommonOptions {
  std::filesystem::path config;
  std::vector<std::string> sets;  // "key=value"
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> data;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  // Extra overrides appended by the command itself.
  std::vector<std::pair<std::string, std::string>> extra;
};

RunConfig resolve(const CommonOptions& opts);

struct MakeToyOptions {
  std::filesystem::path out;
  ToySpec spec;
};

struct ValidateOptions {
  std::vector<std::filesystem::path> datasets;
  CommonOptions common;
};

struct PretrainOptions {
  CommonOptions common;
  std::optional<int> epochs;
  std::filesystem::path init;  // start from this checkpoint instead of the seed init
};

struct JointOptions {
  CommonOptions common;
  std::optional<int> epochs;
  bool resume = false;
  int max_epochs = -1;  // stop after this many new epochs
};

struct EvalCommandOptions {
  CommonOptions common;
  std::string name;
  std::optional<int> topk;
  bool dynamic = false;
  std::optional<double> theta;
  bool baseline = false;
  std::string sweep;  // "a..b"
  std::optional<std::string> noise;
  std::optional<double> sigma;
  std::optional<double> density;
  std::optional<double> drop_rate;
  std::optional<std::uint64_t> noise_seed;
  std::optional<std::string> fusion;
  std::optional<double> fusion_tau;
  std::optional<std::string> backbone;
};

struct RetrieveOptions {
  CommonOptions common;
  std::string query;
  int k = 5;
  std::filesystem::path overlay;
  std::string stage = "auto";  // auto, joint, pretrained
};

struct ReportOptions {
  std::vector<std::filesystem::path> runs;
  std::filesystem::path out;
  std::string formats = "svg";
  std::string select;  // report name used for cross-run deltas
};

int cmd_make_toy(const MakeToyOptions& o, std::ostream& out);
int cmd_validate(const ValidateOptions& o, std::ostream& out);
int cmd_pretrain_retrieval(const PretrainOptions& o, std::ostream& out);
int cmd_pretrain_seg(const PretrainOptions& o, std::ostream& out);
int cmd_joint_train(const JointOptions& o, std::ostream& out);
int cmd_eval(const EvalCommandOptions& o, std::ostream& out);
int cmd_retrieve(const RetrieveOptions& o, std::ostream& out);
int cmd_report(const ReportOptions& o, std::ostream& out);

// "1..10" -> {1, 10}; throws ArgumentError.
std::pair<int, int> parse_range(const std::string& text);

}  // namespace jras::cli
