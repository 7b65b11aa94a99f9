#pragma once

#include "ncl/config.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ncl {

struct MetricFragment {
  std::string name;
  double value = 0.0;
  nlohmann::json per_item;  // null when absent
  std::optional<double> stderr_value;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// One row of a pass/fail table. `relation` names the comparison, e.g. "<",
/// "<=", "==", ">".
struct CheckRow {
  std::string name;
  double value = 0.0;
  std::string relation;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;

  nlohmann::json to_json() const;
};

CheckRow check_less(std::string name, double value, double tolerance, std::string detail = "");
CheckRow check_less_equal(std::string name, double value, double tolerance, std::string detail = "");
CheckRow check_greater(std::string name, double value, double tolerance, std::string detail = "");
/// |value - target| <= tolerance.
CheckRow check_near(std::string name, double value, double target, double tolerance, std::string detail = "");

/// SHA-1 of "blob <size>\0<content>", lower-case hex.
std::string git_blob_hash(std::string_view content);

/// Report body (hash-stable) plus a timing sidecar.
class ExperimentReport {
 public:
  ExperimentReport(std::string command, Config config);

  void add_input(const std::string& label, std::string_view content);
  /// Throws ConfigInvalid if a metric with the same name already exists.
  void add_metric(MetricFragment fragment);
  void add_check(CheckRow row);
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  void time(const std::string& phase, double seconds) { timings_[phase] = seconds; }

  const std::vector<CheckRow>& checks() const { return checks_; }
  const std::vector<MetricFragment>& metrics() const { return metrics_; }
  bool all_pass() const;
  std::string input_hash() const;

  nlohmann::json body() const;
  /// Writes report.json and timing.json into `dir`.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string command_;
  Config config_;
  std::vector<std::pair<std::string, std::string>> inputs_;  // label, blob hash
  std::vector<MetricFragment> metrics_;
  std::vector<CheckRow> checks_;
  nlohmann::json extra_ = nlohmann::json::object();
  std::map<std::string, double> timings_;
};

}  // namespace ncl
