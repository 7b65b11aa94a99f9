#include "ncl/report.hpp"

#include "ncl/error.hpp"
#include "ncl/io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <memory>

namespace ncl {

namespace {

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

nlohmann::json MetricFragment::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["value"] = number(value);
  if (!per_item.is_null()) j["per_item"] = per_item;
  if (stderr_value) j["stderr"] = number(*stderr_value);
  j["config"] = config;
  return j;
}

nlohmann::json CheckRow::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["value"] = number(value);
  j["relation"] = relation;
  j["tolerance"] = number(tolerance);
  j["pass"] = pass;
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

CheckRow check_less(std::string name, double value, double tolerance, std::string detail) {
  return {std::move(name), value, "<", tolerance, value < tolerance, std::move(detail)};
}

CheckRow check_less_equal(std::string name, double value, double tolerance, std::string detail) {
  return {std::move(name), value, "<=", tolerance, value <= tolerance, std::move(detail)};
}

CheckRow check_greater(std::string name, double value, double tolerance, std::string detail) {
  return {std::move(name), value, ">", tolerance, value > tolerance, std::move(detail)};
}

CheckRow check_near(std::string name, double value, double target, double tolerance, std::string detail) {
  const double gap = std::abs(value - target);
  if (!detail.empty()) detail += "; ";
  detail += "target " + format_double(target);
  return {std::move(name), value, "|value-target|<=", tolerance, gap <= tolerance, std::move(detail)};
}

std::string git_blob_hash(std::string_view content) {
  const std::string head = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(ctx && EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) == 1 &&
              EVP_DigestUpdate(ctx.get(), head.data(), head.size()) == 1 &&
              EVP_DigestUpdate(ctx.get(), content.data(), content.size()) == 1 &&
              EVP_DigestFinal_ex(ctx.get(), digest, &len) == 1,
          Errc::IoError, "SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

ExperimentReport::ExperimentReport(std::string command, Config config)
    : command_(std::move(command)), config_(std::move(config)) {
  add_input("config", config_.serialize());
}

void ExperimentReport::add_input(const std::string& label, std::string_view content) {
  inputs_.emplace_back(label, git_blob_hash(content));
}

void ExperimentReport::add_metric(MetricFragment fragment) {
  for (const auto& m : metrics_)
    require(m.name != fragment.name, Errc::ConfigInvalid, "metric '" + fragment.name + "' requested twice");
  metrics_.push_back(std::move(fragment));
}

void ExperimentReport::add_check(CheckRow row) { checks_.push_back(std::move(row)); }

bool ExperimentReport::all_pass() const {
  for (const auto& c : checks_)
    if (!c.pass) return false;
  return true;
}

std::string ExperimentReport::input_hash() const {
  std::string listing;
  for (const auto& [label, hash] : inputs_) listing += label + " " + hash + "\n";
  return git_blob_hash(listing);
}

nlohmann::json ExperimentReport::body() const {
  nlohmann::json j;
  j["command"] = command_;
  j["config"] = config_.to_json();
  j["config_text"] = config_.serialize();
  j["input_hash"] = input_hash();
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [label, hash] : inputs_) inputs[label] = hash;
  j["inputs"] = inputs;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : metrics_) j["metrics"].push_back(m.to_json());
  if (!checks_.empty()) {
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks_) j["checks"].push_back(c.to_json());
    j["all_pass"] = all_pass();
  }
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  return j;
}

void ExperimentReport::write(const std::filesystem::path& dir) const {
  write_text(dir / "report.json", body().dump(2) + "\n");
  nlohmann::json timing;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  timing["written_at"] = stamp;
  timing["seconds"] = timings_;
  double total = 0.0;
  for (const auto& [phase, s] : timings_) total += s;
  timing["total_seconds"] = total;
  write_text(dir / "timing.json", timing.dump(2) + "\n");
}

}  // namespace ncl
