#include "nhmech/report.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace nhmech {

bool ConservationReport::pass() const {
  for (const auto& [name, c] : conditions)
    if (!c.pass()) return false;
  for (const auto& [name, d] : drifts)
    if (!d.pass()) return false;
  return true;
}

void ConservationReport::add_residual(const std::string& condition, double residual,
                                      double tolerance) {
  auto& c = conditions[condition];
  residual = std::abs(residual);
  c.max_residual = std::max(c.max_residual, residual);
  c.mean_residual += residual; // finalized by ReportBuilder
  c.tolerance = tolerance;
}

nlohmann::json ConservationReport::to_json() const {
  nlohmann::json j;
  j["check"] = check;
  j["subject"] = subject;
  j["scenario"] = scenario;
  j["samples"] = {{"count", sample_count}, {"seed", seed}};
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& [name, c] : conditions)
    conds[name] = {{"max_residual", c.max_residual},
                   {"mean_residual", c.mean_residual},
                   {"tolerance", c.tolerance},
                   {"verdict", c.pass() ? "pass" : "fail"}};
  j["conditions"] = conds;
  nlohmann::json drift = nlohmann::json::object();
  for (const auto& [name, d] : drifts)
    drift[name] = {{"initial", d.initial},
                   {"max_drift", d.max_drift},
                   {"tolerance", d.tolerance},
                   {"verdict", d.pass() ? "pass" : "fail"}};
  j["drift"] = drift;
  if (!notes.empty()) {
    nlohmann::json ns = nlohmann::json::object();
    for (const auto& [k, v] : notes) ns[k] = v;
    j["notes"] = ns;
  }
  j["verdict"] = pass() ? "pass" : "fail";
  return j;
}

ReportBuilder::ReportBuilder(std::string check, std::string subject, std::string scenario,
                             int samples, unsigned seed) {
  report_.check = std::move(check);
  report_.subject = std::move(subject);
  report_.scenario = std::move(scenario);
  report_.sample_count = samples;
  report_.seed = seed;
}

void ReportBuilder::residual(const std::string& condition, double value, double tolerance) {
  report_.add_residual(condition, value, tolerance);
  ++counts_[condition];
}

void ReportBuilder::drift(const std::string& name, double initial, double max_drift,
                          double tolerance) {
  report_.drifts[name] = DriftStats{initial, max_drift, tolerance};
}

void ReportBuilder::note(const std::string& key, const std::string& value) {
  report_.notes[key] = value;
}

ConservationReport ReportBuilder::finish() {
  for (auto& [name, c] : report_.conditions) {
    long count = counts_[name];
    if (count > 0) c.mean_residual /= static_cast<double>(count);
  }
  return report_;
}

} // namespace nhmech
