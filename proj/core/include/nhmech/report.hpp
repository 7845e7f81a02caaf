#pragma once

#include <map>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace nhmech {

struct ConditionStats {
  double max_residual = 0.0;
  double mean_residual = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_residual <= tolerance; }
};

struct DriftStats {
  double initial = 0.0;
  double max_drift = 0.0;
  double tolerance = 0.0;
  bool pass() const { return max_drift <= tolerance; }
};

/// Residual statistics of one verification run: per-condition maxima and
/// means over the sample set, drifts of monitored quantities along a
/// trajectory, and the sample provenance. The verdict passes exactly when
/// every residual is within its tolerance.
struct ConservationReport {
  std::string check;
  std::string subject;
  std::string scenario;
  int sample_count = 0;
  unsigned seed = 0;
  std::map<std::string, ConditionStats> conditions;
  std::map<std::string, DriftStats> drifts;
  std::map<std::string, std::string> notes;

  bool pass() const;
  nlohmann::json to_json() const;

  /// Accumulate |residual| into a named condition.
  void add_residual(const std::string& condition, double residual, double tolerance);
};

/// Helper that finalizes mean residuals; add_residual accumulates sums, and
/// finalize divides by the sample count per condition.
class ReportBuilder {
public:
  ReportBuilder(std::string check, std::string subject, std::string scenario, int samples,
                unsigned seed);
  void residual(const std::string& condition, double value, double tolerance);
  void drift(const std::string& name, double initial, double max_drift, double tolerance);
  void note(const std::string& key, const std::string& value);
  ConservationReport finish();

private:
  ConservationReport report_;
  std::map<std::string, long> counts_;
};

} // namespace nhmech
