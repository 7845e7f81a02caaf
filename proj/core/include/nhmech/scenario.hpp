#pragma once

#include <map>
#include <string>
#include <vector>

#include "nhmech/conservation.hpp"

namespace nhmech {

struct ScenarioDefaults {
  double t_end = 10.0;
  double step = 1e-3;
  unsigned seed = 42;
  double tol = 1e-9;
};

/// A fully validated benchmark system: constrained dynamics plus named
/// candidate fields, candidate integrals, and candidate tensors. Immutable
/// after load.
struct Scenario {
  std::string name;
  int n = 0;
  std::vector<std::string> coordinates;
  std::vector<std::string> velocities;
  SymbolTable symbols; // coordinates then velocities
  ConstrainedSystem system;
  std::map<std::string, CandidateField> fields;
  std::map<std::string, Expr> integrals;
  std::map<std::string, CTensor> ctensors;
  std::map<std::string, QTensor> qtensors;
  ScenarioDefaults defaults;

  /// Monitors for the integrator: the named integrals in name order.
  std::vector<std::pair<std::string, Expr>> monitors() const;
};

/// Velocity name paired to a coordinate name: "q<suffix>" becomes
/// "u<suffix>", anything else gets a "u_" prefix.
std::string velocity_name(const std::string& coordinate);

/// Load and validate a scenario file. Schema violations carry a JSON
/// pointer; expression errors carry their location.
Scenario load_scenario(const std::string& path);

/// Parse a scenario from JSON text (the file loader and the built-ins share
/// this path).
Scenario parse_scenario(const std::string& json_text, const std::string& origin);

const std::vector<std::string>& builtin_names();
Scenario builtin(const std::string& name);

} // namespace nhmech
