#include "nhmech/scenario.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace nhmech {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& pointer, const std::string& what) {
  throw ScenarioError("schema violation at " + pointer + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& pointer) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(pointer + "/" + key, "missing required key");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& pointer) {
  const json& v = require(obj, key, pointer);
  if (!v.is_string()) schema_error(pointer + "/" + key, "expected a string");
  return v.get<std::string>();
}

Expr parse_at(const std::string& source, const SymbolTable& symbols,
              const std::string& pointer) {
  try {
    return parse(source, symbols);
  } catch (const Error& e) {
    throw ScenarioError("at " + pointer + ": " + e.what());
  }
}

std::vector<int> parse_index_key(const std::string& key, const std::string& pointer) {
  std::vector<int> out;
  for (char c : key) {
    if (c == ',' || c == ' ') continue;
    if (c < '1' || c > '9') schema_error(pointer, "tensor index keys are 1-based digit strings");
    out.push_back(c - '1');
  }
  if (out.empty()) schema_error(pointer, "empty tensor index key");
  return out;
}

} // namespace

std::string velocity_name(const std::string& coordinate) {
  if (coordinate.size() > 1 && coordinate[0] == 'q') return "u" + coordinate.substr(1);
  return "u_" + coordinate;
}

std::vector<std::pair<std::string, Expr>> Scenario::monitors() const {
  std::vector<std::pair<std::string, Expr>> out(integrals.begin(), integrals.end());
  return out;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(origin + ": " + e.what());
  }
  if (!root.is_object()) schema_error("", "scenario must be a JSON object");

  static const char* known[] = {"name",   "dimension", "coordinates", "lagrangian", "constraints",
                                "domain", "fields",    "integrals",   "tensors",    "defaults"};
  for (const auto& [key, value] : root.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) schema_error("/" + key, "unknown key");
  }

  std::string name = require_string(root, "name", "");
  const json& jdim = require(root, "dimension", "");
  if (!jdim.is_number_integer() || jdim.get<int>() < 1)
    schema_error("/dimension", "expected a positive integer");
  int n = jdim.get<int>();

  const json& jcoords = require(root, "coordinates", "");
  if (!jcoords.is_array() || static_cast<int>(jcoords.size()) != n)
    schema_error("/coordinates", "expected an array of dimension strings");
  std::vector<std::string> coordinates;
  std::vector<std::string> velocities;
  for (int i = 0; i < n; ++i) {
    if (!jcoords[static_cast<std::size_t>(i)].is_string())
      schema_error("/coordinates/" + std::to_string(i), "expected a string");
    coordinates.push_back(jcoords[static_cast<std::size_t>(i)].get<std::string>());
    velocities.push_back(velocity_name(coordinates.back()));
  }
  std::vector<std::string> table = coordinates;
  table.insert(table.end(), velocities.begin(), velocities.end());
  SymbolTable symbols(std::move(table));

  // Lagrangian
  const json& jlag = require(root, "lagrangian", "");
  if (!jlag.is_object()) schema_error("/lagrangian", "expected an object");
  std::string type = require_string(jlag, "type", "/lagrangian");
  Lagrangian lagrangian = [&] {
    if (type == "expression") {
      std::string source = require_string(jlag, "source", "/lagrangian");
      return Lagrangian::general(parse_at(source, symbols, "/lagrangian/source"), n);
    }
    if (type == "mechanical") {
      const json& jmetric = require(jlag, "metric", "/lagrangian");
      if (!jmetric.is_array() || static_cast<int>(jmetric.size()) != n)
        schema_error("/lagrangian/metric", "expected an n x n array of strings");
      std::vector<std::vector<Expr>> metric;
      for (int i = 0; i < n; ++i) {
        const json& row = jmetric[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != n)
          schema_error("/lagrangian/metric/" + std::to_string(i), "expected a row of n strings");
        std::vector<Expr> r;
        for (int j = 0; j < n; ++j) {
          if (!row[static_cast<std::size_t>(j)].is_string())
            schema_error("/lagrangian/metric/" + std::to_string(i) + "/" + std::to_string(j),
                         "expected a string");
          r.push_back(parse_at(row[static_cast<std::size_t>(j)].get<std::string>(), symbols,
                               "/lagrangian/metric/" + std::to_string(i) + "/" +
                                   std::to_string(j)));
        }
        metric.push_back(std::move(r));
      }
      std::string pot = require_string(jlag, "potential", "/lagrangian");
      return Lagrangian::mechanical(std::move(metric),
                                    parse_at(pot, symbols, "/lagrangian/potential"), n);
    }
    schema_error("/lagrangian/type", "expected \"expression\" or \"mechanical\"");
  }();

  // Domain
  const json& jdomain = require(root, "domain", "");
  if (!jdomain.is_object()) schema_error("/domain", "expected an object");
  auto read_bound = [&](const char* key) {
    const json& arr = require(jdomain, key, "/domain");
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
      schema_error(std::string("/domain/") + key, "expected an array of n numbers");
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
      if (!arr[static_cast<std::size_t>(i)].is_number())
        schema_error(std::string("/domain/") + key + "/" + std::to_string(i),
                     "expected a number");
      v[i] = arr[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
  };
  DomainBox box{read_bound("min"), read_bound("max")};
  if (((box.max - box.min).array() <= 0.0).any())
    schema_error("/domain", "max must exceed min componentwise");

  // Defaults (needed before the distribution: its validation is seeded).
  ScenarioDefaults defaults;
  if (auto it = root.find("defaults"); it != root.end()) {
    const json& jd = *it;
    if (!jd.is_object()) schema_error("/defaults", "expected an object");
    for (const auto& [key, value] : jd.items()) {
      if (key == "t_end") defaults.t_end = value.get<double>();
      else if (key == "step") defaults.step = value.get<double>();
      else if (key == "seed") defaults.seed = value.get<unsigned>();
      else if (key == "tol") defaults.tol = value.get<double>();
      else schema_error("/defaults/" + key, "unknown key");
    }
    if (!(defaults.step > 0.0)) schema_error("/defaults/step", "step must be positive");
  }

  // Constraints
  const json& jcon = require(root, "constraints", "");
  if (!jcon.is_object()) schema_error("/constraints", "expected an object");
  const json& jbasis = require(jcon, "basis", "/constraints");
  if (!jbasis.is_array() || jbasis.empty())
    schema_error("/constraints/basis", "expected a nonempty array of component vectors");
  std::vector<VectorFieldQ> basis;
  for (int a = 0; a < static_cast<int>(jbasis.size()); ++a) {
    const json& row = jbasis[static_cast<std::size_t>(a)];
    std::string pointer = "/constraints/basis/" + std::to_string(a);
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      schema_error(pointer, "expected n component strings");
    std::vector<Expr> comps;
    for (int i = 0; i < n; ++i) {
      if (!row[static_cast<std::size_t>(i)].is_string())
        schema_error(pointer + "/" + std::to_string(i), "expected a string");
      comps.push_back(parse_at(row[static_cast<std::size_t>(i)].get<std::string>(), symbols,
                               pointer + "/" + std::to_string(i)));
    }
    try {
      basis.emplace_back(std::move(comps), n);
    } catch (const Error& e) {
      throw ScenarioError("at " + pointer + ": " + e.what());
    }
  }

  DistributionD distribution = [&] {
    try {
      return DistributionD(std::move(basis), box, defaults.seed);
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(std::string("constraint distribution: ") + e.what());
    }
  }();
  int m = distribution.m();

  ConstrainedSystem system = [&] {
    try {
      return ConstrainedSystem(std::move(lagrangian), std::move(distribution), defaults.seed);
    } catch (const ScenarioError&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioError(std::string("system validation: ") + e.what());
    }
  }();

  Scenario scenario{std::move(name), n,       std::move(coordinates), std::move(velocities),
                    symbols,         std::move(system), {},          {},
                    {},              {},      defaults};

  // Candidate fields
  if (auto it = root.find("fields"); it != root.end()) {
    if (!it->is_object()) schema_error("/fields", "expected an object");
    for (const auto& [fname, comps] : it->items()) {
      std::string pointer = "/fields/" + fname;
      if (!comps.is_array() || static_cast<int>(comps.size()) != n)
        schema_error(pointer, "expected n component strings");
      std::vector<Expr> exprs;
      for (int i = 0; i < n; ++i)
        exprs.push_back(parse_at(comps[static_cast<std::size_t>(i)].get<std::string>(), symbols,
                                 pointer + "/" + std::to_string(i)));
      try {
        scenario.fields.emplace(fname,
                                CandidateField{VectorFieldQ(std::move(exprs), n), {}, fname});
      } catch (const Error& e) {
        throw ScenarioError("at " + pointer + ": " + e.what());
      }
    }
  }

  // Candidate integrals
  if (auto it = root.find("integrals"); it != root.end()) {
    if (!it->is_object()) schema_error("/integrals", "expected an object");
    for (const auto& [iname, src] : it->items()) {
      if (!src.is_string()) schema_error("/integrals/" + iname, "expected a string");
      scenario.integrals.emplace(iname,
                                 parse_at(src.get<std::string>(), symbols, "/integrals/" + iname));
    }
  }

  // Candidate tensors. Degree-2 tensors whose component indices stay within
  // the distribution range are tensors over the distribution basis; indices
  // beyond it denote coordinate tensors on Q (restricted checks).
  if (auto it = root.find("tensors"); it != root.end()) {
    if (!it->is_object()) schema_error("/tensors", "expected an object");
    for (const auto& [tname, jt] : it->items()) {
      std::string pointer = "/tensors/" + tname;
      if (!jt.is_object()) schema_error(pointer, "expected an object");
      const json& jdeg = require(jt, "degree", pointer);
      if (!jdeg.is_number_integer() || jdeg.get<int>() < 2)
        schema_error(pointer + "/degree", "expected an integer >= 2");
      int degree = jdeg.get<int>();
      const json& jcomp = require(jt, "components", pointer);
      if (!jcomp.is_object()) schema_error(pointer + "/components", "expected an object");

      std::optional<Expr> f;
      if (auto jf = jt.find("f"); jf != jt.end() && jf->is_string() &&
                                  !jf->get<std::string>().empty())
        f = parse_at(jf->get<std::string>(), symbols, pointer + "/f");

      int max_index = -1;
      std::map<std::vector<int>, Expr> comps;
      for (const auto& [key, src] : jcomp.items()) {
        std::string cpointer = pointer + "/components/" + key;
        auto idx = parse_index_key(key, cpointer);
        if (static_cast<int>(idx.size()) != degree)
          schema_error(cpointer, "index length must equal the degree");
        for (int i : idx) max_index = std::max(max_index, i);
        if (!src.is_string()) schema_error(cpointer, "expected a string");
        comps.emplace(std::move(idx), parse_at(src.get<std::string>(), symbols, cpointer));
      }
      if (max_index >= n) schema_error(pointer + "/components", "index exceeds the dimension");

      try {
        if (degree == 2 && max_index >= m) {
          QTensor qt;
          qt.name = tname;
          qt.f = f;
          qt.components.assign(static_cast<std::size_t>(n),
                               std::vector<Expr>(static_cast<std::size_t>(n), Expr::constant(0.0)));
          for (const auto& [idx, e] : comps) {
            qt.components[static_cast<std::size_t>(idx[0])][static_cast<std::size_t>(idx[1])] = e;
            qt.components[static_cast<std::size_t>(idx[1])][static_cast<std::size_t>(idx[0])] = e;
          }
          scenario.qtensors.emplace(tname, std::move(qt));
        } else {
          scenario.ctensors.emplace(
              tname, CTensor(degree, m, n, std::move(comps), std::move(f), tname));
        }
      } catch (const Error& e) {
        throw ScenarioError("at " + pointer + ": " + e.what());
      }
    }
  }

  return scenario;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorClass::Input, "cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

namespace {

const char* kParticle = R"json({
  "name": "nonholonomic_particle",
  "dimension": 3,
  "coordinates": ["q_1", "q_2", "q_3"],
  "lagrangian": {"type": "mechanical",
                 "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
                 "potential": "0"},
  "constraints": {"basis": [["1", "0", "q_2"], ["0", "1", "0"]]},
  "domain": {"min": [-2, -2, -2], "max": [2, 2, 2]},
  "fields": {"Z_y": ["0", "1", "0"],
             "Z_x": ["1", "0", "0"],
             "Z_normal": ["-q_2", "0", "1"]},
  "integrals": {"p_y": "u_2", "E": "0.5*(u_1^2+u_2^2+u_3^2)"},
  "tensors": {"A_main": {"degree": 2, "components": {"11": "1+q_2^2"}, "f": "0"}},
  "defaults": {"t_end": 10.0, "step": 0.001, "seed": 42, "tol": 1e-9}
})json";

const char* kParticleGravity = R"json({
  "name": "nonholonomic_particle_gravity",
  "dimension": 3,
  "coordinates": ["q_1", "q_2", "q_3"],
  "lagrangian": {"type": "mechanical",
                 "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
                 "potential": "q_3"},
  "constraints": {"basis": [["1", "0", "q_2"], ["0", "1", "0"]]},
  "domain": {"min": [-2, -2, -2], "max": [2, 2, 2]},
  "fields": {"Z_y": ["0", "1", "0"], "Z_normal": ["-q_2", "0", "1"]},
  "integrals": {"p_y": "u_2", "E": "0.5*(u_1^2+u_2^2+u_3^2)+q_3"},
  "defaults": {"t_end": 10.0, "step": 0.001, "seed": 42, "tol": 1e-9}
})json";

const char* kSleigh = R"json({
  "name": "chaplygin_sleigh",
  "dimension": 3,
  "coordinates": ["q_1", "q_2", "q_3"],
  "lagrangian": {"type": "mechanical",
                 "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "2"]],
                 "potential": "0"},
  "constraints": {"basis": [["cos(q_3)", "sin(q_3)", "0"],
                            ["-sin(q_3)", "cos(q_3)", "1"]]},
  "domain": {"min": [-2, -2, -2], "max": [2, 2, 2]},
  "fields": {"Z_x": ["1", "0", "0"], "Z_y": ["0", "1", "0"]},
  "integrals": {"E": "0.5*(u_1^2+u_2^2+2*u_3^2)"},
  "defaults": {"t_end": 10.0, "step": 0.001, "seed": 42, "tol": 1e-9}
})json";

const char* kDisk = R"json({
  "name": "vertical_rolling_disk",
  "dimension": 4,
  "coordinates": ["q_1", "q_2", "q_3", "q_4"],
  "lagrangian": {"type": "mechanical",
                 "metric": [["1", "0", "0", "0"], ["0", "1", "0", "0"],
                            ["0", "0", "1", "0"], ["0", "0", "0", "1"]],
                 "potential": "0"},
  "constraints": {"basis": [["cos(q_4)", "sin(q_4)", "1", "0"],
                            ["0", "0", "0", "1"]]},
  "domain": {"min": [-2, -2, -2, -2], "max": [2, 2, 2, 2]},
  "fields": {"Z_heading": ["0", "0", "0", "1"],
             "Z_roll": ["0", "0", "1", "0"],
             "Z_x": ["1", "0", "0", "0"]},
  "integrals": {"p_roll": "u_3", "p_heading": "u_4",
                "E": "0.5*(u_1^2+u_2^2+u_3^2+u_4^2)"},
  "defaults": {"t_end": 10.0, "step": 0.001, "seed": 42, "tol": 1e-9}
})json";

const char* kPlane = R"json({
  "name": "integrable_plane",
  "dimension": 3,
  "coordinates": ["q_1", "q_2", "q_3"],
  "lagrangian": {"type": "mechanical",
                 "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
                 "potential": "q_3"},
  "constraints": {"basis": [["1", "0", "0"], ["0", "1", "0"]]},
  "domain": {"min": [-2, -2, -2], "max": [2, 2, 2]},
  "fields": {"Z_x": ["1", "0", "0"], "Z_normal": ["0", "0", "1"]},
  "integrals": {"p_x": "u_1", "E": "0.5*(u_1^2+u_2^2+u_3^2)+q_3"},
  "tensors": {"A_plane": {"degree": 2, "components": {"11": "1"}, "f": "0"},
              "W_cubic": {"degree": 3, "components": {"111": "1"}, "f": "0"}},
  "defaults": {"t_end": 10.0, "step": 0.001, "seed": 42, "tol": 1e-9}
})json";

const std::map<std::string, const char*>& builtin_table() {
  static const std::map<std::string, const char*> table = {
      {"nonholonomic_particle", kParticle},
      {"nonholonomic_particle_gravity", kParticleGravity},
      {"chaplygin_sleigh", kSleigh},
      {"vertical_rolling_disk", kDisk},
      {"integrable_plane", kPlane}};
  return table;
}

} // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : builtin_table()) out.push_back(k);
    return out;
  }();
  return names;
}

Scenario builtin(const std::string& name) {
  auto it = builtin_table().find(name);
  if (it == builtin_table().end())
    throw Error(ErrorClass::Usage, "unknown builtin scenario '" + name + "'");
  return parse_scenario(it->second, "builtin:" + name);
}

} // namespace nhmech
