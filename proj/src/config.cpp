#include "robust_enkf/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

namespace robust_enkf {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_string(PdeKind v) { return v == PdeKind::heat ? "heat" : "burgers"; }
std::string to_string(ModelPath v) { return v == ModelPath::full ? "full" : "dmdc"; }

std::string to_string(DisturbanceKind v) {
  switch (v) {
    case DisturbanceKind::none: return "none";
    case DisturbanceKind::constant: return "const";
    case DisturbanceKind::sinusoidal: return "sin";
  }
  return "none";
}

DisturbanceKind parse_disturbance_kind(const std::string& s) {
  if (s == "none") return DisturbanceKind::none;
  if (s == "const" || s == "constant") return DisturbanceKind::constant;
  if (s == "sin" || s == "sinusoidal") return DisturbanceKind::sinusoidal;
  throw ConfigError("unknown disturbance kind '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

template <typename E>
E pick(const std::string& key, const std::string& v,
       std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options) {
    if (v == name) return value;
  }
  throw ConfigError(key + ": unknown value '" + v + "'");
}

}  // namespace

ExperimentConfig default_config(PdeKind pde) {
  ExperimentConfig c;
  c.pde = pde;
  if (pde == PdeKind::heat) {
    c.nu = 0.002;
    c.points = 100;
    c.controls = 8;
    c.r_weight = 1.0;
    c.horizon = 0.1;
    c.enkf.particles = 10000;
  } else {
    c.nu = 0.02;
    c.points = 128;
    c.controls = 10;
    c.r_weight = 0.1;
    c.horizon = 3.0;
    c.enkf.particles = 1000;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (points < 3) throw ConfigError("pde.points must be >= 3");
  if (!(length > 0.0)) throw ConfigError("pde.length must be positive");
  if (controls < 1 || controls > points) throw ConfigError("pde.controls must be in [1, points]");
  if (!(nu > 0.0)) throw ConfigError("pde.nu must be positive");
  if (!(q > 0.0) || !(r_weight > 0.0) || !(g > 0.0)) {
    throw ConfigError("weights q, r, g must be positive");
  }
  if (!(lambda >= 0.0)) throw ConfigError("robust.lambda must be nonnegative");
  if (!(r_reg > 0.0)) throw ConfigError("robust.r must be positive");
  if (enkf.particles < 2) throw ConfigError("enkf.particles must be >= 2");
  if (enkf.horizon < 0.0 || enkf.dt < 0.0 || enkf.scale < 0.0) {
    throw ConfigError("enkf horizon, dt and scale must be nonnegative");
  }
  if (!(enkf.terminal_scale > 0.0)) throw ConfigError("enkf.terminal_scale must be positive");
  if (!(enkf.scale_tolerance > 0.0)) throw ConfigError("enkf.scale_tolerance must be positive");
  if (dmdc.rank < 1 || dmdc.rank > points) throw ConfigError("dmdc.rank must be in [1, points]");
  if (dmdc.trajectories < 1 || dmdc.steps < 1 || dmdc.hold < 1) {
    throw ConfigError("dmdc trajectories, steps and hold must be >= 1");
  }
  if (!(disturbance.d0 >= 0.0)) throw ConfigError("disturbance.d0 must be nonnegative");
  if (!disturbance.profile.empty() &&
      disturbance.profile.size() != static_cast<std::size_t>(controls)) {
    throw ConfigError("disturbance.profile needs one weight per control channel");
  }
  if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon) {
    throw ConfigError("experiment horizon and dt must satisfy 0 < dt <= horizon");
  }
  if (trials < 1) throw ConfigError("experiment.trials must be >= 1");
  if (grid.d0_list.empty() || grid.lambda_list.empty() || grid.kinds.empty()) {
    throw ConfigError("grid lists must be nonempty");
  }
}

void set_option(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "experiment.pde") {
    c.pde = pick<PdeKind>(key, v, {{"heat", PdeKind::heat}, {"burgers", PdeKind::burgers}});
  } else if (key == "experiment.model") {
    c.model = pick<ModelPath>(key, v, {{"full", ModelPath::full}, {"dmdc", ModelPath::dmdc}});
  } else if (key == "experiment.seed") {
    const long s = to_long(key, v);
    if (s < 0) throw ConfigError(key + " must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "experiment.trials") {
    c.trials = static_cast<int>(to_long(key, v));
  } else if (key == "experiment.horizon") {
    c.horizon = to_double(key, v);
  } else if (key == "experiment.dt") {
    c.dt = to_double(key, v);
  } else if (key == "pde.nu") {
    c.nu = to_double(key, v);
  } else if (key == "pde.points") {
    c.points = static_cast<int>(to_long(key, v));
  } else if (key == "pde.length") {
    c.length = to_double(key, v);
  } else if (key == "pde.controls") {
    c.controls = static_cast<int>(to_long(key, v));
  } else if (key == "pde.boundary") {
    c.boundary = pick<Boundary>(key, v, {{"periodic", Boundary::periodic},
                                         {"dirichlet", Boundary::dirichlet}});
  } else if (key == "weights.q") {
    c.q = to_double(key, v);
  } else if (key == "weights.r") {
    c.r_weight = to_double(key, v);
  } else if (key == "weights.g") {
    c.g = to_double(key, v);
  } else if (key == "robust.lambda") {
    c.lambda = to_double(key, v);
  } else if (key == "robust.r") {
    c.r_reg = to_double(key, v);
  } else if (key == "robust.metric") {
    c.robust_metric = pick<RobustMetric>(key, v, {{"euclidean", RobustMetric::euclidean},
                                                  {"l2", RobustMetric::l2}});
  } else if (key == "robust.input_access") {
    c.input_access = pick<InputAccess>(key, v, {{"known", InputAccess::known},
                                                {"simulator", InputAccess::simulator_only}});
  } else if (key == "enkf.particles") {
    c.enkf.particles = static_cast<int>(to_long(key, v));
  } else if (key == "enkf.horizon") {
    c.enkf.horizon = to_double(key, v);
  } else if (key == "enkf.dt") {
    c.enkf.dt = to_double(key, v);
  } else if (key == "enkf.terminal_scale") {
    c.enkf.terminal_scale = to_double(key, v);
  } else if (key == "enkf.innovation") {
    c.enkf.innovation = pick<Innovation>(key, v, {{"averaged", Innovation::averaged},
                                                  {"literal", Innovation::literal}});
  } else if (key == "enkf.output") {
    c.enkf.output = pick<OutputForm>(key, v, {{"state", OutputForm::state},
                                              {"scalar_cost", OutputForm::scalar_cost}});
  } else if (key == "enkf.scale") {
    c.enkf.scale = to_double(key, v);
  } else if (key == "enkf.scale_tolerance") {
    c.enkf.scale_tolerance = to_double(key, v);
  } else if (key == "dmdc.rank") {
    c.dmdc.rank = static_cast<int>(to_long(key, v));
  } else if (key == "dmdc.trajectories") {
    c.dmdc.trajectories = static_cast<int>(to_long(key, v));
  } else if (key == "dmdc.steps") {
    c.dmdc.steps = static_cast<int>(to_long(key, v));
  } else if (key == "dmdc.amplitude") {
    c.dmdc.amplitude = to_double(key, v);
  } else if (key == "dmdc.hold") {
    c.dmdc.hold = static_cast<int>(to_long(key, v));
  } else if (key == "disturbance.kind") {
    c.disturbance.kind = parse_disturbance_kind(v);
  } else if (key == "disturbance.d0") {
    c.disturbance.d0 = to_double(key, v);
  } else if (key == "disturbance.profile") {
    c.disturbance.profile = to_doubles(key, v);
  } else if (key == "grid.d0") {
    c.grid.d0_list = to_doubles(key, v);
  } else if (key == "grid.lambda") {
    c.grid.lambda_list = to_doubles(key, v);
  } else if (key == "grid.kinds") {
    c.grid.kinds.clear();
    for (const auto& item : split_list(v)) c.grid.kinds.push_back(parse_disturbance_kind(item));
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    }
    entries.emplace_back(section + "." + trim(line.substr(0, eq)),
                         trim(line.substr(eq + 1)));
  }

  ExperimentConfig cfg = default_config(PdeKind::heat);
  for (const auto& [key, value] : entries) {
    if (key == "experiment.pde") {
      ExperimentConfig probe;
      set_option(probe, key, value);
      cfg = default_config(probe.pde);
    }
  }
  std::map<std::string, int> seen;
  for (const auto& [key, value] : entries) {
    if (seen[key]++) throw ConfigError("duplicate key '" + key + "'");
    set_option(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string to_config_text(const ExperimentConfig& c) {
  auto boundary = c.boundary == Boundary::periodic ? "periodic" : "dirichlet";
  auto metric = c.robust_metric == RobustMetric::l2 ? "l2" : "euclidean";
  auto access = c.input_access == InputAccess::known ? "known" : "simulator";
  auto innovation = c.enkf.innovation == Innovation::averaged ? "averaged" : "literal";
  auto output = c.enkf.output == OutputForm::state ? "state" : "scalar_cost";
  std::string kinds;
  for (std::size_t i = 0; i < c.grid.kinds.size(); ++i) {
    if (i) kinds += ',';
    kinds += to_string(c.grid.kinds[i]);
  }

  std::ostringstream o;
  o << "[experiment]\n"
    << "pde = " << to_string(c.pde) << '\n'
    << "model = " << to_string(c.model) << '\n'
    << "seed = " << c.seed << '\n'
    << "trials = " << c.trials << '\n'
    << "horizon = " << format_double(c.horizon) << '\n'
    << "dt = " << format_double(c.dt) << '\n'
    << "\n[pde]\n"
    << "nu = " << format_double(c.nu) << '\n'
    << "points = " << c.points << '\n'
    << "length = " << format_double(c.length) << '\n'
    << "controls = " << c.controls << '\n'
    << "boundary = " << boundary << '\n'
    << "\n[weights]\n"
    << "q = " << format_double(c.q) << '\n'
    << "r = " << format_double(c.r_weight) << '\n'
    << "g = " << format_double(c.g) << '\n'
    << "\n[robust]\n"
    << "lambda = " << format_double(c.lambda) << '\n'
    << "r = " << format_double(c.r_reg) << '\n'
    << "metric = " << metric << '\n'
    << "input_access = " << access << '\n'
    << "\n[enkf]\n"
    << "particles = " << c.enkf.particles << '\n'
    << "horizon = " << format_double(c.enkf.horizon) << '\n'
    << "dt = " << format_double(c.enkf.dt) << '\n'
    << "terminal_scale = " << format_double(c.enkf.terminal_scale) << '\n'
    << "innovation = " << innovation << '\n'
    << "output = " << output << '\n'
    << "scale = " << format_double(c.enkf.scale) << '\n'
    << "scale_tolerance = " << format_double(c.enkf.scale_tolerance) << '\n'
    << "\n[dmdc]\n"
    << "rank = " << c.dmdc.rank << '\n'
    << "trajectories = " << c.dmdc.trajectories << '\n'
    << "steps = " << c.dmdc.steps << '\n'
    << "amplitude = " << format_double(c.dmdc.amplitude) << '\n'
    << "hold = " << c.dmdc.hold << '\n'
    << "\n[disturbance]\n"
    << "kind = " << to_string(c.disturbance.kind) << '\n'
    << "d0 = " << format_double(c.disturbance.d0) << '\n'
    << "profile = " << join(c.disturbance.profile) << '\n'
    << "\n[grid]\n"
    << "d0 = " << join(c.grid.d0_list) << '\n'
    << "lambda = " << join(c.grid.lambda_list) << '\n'
    << "kinds = " << kinds << '\n';
  return o.str();
}

}  // namespace robust_enkf
