#include "chaoslab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace chaoslab {

namespace {

using Schema = std::vector<std::pair<std::string, std::string>>;

const Schema kModelKeys = {{"dynamics", "overdamped"}, {"geometry", "torus"}, {"period", "6.283185307179586"},
                           {"kappa", "0"},             {"beta", "auto"},      {"a", "0"},
                           {"potential", "cosine"},    {"potential_params", "1"}};
const Schema kPlanKeys = {{"N", "64"},          {"R", "100"},           {"dt", "0.01"},
                          {"T", "1"},           {"record_times", "auto"}, {"seed", "1"},
                          {"initial_law", "auto"}, {"law_p1", "0"},      {"law_p2", "1"},
                          {"integrator", "auto"}, {"budget_seconds", "21600"}};
const Schema kPdeKeys = {{"G", "auto"}, {"box", "auto"}, {"dt_pde", "0.002"}, {"G_v", "auto"}, {"v_max", "10"}};

const std::map<std::string, Schema>& experiment_schemas() {
  static const std::map<std::string, Schema> s = {
      {"simulate", {{"observables", "cos1"}}},
      {"scaling",
       {{"observable", "cos1"}, {"m", "2"}, {"Ns", "64,128,256"}, {"Rs", "auto"}, {"slope_lo", "auto"},
        {"slope_hi", "auto"}, {"uniformity_max", "auto"}}},
      {"clt",
       {{"observable", "cos1"}, {"Ns", "512"}, {"times", "1"}, {"variance_tol", "0.05"}, {"ks_max", "0.02"},
        {"bootstrap", "200"}}},
      {"weak-error",
       {{"observable", "cos1"}, {"Ns", "32,64,128,256,512"}, {"Rs", "auto"}, {"t", "2"}, {"pde_G", "64"},
        {"pde_dt", "0.002"}, {"cv_modes", "8"}, {"control_variate", "true"}, {"mollifier_width", "3"},
        {"slope_lo", "-1.15"}, {"slope_hi", "-0.85"}, {"c1_tol", "0.1"}, {"romberg_max", "-1.6"}}},
      {"concentration",
       {{"observable", "cos1"}, {"Ns", "128,512"}, {"times", "0,2,10"}, {"z", "0.5,1,1.5,2,2.5,3,3.5"},
        {"min_count", "20"}, {"stability_max", "3"}}},
      {"ergodic-decay",
       {{"T", "10"}, {"samples", "64"}, {"sobolev_k", "1"}, {"hermite_sigma", "1"},
        {"background", "auto"}, {"tolerance", "auto"}}},
      {"enumerate-lgraphs", {{"k", "2"}, {"m", "1"}, {"connected", "false"}}},
      {"oracle-check", {{"q", "3"}, {"max_N", "6"}, {"max_m", "4"}, {"random_mixtures", "3"}, {"tol", "1e-12"}}},
      {"glauber-check",
       {{"observable", "cos1"}, {"N", "6"}, {"outer", "400"}, {"K", "100"}, {"pde_G", "16"}, {"t", "0.5"},
        {"pushed_N", "4"}, {"pushed_outer", "150"}}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& source, const std::string& key, const IniValue& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v.text, &pos);
    if (pos != v.text.size() || !std::isfinite(d)) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(source, v.line, "key '" + key + "': expected a number, got '" + v.text + "'");
  }
}

long long to_integer(const std::string& source, const std::string& key, const IniValue& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v.text, &pos);
    if (pos != v.text.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(source, v.line, "key '" + key + "': expected an integer, got '" + v.text + "'");
  }
}

std::vector<double> to_doubles(const std::string& source, const std::string& key, const IniValue& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v.text)) out.push_back(to_double(source, key, {item, v.line}));
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

IniSection with_defaults(const std::string& source, const std::string& name, const IniSection& given,
                         const Schema& schema) {
  IniSection out;
  for (const auto& [k, d] : schema) out[k] = {d, 0};
  for (const auto& [k, v] : given) {
    if (!out.count(k)) throw ConfigError(source, v.line, "unknown key '" + k + "' in [" + name + "]");
    out[k] = v;
  }
  return out;
}

template <class F>
auto guarded(const std::string& source, const IniValue& v, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(source, v.line, e.what());
  }
}

double law_sd(const InitialLaw& law) {
  switch (law.kind) {
    case InitialLaw::Kind::GaussianLine: return std::sqrt(law.p2);
    case InitialLaw::Kind::CompactUniform: return 0.5 * (law.p2 - law.p1);
    default: return 1.0;
  }
}

}  // namespace

std::map<std::string, IniSection> parse_ini(const std::string& text, const std::string& source) {
  std::map<std::string, IniSection> out;
  std::stringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto c = raw.find_first_of("#;");
    const std::string s = trim(c == std::string::npos ? raw : raw.substr(0, c));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(source, line, "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (out.count(section)) throw ConfigError(source, line, "duplicate section [" + section + "]");
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value', got '" + s + "'");
    if (section.empty()) throw ConfigError(source, line, "key outside of any section");
    const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, line, "empty key");
    if (out[section].count(key)) throw ConfigError(source, line, "duplicate key '" + key + "'");
    out[section][key] = {value, line};
  }
  return out;
}

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"simulate",      "scaling",       "clt",
                                                 "weak-error",    "concentration", "ergodic-decay",
                                                 "enumerate-lgraphs", "oracle-check", "glauber-check"};
  return names;
}

std::string RunConfig::get(const std::string& key) const {
  auto it = experiment.find(key);
  if (it == experiment.end()) throw std::logic_error("no experiment key '" + key + "' for " + subcommand);
  return it->second.text;
}
double RunConfig::get_double(const std::string& key) const { return to_double(source, key, experiment.at(key)); }
int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(to_integer(source, key, experiment.at(key)));
}
bool RunConfig::get_bool(const std::string& key) const {
  const IniValue& v = experiment.at(key);
  if (v.text == "true" || v.text == "1") return true;
  if (v.text == "false" || v.text == "0") return false;
  throw ConfigError(source, v.line, "key '" + key + "': expected true or false, got '" + v.text + "'");
}
std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  return to_doubles(source, key, experiment.at(key));
}
std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  const IniValue& v = experiment.at(key);
  for (const auto& item : split_list(v.text)) out.push_back(static_cast<int>(to_integer(source, key, {item, v.line})));
  return out;
}

RunConfig load_config(const std::string& text, const std::string& source, const std::string& subcommand) {
  const auto& schemas = experiment_schemas();
  if (!schemas.count(subcommand)) throw ConfigError(source, 0, "unknown subcommand '" + subcommand + "'");
  auto doc = parse_ini(text, source);
  for (const auto& [name, sec] : doc)
    if (name != "model" && name != "plan" && name != "pde" && name != "experiment") {
      const int line = sec.empty() ? 0 : sec.begin()->second.line;
      throw ConfigError(source, line, "unknown section [" + name + "]");
    }
  RunConfig cfg;
  cfg.source = source;
  cfg.subcommand = subcommand;
  const IniSection m = with_defaults(source, "model", doc["model"], kModelKeys);
  const IniSection p = with_defaults(source, "plan", doc["plan"], kPlanKeys);
  const IniSection g = with_defaults(source, "pde", doc["pde"], kPdeKeys);
  cfg.experiment = with_defaults(source, "experiment", doc["experiment"], schemas.at(subcommand));

  // model
  const Dynamics dyn = guarded(source, m.at("dynamics"), [&] { return parse_dynamics(m.at("dynamics").text); });
  const Geometry geo = guarded(source, m.at("geometry"), [&] { return parse_geometry(m.at("geometry").text); });
  const double period = to_double(source, "period", m.at("period"));
  const double wper = geo == Geometry::Torus ? period : 0.0;
  const std::vector<double> wp = to_doubles(source, "potential_params", m.at("potential_params"));
  const PotentialSpec w = guarded(source, m.at("potential"), [&] {
    switch (parse_family(m.at("potential").text)) {
      case PotentialSpec::Family::CosineSum: return PotentialSpec::cosine_sum(wp, wper);
      case PotentialSpec::Family::GaussianBump:
        if (wp.size() != 2) throw std::invalid_argument("gaussian potential needs params 'amplitude, width'");
        return PotentialSpec::gaussian_bump(wp[0], wp[1], wper);
      case PotentialSpec::Family::Tabulated: return PotentialSpec::tabulated(wp, wper);
    }
    throw std::invalid_argument("unreachable");
  });
  const double beta = m.at("beta").text == "auto" ? -1.0 : to_double(source, "beta", m.at("beta"));
  cfg.model = guarded(source, m.at("kappa"), [&] {
    return make_model(dyn, geo, to_double(source, "kappa", m.at("kappa")), to_double(source, "a", m.at("a")), w,
                      period, beta);
  });
  guarded(source, m.at("dynamics"), [&] {
    cfg.model.validate();
    return 0;
  });

  // plan
  ReplicaPlan& plan = cfg.plan;
  plan.N = static_cast<int>(to_integer(source, "N", p.at("N")));
  plan.R = static_cast<int>(to_integer(source, "R", p.at("R")));
  plan.dt = to_double(source, "dt", p.at("dt"));
  plan.T = to_double(source, "T", p.at("T"));
  plan.record_times =
      p.at("record_times").text == "auto" ? std::vector<double>{0.0, plan.T} : to_doubles(source, "record_times", p.at("record_times"));
  plan.master_seed = static_cast<std::uint64_t>(to_integer(source, "seed", p.at("seed")));
  const std::string law = p.at("initial_law").text == "auto"
                              ? (geo == Geometry::Torus ? "uniform_torus" : "gaussian_line")
                              : p.at("initial_law").text;
  plan.initial_law.kind = guarded(source, p.at("initial_law"), [&] { return parse_initial_law(law); });
  plan.initial_law.p1 = to_double(source, "law_p1", p.at("law_p1"));
  plan.initial_law.p2 = to_double(source, "law_p2", p.at("law_p2"));
  const std::string integ = p.at("integrator").text;
  if (integ == "auto")
    plan.integrator = dyn == Dynamics::Langevin ? Integrator::BAOAB : Integrator::EulerMaruyama;
  else if (integ == "em")
    plan.integrator = Integrator::EulerMaruyama;
  else if (integ == "baoab")
    plan.integrator = Integrator::BAOAB;
  else
    throw ConfigError(source, p.at("integrator").line, "integrator must be em or baoab");
  cfg.budget_seconds = to_double(source, "budget_seconds", p.at("budget_seconds"));
  guarded(source, p.at("N"), [&] {
    plan.initial_law.validate(cfg.model);
    plan.finalize();
    return 0;
  });

  // pde
  GridSpec& grid = cfg.pde;
  const int G = g.at("G").text == "auto" ? (geo == Geometry::Torus ? 64 : 256)
                                         : static_cast<int>(to_integer(source, "G", g.at("G")));
  const double dtp = to_double(source, "dt_pde", g.at("dt_pde"));
  if (geo == Geometry::Torus) {
    grid = GridSpec::torus(period, G, dtp);
  } else {
    double box;
    if (g.at("box").text == "auto") {
      // stationary OU spread when there is a confinement, else the initial spread
      double sd = law_sd(plan.initial_law);
      if (cfg.model.a > 0.0) sd = std::max(sd, 1.0 / std::sqrt(cfg.model.a * cfg.model.beta));
      box = line_box_halfwidth(sd) + std::abs(plan.initial_law.p1);
    } else {
      box = to_double(source, "box", g.at("box"));
    }
    grid = GridSpec::line(box, G, dtp);
  }
  const int Gv = g.at("G_v").text == "auto" ? (dyn == Dynamics::Langevin ? 64 : 0)
                                             : static_cast<int>(to_integer(source, "G_v", g.at("G_v")));
  if (Gv > 0) grid = grid.with_velocity(Gv, to_double(source, "v_max", g.at("v_max")));
  guarded(source, g.at("G"), [&] {
    grid.validate(cfg.model);
    return 0;
  });

  // experiment defaults that depend on other keys
  auto& e = cfg.experiment;
  if (subcommand == "scaling") {
    const int mm = cfg.get_int("m");
    if (mm < 2 || mm > 4) throw ConfigError(source, e["m"].line, "m must be 2, 3 or 4");
    const double half = mm == 2 ? 0.1 : 0.125 * (mm - 1);
    if (e["slope_lo"].text == "auto") e["slope_lo"].text = fmt(1.0 - mm - half);
    if (e["slope_hi"].text == "auto") e["slope_hi"].text = fmt(1.0 - mm + half);
    if (e["uniformity_max"].text == "auto") e["uniformity_max"].text = mm == 2 ? "3" : "4";
  }
  if (e.count("Rs") && e["Rs"].text == "auto") {
    std::string rs;
    for (std::size_t i = 0; i < cfg.get_ints("Ns").size(); ++i) rs += (i ? ", " : "") + std::to_string(plan.R);
    e["Rs"].text = rs;
  }
  if (subcommand == "ergodic-decay") {
    if (e["background"].text == "auto") e["background"].text = cfg.model.gibbs_contractive() ? "gibbs" : "initial";
    if (e["tolerance"].text == "auto") e["tolerance"].text = cfg.model.kappa == 0.0 ? "0.05" : "0.2";
  }
  return cfg;
}

std::string echo_config(const RunConfig& cfg) {
  std::ostringstream o;
  const ModelSpec& m = cfg.model;
  o << "# resolved configuration for " << cfg.subcommand << "\n[model]\n";
  o << "dynamics = " << to_string(m.dynamics) << "\n";
  o << "geometry = " << to_string(m.geometry) << "\n";
  o << "period = " << fmt(m.period) << "\n";
  o << "kappa = " << fmt(m.kappa) << "\n";
  o << "beta = " << fmt(m.beta) << "\n";
  o << "a = " << fmt(m.a) << "\n";
  o << "potential = " << m.interaction.family_name() << "\n";
  o << "potential_params = " << join(m.interaction.params) << "\n";
  const ReplicaPlan& p = cfg.plan;
  o << "\n[plan]\n";
  o << "N = " << p.N << "\nR = " << p.R << "\ndt = " << fmt(p.dt) << "\nT = " << fmt(p.T) << "\n";
  o << "record_times = " << join(p.record_times) << "\n";
  o << "seed = " << p.master_seed << "\n";
  o << "initial_law = " << p.initial_law.name() << "\n";
  o << "law_p1 = " << fmt(p.initial_law.p1) << "\nlaw_p2 = " << fmt(p.initial_law.p2) << "\n";
  o << "integrator = " << (p.integrator == Integrator::BAOAB ? "baoab" : "em") << "\n";
  o << "budget_seconds = " << fmt(cfg.budget_seconds) << "\n";
  const GridSpec& g = cfg.pde;
  o << "\n[pde]\n";
  o << "G = " << g.G << "\n";
  o << "box = " << (g.geometry == Geometry::Line ? fmt(g.x_max) : "auto") << "\n";
  o << "dt_pde = " << fmt(g.dt_pde) << "\nG_v = " << g.G_v << "\nv_max = " << fmt(g.kinetic() ? g.v_max : 10.0)
    << "\n";
  o << "\n[experiment]\n";
  for (const auto& [k, d] : experiment_schemas().at(cfg.subcommand)) {
    (void)d;
    o << k << " = " << cfg.experiment.at(k).text << "\n";
  }
  return o.str();
}

Observable parse_observable(const std::string& name, const ModelSpec& spec) {
  if (const auto plus = name.find('+'); plus != std::string::npos) {
    const Observable a = parse_observable(name.substr(0, plus), spec);
    const Observable b = parse_observable(name.substr(plus + 1), spec);
    return {name, [fa = a.f, fb = b.f](double x, double v) { return fa(x, v) + fb(x, v); }, a.sup_bound + b.sup_bound};
  }
  const double L = spec.geometry == Geometry::Torus ? spec.period : 2.0 * std::numbers::pi;
  auto mode = [&](std::size_t skip) {
    const std::string digits = name.substr(skip);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit))
      throw std::invalid_argument("bad observable '" + name + "'");
    return std::stoi(digits);
  };
  if (name.rfind("cos", 0) == 0) return cos_observable(mode(3), L);
  if (name.rfind("sin", 0) == 0) {
    const double k = 2.0 * std::numbers::pi * mode(3) / L;
    return {name, [k](double x, double) { return std::sin(k * x); }, 1.0};
  }
  if (name.rfind("x^", 0) == 0) return position_power(mode(2));
  if (name == "x") return position_power(1);
  if (name == "tanh") return {name, [](double x, double) { return std::tanh(x); }, 1.0};
  throw std::invalid_argument("unknown observable '" + name + "' (cos<n>|sin<n>|x|x^<p>|tanh, joined by '+')");
}

double particle_cost_seconds(double particle_steps) { return 6e-8 * particle_steps; }

}  // namespace chaoslab
