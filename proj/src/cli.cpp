#include "chaoslab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "chaoslab/exchangeable.hpp"
#include "chaoslab/fluctuations.hpp"
#include "chaoslab/glauber.hpp"
#include "chaoslab/lgraph.hpp"
#include "chaoslab/meanfield.hpp"

namespace chaoslab {

namespace {

using json = nlohmann::ordered_json;

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", x);
  return buf;
}

class Table {
 public:
  explicit Table(std::vector<std::string> cols) : width_(cols.size()) { line(cols); }
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    line(cells);
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }
};

json est(double v, double se) { return {{"value", v}, {"stderr", se}}; }
json est(const Estimate& e) { return est(e.value, e.stderr); }
json exact(double v) { return est(v, 0.0); }

struct Outcome {
  std::string verdict = "complete";  // pass | complete | fail | inconclusive
  json summary = json::object();
  std::string data;
  std::string plot;
};

class Refusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check_budget(const RunConfig& cfg, double particle_steps, int threads) {
  const double est = particle_cost_seconds(particle_steps) / std::max(1, threads);
  if (est > cfg.budget_seconds) {
    std::ostringstream o;
    o << "estimated run time " << est << " s exceeds budget_seconds = " << cfg.budget_seconds;
    throw Refusal(o.str());
  }
}

double steps_of(const ReplicaPlan& p) { return std::ceil(p.T / p.dt - 1e-9); }

double sup_over_domain(const Observable& phi, const RunConfig& cfg, double& lo, double& hi) {
  if (cfg.model.geometry == Geometry::Torus) {
    lo = 0.0;
    hi = cfg.model.period;
  } else {
    lo = cfg.pde.x_min;
    hi = cfg.pde.x_max;
  }
  double s = 0.0;
  for (int i = 0; i <= 4096; ++i) s = std::max(s, std::abs(phi.f(lo + (hi - lo) * i / 4096.0, 0.0)));
  return s;
}

std::string verdict_of(bool pass, bool conclusive) { return !conclusive ? "inconclusive" : pass ? "pass" : "fail"; }

// ---- subcommands ----

Outcome cmd_simulate(const RunConfig& cfg, int threads) {
  std::vector<Observable> obs;
  std::istringstream names(cfg.get("observables"));
  for (std::string n; std::getline(names, n, ',');) {
    n.erase(std::remove(n.begin(), n.end(), ' '), n.end());
    if (!n.empty()) obs.push_back(parse_observable(n, cfg.model));
  }
  ReplicaPlan plan = cfg.plan;
  plan.threads = threads;
  check_budget(cfg, double(plan.R) * plan.N * steps_of(plan), threads);
  const ObservableSeries s = simulate_ensemble(plan, cfg.model, obs);
  std::vector<std::string> cols{"replica", "t"};
  for (const auto& o : obs) cols.push_back(o.name);
  cols.push_back("q2");
  Table data(cols);
  for (int r = 0; r < s.R; ++r)
    for (std::size_t t = 0; t < s.times.size(); ++t) {
      std::vector<std::string> row{std::to_string(r), num(s.times[t])};
      for (std::size_t o = 0; o < obs.size(); ++o) row.push_back(num(s.value(r, t, o)));
      row.push_back(num(s.q2[r * s.times.size() + t]));
      data.row(row);
    }
  Outcome out;
  Table plot({"t", "observable", "mean", "stderr"});
  json series = json::array();
  for (std::size_t t = 0; t < s.times.size(); ++t)
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const Eigen::VectorXd c = s.column(static_cast<int>(t), static_cast<int>(o));
      const double m = c.mean(), se = std::sqrt((c.array() - m).square().sum() / (c.size() - 1) / c.size());
      series.push_back({{"t", s.times[t]}, {"observable", obs[o].name}, {"mean", est(m, se)}});
      plot.row({num(s.times[t]), obs[o].name, num(m), num(se)});
    }
  out.summary["series"] = series;
  out.summary["diverged_replicas"] = s.diverged_count;
  out.data = data.str();
  out.plot = plot.str();
  return out;
}

Outcome cmd_scaling(const RunConfig& cfg, int threads) {
  const int m = cfg.get_int("m");
  const std::vector<int> Ns = cfg.get_ints("Ns"), Rs = cfg.get_ints("Rs");
  if (Ns.size() != Rs.size()) throw std::invalid_argument("Ns and Rs differ in length");
  double work = 0.0;
  for (std::size_t i = 0; i < Ns.size(); ++i) work += double(Ns[i]) * Rs[i] * steps_of(cfg.plan);
  check_budget(cfg, work, threads);
  const Observable phi = parse_observable(cfg.get("observable"), cfg.model);
  const std::vector<Observable> obs = power_observables(phi, m);
  std::vector<ScalingPoint> all;
  Table data({"N", "R", "t", "pairing", "stderr"});
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    ReplicaPlan p = cfg.plan;
    p.N = Ns[i];
    p.R = Rs[i];
    p.threads = threads;
    p.master_seed = cfg.plan.master_seed + 104729ULL * static_cast<std::uint64_t>(p.N);
    const ObservableSeries s = simulate_ensemble(p, cfg.model, obs);
    for (const auto& pt : estimate_pairings(s, p.N, m)) {
      data.row({std::to_string(p.N), std::to_string(p.R), num(pt.t), num(pt.pairing.value), num(pt.pairing.stderr)});
      all.push_back(pt);
    }
  }
  const ScalingReport rep = scaling_report(phi.name, m, all);
  Outcome out;
  Table plot({"N", "t", "scaled_pairing", "scaled_stderr"});
  for (const auto& p : all) {
    const double s = std::pow(p.N, m - 1);
    plot.row({std::to_string(p.N), num(p.t), num(s * p.pairing.value), num(s * p.pairing.stderr)});
  }
  const double lo = cfg.get_double("slope_lo"), hi = cfg.get_double("slope_hi");
  const double umax = cfg.get_double("uniformity_max");
  double worst = 0.0;
  for (double u : rep.uniformity) worst = std::max(worst, u);
  out.summary["observable"] = phi.name;
  out.summary["m"] = m;
  out.summary["slope"] = {{"value", rep.slope.slope},
                          {"stderr", rep.slope.stderr},
                          {"ci95", rep.slope.ci},
                          {"points_used", rep.slope.used},
                          {"target", {lo, hi}}};
  json uni = json::array();
  for (std::size_t i = 0; i < rep.Ns.size(); ++i)
    uni.push_back({{"N", rep.Ns[i]}, {"max_over_median", exact(rep.uniformity[i])}});
  out.summary["uniformity"] = uni;
  out.summary["uniformity_max_allowed"] = umax;
  const bool slope_ok = rep.slope.slope >= lo && rep.slope.slope <= hi;
  out.summary["slope_in_target"] = slope_ok;
  out.summary["uniformity_ok"] = worst <= umax;
  out.verdict = verdict_of(slope_ok && worst <= umax, rep.slope.conclusive);
  out.data = data.str();
  out.plot = plot.str();
  return out;
}

Outcome cmd_clt(const RunConfig& cfg, int threads) {
  const std::vector<int> Ns = cfg.get_ints("Ns");
  std::vector<double> times = cfg.get_doubles("times");
  const double Tmax = *std::max_element(times.begin(), times.end());
  double work = 0.0;
  for (int N : Ns) work += double(N) * cfg.plan.R * std::ceil(Tmax / cfg.plan.dt);
  check_budget(cfg, work, threads);
  const Observable phi = parse_observable(cfg.get("observable"), cfg.model);
  const GridDensity mu0 = cfg.plan.initial_law.density(cfg.model, cfg.pde);
  const MeanFieldPath path = solve_path(mu0, cfg.model, Tmax);
  const Eigen::VectorXd g = sample_on_grid(phi, cfg.pde);
  const double tol = cfg.get_double("variance_tol"), ks_max = cfg.get_double("ks_max");

  Table data({"N", "t", "mean_field", "sigma2", "sigma2_initial", "sigma2_noise", "n_var", "n_var_stderr", "ks",
              "ks_lo", "ks_hi", "ks_fitted"});
  Table plot({"N", "t", "scaled_fluctuation"});
  json rows = json::array();
  std::map<double, std::vector<CltReport>> by_t;
  std::map<double, CltVariance> predicted;
  for (int N : Ns) {
    ReplicaPlan p = cfg.plan;
    p.N = N;
    p.T = Tmax;
    p.record_times = times;
    p.threads = threads;
    p.master_seed = cfg.plan.master_seed + 7727ULL * static_cast<std::uint64_t>(N);
    p.finalize();
    const ObservableSeries s = simulate_ensemble(p, cfg.model, {phi});
    for (std::size_t ti = 0; ti < p.record_times.size(); ++ti) {
      const double t = p.record_times[ti];
      const double mf = path.state(path.index(t)).dot(g) * cfg.pde.cell();
      const Eigen::VectorXd vals = s.column(static_cast<int>(ti), 0);
      if (!predicted.count(t)) predicted[t] = clt_variance(g, path, t);
      const CltReport rep = clt_report(vals, N, t, mf, predicted[t], p.master_seed + ti);
      by_t[t].push_back(rep);
      data.row({std::to_string(N), num(t), num(mf), num(rep.predicted.sigma2), num(rep.predicted.sigma_C2),
                num(rep.predicted.sigma_D2), num(rep.n_var.value), num(rep.n_var.stderr), num(rep.ks),
                num(rep.ks_lo), num(rep.ks_hi), num(rep.ks_fitted)});
      for (Eigen::Index r = 0; r < vals.size(); ++r)
        plot.row({std::to_string(N), num(t), num(std::sqrt(double(N)) * (vals(r) - mf))});
      rows.push_back({{"N", N},
                      {"t", t},
                      {"sigma2_predicted", exact(rep.predicted.sigma2)},
                      {"n_var", est(rep.n_var)},
                      {"ks", {{"value", rep.ks}, {"ci95", {rep.ks_lo, rep.ks_hi}}}},
                      {"ks_fitted_gaussian", exact(rep.ks_fitted)}});
    }
  }
  bool var_ok = true, ks_ok = true, mono_ok = true;
  json checks = json::array();
  for (const auto& [t, reps] : by_t) {
    const CltReport& top = reps.back();
    const double diff = std::abs(top.n_var.value - top.predicted.sigma2);
    const double allowed = tol * top.predicted.sigma2 + 1.96 * top.n_var.stderr;
    var_ok = var_ok && diff <= allowed;
    ks_ok = ks_ok && top.ks < ks_max;
    bool mono = true;
    for (std::size_t i = 1; i < reps.size(); ++i) {
      const double h1 = 0.5 * (reps[i - 1].ks_hi - reps[i - 1].ks_lo), h2 = 0.5 * (reps[i].ks_hi - reps[i].ks_lo);
      mono = mono && reps[i].ks <= reps[i - 1].ks + std::hypot(h1, h2);
    }
    mono_ok = mono_ok && mono;
    checks.push_back({{"t", t},
                      {"N", top.N},
                      {"variance_gap", est(diff, top.n_var.stderr)},
                      {"variance_allowed", allowed},
                      {"ks", exact(top.ks)},
                      {"ks_nonincreasing_in_N", mono}});
  }
  Outcome out;
  out.summary["observable"] = phi.name;
  out.summary["rows"] = rows;
  out.summary["checks"] = checks;
  out.summary["variance_ok"] = var_ok;
  out.summary["ks_ok"] = ks_ok;
  out.summary["ks_monotone_ok"] = mono_ok;
  out.verdict = verdict_of(var_ok && ks_ok && mono_ok, true);
  out.data = data.str();
  out.plot = plot.str();
  return out;
}

Outcome cmd_weak_error(const RunConfig& cfg, int threads) {
  WeakErrorConfig w;
  w.Ns = cfg.get_ints("Ns");
  w.Rs = cfg.get_ints("Rs");
  w.t = cfg.get_double("t");
  w.pde_G = cfg.get_int("pde_G");
  w.pde_dt = cfg.get_double("pde_dt");
  w.cv_modes = cfg.get_int("cv_modes");
  w.control_variate = cfg.get_bool("control_variate");
  double work = 0.0;
  for (std::size_t i = 0; i < w.Ns.size() && i < w.Rs.size(); ++i)
    work += double(w.Ns[i]) * w.Rs[i] * std::ceil(w.t / cfg.plan.dt);
  check_budget(cfg, work, threads);
  const Observable phi = parse_observable(cfg.get("observable"), cfg.model);
  ReplicaPlan base = cfg.plan;
  base.threads = threads;
  const WeakErrorFit fit = weak_error_fit(phi, cfg.model, base, w);

  const GridSpec grid = GridSpec::torus(cfg.model.period, w.pde_G, w.pde_dt);
  const MeanFieldPath path = solve_path(cfg.plan.initial_law.density(cfg.model, grid), cfg.model, w.t);
  const WeakErrorPrediction pred =
      weak_error_predict(sample_on_grid(phi, grid), path, w.t, cfg.get_double("mollifier_width"));

  Table data({"N", "R", "mean", "mean_stderr", "reference", "bias", "bias_stderr", "variance_reduction"});
  Table plot({"N", "N_times_bias", "N_times_bias_stderr"});
  json pts = json::array();
  for (const auto& p : fit.points) {
    data.row({std::to_string(p.N), std::to_string(p.R), num(p.mean.value), num(p.mean.stderr), num(p.reference),
              num(p.bias.value), num(p.bias.stderr), num(p.variance_reduction)});
    plot.row({std::to_string(p.N), num(p.N * p.bias.value), num(p.N * p.bias.stderr)});
    pts.push_back({{"N", p.N}, {"bias", est(p.bias)}, {"variance_reduction", exact(p.variance_reduction)}});
  }
  const double lo = cfg.get_double("slope_lo"), hi = cfg.get_double("slope_hi");
  const double c1_tol = cfg.get_double("c1_tol"), rmax = cfg.get_double("romberg_max");
  const bool slope_ok = fit.slope.slope >= lo && fit.slope.slope <= hi;
  const double c1_allowed = c1_tol * std::abs(pred.c1) + 1.96 * fit.c1.stderr + pred.uncertainty;
  const bool c1_ok = std::abs(fit.c1.value - pred.c1) <= c1_allowed;
  const bool romberg_ok = fit.romberg.slope <= rmax;
  Outcome out;
  out.summary["observable"] = phi.name;
  out.summary["t"] = w.t;
  out.summary["points"] = pts;
  out.summary["bias_slope"] = {{"value", fit.slope.slope}, {"stderr", fit.slope.stderr}, {"ci95", fit.slope.ci},
                               {"points_used", fit.slope.used}, {"target", {lo, hi}}};
  out.summary["c1_fitted"] = est(fit.c1);
  out.summary["c2_fitted"] = est(fit.c2);
  out.summary["c1_predicted"] = {{"value", pred.c1},
                                 {"stderr", pred.uncertainty},
                                 {"initial_part", pred.c1_initial},
                                 {"noise_part", pred.c1_ito},
                                 {"coarse", pred.c1_coarse},
                                 {"fine", pred.c1_fine}};
  out.summary["c1_allowed_gap"] = c1_allowed;
  out.summary["romberg_slope"] = {{"value", fit.romberg.slope}, {"stderr", fit.romberg.stderr},
                                  {"ci95", fit.romberg.ci}, {"points_used", fit.romberg.used}, {"max", rmax}};
  out.summary["slope_ok"] = slope_ok;
  out.summary["c1_ok"] = c1_ok;
  out.summary["romberg_ok"] = romberg_ok;
  out.summary["bias_detected"] = fit.bias_detected;
  out.verdict = verdict_of(slope_ok && c1_ok && romberg_ok, fit.slope.conclusive && fit.romberg.conclusive);
  out.data = data.str();
  out.plot = plot.str();
  return out;
}

Outcome cmd_concentration(const RunConfig& cfg, int threads) {
  const std::vector<int> Ns = cfg.get_ints("Ns");
  const std::vector<double> times = cfg.get_doubles("times"), z = cfg.get_doubles("z");
  const double Tmax = *std::max_element(times.begin(), times.end());
  double work = 0.0;
  for (int N : Ns) work += double(N) * cfg.plan.R * std::ceil(Tmax / cfg.plan.dt);
  check_budget(cfg, work, threads);
  const Observable phi = parse_observable(cfg.get("observable"), cfg.model);
  double lo, hi;
  const double sup = sup_over_domain(phi, cfg, lo, hi);
  const double norm = w3_norm([&](double x) { return phi.f(x, 0.0); }, lo, hi);
  std::vector<TailPoint> pts;
  for (int N : Ns) {
    ReplicaPlan p = cfg.plan;
    p.N = N;
    p.T = Tmax;
    p.record_times = times;
    p.threads = threads;
    p.master_seed = cfg.plan.master_seed + 15485863ULL * static_cast<std::uint64_t>(N);
    p.finalize();
    const ObservableSeries s = simulate_ensemble(p, cfg.model, {phi});
    for (std::size_t ti = 0; ti < p.record_times.size(); ++ti) {
      auto tp = tail_points(s.column(static_cast<int>(ti), 0), N, p.record_times[ti], z, norm, cfg.get_int("min_count"));
      pts.insert(pts.end(), tp.begin(), tp.end());
    }
  }
  const ConcentrationReport rep = concentration_report(pts, norm, sup);
  Table data({"N", "t", "r", "prob", "count", "c_hat"});
  Table plot({"N", "t", "N_r2", "minus_log_prob"});
  for (const auto& p : pts) {
    data.row({std::to_string(p.N), num(p.t), num(p.r), num(p.prob), std::to_string(p.count), num(p.c_hat)});
    plot.row({std::to_string(p.N), num(p.t), num(p.N * p.r * p.r), num(-std::log(p.prob))});
  }
  const bool full = static_cast<int>(rep.Ns.size()) == static_cast<int>(Ns.size()) &&
                    rep.times.size() == times.size() && (rep.c_hat.array() > 0.0).all();
  const double smax = cfg.get_double("stability_max");
  Outcome out;
  out.summary["observable"] = phi.name;
  out.summary["w3_norm"] = exact(rep.w3_norm);
  out.summary["sup_norm"] = exact(rep.sup_norm);
  json cells = json::array();
  for (std::size_t i = 0; i < rep.Ns.size(); ++i)
    for (std::size_t j = 0; j < rep.times.size(); ++j) {
      // binomial error of the tail at the binding point gives the spread of c_hat
      double se = 0.0;
      for (const auto& p : pts)
        if (p.N == rep.Ns[i] && p.t == rep.times[j] && p.c_hat == rep.c_hat(i, j)) {
          const double R = p.count / p.prob;
          const double dlog = std::sqrt((1 - p.prob) / (p.prob * R)) / std::abs(std::log(p.prob));
          se = p.c_hat * dlog;
        }
      cells.push_back({{"N", rep.Ns[i]}, {"t", rep.times[j]}, {"c_hat", est(rep.c_hat(i, j), se)}});
    }
  out.summary["cells"] = cells;
  out.summary["c_overall"] = exact(rep.c_overall);
  out.summary["stability"] = exact(rep.stability);
  out.summary["stability_max"] = smax;
  out.verdict = verdict_of(rep.stability <= smax, full);
  out.data = data.str();
  out.plot = plot.str();
  return out;
}

Eigen::VectorXd decay_perturbation(const GridSpec& grid, const Eigen::VectorXd& mu, double period) {
  const Eigen::VectorXd x = grid.x_nodes();
  const int Gv = grid.kinetic() ? grid.G_v : 1;
  Eigen::VectorXd psi(grid.size());
  const double k0 = 2 * std::numbers::pi / period;
  for (int i = 0; i < grid.G; ++i) {
    const double p = grid.geometry == Geometry::Torus ? std::cos(k0 * x(i)) + 0.5 * std::sin(2 * k0 * x(i))
                                                      : x(i) + 0.3 * x(i) * x(i);
    for (int j = 0; j < Gv; ++j) psi(i * Gv + j) = p;
  }
  const double mean = mu.dot(psi) * grid.cell() / (mu.sum() * grid.cell());
  return (mu.array() * (psi.array() - mean)).matrix();
}

DecayFit run_decay(const ModelSpec& spec, const RunConfig& cfg, const std::string& background) {
  const GridDensity mu = background == "gibbs" ? gibbs_steady_state(spec, cfg.pde)
                                               : cfg.plan.initial_law.density(spec, cfg.pde);
  const MeanFieldPath path = solve_path(mu, spec, cfg.get_double("T"));
  const GridDensity f{decay_perturbation(cfg.pde, mu.values, spec.period), cfg.pde, true};
  return decay_rate(f, path, cfg.get_int("samples"), cfg.get_int("sobolev_k"), cfg.get_double("hermite_sigma"));
}

Outcome cmd_ergodic_decay(const RunConfig& cfg, int) {
  const std::string background = cfg.get("background");
  if (background != "gibbs" && background != "initial")
    throw std::invalid_argument("background must be gibbs or initial");
  const ModelSpec& spec = cfg.model;
  const DecayFit fit = run_decay(spec, cfg, background);
  const double tol = cfg.get_double("tolerance");
  Outcome out;
  Table data({"t", "norm"});
  for (std::size_t i = 0; i < fit.times.size(); ++i) data.row({num(fit.times[i]), num(fit.norms[i])});
  out.summary["norm"] = spec.geometry == Geometry::Torus ? "negative_sobolev" : "hermite";
  out.summary["background"] = background;
  out.summary["rate"] = {{"value", fit.rate}, {"stderr", fit.ci / 1.96}, {"ci95", fit.ci}};
  out.summary["unstable"] = fit.unstable;
  // closed-form rates for the free Overdamped flows (unit noise)
  std::optional<double> reference;
  std::string ref_kind;
  if (spec.dynamics == Dynamics::Overdamped && spec.kappa == 0.0) {
    if (spec.geometry == Geometry::Line && spec.a > 0.0) reference = spec.a, ref_kind = "confinement";
    if (spec.geometry == Geometry::Torus && spec.a == 0.0) {
      const double k0 = 2 * std::numbers::pi / spec.period;
      reference = 0.5 * k0 * k0, ref_kind = "heat";
    }
  } else if (spec.kappa != 0.0) {
    ModelSpec free = spec;
    free.kappa = 0.0;
    const std::string bg = free.gibbs_contractive() ? background : "initial";
    reference = run_decay(free, cfg, bg).rate, ref_kind = "kappa0";
  }
  bool ok = fit.rate > 0.0 && !fit.unstable;
  if (reference) {
    const double rel = std::abs(fit.rate - *reference) / *reference;
    out.summary["reference_rate"] = {{"value", *reference}, {"stderr", 0.0}, {"kind", ref_kind}};
    out.summary["relative_gap"] = exact(rel);
    out.summary["tolerance"] = tol;
    ok = ok && rel <= tol;
  }
  out.verdict = reference ? verdict_of(ok, true) : (ok ? "complete" : "fail");
  out.data = data.str();
  out.plot = data.str();
  return out;
}

Outcome cmd_enumerate(const RunConfig& cfg, int) {
  const int k = cfg.get_int("k"), m = cfg.get_int("m");
  if (k < 1 || m < 0 || k + m > 8) throw Refusal("enumerate-lgraphs: need k >= 1, m >= 0 and k + m <= 8");
  const bool connected = cfg.get_bool("connected");
  const std::vector<GraphClass> cls = connected ? enumerate_connected(k, m) : enumerate(k, m);
  Table data({"index", "graph", "connected", "irreducible", "straight_edges", "round_edges", "orders", "gamma",
              "decomposition_ok"});
  json graphs = json::array();
  bool all_ok = true;
  long long total = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const GraphClass& c = cls[i];
    const bool ok = gamma_decomposition_check(c.graph);
    all_ok = all_ok && ok;
    total += c.gamma;
    data.row({std::to_string(i), "\"" + to_string(c.graph) + "\"", std::to_string(c.connected),
              std::to_string(c.irreducible), std::to_string(c.SE), std::to_string(c.RE), std::to_string(c.N),
              std::to_string(c.gamma), std::to_string(ok)});
    graphs.push_back({{"graph", to_string(c.graph)}, {"gamma", exact(double(c.gamma))}, {"decomposition_ok", ok}});
  }
  Outcome out;
  out.summary["k"] = k;
  out.summary["m"] = m;
  out.summary["connected_only"] = connected;
  out.summary["count"] = exact(double(cls.size()));
  out.summary["gamma_total"] = exact(double(total));
  out.summary["graphs"] = graphs;
  out.verdict = all_ok ? "pass" : "fail";
  out.data = data.str();
  out.plot = data.str();
  return out;
}

Outcome cmd_oracle(const RunConfig& cfg, int) {
  const double tol = cfg.get_double("tol");
  const OracleReport rep = run_exchangeable_oracle(cfg.get_int("q"), cfg.get_int("max_N"), cfg.get_int("max_m"),
                                                   cfg.get_int("random_mixtures"), cfg.plan.master_seed);
  Table data({"metric", "value"});
  data.row({"laws_checked", std::to_string(rep.laws_checked)});
  data.row({"identities_checked", std::to_string(rep.identities_checked)});
  data.row({"max_identity_error", num(rep.max_identity_error)});
  data.row({"max_moment_roundtrip_error", num(rep.max_moment_roundtrip_error)});
  data.row({"max_correlation_roundtrip_error", num(rep.max_correlation_roundtrip_error)});
  data.row({"max_solve_error", num(rep.max_solve_error)});
  Outcome out;
  out.summary["laws_checked"] = exact(rep.laws_checked);
  out.summary["identities_checked"] = exact(rep.identities_checked);
  out.summary["max_identity_error"] = exact(rep.max_identity_error);
  out.summary["max_moment_roundtrip_error"] = exact(rep.max_moment_roundtrip_error);
  out.summary["max_correlation_roundtrip_error"] = exact(rep.max_correlation_roundtrip_error);
  out.summary["max_solve_error"] = exact(rep.max_solve_error);
  out.summary["tolerance"] = tol;
  out.verdict = rep.pass(tol) ? "pass" : "fail";
  out.data = data.str();
  out.plot = data.str();
  return out;
}

Outcome cmd_glauber(const RunConfig& cfg, int threads) {
  const Observable obs = parse_observable(cfg.get("observable"), cfg.model);
  const std::function<double(double)> phi = [f = obs.f](double x) { return f(x, 0.0); };
  double lo, hi;
  const double sup = sup_over_domain(obs, cfg, lo, hi);
  const InitialSampler sampler(cfg.plan.initial_law, cfg.model, cfg.plan.master_seed);
  GlauberPlan plan;
  plan.N = cfg.get_int("N");
  plan.outer = cfg.get_int("outer");
  plan.K = cfg.get_int("K");
  plan.seed = cfg.plan.master_seed;
  plan.threads = threads;
  if (plan.K < 100) throw Refusal("glauber-check: K must be at least 100");

  struct Item {
    std::string name;
    EfronSteinReport rep;
    bool equality;
  };
  std::vector<Item> items;
  items.push_back({"coordinate", efron_stein_check(coordinate_functional(0), sampler, plan), true});
  items.push_back({"linear", efron_stein_check(linear_functional(phi), sampler, plan), true});
  const bool pushed = cfg.model.dynamics == Dynamics::Overdamped && cfg.model.geometry == Geometry::Torus;
  if (pushed) {
    const GridSpec grid = GridSpec::torus(cfg.model.period, cfg.get_int("pde_G"), cfg.pde.dt_pde);
    GlauberPlan p = plan;
    p.N = cfg.get_int("pushed_N");
    p.outer = cfg.get_int("pushed_outer");
    items.push_back({"pde_pushed",
                     efron_stein_check(pde_functional(sample_on_grid(obs, grid), cfg.model, grid, cfg.get_double("t")),
                                       sampler, p),
                     false});
  }
  GlauberPlan lp = plan;
  lp.outer = std::min(plan.outer, 50);
  const LinearGlauberReport lin = linear_glauber_check(phi, sup, sampler, lp);

  Table data({"functional", "variance", "variance_stderr", "energy", "energy_stderr", "ci", "holds", "equal",
              "max_mean_derivative_z"});
  json fs = json::array();
  bool ok = true;
  for (const auto& it : items) {
    double mz = 0.0;
    for (const auto& d : it.rep.mean_derivative)
      if (d.stderr > 0.0) mz = std::max(mz, std::abs(d.value) / d.stderr);
    data.row({it.name, num(it.rep.variance.value), num(it.rep.variance.stderr), num(it.rep.glauber_energy.value),
              num(it.rep.glauber_energy.stderr), num(it.rep.ci), std::to_string(it.rep.holds),
              std::to_string(it.rep.equal), num(mz)});
    // E[D_j X] = 0 is checked at the 4 sigma level, jointly over j
    const bool item_ok = it.rep.holds && (!it.equality || it.rep.equal) && mz < 4.0;
    ok = ok && item_ok;
    fs.push_back({{"functional", it.name},
                  {"variance", est(it.rep.variance)},
                  {"glauber_energy", est(it.rep.glauber_energy)},
                  {"efron_stein_holds", it.rep.holds},
                  {"equality_expected", it.equality},
                  {"equal_within_ci", it.rep.equal},
                  {"max_mean_derivative_z", exact(mz)},
                  {"ok", item_ok}});
  }
  const double frac = lin.checked ? double(lin.within3) / lin.checked : 0.0;
  const bool lin_ok = frac >= 0.99 && lin.max_bound_ratio <= 1.0;
  ok = ok && lin_ok;
  Outcome out;
  out.summary["observable"] = obs.name;
  out.summary["functionals"] = fs;
  out.summary["linear_closed_form"] = {{"checked", lin.checked},
                                       {"fraction_within_3_stderr", exact(frac)},
                                       {"max_z", exact(lin.max_z)},
                                       {"max_bound_ratio", exact(lin.max_bound_ratio)},
                                       {"ok", lin_ok}};
  if (!pushed) out.summary["pde_pushed_skipped"] = "needs a torus Overdamped model";
  out.verdict = ok ? "pass" : "fail";
  out.data = data.str();
  out.plot = data.str();
  return out;
}

std::string default_run_name(const RunConfig& cfg) {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&now));
  return std::string(buf) + "-seed" + std::to_string(cfg.plan.master_seed);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

}  // namespace

int run_subcommand(const std::string& sub, RunConfig cfg, const CliOptions& opt, std::ostream& log) {
  if (opt.seed) cfg.plan.master_seed = *opt.seed;
  if (opt.k) cfg.experiment["k"].text = std::to_string(*opt.k);
  if (opt.m) cfg.experiment["m"].text = std::to_string(*opt.m);
  if (opt.connected) cfg.experiment["connected"].text = "true";
  const int threads = std::max(1, opt.threads);

  Outcome out;
  try {
    if (sub == "simulate") out = cmd_simulate(cfg, threads);
    else if (sub == "scaling") out = cmd_scaling(cfg, threads);
    else if (sub == "clt") out = cmd_clt(cfg, threads);
    else if (sub == "weak-error") out = cmd_weak_error(cfg, threads);
    else if (sub == "concentration") out = cmd_concentration(cfg, threads);
    else if (sub == "ergodic-decay") out = cmd_ergodic_decay(cfg, threads);
    else if (sub == "enumerate-lgraphs") out = cmd_enumerate(cfg, threads);
    else if (sub == "oracle-check") out = cmd_oracle(cfg, threads);
    else if (sub == "glauber-check") out = cmd_glauber(cfg, threads);
    else throw std::invalid_argument("unknown subcommand '" + sub + "'");
  } catch (const Refusal& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return kExitFail;
  }

  const std::string run = opt.run_name.empty() ? default_run_name(cfg) : opt.run_name;
  const std::filesystem::path dir = std::filesystem::path(opt.out_dir) / sub / run;
  std::filesystem::create_directories(dir);
  write_file(dir / "config.ini", echo_config(cfg) + "# threads = " + std::to_string(threads) +
                                     " (outputs do not depend on it)\n");
  write_file(dir / "data.csv", out.data);
  if (opt.plot_data) write_file(dir / "plot.csv", out.plot);
  json summary;
  summary["subcommand"] = sub;
  summary["seed"] = cfg.plan.master_seed;
  summary["verdict"] = out.verdict;
  summary["results"] = out.summary;
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  log << sub << ": " << out.verdict << " (" << dir.string() << ")\n";
  if (out.verdict == "fail") return kExitFail;
  if (out.verdict == "inconclusive") return kExitInconclusive;
  return kExitPass;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"chaoslab: particle ensembles, mean-field PDEs and cumulant diagnostics"};
  app.require_subcommand(1);
  CliOptions opt;
  std::uint64_t seed = 0;
  int k = 0, m = 0;
  for (const std::string& name : subcommand_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "INI configuration file");
    sub->add_option("--seed", seed, "master seed (overrides [plan] seed)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out_dir, "output root");
    sub->add_option("--run", opt.run_name, "run directory name (default: timestamp)");
    sub->add_flag("--plot-data", opt.plot_data, "also write plot.csv");
    if (name == "enumerate-lgraphs") {
      sub->add_option("--k", k, "vertices");
      sub->add_option("--m", m, "edges");
      sub->add_flag("--connected", opt.connected, "connected graphs only");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitFail;
  }
  CLI::App* chosen = app.get_subcommands().front();
  const std::string sub = chosen->get_name();
  if (chosen->count("--seed")) opt.seed = seed;
  if (sub == "enumerate-lgraphs") {
    if (chosen->count("--k")) opt.k = k;
    if (chosen->count("--m")) opt.m = m;
  }
  try {
    std::string text;
    std::string source = "<defaults>";
    if (!opt.config_path.empty()) {
      std::ifstream f(opt.config_path);
      if (!f) throw std::runtime_error("cannot read config " + opt.config_path);
      std::ostringstream s;
      s << f.rdbuf();
      text = s.str();
      source = opt.config_path;
    }
    return run_subcommand(sub, load_config(text, source, sub), opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
}

}  // namespace chaoslab
