#include "chiralmag/sweep.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace chiralmag {

namespace {

template <typename Fn>
void parallel_map(std::size_t n, int threads, Fn&& fn) {
  tbb::global_control limit(tbb::global_control::max_allowed_parallelism,
                            static_cast<std::size_t>(std::max(1, threads)));
  tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) { fn(i); });
}

std::string series_label(const Scenario& s, std::optional<double> value) {
  if (!value) return s.sweep.label;
  const std::string tag = fmt::format("{}={:g}", axis_name(s.sweep.series->axis), *value);
  return s.sweep.label.empty() ? tag : s.sweep.label + " " + tag;
}

bool gain_axis(SweepAxis axis) {
  return axis == SweepAxis::gain_R1 || axis == SweepAxis::gain_ratio;
}

struct Task {
  std::string series;
  PointInputs inputs;
  double axis = 0.0;
};

std::vector<Task> expand(const Scenario& scenario) {
  const PointInputs base = scenario_inputs(scenario);
  std::vector<std::optional<double>> series{std::nullopt};
  if (scenario.sweep.series) {
    series.clear();
    for (double v : scenario.sweep.series->values) series.emplace_back(v);
  }
  std::vector<Task> tasks;
  for (const auto& value : series) {
    PointInputs inputs = value ? apply_axis(base, scenario, scenario.sweep.series->axis, *value) : base;
    const std::string label = series_label(scenario, value);
    for (int i = 0; i < scenario.sweep.points; ++i) {
      const double x = grid_value(scenario.sweep, i);
      tasks.push_back({label, apply_axis(inputs, scenario, scenario.sweep.axis, x), x});
    }
  }
  return tasks;
}

std::string csv_cell(const std::optional<double>& v) {
  return v ? fmt::format("{:.17g}", *v) : std::string();
}

std::string quoted(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

PointInputs scenario_inputs(const Scenario& scenario) {
  return {scenario.params(), scenario.measurement_config(), scenario.gains(), scenario.matrix_options(),
          scenario.riccati_options()};
}

PointInputs apply_axis(PointInputs inputs, const Scenario& scenario, SweepAxis axis, double value) {
  auto& p = inputs.params;
  switch (axis) {
    case SweepAxis::kd:
      p.coupling.kd = value;
      break;
    case SweepAxis::K_tilde:
      p = with_mpa(p, scenario.sweep.mpa, from_mhz(value));
      break;
    case SweepAxis::D:
      p.coupling = WaveguideCoupling::from_chirality(p.coupling.gamma_R, value, p.coupling.kd);
      break;
    case SweepAxis::gain_R1:
      inputs.gains = FeedbackGains::right_only(from_mhz(value), from_mhz(value) * scenario.sweep.ratio);
      break;
    case SweepAxis::gain_ratio: {
      const double g1 = from_mhz(scenario.sweep.gain_R1_MHz);
      inputs.gains = FeedbackGains::right_only(g1, g1 * value);
      break;
    }
  }
  return inputs;
}

double grid_value(const SweepConfig& sweep, int i) {
  if (sweep.points == 1) return sweep.lo.radians;
  return sweep.lo.radians + (sweep.hi.radians - sweep.lo.radians) * i / (sweep.points - 1);
}

SweepRow evaluate_point(const PointInputs& inputs) {
  SweepRow row;
  const auto mats = build_system(inputs.params, inputs.meas, inputs.options);
  const StabilityReport report = check_stability(mats);
  row.stable_unconditional = report.unconditional_stable;
  if (report.unconditional_stable) {
    try {
      const Matrix4d sigma = solve_lyapunov(mats.drift, mats.diffusion);
      row.sigma_unconditional = sigma;
      row.unconditional = measure_set(sigma);
    } catch (const std::exception& err) {
      row.stable_unconditional = false;
      row.note = fmt::format("unconditional: {}", err.what());
    }
  }
  if (!mats.measured()) {
    row.stable_conditional = row.stable_unconditional;
    if (row.sigma_unconditional) row.sigma_conditional = row.sigma_unconditional;
    return row;
  }
  if (!report.conditional_stable) {
    row.note = "conditional: undetectable unstable mode";
    return row;
  }
  try {
    const auto steady = steady_conditional(mats, inputs.riccati);
    row.riccati_time = steady.time;
    row.riccati_residual = steady.residual;
    row.sigma_conditional = steady.sigma;
    row.conditional = measure_set(steady.sigma);
    row.stable_conditional = true;
  } catch (const std::exception& err) {
    row.conditional.reset();
    row.sigma_conditional.reset();
    row.note = fmt::format("conditional: {}", err.what());
  }
  return row;
}

SweepRow evaluate_feedback(const PointInputs& inputs, const Matrix4d& sigma_c) {
  SweepRow row;
  const auto mats = build_system(inputs.params, inputs.meas, inputs.options);
  row.stable_conditional = true;
  row.sigma_conditional = sigma_c;
  try {
    row.conditional = measure_set(sigma_c);
  } catch (const std::exception& err) {
    row.note = fmt::format("conditional: {}", err.what());
    row.stable_conditional = false;
    return row;
  }
  const Matrix4d closed = apply_feedback(mats.drift, inputs.gains);
  row.stable_unconditional = max_real_eigenvalue(closed) < 0.0;
  if (!row.stable_unconditional) {
    row.note = "feedback drift not Hurwitz";
    return row;
  }
  try {
    const auto ens = ensemble_covariance(mats, sigma_c, inputs.gains);
    row.sigma_unconditional = ens.sigma_e;
    row.unconditional = measure_set(ens.sigma_e);
    row.fidelity = fidelity(sigma_c, ens.sigma_e);
    row.mean_ratio = ens.sigma_bar_e.norm() / sigma_c.norm();
  } catch (const std::exception& err) {
    row.stable_unconditional = false;
    row.unconditional.reset();
    row.note = fmt::format("feedback: {}", err.what());
  }
  return row;
}

std::vector<SweepRow> run_sweep(const Scenario& scenario, int threads) {
  const auto tasks = expand(scenario);
  std::vector<SweepRow> rows(tasks.size());
  parallel_map(tasks.size(), threads, [&](std::size_t i) {
    rows[i] = evaluate_point(tasks[i].inputs);
    rows[i].series = tasks[i].series;
    rows[i].axis = tasks[i].axis;
  });
  return rows;
}

std::vector<SweepRow> run_feedback(const Scenario& scenario, int threads) {
  const auto tasks = expand(scenario);
  std::vector<SweepRow> rows(tasks.size());
  const bool shared = gain_axis(scenario.sweep.axis);
  const std::size_t per_series = static_cast<std::size_t>(scenario.sweep.points);

  // σ_c does not depend on the gains: one conditional solve per series.
  std::vector<SweepRow> bases;
  if (shared) {
    const std::size_t n_series = tasks.size() / per_series;
    bases.resize(n_series);
    parallel_map(n_series, threads, [&](std::size_t s) { bases[s] = evaluate_point(tasks[s * per_series].inputs); });
  }
  parallel_map(tasks.size(), threads, [&](std::size_t i) {
    const SweepRow base = shared ? bases[i / per_series] : evaluate_point(tasks[i].inputs);
    if (base.sigma_conditional) {
      rows[i] = evaluate_feedback(tasks[i].inputs, *base.sigma_conditional);
      rows[i].riccati_time = base.riccati_time;
      rows[i].riccati_residual = base.riccati_residual;
    } else {
      rows[i].note = base.note.empty() ? "no conditional steady state" : base.note;
    }
    rows[i].series = tasks[i].series;
    rows[i].axis = tasks[i].axis;
  });
  return rows;
}

double stable_K_limit(const PointInputs& inputs, MpaKind kind, double k_cap, int scan_points) {
  auto stable = [&](double K) {
    PointInputs point = inputs;
    point.params = with_mpa(point.params, kind, K);
    const auto mats = build_system(point.params, point.meas, point.options);
    const StabilityReport report = check_stability(mats);
    return mats.measured() ? report.conditional_stable : report.unconditional_stable;
  };
  if (!stable(0.0)) return 0.0;
  double lo = 0.0;
  for (int i = 1; i <= scan_points; ++i) {
    const double K = k_cap * i / scan_points;
    if (!stable(K)) {
      double hi = K;
      for (int it = 0; it < 100 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (stable(mid) ? lo : hi) = mid;
      }
      return lo;
    }
    lo = K;
  }
  return k_cap;
}

KMatch match_conditional_values(const PointInputs& inputs, MpaKind kind, const ConditionalTargets& targets,
                                double k_cap, int scan_points) {
  const double limit = stable_K_limit(inputs, kind, k_cap);
  auto evaluate = [&](double K) {
    PointInputs point = inputs;
    point.params = with_mpa(point.params, kind, K);
    const SweepRow row = evaluate_point(point);
    const std::optional<MeasureSet>& m = row.conditional ? row.conditional : row.unconditional;
    KMatch match{K, {}, std::numeric_limits<double>::infinity()};
    if (m && row.stable_conditional) {
      match.measures = *m;
      match.error = std::max({std::abs(m->E_n - targets.E_n), std::abs(m->S_12 - targets.S_12),
                              std::abs(m->S_21 - targets.S_21)});
    }
    return match;
  };

  const double top = (limit < k_cap ? 0.999 : 1.0) * limit;
  std::vector<KMatch> scan(scan_points);
  for (int i = 0; i < scan_points; ++i) scan[i] = evaluate(top * (i + 1) / scan_points);
  const auto best = std::min_element(scan.begin(), scan.end(),
                                     [](const KMatch& a, const KMatch& b) { return a.error < b.error; });
  const std::size_t idx = static_cast<std::size_t>(best - scan.begin());

  double a = idx == 0 ? 0.0 : scan[idx - 1].K_tilde;
  double b = idx + 1 == scan.size() ? top : scan[idx + 1].K_tilde;
  KMatch result = *best;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - golden * (b - a);
  double d = a + golden * (b - a);
  KMatch fc = evaluate(c);
  KMatch fd = evaluate(d);
  for (int it = 0; it < 40; ++it) {
    if (fc.error < fd.error) {
      b = d;
      d = c;
      fd = fc;
      c = b - golden * (b - a);
      fc = evaluate(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + golden * (b - a);
      fd = evaluate(d);
    }
  }
  for (const KMatch& m : {fc, fd}) {
    if (m.error < result.error) result = m;
  }
  return result;
}

TrajectoryReport run_trajectory(const Scenario& scenario, std::size_t n_traj, std::uint64_t seed,
                                int threads) {
  if (n_traj == 0) throw std::invalid_argument("run_trajectory needs at least one trajectory");
  const PointInputs inputs = scenario_inputs(scenario);
  const auto mats = build_system(inputs.params, inputs.meas, inputs.options);
  const bool drift_stable = max_real_eigenvalue(mats.drift) < 0.0;

  Matrix4d sigma_c = Matrix4d::Identity() / 2.0;
  if (mats.measured()) {
    sigma_c = steady_conditional(mats, inputs.riccati).sigma;
  } else if (drift_stable) {
    sigma_c = solve_lyapunov(mats.drift, mats.diffusion);
  }

  const Matrix4d closed = apply_feedback(mats.drift, inputs.gains);
  const double slowest = -max_real_eigenvalue(closed);
  if (!(slowest > 0.0)) {
    throw UnstableError("run_trajectory: mean dynamics not Hurwitz", spectrum(closed));
  }

  const TrajectoryConfig& cfg = scenario.solver.trajectory;
  TrajectoryReport report;
  report.n_traj = n_traj;
  report.dt = cfg.dt_scale / closed.diagonal().cwiseAbs().maxCoeff();
  report.t_final = cfg.t_final_us > 0.0 ? 1e-6 * cfg.t_final_us : 20.0 / slowest;
  report.window_start = cfg.window_start_us >= 0.0 ? 1e-6 * cfg.window_start_us : report.t_final / 4.0;
  report.predicted = ensemble_covariance(mats, sigma_c, inputs.gains).sigma_bar_e;

  TrajectoryOptions options;
  options.dt = report.dt;
  options.t_final = report.t_final;
  options.record_every = cfg.record_every;
  options.seed = seed;
  options.initial_mean = Vector4d(cfg.initial_mean.data());

  const ConditionalCovariance cov(sigma_c);
  const std::optional<FeedbackGains> gains =
      inputs.gains.is_zero() ? std::nullopt : std::optional<FeedbackGains>(inputs.gains);

  EnsembleAccumulator total(report.window_start, report.t_final);
  constexpr std::size_t chunk = 256;
  for (std::size_t first = 0; first < n_traj; first += chunk) {
    const std::size_t count = std::min(chunk, n_traj - first);
    std::vector<TrajectoryRecord> block(count);
    std::vector<EnsembleAccumulator> partial(count, EnsembleAccumulator(report.window_start, report.t_final));
    parallel_map(count, threads, [&](std::size_t k) {
      TrajectoryOptions local = options;
      local.seed = trajectory_seed(seed, first + k);
      block[k] = simulate_trajectory(mats, cov, gains, local);
      partial[k].add(block[k]);
    });
    for (std::size_t k = 0; k < count; ++k) {
      total.merge(partial[k]);
      if (report.records.size() < static_cast<std::size_t>(cfg.dump_limit)) {
        report.records.push_back(std::move(block[k]));
      }
    }
  }

  if (n_traj >= 2) {
    report.sample = total.result();
    const double scale = report.predicted.norm();
    const double diff = (report.sample - report.predicted).norm();
    report.mismatch = scale > 0.0 ? diff / scale : diff;
  } else {
    report.mismatch = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

Scenario paper_scenario(double D, double kd) {
  Scenario s;
  s.coupling.D = D;
  s.coupling.kd = {kd, ""};
  return s;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2a", "fig2b", "fig3", "fig4",
                                              "fig5",  "fig6",  "fig7", "fig8"};
  return names;
}

namespace {

constexpr double measured_K_cap_MHz = 5.0;

const char* kind_name(MpaKind kind) { return kind == MpaKind::symmetric ? "symmetric" : "asymmetric"; }

Scenario measured(Scenario s) {
  s.measurement.eta_L = 1.0;
  s.measurement.eta_R = 1.0;
  s.measurement.theta_L = {0.5 * pi, "0.5pi"};
  s.measurement.theta_R = {0.0, ""};
  return s;
}

void apply_options(Scenario& s, const MatrixOptions& options) {
  s.solver.diffusion_sign = options.diffusion_sign;
  s.solver.innovation = options.innovation;
  s.solver.flatten_channels = options.flatten_channels;
}

std::vector<SweepRow> k_tilde_panels(double kd, bool with_measurement, const MatrixOptions& options,
                                     int threads, std::vector<std::string>& notes) {
  std::vector<SweepRow> rows;
  for (MpaKind kind : {MpaKind::symmetric, MpaKind::asymmetric}) {
    for (double D : {0.0, 0.5, 1.0}) {
      Scenario s = paper_scenario(D, kd);
      if (with_measurement) s = measured(s);
      apply_options(s, options);
      const double cap = from_mhz(with_measurement ? measured_K_cap_MHz : 50.0);
      const double limit = stable_K_limit(scenario_inputs(s), kind, cap);
      const double hi = (limit < cap ? 0.999 : 1.0) * limit;
      s.sweep.axis = SweepAxis::K_tilde;
      s.sweep.mpa = kind;
      s.sweep.lo = {0.0, ""};
      s.sweep.hi = {to_mhz(hi), ""};
      s.sweep.points = 50;
      s.sweep.label = fmt::format("{} D={:g}", kind_name(kind), D);
      notes.push_back(fmt::format("{}: stable K_tilde limit {:.6g} MHz{}", s.sweep.label, to_mhz(limit),
                                  limit < cap ? "" : " (scan cap)"));
      auto part = run_sweep(s, threads);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  return rows;
}

}  // namespace

PresetResult run_preset(const std::string& name, const MatrixOptions& options, int threads) {
  PresetResult result;
  if (name == "fig2a" || name == "fig2b") {
    const bool symmetric = name == "fig2a";
    Scenario s = paper_scenario(0.0, 0.0);
    apply_options(s, options);
    s.modes[0].K_tilde_MHz = symmetric ? 0.24 : 0.48;
    s.modes[1].K_tilde_MHz = symmetric ? 0.24 : 0.0;
    s.sweep.axis = SweepAxis::kd;
    s.sweep.lo = {0.0, ""};
    s.sweep.hi = {two_pi, "2pi"};
    s.sweep.points = 201;
    s.sweep.series = SeriesConfig{SweepAxis::D, {0.0, 0.5, 1.0}};
    s.sweep.label = symmetric ? "symmetric" : "asymmetric";
    result.rows = run_sweep(s, threads);
    return result;
  }
  if (name == "fig3" || name == "fig4") {
    result.rows = k_tilde_panels(name == "fig3" ? 0.0 : 0.5 * pi, false, options, threads, result.notes);
    return result;
  }
  if (name == "fig5" || name == "fig6" || name == "fig7") {
    result.rows = k_tilde_panels(name == "fig6" ? 0.5 * pi : 0.0, true, options, threads, result.notes);
    return result;
  }
  if (name == "fig8") {
    struct Panel {
      MpaKind kind;
      ConditionalTargets targets;
      double ratio;
    };
    const Panel panels[] = {{MpaKind::symmetric, {0.656, 0.196, 0.0}, 2.0},
                            {MpaKind::asymmetric, {0.859, 0.328, 0.147}, 1.0}};
    for (const Panel& panel : panels) {
      Scenario s = measured(paper_scenario(1.0, 0.0));
      apply_options(s, options);
      const KMatch match = match_conditional_values(scenario_inputs(s), panel.kind, panel.targets,
                                                    from_mhz(measured_K_cap_MHz));
      result.notes.push_back(fmt::format(
          "{}: matched K_tilde {:.6g} MHz, conditional (E_n, S_12, S_21) = ({:.4f}, {:.4f}, {:.4f}), "
          "max deviation {:.4f}",
          kind_name(panel.kind), to_mhz(match.K_tilde), match.measures.E_n, match.measures.S_12,
          match.measures.S_21, match.error));
      s.modes[0].K_tilde_MHz = to_mhz(match.K_tilde);
      s.modes[1].K_tilde_MHz = panel.kind == MpaKind::symmetric ? to_mhz(match.K_tilde) : 0.0;

      Scenario ratio_sweep = s;
      ratio_sweep.sweep.axis = SweepAxis::gain_ratio;
      ratio_sweep.sweep.gain_R1_MHz = 20.0;
      ratio_sweep.sweep.lo = {0.0, ""};
      ratio_sweep.sweep.hi = {4.0, ""};
      ratio_sweep.sweep.points = 41;
      ratio_sweep.sweep.label = fmt::format("{} G_R2/G_R1", kind_name(panel.kind));
      auto rows = run_feedback(ratio_sweep, threads);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());

      const double linewidth = scenario_inputs(s).params.max_linewidth();
      Scenario gain_sweep = s;
      gain_sweep.sweep.axis = SweepAxis::gain_R1;
      gain_sweep.sweep.ratio = panel.ratio;
      gain_sweep.sweep.lo = {0.0, ""};
      gain_sweep.sweep.hi = {200.0, ""};
      gain_sweep.sweep.points = 41;
      gain_sweep.sweep.label = fmt::format("{} G_R1", kind_name(panel.kind));
      rows = run_feedback(gain_sweep, threads);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());

      Scenario strong = gain_sweep;
      strong.sweep.lo = {to_mhz(1e3 * linewidth), ""};
      strong.sweep.points = 1;
      strong.sweep.label = fmt::format("{} strong", kind_name(panel.kind));
      rows = run_feedback(strong, threads);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
    return result;
  }
  throw ScenarioError(fmt::format("unknown preset '{}'", name));
}

void write_rows_csv(std::ostream& out, const std::vector<SweepRow>& rows,
                    const std::vector<std::string>& measures) {
  auto wanted = [&](const char* name) {
    return std::find(measures.begin(), measures.end(), name) != measures.end();
  };
  auto pick = [&](const std::optional<MeasureSet>& m, const char* name, double MeasureSet::*field) {
    return m && wanted(name) ? std::optional<double>((*m).*field) : std::nullopt;
  };
  out << "series,axis,stable_unconditional,stable_conditional,E_n,S_12,S_21,purity,"
         "E_n_c,S_12_c,S_21_c,purity_c,fidelity,mean_ratio\n";
  for (const SweepRow& row : rows) {
    fmt::print(out, "{},{:.17g},{},{},{},{},{},{},{},{},{},{},{},{}\n", quoted(row.series), row.axis,
               row.stable_unconditional ? 1 : 0, row.stable_conditional ? 1 : 0,
               csv_cell(pick(row.unconditional, "E_n", &MeasureSet::E_n)),
               csv_cell(pick(row.unconditional, "S_12", &MeasureSet::S_12)),
               csv_cell(pick(row.unconditional, "S_21", &MeasureSet::S_21)),
               csv_cell(pick(row.unconditional, "purity", &MeasureSet::purity)),
               csv_cell(pick(row.conditional, "E_n", &MeasureSet::E_n)),
               csv_cell(pick(row.conditional, "S_12", &MeasureSet::S_12)),
               csv_cell(pick(row.conditional, "S_21", &MeasureSet::S_21)),
               csv_cell(pick(row.conditional, "purity", &MeasureSet::purity)),
               csv_cell(wanted("fidelity") ? row.fidelity : std::nullopt), csv_cell(row.mean_ratio));
  }
}

std::string rows_summary_json(const std::vector<SweepRow>& rows, const std::vector<std::string>& notes) {
  nlohmann::ordered_json root;
  std::size_t unconditional = 0;
  std::size_t conditional = 0;
  nlohmann::ordered_json diagnostics = nlohmann::ordered_json::array();
  for (const SweepRow& row : rows) {
    unconditional += row.stable_unconditional ? 1 : 0;
    conditional += row.stable_conditional ? 1 : 0;
    nlohmann::ordered_json d;
    d["series"] = row.series;
    d["axis"] = row.axis;
    d["riccati_time_s"] = row.riccati_time;
    d["riccati_residual"] = row.riccati_residual;
    d["note"] = row.note;
    diagnostics.push_back(d);
  }
  root["rows"] = rows.size();
  root["stable_unconditional"] = unconditional;
  root["stable_conditional"] = conditional;
  root["notes"] = notes;
  root["diagnostics"] = diagnostics;
  return root.dump(2) + "\n";
}

}  // namespace chiralmag
