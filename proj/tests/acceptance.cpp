// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any of criteria 1-11 fails; criterion 12 only warns.
#include "chiralmag/sweep.hpp"
#include "fock_lindblad.hpp"
#include "support.hpp"

#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <map>
#include <thread>

using namespace chiralmag;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int worker_threads() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

const char* kind_name(MpaKind kind) { return kind == MpaKind::symmetric ? "symmetric" : "asymmetric"; }

std::map<std::string, std::vector<SweepRow>> by_series(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<SweepRow>> out;
  for (const SweepRow& row : rows) out[row.series].push_back(row);
  return out;
}

Scenario measured(Scenario s) {
  s.measurement.eta_L = 1.0;
  s.measurement.eta_R = 1.0;
  s.measurement.theta_L = {0.5 * pi, "0.5pi"};
  s.measurement.theta_R = {0.0, ""};
  return s;
}

Outcome thresholds() {
  Outcome out{true, ""};
  double worst = 0.0;
  for (double D : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    for (KdCase kd_case : {KdCase::integer_pi, KdCase::half_integer_pi}) {
      for (MpaKind kind : {MpaKind::symmetric, MpaKind::asymmetric}) {
        for (int s : {0, 1}) {
          const double kd = (kd_case == KdCase::integer_pi ? s : s + 0.5) * pi;
          const SystemParams p = testing::paper_params(D, kd);
          const double closed = threshold_K(p, kind, kd_case);
          const double numeric = numeric_threshold_K(p, kind, from_mhz(50.0));
          worst = std::max(worst, std::abs(closed - numeric) / closed);
        }
      }
    }
  }
  const double k0 = threshold_K(testing::paper_params(0.0, 0.0), MpaKind::symmetric, KdCase::integer_pi);
  const bool exact = k0 == from_mhz(1.0) / 4.0;
  out.pass = worst <= 1e-4 && exact;
  out.detail = fmt::format("40 cases, worst relative deviation {:.2e}; D=0 symmetric integer case {} kappa/4",
                           worst, exact ? "equals" : "differs from");
  return out;
}

Outcome nonchiral_steering(const PresetResult& fig3, const PresetResult& fig4) {
  Outcome out{true, ""};
  for (const auto* preset : {&fig3, &fig4}) {
    const auto series = by_series(preset->rows);
    for (const char* kind : {"symmetric", "asymmetric"}) {
      const auto& rows = series.at(fmt::format("{} D=0", kind));
      double steer = 0.0;
      double en = 0.0;
      int stable = 0;
      for (const SweepRow& row : rows) {
        if (!row.unconditional) continue;
        ++stable;
        steer = std::max({steer, row.unconditional->S_12, row.unconditional->S_21});
        en = std::max(en, row.unconditional->E_n);
      }
      const bool ok = stable == 50 && steer <= 1e-9 && en > 0.0;
      out.pass = out.pass && ok;
      out.detail += fmt::format("[kd={} {}: {} stable, max S {:.1e}, max E_n {:.3f}] ",
                                preset == &fig3 ? "0" : "pi/2", kind, stable, steer, en);
    }
  }
  return out;
}

Outcome one_way_steering(const PresetResult& fig3, const PresetResult& fig4) {
  Outcome out{true, ""};
  for (const auto* preset : {&fig3, &fig4}) {
    const bool integer = preset == &fig3;
    const auto series = by_series(preset->rows);
    for (double D : {0.5, 1.0}) {
      double silent = 0.0;
      double active = 0.0;
      for (const SweepRow& row : series.at(fmt::format("asymmetric D={:g}", D))) {
        if (!row.unconditional) continue;
        const double s12 = row.unconditional->S_12;
        const double s21 = row.unconditional->S_21;
        silent = std::max(silent, integer ? s21 : s12);
        active = std::max(active, integer ? s12 : s21);
      }
      const bool ok = silent <= 1e-9 && active > 0.0;
      out.pass = out.pass && ok;
      out.detail += fmt::format("[kd={} D={:g}: max {} {:.3g}, max {} {:.3g}{}] ", integer ? "0" : "pi/2", D,
                                integer ? "S_21" : "S_12", silent, integer ? "S_12" : "S_21", active,
                                ok ? "" : " FAIL");
    }
  }
  return out;
}

Outcome inert_left_detector() {
  const SystemParams p = testing::paper_params(1.0, 0.3, from_mhz(0.8), from_mhz(0.4));
  MeasurementConfig with_left = testing::paper_measurement();
  MeasurementConfig without_left = with_left;
  without_left.eta_L = 0.0;
  const Matrix4d a = steady_conditional(build_system(p, with_left)).sigma;
  const Matrix4d b = steady_conditional(build_system(p, without_left)).sigma;
  const double diff = (a - b).norm();
  return {diff <= 1e-10, fmt::format("Gamma_L = 0: ||sigma_c(eta_L=1) - sigma_c(eta_L=0)||_F = {:.2e}", diff)};
}

Outcome measurement_enhancement(const PresetResult& fig3, const PresetResult& fig5) {
  Outcome out{true, ""};
  const auto open = by_series(fig3.rows);
  const auto watched = by_series(fig5.rows);
  for (const char* kind : {"symmetric", "asymmetric"}) {
    for (double D : {0.0, 0.5, 1.0}) {
      const std::string label = fmt::format("{} D={:g}", kind, D);
      double en_open = 0.0;
      for (const SweepRow& row : open.at(label)) {
        if (row.unconditional) en_open = std::max(en_open, row.unconditional->E_n);
      }
      double en_cond = 0.0;
      double purity_gap = std::numeric_limits<double>::infinity();
      for (const SweepRow& row : watched.at(label)) {
        if (row.conditional) en_cond = std::max(en_cond, row.conditional->E_n);
        if (row.conditional && row.unconditional) {
          purity_gap = std::min(purity_gap, row.conditional->purity - row.unconditional->purity);
        }
      }
      const bool ok = en_cond > en_open && purity_gap >= -1e-12;
      out.pass = out.pass && ok;
      out.detail += fmt::format("[{}: E_n {:.5f} vs {:.5f}, min purity gain {:.2e}{}] ", label, en_cond, en_open,
                                purity_gap, ok ? "" : " FAIL");
    }
  }
  return out;
}

struct MatchMode {
  const char* name;
  MatrixOptions options;
};

struct PaperPanel {
  MpaKind kind;
  ConditionalTargets targets;
  double ratio;
};

const PaperPanel paper_panels[] = {{MpaKind::symmetric, {0.656, 0.196, 0.0}, 2.0},
                                   {MpaKind::asymmetric, {0.859, 0.328, 0.147}, 1.0}};

Scenario measured_cascade(const MatrixOptions& options) {
  Scenario s = measured(paper_scenario(1.0, 0.0));
  s.solver.diffusion_sign = options.diffusion_sign;
  s.solver.innovation = options.innovation;
  s.solver.flatten_channels = options.flatten_channels;
  return s;
}

Outcome paper_values(std::array<double, 2>& matched_K) {
  MatrixOptions flattened;
  flattened.flatten_channels = true;
  MatrixOptions printed;
  printed.innovation = InnovationConvention::printed;
  const MatchMode modes[] = {{"per-channel", {}}, {"flattened", flattened}, {"printed innovation", printed}};

  Outcome out{true, ""};
  for (const MatchMode& mode : modes) {
    for (std::size_t i = 0; i < 2; ++i) {
      const PaperPanel& panel = paper_panels[i];
      const KMatch m = match_conditional_values(scenario_inputs(measured_cascade(mode.options)), panel.kind,
                                                panel.targets, from_mhz(5.0));
      const bool ok = m.error <= 0.05;
      if (mode.options.innovation == InnovationConvention::consistent && !mode.options.flatten_channels) {
        matched_K[i] = m.K_tilde;
        out.pass = out.pass && ok;
      }
      out.detail += fmt::format(
          "\n    {} {}: closest K_tilde {:.4f} MHz, (E_n, S_12, S_21) = ({:.3f}, {:.3f}, {:.3f}), "
          "target ({:.3f}, {:.3f}, {:.3f}), max deviation {:.3f} {}",
          mode.name, kind_name(panel.kind), to_mhz(m.K_tilde), m.measures.E_n, m.measures.S_12, m.measures.S_21,
          panel.targets.E_n, panel.targets.S_12, panel.targets.S_21, m.error, ok ? "within 0.05" : "outside 0.05");
    }
  }
  return out;
}

Outcome feedback_fidelity(const std::array<double, 2>& matched_K) {
  Outcome out{true, ""};
  for (std::size_t i = 0; i < 2; ++i) {
    const PaperPanel& panel = paper_panels[i];
    Scenario s = measured_cascade({});
    s.modes[0].K_tilde_MHz = to_mhz(matched_K[i]);
    s.modes[1].K_tilde_MHz = panel.kind == MpaKind::symmetric ? to_mhz(matched_K[i]) : 0.0;
    const double gain = to_mhz(1e3 * scenario_inputs(s).params.max_linewidth());
    s.sweep.axis = SweepAxis::gain_R1;
    s.sweep.ratio = panel.ratio;
    s.sweep.lo = {gain, ""};
    s.sweep.hi = {gain, ""};
    s.sweep.points = 1;
    const SweepRow row = run_feedback(s).front();
    const double fid = row.fidelity.value_or(0.0);
    const double ratio = row.mean_ratio.value_or(std::numeric_limits<double>::infinity());
    const bool ok = fid >= 0.99 && ratio <= 1e-2;
    out.pass = out.pass && ok;
    out.detail += fmt::format("[{}: G_R1 {:.4g} MHz, F {:.5f}, mean ratio {:.2e}{}] ", kind_name(panel.kind),
                              gain, fid, ratio, ok ? "" : " FAIL");
  }
  return out;
}

Outcome measure_oracles() {
  double worst_tmsv = 0.0;
  for (double r : {0.1, 0.5, 1.0}) {
    const MeasureSet m = measure_set(testing::two_mode_squeezed(r));
    const double steer = std::log(std::cosh(2.0 * r));
    worst_tmsv = std::max({worst_tmsv, std::abs(m.E_n - 2.0 * r), std::abs(m.S_12 - steer),
                           std::abs(m.S_21 - steer), std::abs(m.purity - 1.0)});
  }
  std::mt19937_64 rng(2024);
  double worst_random = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Matrix4d sigma = testing::random_state(rng);
    const double direct = std::max(0.0, -std::log(2.0 * min_pt_symplectic(sigma)));
    worst_random = std::max(worst_random, std::abs(log_negativity(sigma) - direct));
  }
  return {worst_tmsv <= 1e-10 && worst_random <= 1e-9,
          fmt::format("two-mode squeezed worst error {:.2e}; 1000 random states worst E_n difference {:.2e}",
                      worst_tmsv, worst_random)};
}

Outcome riccati_lyapunov() {
  std::mt19937_64 rng(11);
  double worst_match = 0.0;
  double worst_flow = 0.0;
  double worst_lyap = 0.0;
  double worst_riccati = 0.0;
  for (int i = 0; i < 20; ++i) {
    SystemParams p = testing::random_params(rng);
    const double decay = -max_real_eigenvalue(build_drift(p));
    if (decay <= 0.0) continue;
    MeasurementConfig blind = testing::paper_measurement();
    blind.eta_L = blind.eta_R = 0.0;
    const auto mats = build_system(p, blind);
    const Matrix4d lyap = solve_lyapunov(mats.drift, mats.diffusion);
    const auto cond = steady_conditional(mats);
    worst_match = std::max(worst_match, (cond.sigma - lyap).cwiseAbs().maxCoeff());
    if (decay > 1e-2 * rate_scale(mats)) {
      const double dt = 1e-2 / rate_scale(mats);
      const auto flow = integrate_riccati(mats, Matrix4d(Matrix4d::Identity() / 2.0), dt, 20.0 / decay);
      worst_flow = std::max(worst_flow, (flow.sigma.back() - lyap).cwiseAbs().maxCoeff());
    }
    worst_lyap = std::max(worst_lyap, lyapunov_residual(mats.drift, lyap, mats.diffusion));
    const auto seen = build_system(p, testing::paper_measurement());
    if (check_stability(seen).conditional_stable) {
      worst_riccati = std::max(worst_riccati, steady_conditional(seen).residual);
    }
  }
  return {worst_match <= 1e-8 && worst_flow <= 1e-8 && worst_lyap < 1e-10 && worst_riccati < 1e-10,
          fmt::format("eta=0 max |sigma_c - sigma_lyap| {:.2e} (steady), {:.2e} (flow from vacuum); "
                      "Lyapunov residual {:.2e}; Riccati residual {:.2e}",
                      worst_match, worst_flow, worst_lyap, worst_riccati)};
}

constexpr const char* trajectory_scenario = R"({
  "modes": [{"K_tilde_MHz": 0.3}, {"K_tilde_MHz": 0.3}],
  "coupling": {"gamma_R_MHz": 10, "D": 0.5, "kd": 0.3},
  "measurement": {"eta_L": 1, "eta_R": 1, "theta_L": "0.5pi", "theta_R": 0},
  "feedback": {"gains_MHz": [0, 0, 0, 0, 10, 10, 10, 10]},
  "solver": {"trajectory": {"n_traj": 5000, "dt_scale": 0.01, "record_every": 20}}
})";

Outcome monte_carlo(double& seconds) {
  const auto start = Clock::now();
  const TrajectoryReport report = run_trajectory(parse_scenario_text(trajectory_scenario), 5000, 1, worker_threads());
  seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return {report.mismatch < 0.05 && seconds < 180.0,
          fmt::format("5000 trajectories, sample vs predicted mean covariance mismatch {:.2f}%", 100.0 * report.mismatch)};
}

Outcome chain_builder() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SystemParams p = testing::random_params(rng);
    const double d = 0.02;
    const ChainSpec spec{{p.mode_1, p.mode_2}, {0.1, 0.1 + d}, p.coupling.gamma_L, p.coupling.gamma_R,
                         p.coupling.kd / d};
    const auto chain = build_chain(spec);
    const Matrix4d A = build_drift(p);
    const Matrix4d D = build_diffusion(p);
    worst = std::max({worst, (chain.drift - A).norm() / A.norm(), (chain.diffusion - D).norm() / D.norm()});
  }
  MagnonMode m;
  const auto three = build_chain<double>(ChainSpec{{m, m, m}, {0.0, 0.01, 0.03}, 0.0, from_mhz(10.0), 70.0});
  bool lower = true;
  for (int i = 0; i < 3; ++i) {
    for (int l = i + 1; l < 3; ++l) lower = lower && three.drift.block(2 * i, 2 * l, 2, 2).isZero(0);
  }
  return {worst <= 1e-12 && lower, fmt::format("N=2 worst relative difference {:.2e}; N=3 with Gamma_L=0 {}", worst,
                                               lower ? "block lower-triangular" : "not lower-triangular")};
}

Outcome fock_oracle(double& seconds) {
  SystemParams p;
  p.coupling = WaveguideCoupling::from_chirality(from_mhz(10.0), 0.5, 1.0);
  p.mode_1.K_tilde = p.mode_2.K_tilde = from_mhz(0.05);
  for (int j = 0; j < 2; ++j) p.mode(j).n_bar = thermal_occupation(p.mode(j).omega_m, 0.030);
  const auto start = Clock::now();
  const fock::Result f = fock::steady_covariance(p, 8);
  seconds = std::chrono::duration<double>(Clock::now() - start).count();
  const double worst = (f.sigma - solve_lyapunov(build_drift(p), build_diffusion(p))).cwiseAbs().maxCoeff();
  return {worst <= 1e-3 && seconds < 600.0,
          fmt::format("cutoff 8, max |sigma_fock - sigma_lyap| {:.2e}, edge population {:.1e}", worst,
                      f.edge_population)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, double limit, const std::function<Outcome(double&)>& run) {
    const auto start = Clock::now();
    double seconds = 0.0;
    Outcome o;
    try {
      o = run(seconds);
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (seconds == 0.0) seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = limit <= 0.0 || seconds < limit;
    const bool pass = o.pass && in_time;
    if (!pass && id != 12) ++failures;
    const char* status = pass ? "PASS" : (id == 12 ? "WARN" : "FAIL");
    fmt::print("criterion {:>2}: {} ({:.1f} s{}) {}\n", id, status, seconds,
               in_time ? "" : fmt::format(", limit {:.0f} s", limit), o.detail);
    std::fflush(stdout);
  };

  PresetResult fig3;
  PresetResult fig4;
  PresetResult fig5;
  std::array<double, 2> matched_K{};

  report(1, 10.0, [](double&) { return thresholds(); });
  report(2, 30.0, [&](double&) {
    fig3 = run_preset("fig3", {}, worker_threads());
    fig4 = run_preset("fig4", {}, worker_threads());
    return nonchiral_steering(fig3, fig4);
  });
  report(3, 30.0, [&](double&) { return one_way_steering(fig3, fig4); });
  report(4, 0.0, [](double&) { return inert_left_detector(); });
  report(5, 0.0, [&](double&) {
    fig5 = run_preset("fig5", {}, worker_threads());
    return measurement_enhancement(fig3, fig5);
  });
  report(6, 0.0, [&](double&) { return paper_values(matched_K); });
  report(7, 0.0, [&](double&) { return feedback_fidelity(matched_K); });
  report(8, 0.0, [](double&) { return measure_oracles(); });
  report(9, 0.0, [](double&) { return riccati_lyapunov(); });
  report(10, 180.0, [](double& s) { return monte_carlo(s); });
  report(11, 0.0, [](double&) { return chain_builder(); });
  report(12, 600.0, [](double& s) { return fock_oracle(s); });

  fmt::print("{} of criteria 1-11 failed\n", failures);
  return failures == 0 ? 0 : 1;
}
