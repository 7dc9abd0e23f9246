#pragma once

#include "chiralmag/measures.hpp"
#include "chiralmag/scenario.hpp"
#include "chiralmag/stochastic.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace chiralmag {

/// Everything needed to evaluate one parameter point.
struct PointInputs {
  SystemParams params;
  MeasurementConfig meas;
  FeedbackGains gains;
  MatrixOptions options;
  RiccatiOptions riccati;
};

/// One row of a sweep. In feedback runs the unconditional slot holds the
/// ensemble state σ_e and stable_unconditional refers to Ā.
struct SweepRow {
  std::string series;
  double axis = 0.0;
  bool stable_unconditional = false;
  bool stable_conditional = false;
  std::optional<MeasureSet> unconditional;
  std::optional<MeasureSet> conditional;
  std::optional<double> fidelity;
  std::optional<double> mean_ratio;  // ‖σ̄_e‖_F / ‖σ_c‖_F
  std::optional<Matrix4d> sigma_unconditional;
  std::optional<Matrix4d> sigma_conditional;
  double riccati_time = 0.0;
  double riccati_residual = 0.0;
  std::string note;
};

PointInputs scenario_inputs(const Scenario& scenario);

/// Applies one axis value (in scenario units) to a point.
PointInputs apply_axis(PointInputs inputs, const Scenario& scenario, SweepAxis axis, double value);

/// Grid value i of `points` equally spaced values on [lo, hi].
double grid_value(const SweepConfig& sweep, int i);

/// Unconditional Lyapunov state and, when measured, the conditional steady
/// state of one point.
SweepRow evaluate_point(const PointInputs& inputs);

/// Conditional state of one point followed by the feedback ensemble state.
SweepRow evaluate_feedback(const PointInputs& inputs, const Matrix4d& sigma_c);

std::vector<SweepRow> run_sweep(const Scenario& scenario, int threads = 1);
std::vector<SweepRow> run_feedback(const Scenario& scenario, int threads = 1);

/// Largest K̃ (rad/s, capped at k_cap) below which the point stays stable:
/// drift Hurwitz when unmeasured, conditional detectability when measured.
double stable_K_limit(const PointInputs& inputs, MpaKind kind, double k_cap, int scan_points = 400);

struct ConditionalTargets {
  double E_n = 0.0;
  double S_12 = 0.0;
  double S_21 = 0.0;
};

struct KMatch {
  double K_tilde = 0.0;  // rad/s
  MeasureSet measures;
  double error = 0.0;  // max abs deviation over (E_n, S_12, S_21)
};

/// Stable K̃ in (0, k_cap] whose conditional measures lie closest to targets.
KMatch match_conditional_values(const PointInputs& inputs, MpaKind kind, const ConditionalTargets& targets,
                                double k_cap, int scan_points = 120);

struct TrajectoryReport {
  std::size_t n_traj = 0;
  double dt = 0.0;
  double t_final = 0.0;
  double window_start = 0.0;
  Matrix4d sample = Matrix4d::Zero();     // ensemble_stats of the means
  Matrix4d predicted = Matrix4d::Zero();  // steady σ̄_e
  double mismatch = 0.0;                  // ‖sample − predicted‖_F / ‖predicted‖_F
  std::vector<TrajectoryRecord> records;
};

/// Seeded ensemble of filtered-mean trajectories at the scenario point with
/// its feedback gains, compared with the steady ensemble covariance.
TrajectoryReport run_trajectory(const Scenario& scenario, std::size_t n_traj, std::uint64_t seed,
                                int threads = 1);

/// Names accepted by `preset`.
const std::vector<std::string>& preset_names();

struct PresetResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> notes;
};

PresetResult run_preset(const std::string& name, const MatrixOptions& options, int threads = 1);

/// Paper parameter set: ω_m/2π = 10 GHz, κ/2π = 1 MHz, Γ_R/2π = 10 MHz,
/// T = 30 mK, Δ = 0; measurement off.
Scenario paper_scenario(double D, double kd);

void write_rows_csv(std::ostream& out, const std::vector<SweepRow>& rows,
                    const std::vector<std::string>& measures = known_measures());

std::string rows_summary_json(const std::vector<SweepRow>& rows, const std::vector<std::string>& notes);

}  // namespace chiralmag
