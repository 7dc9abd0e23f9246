#pragma once

#include "chiralmag/dynamics.hpp"
#include "chiralmag/matrices.hpp"
#include "chiralmag/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace chiralmag {

/// Schema or value error in a scenario file; the message names the key.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Angle in radians that remembers the "0.5pi" spelling it was read from.
struct Angle {
  double radians = 0.0;
  std::string text;
};

/// Parses "0.5pi", "pi", "-2pi", "1.5 pi" or a plain number string.
double parse_angle_text(const std::string& text);

struct ModeConfig {
  double omega_m_GHz = 10.0;
  double kappa_MHz = 1.0;
  std::optional<double> T_mK;
  std::optional<double> n_bar;
  double K_tilde_MHz = 0.0;
  double Delta_MHz = 0.0;
};

struct CouplingConfig {
  double gamma_R_MHz = 10.0;
  std::optional<double> D;
  std::optional<double> gamma_L_MHz;
  Angle kd;
};

struct MeasurementFileConfig {
  double eta_L = 0.0;
  double eta_R = 0.0;
  Angle theta_L;
  Angle theta_R;
};

enum class SweepAxis { kd, K_tilde, D, gain_R1, gain_ratio };

SweepAxis parse_axis(const std::string& name);
std::string axis_name(SweepAxis axis);

/// A second axis held at a list of values, one sweep series per value.
struct SeriesConfig {
  SweepAxis axis = SweepAxis::D;
  std::vector<double> values;
};

/// Axis units: kd in radians, K_tilde and gain_R1 in MHz, D and gain_ratio bare.
struct SweepConfig {
  SweepAxis axis = SweepAxis::K_tilde;
  Angle lo;
  Angle hi;
  int points = 1;
  MpaKind mpa = MpaKind::symmetric;
  double ratio = 1.0;           // G_R2 / G_R1 on the gain_R1 axis
  double gain_R1_MHz = 20.0;    // fixed G_R1 on the gain_ratio axis
  std::optional<SeriesConfig> series;
  std::string label;
};

struct TrajectoryConfig {
  int n_traj = 1;
  double dt_scale = 1e-3;
  double t_final_us = 0.0;   // 0: 20 / |max Re eig Ā|
  double window_start_us = -1.0;  // < 0: a quarter of t_final
  int record_every = 10;
  int dump_limit = 10;
  std::array<double, 4> initial_mean{};
};

struct SolverConfig {
  double dt_scale = 1e-2;
  double tolerance = 1e-12;
  double t_max_scale = 1e4;
  DiffusionSign diffusion_sign = DiffusionSign::consistent;
  InnovationConvention innovation = InnovationConvention::consistent;
  bool flatten_channels = false;
  TrajectoryConfig trajectory;
};

inline const std::vector<std::string>& known_measures() {
  static const std::vector<std::string> names{"E_n", "S_12", "S_21", "purity", "fidelity"};
  return names;
}

struct OutputConfig {
  std::vector<std::string> measures = known_measures();
  std::string csv;
  std::string summary;
};

/// Scenario as written in the configuration file (file units) together with
/// accessors converting it to the rad/s library types.
struct Scenario {
  std::array<ModeConfig, 2> modes{};
  CouplingConfig coupling;
  MeasurementFileConfig measurement;
  /// MHz, order x_L1, p_L1, x_L2, p_L2, x_R1, p_R1, x_R2, p_R2.
  std::array<double, 8> gains_MHz{};
  SweepConfig sweep;
  SolverConfig solver;
  OutputConfig output;

  SystemParams params() const;
  MeasurementConfig measurement_config() const;
  FeedbackGains gains() const;
  MatrixOptions matrix_options() const;
  RiccatiOptions riccati_options() const;
  bool wants(const std::string& measure) const;

  void validate() const;
};

Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario(const std::string& path);

/// Canonical JSON text; parse → emit → parse → emit is byte-stable.
std::string emit_scenario(const Scenario& scenario);

}  // namespace chiralmag
