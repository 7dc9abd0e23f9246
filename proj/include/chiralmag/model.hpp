#pragma once

#include "chiralmag/types.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace chiralmag {

/// Kittel mode of one sphere. Rates and frequencies in rad/s.
struct MagnonMode {
  double omega_m = from_mhz(10e3);
  double kappa = from_mhz(1.0);
  double n_bar = 0.0;
  double Delta = 0.0;    // effective detuning of the linearized mode
  double K_tilde = 0.0;  // MPA strength, non-negative
  double K_kerr = 0.0;   // bare Kerr coefficient

  void validate() const;
};

/// Emission rates into left/right guided photons and the propagation phase k·d.
struct WaveguideCoupling {
  double gamma_L = 0.0;
  double gamma_R = from_mhz(10.0);
  double kd = 0.0;

  /// Coupling with Γ_L = Γ_R (1-D)/(1+D) at fixed Γ_R.
  static WaveguideCoupling from_chirality(double gamma_R, double D, double kd);

  void validate() const;
};

/// Rectangular waveguide carrying the TE10 mode plus the sphere material.
/// Defaults are YIG in SI units.
struct WaveguideGeometry {
  double a = 22.86e-3;
  double b = 10.16e-3;
  double x_pos = 11.43e-3;
  double M_sat = 1.96e5;
  double V = 5.236e-13;
  double K_an = -610.0;
  double gamma_0 = two_pi * 28e9;
  double epsilon_0 = 8.8541878128e-12;
  double mu_0 = 1.25663706212e-6;

  void validate() const;
};

struct DriveConfig {
  std::array<double, 2> amp{0.0, 0.0};
  std::array<double, 2> phase{0.0, 0.0};
  double omega_d = from_mhz(10e3);
};

struct SystemParams {
  MagnonMode mode_1;
  MagnonMode mode_2;
  WaveguideCoupling coupling;

  const MagnonMode& mode(int j) const { return j == 0 ? mode_1 : mode_2; }
  MagnonMode& mode(int j) { return j == 0 ? mode_1 : mode_2; }

  /// Γ̃_j = (κ_j + Γ_L + Γ_R)/2 for j in {0, 1}.
  double effective_linewidth(int j) const;
  double max_linewidth() const;
  double min_linewidth() const;

  void validate() const;
};

enum class Direction { left, right };

/// Thrown when the self-consistent amplitude iteration does not settle.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::array<complexd, 2> last, double residual)
      : std::runtime_error(what), last_iterate(last), residual(residual) {}

  std::array<complexd, 2> last_iterate;
  double residual;
};

double chirality(const WaveguideCoupling& coupling);

/// Propagation constant k = sqrt(ω²/c² − π²/a²) of the TE10 mode.
double te10_wavenumber(const WaveguideGeometry& geom, double omega);

/// Real coupling amplitude g_λ; right-movers use +k, left-movers −k.
double te10_amplitude(const WaveguideGeometry& geom, double omega, Direction direction);

/// Emission rate Γ_λ = g_λ².
double te10_coupling(const WaveguideGeometry& geom, double omega, Direction direction);

/// Magnitude of μ0 K_an γ0² / (M² V).
double kerr_coefficient(const WaveguideGeometry& geom);

/// Bose occupation at temperature T (kelvin); exactly 0 at T = 0.
double thermal_occupation(double omega_m, double T);

struct SteadyStateOptions {
  double relaxation = 0.5;
  int max_iterations = 10000;
  double tolerance = 1e-12;
  std::array<complexd, 2> initial{};
};

struct SteadyAmplitudes {
  std::array<complexd, 2> amplitude{};
  int iterations = 0;
  double residual = 0.0;  // relative residual of the coupled amplitude relations
};

/// Self-consistent mean fields of the two driven Kerr modes, reached by damped
/// fixed-point iteration from `options.initial` (zero by default). Multistable
/// parameters return the branch the iteration is attracted to.
SteadyAmplitudes steady_amplitudes(const SystemParams& params, const DriveConfig& drives,
                                   const SteadyStateOptions& options = {});

/// Relative residual of the amplitude relations at a candidate pair.
double amplitude_residual(const SystemParams& params, const DriveConfig& drives,
                          const std::array<complexd, 2>& amplitude);

struct Linearization {
  SystemParams params;
  /// arg(⟨m_j⟩²); absorbed into a local quadrature rotation when non-zero.
  std::array<double, 2> squeezing_phase{0.0, 0.0};
};

/// Δ_j = δ_j + 4K_j|⟨m_j⟩|², K̃_j = K_j|⟨m_j⟩|² around the given mean fields.
Linearization linearize(const SystemParams& params, const DriveConfig& drives,
                        const SteadyAmplitudes& amplitudes);

enum class MpaKind { symmetric, asymmetric };

struct MpaTarget {
  MpaKind kind = MpaKind::symmetric;
  double K_tilde = 0.0;
};

struct MpaCalibration {
  DriveConfig drives;
  /// Input params with ω_m,j retuned so that the effective detunings equal
  /// the requested mode.Delta values.
  SystemParams params;
  SteadyAmplitudes amplitudes;
};

/// Drives (and bias retuning) that realise K̃1 = K̃2 = K̃ or K̃1 = K̃, K̃2 = 0.
/// Throws std::domain_error when the pattern cannot be reached from zero amplitude.
MpaCalibration calibrate_mpa(const SystemParams& params, const MpaTarget& target,
                             double omega_d = from_mhz(10e3));

}  // namespace chiralmag
