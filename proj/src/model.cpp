#include "chiralmag/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace chiralmag {

namespace {

constexpr double speed_of_light = 299792458.0;
constexpr double hbar = 1.054571817e-34;
constexpr double k_boltzmann = 1.380649e-23;

void require(bool ok, const std::string& message) {
  if (!ok) {
    throw std::invalid_argument(message);
  }
}

std::array<complexd, 2> amplitude_map(const SystemParams& params, const DriveConfig& drives,
                                      const std::array<complexd, 2>& m) {
  const auto& c = params.coupling;
  const complexd i(0.0, 1.0);
  const complexd phase = std::exp(i * c.kd);
  const double gamma_in[2] = {c.gamma_L, c.gamma_R};

  std::array<complexd, 2> out;
  for (int j = 0; j < 2; ++j) {
    const auto& mode = params.mode(j);
    const double detuning = mode.omega_m - drives.omega_d;
    const complexd drive = drives.amp[j] * std::exp(i * drives.phase[j]);
    const complexd denom = params.effective_linewidth(j) +
                           i * (detuning + 2.0 * mode.K_kerr * std::norm(m[j]));
    out[j] = (drive - gamma_in[j] * m[1 - j] * phase) / denom;
  }
  return out;
}

double pair_norm(const std::array<complexd, 2>& m) {
  return std::sqrt(std::norm(m[0]) + std::norm(m[1]));
}

}  // namespace

void MagnonMode::validate() const {
  require(kappa > 0.0, "magnon mode: kappa must be positive");
  require(n_bar >= 0.0, "magnon mode: n_bar must be non-negative");
  require(omega_m > 0.0, "magnon mode: omega_m must be positive");
  require(K_tilde >= 0.0, "magnon mode: K_tilde must be non-negative");
  require(std::isfinite(Delta) && std::isfinite(K_kerr), "magnon mode: non-finite parameter");
}

WaveguideCoupling WaveguideCoupling::from_chirality(double gamma_R, double D, double kd) {
  require(D > -1.0 && D <= 1.0, "chirality must lie in (-1, 1] at fixed gamma_R");
  require(gamma_R > 0.0, "gamma_R must be positive");
  return {gamma_R * (1.0 - D) / (1.0 + D), gamma_R, kd};
}

void WaveguideCoupling::validate() const {
  require(gamma_L >= 0.0 && gamma_R >= 0.0, "waveguide coupling: rates must be non-negative");
  require(gamma_L + gamma_R > 0.0, "no waveguide coupling");
  require(std::isfinite(kd), "waveguide coupling: kd must be finite");
}

void WaveguideGeometry::validate() const {
  require(a >= b && b > 0.0, "waveguide geometry: need a >= b > 0");
  require(x_pos >= 0.0 && x_pos <= a, "waveguide geometry: x_pos outside [0, a]");
  require(V > 0.0, "waveguide geometry: V must be positive");
  require(M_sat > 0.0, "waveguide geometry: M_sat must be positive");
}

double SystemParams::effective_linewidth(int j) const {
  return 0.5 * (mode(j).kappa + coupling.gamma_L + coupling.gamma_R);
}

double SystemParams::max_linewidth() const {
  return std::max(effective_linewidth(0), effective_linewidth(1));
}

double SystemParams::min_linewidth() const {
  return std::min(effective_linewidth(0), effective_linewidth(1));
}

void SystemParams::validate() const {
  mode_1.validate();
  mode_2.validate();
  coupling.validate();
}

double chirality(const WaveguideCoupling& coupling) {
  const double total = coupling.gamma_L + coupling.gamma_R;
  if (!(total > 0.0)) {
    throw std::invalid_argument("no waveguide coupling");
  }
  return (coupling.gamma_R - coupling.gamma_L) / total;
}

double te10_wavenumber(const WaveguideGeometry& geom, double omega) {
  geom.validate();
  const double k0 = omega / speed_of_light;
  const double kc = pi / geom.a;
  if (!(k0 > kc)) {
    throw std::domain_error(
        fmt::format("evanescent TE10 mode: omega {:.6g} rad/s below cutoff {:.6g} rad/s", omega,
                    kc * speed_of_light));
  }
  return std::sqrt(k0 * k0 - kc * kc);
}

double te10_amplitude(const WaveguideGeometry& geom, double omega, Direction direction) {
  const double k = te10_wavenumber(geom, omega);
  const double k_dir = direction == Direction::right ? k : -k;
  const double prefactor =
      std::sqrt(geom.gamma_0 * geom.M_sat * geom.V / (2.0 * geom.epsilon_0 * omega * geom.a * geom.b));
  const double phase = pi * geom.x_pos / geom.a;
  return prefactor * ((pi / geom.a) * std::cos(phase) - k_dir * std::sin(phase));
}

double te10_coupling(const WaveguideGeometry& geom, double omega, Direction direction) {
  const double g = te10_amplitude(geom, omega, direction);
  return g * g;
}

double kerr_coefficient(const WaveguideGeometry& geom) {
  geom.validate();
  return std::abs(geom.mu_0 * geom.K_an * geom.gamma_0 * geom.gamma_0 /
                  (geom.M_sat * geom.M_sat * geom.V));
}

double thermal_occupation(double omega_m, double T) {
  if (T < 0.0 || !(omega_m > 0.0)) {
    throw std::invalid_argument("thermal occupation needs T >= 0 and omega_m > 0");
  }
  if (T == 0.0) {
    return 0.0;
  }
  return 1.0 / std::expm1(hbar * omega_m / (k_boltzmann * T));
}

double amplitude_residual(const SystemParams& params, const DriveConfig& drives,
                          const std::array<complexd, 2>& amplitude) {
  const auto mapped = amplitude_map(params, drives, amplitude);
  const std::array<complexd, 2> diff{amplitude[0] - mapped[0], amplitude[1] - mapped[1]};
  const double scale = pair_norm(amplitude);
  return scale > 0.0 ? pair_norm(diff) / scale : pair_norm(diff);
}

SteadyAmplitudes steady_amplitudes(const SystemParams& params, const DriveConfig& drives,
                                   const SteadyStateOptions& options) {
  params.validate();
  std::array<complexd, 2> m = options.initial;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const auto mapped = amplitude_map(params, drives, m);
    std::array<complexd, 2> next;
    for (int j = 0; j < 2; ++j) {
      next[j] = (1.0 - options.relaxation) * m[j] + options.relaxation * mapped[j];
    }
    const std::array<complexd, 2> step{next[0] - m[0], next[1] - m[1]};
    const double change = pair_norm(step);
    const double scale = pair_norm(next);
    m = next;
    if (change <= options.tolerance * scale || scale == 0.0) {
      return {m, it, amplitude_residual(params, drives, m)};
    }
  }
  const double residual = amplitude_residual(params, drives, m);
  throw ConvergenceError(
      fmt::format("steady amplitudes did not converge in {} iterations (residual {:.3e})",
                  options.max_iterations, residual),
      m, residual);
}

Linearization linearize(const SystemParams& params, const DriveConfig& drives,
                        const SteadyAmplitudes& amplitudes) {
  Linearization out{params, {0.0, 0.0}};
  for (int j = 0; j < 2; ++j) {
    auto& mode = out.params.mode(j);
    const complexd alpha = amplitudes.amplitude[j];
    const double population = std::norm(alpha);
    mode.K_tilde = mode.K_kerr * population;
    mode.Delta = (mode.omega_m - drives.omega_d) + 4.0 * mode.K_kerr * population;
    out.squeezing_phase[j] = population > 0.0 ? std::arg(alpha * alpha) : 0.0;
  }
  return out;
}

MpaCalibration calibrate_mpa(const SystemParams& params, const MpaTarget& target,
                             double omega_d) {
  params.validate();
  if (target.K_tilde < 0.0) {
    throw std::invalid_argument("MPA target K_tilde must be non-negative");
  }
  const std::array<double, 2> k_target{
      target.K_tilde, target.kind == MpaKind::symmetric ? target.K_tilde : 0.0};

  MpaCalibration out;
  out.params = params;
  out.drives.omega_d = omega_d;

  // Real positive mean fields with |α_j|² = K̃_j / K_j; the bias retuning
  // δ_j = Δ_j − 4K_j|α_j|² keeps the requested effective detuning.
  std::array<complexd, 2> alpha{};
  for (int j = 0; j < 2; ++j) {
    auto& mode = out.params.mode(j);
    if (k_target[j] > 0.0 && !(mode.K_kerr > 0.0)) {
      throw std::domain_error(
          fmt::format("infeasible MPA target: mode {} has no Kerr nonlinearity", j + 1));
    }
    const double population = k_target[j] > 0.0 ? k_target[j] / mode.K_kerr : 0.0;
    alpha[j] = std::sqrt(population);
    const double detuning = mode.Delta - 4.0 * mode.K_kerr * population;
    mode.omega_m = omega_d + detuning;
    if (!(mode.omega_m > 0.0)) {
      throw std::domain_error("infeasible MPA target: retuned magnon frequency is not positive");
    }
  }

  const complexd i(0.0, 1.0);
  const complexd phase = std::exp(i * params.coupling.kd);
  const double gamma_in[2] = {params.coupling.gamma_L, params.coupling.gamma_R};
  for (int j = 0; j < 2; ++j) {
    const auto& mode = out.params.mode(j);
    const double detuning = mode.omega_m - omega_d;
    const complexd denom = out.params.effective_linewidth(j) +
                           i * (detuning + 2.0 * mode.K_kerr * std::norm(alpha[j]));
    const complexd drive = alpha[j] * denom + gamma_in[j] * alpha[1 - j] * phase;
    out.drives.amp[j] = std::abs(drive);
    out.drives.phase[j] = out.drives.amp[j] > 0.0 ? std::arg(drive) : 0.0;
  }

  SteadyStateOptions seeded;
  seeded.initial = alpha;
  out.amplitudes = steady_amplitudes(out.params, out.drives, seeded);
  const auto lin = linearize(out.params, out.drives, out.amplitudes);
  const double scale = std::max(target.K_tilde, 1e-300);
  for (int j = 0; j < 2; ++j) {
    const double err = std::abs(lin.params.mode(j).K_tilde - k_target[j]) / scale;
    if (target.K_tilde > 0.0 && err > 1e-6) {
      throw std::domain_error(fmt::format(
          "infeasible MPA target: the calibrated fixed point is not attracting "
          "(mode {} K_tilde error {:.3e})",
          j + 1, err));
    }
  }
  out.params.mode_1.K_tilde = k_target[0];
  out.params.mode_2.K_tilde = k_target[1];
  return out;
}

}  // namespace chiralmag
