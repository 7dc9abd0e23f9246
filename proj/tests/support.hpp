#pragma once

#include "chiralmag/matrices.hpp"
#include "chiralmag/model.hpp"
#include "chiralmag/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

namespace testing {

using namespace chiralmag;

inline Matrix4d two_mode_squeezed(double r) {
  const double c = std::cosh(2.0 * r) / 2.0;
  const double s = std::sinh(2.0 * r) / 2.0;
  Matrix4d sigma;
  sigma << c, 0, s, 0,
           0, c, 0, -s,
           s, 0, c, 0,
           0, -s, 0, c;
  return sigma;
}

inline Matrix4d thermal(double n1, double n2) {
  Vector4d d(n1 + 0.5, n1 + 0.5, n2 + 0.5, n2 + 0.5);
  return d.asDiagonal();
}

/// exp(Ω H) for a random symmetric H: a random symplectic matrix.
inline MatrixXd random_symplectic(std::mt19937_64& rng, Eigen::Index modes, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd h(2 * modes, 2 * modes);
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = normal(rng);
  }
  h = (h + h.transpose()).eval() / 2.0;
  const MatrixXd generator = symplectic_form<double>(modes) * h;
  return generator.exp();
}

/// S diag(ν) Sᵀ with ν_j ≥ 1/2: always physical.
inline Matrix4d random_state(std::mt19937_64& rng, double scale = 0.6) {
  std::uniform_real_distribution<double> occ(0.0, 1.5);
  const Matrix4d S = random_symplectic(rng, 2, scale);
  const Matrix4d nu = thermal(occ(rng), occ(rng));
  Matrix4d sigma = S * nu * S.transpose();
  return (sigma + sigma.transpose()) / 2.0;
}

/// ω_m/2π = 10 GHz, κ/2π = 1 MHz, Γ_R/2π = 10 MHz, Δ = 0, n̄ = 0.
inline SystemParams paper_params(double D, double kd, double K1 = 0.0, double K2 = 0.0) {
  SystemParams p;
  p.coupling = WaveguideCoupling::from_chirality(from_mhz(10.0), D, kd);
  p.mode_1.K_tilde = K1;
  p.mode_2.K_tilde = K2;
  return p;
}

inline SystemParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SystemParams p;
  for (int j = 0; j < 2; ++j) {
    auto& m = p.mode(j);
    m.kappa = from_mhz(0.2 + 2.0 * u(rng));
    m.n_bar = 2.0 * u(rng);
    m.Delta = from_mhz(4.0 * (u(rng) - 0.5));
    m.K_tilde = from_mhz(0.5 * u(rng));
  }
  p.coupling.gamma_L = from_mhz(20.0 * u(rng));
  p.coupling.gamma_R = from_mhz(20.0 * u(rng));
  p.coupling.kd = two_pi * u(rng);
  return p;
}

inline MeasurementConfig paper_measurement() { return {1.0, 1.0, 0.5 * pi, 0.0}; }

}  // namespace testing
