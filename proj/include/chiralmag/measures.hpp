#pragma once

#include "chiralmag/types.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace chiralmag {

/// Thrown for covariance matrices violating σ + iΩ/2 ⪰ 0 (beyond roundoff).
class UnphysicalStateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double physicality_tol = 1e-9;
inline constexpr double discriminant_clamp = 1e-12;

/// Smallest eigenvalue of the Hermitian matrix σ + iΩ/2.
template <typename Derived>
double min_uncertainty_eigenvalue(const Eigen::MatrixBase<Derived>& sigma) {
  const Eigen::Index modes = sigma.rows() / 2;
  MatrixXcd h = sigma.template cast<double>().template cast<complexd>();
  h += complexd(0.0, 0.5) * symplectic_form<double>(modes).template cast<complexd>();
  return Eigen::SelfAdjointEigenSolver<MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

template <typename Derived>
bool is_physical(const Eigen::MatrixBase<Derived>& sigma, double tol = physicality_tol) {
  return (sigma - sigma.transpose()).norm() <= 1e-12 * std::max(1.0, double(sigma.norm())) &&
         min_uncertainty_eigenvalue(sigma) >= -tol;
}

template <typename Derived>
void require_physical(const Eigen::MatrixBase<Derived>& sigma, const char* where) {
  if (!is_physical(sigma)) {
    throw UnphysicalStateError(fmt::format("{}: covariance matrix is not physical (min eig of "
                                           "sigma + i Omega/2 = {:.3e})",
                                           where, min_uncertainty_eigenvalue(sigma)));
  }
}

/// σ with p₂ → −p₂ (the last quadrature flipped).
template <typename Derived>
MatrixX<typename Derived::Scalar> partial_transpose(const Eigen::MatrixBase<Derived>& sigma) {
  MatrixX<typename Derived::Scalar> out = sigma;
  const Eigen::Index last = out.rows() - 1;
  out.row(last) *= -1;
  out.col(last) *= -1;
  return out;
}

/// Symplectic eigenvalues (ascending): the moduli of the eigenvalues of iΩσ,
/// one per ± pair.
template <typename Derived>
std::vector<double> symplectic_spectrum(const Eigen::MatrixBase<Derived>& sigma) {
  const Eigen::Index modes = sigma.rows() / 2;
  const MatrixXcd m = complexd(0.0, 1.0) * symplectic_form<double>(modes).template cast<complexd>() *
                      sigma.template cast<double>().template cast<complexd>();
  Eigen::ComplexEigenSolver<MatrixXcd> solver(m, false);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("symplectic spectrum: eigenvalue iteration did not converge");
  }
  const VectorXcd eig = solver.eigenvalues();
  std::vector<double> moduli(eig.size());
  for (Eigen::Index i = 0; i < eig.size(); ++i) moduli[i] = std::abs(eig(i));
  std::sort(moduli.begin(), moduli.end());
  std::vector<double> out;
  for (std::size_t i = 0; i < moduli.size(); i += 2) {
    out.push_back(0.5 * (moduli[i] + moduli[i + 1]));
  }
  return out;
}

/// Smallest symplectic eigenvalue of the partially transposed state.
template <typename Derived>
double min_pt_symplectic(const Eigen::MatrixBase<Derived>& sigma) {
  return symplectic_spectrum(partial_transpose(sigma)).front();
}

/// Logarithmic negativity (nats) of a two-mode state from its block invariants.
template <typename Derived>
double log_negativity(const Eigen::MatrixBase<Derived>& sigma) {
  require_physical(sigma, "log_negativity");
  const Matrix4d s = sigma.template cast<double>();
  const double det1 = s.block<2, 2>(0, 0).determinant();
  const double det2 = s.block<2, 2>(2, 2).determinant();
  const double det12 = s.block<2, 2>(0, 2).determinant();
  const double det_full = s.determinant();
  const double seralian = det1 + det2 - 2.0 * det12;
  double disc = seralian * seralian - 4.0 * det_full;
  if (disc < 0.0) {
    if (disc < -discriminant_clamp * std::max(1.0, seralian * seralian)) {
      throw UnphysicalStateError("log_negativity: negative discriminant");
    }
    disc = 0.0;
  }
  const double nu = std::sqrt(std::max(0.0, (seralian - std::sqrt(disc)) / 2.0));
  if (nu == 0.0) {
    throw UnphysicalStateError("log_negativity: vanishing symplectic eigenvalue");
  }
  return std::max(0.0, -std::log(2.0 * nu));
}

/// Who steers whom. `first_to_second` is S_{2|1} (mode 1 steers mode 2),
/// built from det σ₁; `second_to_first` is S_{1|2}, built from det σ₂.
enum class SteeringDirection { first_to_second, second_to_first };

template <typename Derived>
double steering(const Eigen::MatrixBase<Derived>& sigma, SteeringDirection direction) {
  const Matrix4d s = sigma.template cast<double>();
  const double det_full = s.determinant();
  if (!(det_full > 0.0)) {
    throw UnphysicalStateError("steering: det sigma must be positive");
  }
  const int block = direction == SteeringDirection::first_to_second ? 0 : 2;
  const double det_local = s.block<2, 2>(block, block).determinant();
  return std::max(0.0, 0.5 * std::log(det_local / (4.0 * det_full)));
}

/// 1/(2^N √det σ).
template <typename Derived>
double purity(const Eigen::MatrixBase<Derived>& sigma) {
  const double det = static_cast<double>(sigma.determinant());
  if (!(det > 0.0)) {
    throw UnphysicalStateError("purity: det sigma must be positive");
  }
  return 1.0 / (std::pow(2.0, double(sigma.rows() / 2)) * std::sqrt(det));
}

/// Uhlmann fidelity of two zero-mean two-mode Gaussian states.
template <typename DerivedA, typename DerivedB>
double fidelity(const Eigen::MatrixBase<DerivedA>& sigma_a, const Eigen::MatrixBase<DerivedB>& sigma_b) {
  require_physical(sigma_a, "fidelity");
  require_physical(sigma_b, "fidelity");
  const Matrix4d a = sigma_a.template cast<double>();
  const Matrix4d b = sigma_b.template cast<double>();
  const Matrix4d omega = symplectic_form<double>(2);
  const Eigen::Matrix4cd i_omega = complexd(0.0, 0.5) * omega.cast<complexd>();

  auto clamp_root = [](double value, double scale, const char* name) {
    if (value < 0.0) {
      if (value < -1e-10 * std::max(1.0, scale)) {
        throw UnphysicalStateError(fmt::format("fidelity: negative radicand in {}", name));
      }
      return 0.0;
    }
    return std::sqrt(value);
  };

  const double theta = 16.0 * (omega * a * omega * b - Matrix4d::Identity() / 4.0).determinant();
  const complexd lambda_c = 16.0 * (a.cast<complexd>() + i_omega).determinant() *
                            (b.cast<complexd>() + i_omega).determinant();
  const double delta = (a + b).determinant();
  const double root_theta = clamp_root(theta, 1.0, "Theta");
  const double root_lambda = clamp_root(lambda_c.real(), 1.0, "Lambda");
  const double sum = root_theta + root_lambda;
  const double tail = clamp_root(sum * sum - delta, sum * sum, "(sqrt Theta + sqrt Lambda)^2 - Delta");
  const double value = 1.0 / (sum - tail);
  if (!(value >= 0.0 && value <= 1.0 + 1e-9)) {
    throw UnphysicalStateError(fmt::format("fidelity: value {:.6g} outside [0, 1]", value));
  }
  return std::min(value, 1.0);
}

struct MeasureSet {
  double E_n = 0.0;
  double S_12 = 0.0;  // mode 2 steers mode 1
  double S_21 = 0.0;  // mode 1 steers mode 2
  double purity = 0.0;
  double min_symplectic = 0.0;
};

template <typename Derived>
MeasureSet measure_set(const Eigen::MatrixBase<Derived>& sigma) {
  MeasureSet out;
  out.E_n = log_negativity(sigma);
  out.S_12 = steering(sigma, SteeringDirection::second_to_first);
  out.S_21 = steering(sigma, SteeringDirection::first_to_second);
  out.purity = purity(sigma);
  out.min_symplectic = min_pt_symplectic(sigma);
  return out;
}

}  // namespace chiralmag
