#pragma once

#include <Eigen/Dense>

#include <complex>
#include <numbers>

namespace chiralmag {

template <typename Scalar, int R, int C>
using Matrix = Eigen::Matrix<Scalar, R, C>;

template <typename Scalar>
using Matrix2 = Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Matrix4 = Matrix<Scalar, 4, 4>;
template <typename Scalar>
using MatrixX = Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector4 = Matrix<Scalar, 4, 1>;
template <typename Scalar>
using VectorX = Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix2d = Matrix2<double>;
using Matrix4d = Matrix4<double>;
using MatrixXd = MatrixX<double>;
using Vector4d = Vector4<double>;
using VectorXd = VectorX<double>;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;
using complexd = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Angular frequency (rad/s) from a frequency in MHz of ω/2π.
constexpr double from_mhz(double mhz) { return two_pi * 1e6 * mhz; }
constexpr double to_mhz(double rad_per_s) { return rad_per_s / (two_pi * 1e6); }

/// Symplectic form ⊕_j [[0,1],[-1,0]] over (x1,p1,...,xN,pN).
template <typename Scalar = double>
MatrixX<Scalar> symplectic_form(Eigen::Index modes) {
  MatrixX<Scalar> omega = MatrixX<Scalar>::Zero(2 * modes, 2 * modes);
  for (Eigen::Index j = 0; j < modes; ++j) {
    omega(2 * j, 2 * j + 1) = Scalar(1);
    omega(2 * j + 1, 2 * j) = Scalar(-1);
  }
  return omega;
}

}  // namespace chiralmag
