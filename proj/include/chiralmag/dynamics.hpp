#pragma once

#include "chiralmag/matrices.hpp"
#include "chiralmag/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace chiralmag {

/// Raised when a solve needs a Hurwitz matrix and did not get one.
class UnstableError : public std::runtime_error {
 public:
  UnstableError(const std::string& what, VectorXcd spectrum)
      : std::runtime_error(what), spectrum(std::move(spectrum)) {}
  VectorXcd spectrum;
};

/// Raised by the Riccati integrators when σ blows up or never settles.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Eigensystem {
  VectorXcd values;
  MatrixXcd vectors;
};

/// Real QR, falling back to the complex solver when it does not converge.
template <typename Derived>
Eigensystem eigensystem(const Eigen::MatrixBase<Derived>& A, bool compute_vectors) {
  const MatrixXd Ad = A.template cast<double>();
  Eigen::EigenSolver<MatrixXd> real(Ad, compute_vectors);
  if (real.info() == Eigen::Success) {
    return {real.eigenvalues(), compute_vectors ? MatrixXcd(real.eigenvectors()) : MatrixXcd()};
  }
  const MatrixXcd Ac = Ad.template cast<complexd>();
  Eigen::ComplexEigenSolver<MatrixXcd> cplx(Ac, compute_vectors);
  if (cplx.info() != Eigen::Success) {
    throw std::runtime_error("eigenvalue iteration did not converge");
  }
  return {cplx.eigenvalues(), compute_vectors ? cplx.eigenvectors() : MatrixXcd()};
}

template <typename Derived>
VectorXcd spectrum(const Eigen::MatrixBase<Derived>& A) {
  return eigensystem(A, false).values;
}

template <typename Derived>
double max_real_eigenvalue(const Eigen::MatrixBase<Derived>& A) {
  return spectrum(A).real().maxCoeff();
}

/// Solves A σ + σ Aᵀ + D = 0 through (I⊗A + A⊗I) vec σ = −vec D.
template <typename DerivedA, typename DerivedD>
MatrixX<typename DerivedA::Scalar> solve_lyapunov(const Eigen::MatrixBase<DerivedA>& A,
                                                  const Eigen::MatrixBase<DerivedD>& D) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index n = A.rows();
  if (A.cols() != n || D.rows() != n || D.cols() != n) {
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  }
  const VectorXcd eig = spectrum(A);
  if (!(eig.real().maxCoeff() < 0.0)) {
    throw UnstableError(
        fmt::format("solve_lyapunov: drift not Hurwitz (max Re eig = {:.6g})", eig.real().maxCoeff()),
        eig);
  }

  MatrixX<Scalar> kron = MatrixX<Scalar>::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    kron.block(j * n, j * n, n, n) += A;
    for (Eigen::Index i = 0; i < n; ++i) {
      kron.block(j * n, i * n, n, n).diagonal().array() += A(j, i);
    }
  }
  MatrixX<Scalar> rhs = -D;
  const VectorX<Scalar> vec = kron.fullPivLu().solve(rhs.reshaped());
  MatrixX<Scalar> sigma = vec.reshaped(n, n);
  return (sigma + sigma.transpose()) / Scalar(2);
}

template <typename DerivedA, typename DerivedS, typename DerivedD>
double lyapunov_residual(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedS>& sigma,
                         const Eigen::MatrixBase<DerivedD>& D) {
  const auto r = (A * sigma + sigma * A.transpose() + D).eval();
  return static_cast<double>(r.norm() / D.norm());
}

/// dσ/dt = Aσ + σAᵀ + D − Σ_λ v_λ v_λᵀ with v_λ the channel innovation vector.
template <typename Scalar, typename Derived>
Matrix4<Scalar> riccati_rhs(const SystemMatrices<Scalar>& mats, const Eigen::MatrixBase<Derived>& sigma) {
  Matrix4<Scalar> out = mats.drift * sigma + sigma * mats.drift.transpose() + mats.diffusion;
  for (int l = 0; l < 2; ++l) {
    const Vector4<Scalar> v = mats.innovation_vector(sigma, l);
    out.noalias() -= v * v.transpose();
  }
  return out;
}

template <typename Scalar>
Matrix4<Scalar> riccati_step(const SystemMatrices<Scalar>& mats, const Matrix4<Scalar>& sigma, Scalar dt) {
  const Matrix4<Scalar> k1 = riccati_rhs(mats, sigma);
  const Matrix4<Scalar> k2 = riccati_rhs(mats, sigma + dt / 2 * k1);
  const Matrix4<Scalar> k3 = riccati_rhs(mats, sigma + dt / 2 * k2);
  const Matrix4<Scalar> k4 = riccati_rhs(mats, sigma + dt * k3);
  Matrix4<Scalar> next = sigma + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  return (next + next.transpose()) / Scalar(2);
}

/// Largest |A_ii|, i.e. Γ̃_max for drift matrices built from SystemParams.
template <typename Scalar>
double rate_scale(const SystemMatrices<Scalar>& mats) {
  return static_cast<double>(mats.drift.diagonal().cwiseAbs().maxCoeff());
}

template <typename Scalar>
double slowest_rate(const SystemMatrices<Scalar>& mats) {
  return static_cast<double>(mats.drift.diagonal().cwiseAbs().minCoeff());
}

template <typename Scalar = double>
struct RiccatiTrajectory {
  std::vector<double> times;
  std::vector<Matrix4<Scalar>> sigma;
};

inline constexpr double divergence_norm = 1e12;

/// Fixed-step RK4 of the conditional covariance from sigma0 to t_final,
/// storing every `sample_every`-th step plus the endpoint.
template <typename Scalar>
RiccatiTrajectory<Scalar> integrate_riccati(const SystemMatrices<Scalar>& mats,
                                            const Matrix4<Scalar>& sigma0, double dt, double t_final,
                                            int sample_every = 1) {
  if (!(dt > 0.0) || !(t_final >= 0.0) || sample_every < 1) {
    throw std::invalid_argument("integrate_riccati: need dt > 0, t_final >= 0, sample_every >= 1");
  }
  const auto steps = static_cast<long long>(std::llround(t_final / dt));
  RiccatiTrajectory<Scalar> out;
  Matrix4<Scalar> sigma = (sigma0 + sigma0.transpose()) / Scalar(2);
  out.times.push_back(0.0);
  out.sigma.push_back(sigma);
  for (long long s = 1; s <= steps; ++s) {
    sigma = riccati_step(mats, sigma, Scalar(dt));
    if (!(sigma.norm() < divergence_norm)) {
      throw DivergenceError(fmt::format("conditional dynamics unstable (t = {:.6g})", s * dt));
    }
    if (s % sample_every == 0 || s == steps) {
      out.times.push_back(s * dt);
      out.sigma.push_back(sigma);
    }
  }
  return out;
}

struct RiccatiOptions {
  /// Step as a fraction of 1/Γ̃_max.
  double dt_scale = 1e-2;
  /// Stop once ‖dσ/dt‖_F < tolerance · (Γ̃_max · max(1, ‖σ‖_F) + Σ_λ‖g_λ‖² ‖σ‖_F²).
  double tolerance = 1e-12;
  /// Give up after t_max_scale / Γ̃_min.
  double t_max_scale = 1e4;
  /// Give up after this many RK4 steps.
  long long max_steps = 4'000'000;
};

template <typename Scalar = double>
struct ConditionalSteadyState {
  Matrix4<Scalar> sigma;
  double time = 0.0;
  double residual = 0.0;  // ‖dσ/dt‖_F / (Γ̃_max · max(1, ‖σ‖_F) + Σ_λ‖g_λ‖² ‖σ‖_F²)
};

/// Fixed point of the conditional covariance equation, reached by marching
/// from the unconditional steady state (vacuum if the drift is unstable).
/// Steps are dt_scale/Γ̃_max, shortened while 2‖σ‖Σ_λ‖g_λ‖² exceeds 0.5/step.
/// Throws DivergenceError past t_max_scale/Γ̃_min or max_steps.
template <typename Scalar>
ConditionalSteadyState<Scalar> steady_conditional(const SystemMatrices<Scalar>& mats,
                                                  const RiccatiOptions& options = {}) {
  const double rate = rate_scale(mats);
  const double dt = options.dt_scale / rate;
  const double t_max = options.t_max_scale / slowest_rate(mats);

  Matrix4<Scalar> sigma = Matrix4<Scalar>::Identity() / Scalar(2);
  if (max_real_eigenvalue(mats.drift) < 0.0) {
    sigma = solve_lyapunov(mats.drift, mats.diffusion);
  }

  double gain_norm = 0.0;
  for (int l = 0; l < 2; ++l) gain_norm += static_cast<double>(mats.gain(l).squaredNorm());

  auto residual_of = [&](const Matrix4<Scalar>& s) {
    const double norm = static_cast<double>(s.norm());
    return static_cast<double>(riccati_rhs(mats, s).norm()) / (rate * std::max(1.0, norm) + gain_norm * norm * norm);
  };

  double t = 0.0;
  long long steps = 0;
  double residual = residual_of(sigma);
  while (residual >= options.tolerance) {
    if (steps >= options.max_steps) {
      throw DivergenceError(fmt::format(
          "conditional steady state not reached within {} steps (residual {:.3e})", steps, residual));
    }
    if (t > t_max) {
      throw DivergenceError(fmt::format(
          "conditional steady state not reached by t = {:.6g} s (residual {:.3e})", t_max, residual));
    }
    const double stiffness = 2.0 * static_cast<double>(sigma.norm()) * gain_norm;
    const double h = stiffness > 0.0 ? std::min(dt, 0.5 / stiffness) : dt;
    for (int s = 0; s < 64; ++s) {
      sigma = riccati_step(mats, sigma, Scalar(h));
    }
    t += 64 * h;
    steps += 64;
    if (!(sigma.norm() < divergence_norm)) {
      throw DivergenceError(fmt::format("conditional dynamics unstable (t = {:.6g} s)", t));
    }
    residual = residual_of(sigma);
  }
  return {sigma, t, residual};
}

struct StabilityReport {
  bool unconditional_stable = false;
  bool conditional_stable = false;
  VectorXcd spectrum;
  /// (ξ, x) with Re ξ ≥ 0, Ãx ≈ ξx and x in the kernel of every measured channel.
  std::vector<std::pair<complexd, VectorXcd>> offending_modes;
};

/// Unconditional: A Hurwitz. Conditional: (Ã, C) detectable with
/// Ã = A + Σ_λ F_λ g_λᵀ, via the rank of [Ã − ξ; C_Lᵀ; C_Rᵀ] at each Re ξ ≥ 0.
template <typename Scalar>
StabilityReport check_stability(const SystemMatrices<Scalar>& mats, double detect_tol = 1e-7) {
  StabilityReport report;
  report.spectrum = spectrum(mats.drift);
  report.unconditional_stable = report.spectrum.real().maxCoeff() < 0.0;

  Matrix4<Scalar> filtered = mats.drift;
  for (int l = 0; l < 2; ++l) {
    filtered += mats.meas_F[l] * mats.gain(l).transpose();
  }
  const MatrixXcd Af = filtered.template cast<double>().template cast<complexd>();
  const double scale = Af.norm();
  const VectorXcd xi = spectrum(filtered);
  std::vector<complexd> tested;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    if (xi(i).real() < 0.0) continue;
    const bool repeat = std::any_of(tested.begin(), tested.end(), [&](complexd z) {
      return std::abs(z - xi(i)) <= 1e-9 * scale;
    });
    if (repeat) continue;
    tested.push_back(xi(i));

    MatrixXcd pbh = MatrixXcd::Zero(6, 4);
    pbh.topRows(4) = (Af - xi(i) * MatrixXcd::Identity(4, 4)) / scale;
    for (int l = 0; l < 2; ++l) {
      const Vector4d c = mats.meas_C[l].template cast<double>();
      if (c.norm() > 0.0) pbh.row(4 + l) = (c / c.norm()).transpose().template cast<complexd>();
    }
    Eigen::JacobiSVD<MatrixXcd> svd(pbh, Eigen::ComputeFullV);
    if (svd.singularValues()(3) < detect_tol) {
      report.offending_modes.emplace_back(xi(i), svd.matrixV().col(3));
    }
  }
  report.conditional_stable = report.offending_modes.empty();
  return report;
}

/// Which family of separations: kd = sπ or kd = (s + 1/2)π.
enum class KdCase { integer_pi, half_integer_pi };

/// Closed-form MPA stability thresholds for equal intrinsic damping,
/// parametrised by κ, Γ_R and the chirality D.
inline double threshold_K(const SystemParams& params, MpaKind kind, KdCase kd_case) {
  params.validate();
  if (params.mode_1.kappa != params.mode_2.kappa) {
    throw std::invalid_argument("analytic threshold requires equal damping");
  }
  const double kappa = params.mode_1.kappa;
  const double gR = params.coupling.gamma_R;
  const double D = chirality(params.coupling);
  const double cascade = (1.0 - D) * gR * gR / (kappa * (1.0 + D) + 2.0 * gR);

  if (kd_case == KdCase::integer_pi) {
    if (kind == MpaKind::symmetric) {
      return kappa / 4.0 + (1.0 - std::sqrt(1.0 - D * D)) * gR / (2.0 * (1.0 + D));
    }
    return kappa / 4.0 + gR / (2.0 * (1.0 + D)) - cascade;
  }
  if (kind == MpaKind::symmetric) {
    const double lead = kappa * (1.0 + D) + 2.0 * gR;
    return std::sqrt(lead * lead + 4.0 * (1.0 - D * D) * gR * gR) / (4.0 * (1.0 + D));
  }
  return kappa / 4.0 + gR / (2.0 * (1.0 + D)) + cascade;
}

/// Copy of params with the MPA pattern applied: K̃1 = K̃2 = K (symmetric)
/// or K̃1 = K, K̃2 = 0 (asymmetric).
inline SystemParams with_mpa(SystemParams params, MpaKind kind, double K_tilde) {
  params.mode_1.K_tilde = K_tilde;
  params.mode_2.K_tilde = kind == MpaKind::symmetric ? K_tilde : 0.0;
  return params;
}

/// First K̃ at which the drift stops being Hurwitz, found by scanning
/// [0, k_max] and bisecting the bracket. Returns +inf if none is found.
inline double numeric_threshold_K(const SystemParams& params, MpaKind kind, double k_max,
                                  int scan_points = 4000) {
  auto unstable = [&](double K) {
    return max_real_eigenvalue(build_drift(with_mpa(params, kind, K))) >= 0.0;
  };
  if (unstable(0.0)) return 0.0;
  double lo = 0.0;
  double hi = -1.0;
  for (int i = 1; i <= scan_points; ++i) {
    const double K = k_max * i / scan_points;
    if (unstable(K)) {
      hi = K;
      break;
    }
    lo = K;
  }
  if (hi < 0.0) return std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (unstable(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

template <typename Scalar = double>
struct EnsembleCovariance {
  Matrix4<Scalar> sigma_bar_e;  // covariance of the conditional means
  Matrix4<Scalar> sigma_e;      // σ_c + σ̄_e
};

/// Steady ensemble covariance under state-based feedback:
/// Ā σ̄_e + σ̄_e Āᵀ + Σ_λ v_λ v_λᵀ = 0 with v_λ evaluated at σ_c.
template <typename Scalar>
EnsembleCovariance<Scalar> ensemble_covariance(const SystemMatrices<Scalar>& mats,
                                               const Matrix4<Scalar>& sigma_c,
                                               const FeedbackGains& gains) {
  gains.validate();
  const Matrix4<Scalar> closed = apply_feedback(mats.drift, gains);
  Matrix4<Scalar> source = Matrix4<Scalar>::Zero();
  for (int l = 0; l < 2; ++l) {
    const Vector4<Scalar> v = mats.innovation_vector(sigma_c, l);
    source += v * v.transpose();
  }
  EnsembleCovariance<Scalar> out;
  if (source.isZero(0)) {
    if (!(max_real_eigenvalue(closed) < 0.0)) {
      throw UnstableError("ensemble_covariance: feedback drift not Hurwitz", spectrum(closed));
    }
    out.sigma_bar_e.setZero();
  } else {
    out.sigma_bar_e = solve_lyapunov(closed, source);
  }
  out.sigma_e = sigma_c + out.sigma_bar_e;
  return out;
}

}  // namespace chiralmag
