#pragma once

#include "chiralmag/model.hpp"
#include "chiralmag/types.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace chiralmag {

/// Sign of the sin(kd) entry of the inter-mode diffusion block.
/// `consistent` is the one generated by the collective dissipators and keeps
/// vacuum stationary for a passive system; `printed` flips it.
enum class DiffusionSign { consistent, printed };

/// Gain multiplying σ in the innovation vector σ·g_λ − F_λ.
/// `consistent`: g_λ = √2 C_λ, the same gain that appears in the homodyne
/// current. `printed`: g_λ = C_λ.
enum class InnovationConvention { consistent, printed };

struct MatrixOptions {
  DiffusionSign diffusion_sign = DiffusionSign::consistent;
  InnovationConvention innovation = InnovationConvention::consistent;
  /// Merge both channels into one vector C_L + C_R driven by a single Wiener process.
  bool flatten_channels = false;
};

enum Channel : int { left = 0, right = 1 };

struct MeasurementConfig {
  double eta_L = 0.0;
  double eta_R = 0.0;
  double theta_L = 0.0;
  double theta_R = 0.0;

  void validate() const {
    if (eta_L < 0.0 || eta_L > 1.0 || eta_R < 0.0 || eta_R > 1.0) {
      throw std::invalid_argument("measurement efficiency outside [0, 1]");
    }
  }
  bool active() const { return eta_L > 0.0 || eta_R > 0.0; }
};

/// G_{λj}^{x,p}, indexed [λ][j] with λ = 0 (L), 1 (R) and j = 0, 1 for the spheres.
struct FeedbackGains {
  std::array<std::array<double, 2>, 2> x{};
  std::array<std::array<double, 2>, 2> p{};

  /// G_{R1}^{x,p} = g1, G_{R2}^{x,p} = g2, left gains zero.
  static FeedbackGains right_only(double g1, double g2) {
    FeedbackGains gains;
    gains.x[right] = {g1, g2};
    gains.p[right] = {g1, g2};
    return gains;
  }

  bool is_zero() const {
    for (int l = 0; l < 2; ++l) {
      for (int j = 0; j < 2; ++j) {
        if (x[l][j] != 0.0 || p[l][j] != 0.0) return false;
      }
    }
    return true;
  }

  /// Negative gains anti-damp the means; allowed but worth flagging.
  bool has_negative() const {
    for (int l = 0; l < 2; ++l) {
      for (int j = 0; j < 2; ++j) {
        if (x[l][j] < 0.0 || p[l][j] < 0.0) return true;
      }
    }
    return false;
  }

  void validate() const {
    for (int l = 0; l < 2; ++l) {
      for (int j = 0; j < 2; ++j) {
        if (!std::isfinite(x[l][j]) || !std::isfinite(p[l][j])) {
          throw std::invalid_argument("feedback gains must be finite");
        }
      }
    }
  }
};

template <typename Scalar = double>
struct SystemMatrices {
  Matrix4<Scalar> drift = Matrix4<Scalar>::Zero();
  Matrix4<Scalar> diffusion = Matrix4<Scalar>::Zero();
  std::array<Vector4<Scalar>, 2> meas_C{Vector4<Scalar>::Zero(), Vector4<Scalar>::Zero()};
  std::array<Vector4<Scalar>, 2> meas_F{Vector4<Scalar>::Zero(), Vector4<Scalar>::Zero()};
  InnovationConvention innovation = InnovationConvention::consistent;
  bool flattened = false;

  Vector4<Scalar> gain(int channel) const {
    return innovation == InnovationConvention::consistent
               ? Vector4<Scalar>(Scalar(std::sqrt(2.0)) * meas_C[channel])
               : meas_C[channel];
  }

  /// σ g_λ − F_λ: the noise loading of channel λ on the conditional means.
  template <typename Derived>
  Vector4<Scalar> innovation_vector(const Eigen::MatrixBase<Derived>& sigma, int channel) const {
    return sigma * gain(channel) - meas_F[channel];
  }

  bool measured() const {
    return !meas_C[0].isZero(0) || !meas_C[1].isZero(0);
  }
};

namespace detail {

/// −[[Re c, −Im c], [Im c, Re c]]: quadrature block of d m_i = −c m_l.
template <typename Scalar>
Matrix2<Scalar> coupling_block(std::complex<double> c) {
  Matrix2<Scalar> block;
  block << Scalar(-c.real()), Scalar(c.imag()), Scalar(-c.imag()), Scalar(-c.real());
  return block;
}

template <typename Scalar>
Matrix2<Scalar> local_block(const MagnonMode& mode, double linewidth) {
  Matrix2<Scalar> block;
  block << Scalar(-linewidth), Scalar(mode.Delta - 2.0 * mode.K_tilde),
      Scalar(-mode.Delta - 2.0 * mode.K_tilde), Scalar(-linewidth);
  return block;
}

}  // namespace detail

template <typename Scalar = double>
Matrix4<Scalar> build_drift(const SystemParams& params) {
  const auto& c = params.coupling;
  const std::complex<double> phase = std::polar(1.0, c.kd);
  Matrix4<Scalar> A;
  A.template block<2, 2>(0, 0) = detail::local_block<Scalar>(params.mode_1, params.effective_linewidth(0));
  A.template block<2, 2>(2, 2) = detail::local_block<Scalar>(params.mode_2, params.effective_linewidth(1));
  A.template block<2, 2>(0, 2) = detail::coupling_block<Scalar>(c.gamma_L * phase);
  A.template block<2, 2>(2, 0) = detail::coupling_block<Scalar>(c.gamma_R * phase);
  return A;
}

template <typename Scalar = double>
Matrix4<Scalar> build_diffusion(const SystemParams& params,
                                DiffusionSign sign = DiffusionSign::consistent) {
  const auto& c = params.coupling;
  const double radiative = 0.5 * (c.gamma_L + c.gamma_R);
  const double d_plus = 0.5 * (c.gamma_L + c.gamma_R) * std::cos(c.kd);
  const double d_minus = (sign == DiffusionSign::consistent ? 0.5 : -0.5) *
                         (c.gamma_R - c.gamma_L) * std::sin(c.kd);

  Matrix4<Scalar> D = Matrix4<Scalar>::Zero();
  for (int j = 0; j < 2; ++j) {
    const auto& mode = params.mode(j);
    D.template block<2, 2>(2 * j, 2 * j).diagonal().setConstant(
        Scalar(mode.kappa * (mode.n_bar + 0.5) + radiative));
  }
  Matrix2<Scalar> cross;
  cross << Scalar(d_plus), Scalar(d_minus), Scalar(-d_minus), Scalar(d_plus);
  D.template block<2, 2>(0, 2) = cross;
  D.template block<2, 2>(2, 0) = cross.transpose();
  return D;
}

template <typename Scalar = double>
struct MeasurementVectors {
  std::array<Vector4<Scalar>, 2> C;
  std::array<Vector4<Scalar>, 2> F;
};

template <typename Scalar = double>
MeasurementVectors<Scalar> build_measurement(const SystemParams& params,
                                             const MeasurementConfig& meas) {
  meas.validate();
  const double kd = params.coupling.kd;
  const double sL = std::sqrt(meas.eta_L * params.coupling.gamma_L);
  const double sR = std::sqrt(meas.eta_R * params.coupling.gamma_R);
  const double tL = meas.theta_L;
  const double tR = meas.theta_R;

  MeasurementVectors<Scalar> out;
  out.C[left] << Scalar(sL * std::cos(tL)), Scalar(-sL * std::sin(tL)),
      Scalar(sL * std::cos(kd + tL)), Scalar(-sL * std::sin(kd + tL));
  out.C[right] << Scalar(sR * std::cos(tR)), Scalar(-sR * std::sin(tR)),
      Scalar(sR * std::cos(kd - tR)), Scalar(sR * std::sin(kd - tR));
  for (int l = 0; l < 2; ++l) {
    out.F[l] = out.C[l] / Scalar(std::sqrt(2.0));
  }
  return out;
}

/// Ā = A − diag(ΣG^x_1, ΣG^p_1, ΣG^x_2, ΣG^p_2), sums over λ.
template <typename Derived>
Matrix4<typename Derived::Scalar> apply_feedback(const Eigen::MatrixBase<Derived>& A,
                                                 const FeedbackGains& gains) {
  using Scalar = typename Derived::Scalar;
  Vector4<Scalar> damping;
  for (int j = 0; j < 2; ++j) {
    damping(2 * j) = Scalar(gains.x[left][j] + gains.x[right][j]);
    damping(2 * j + 1) = Scalar(gains.p[left][j] + gains.p[right][j]);
  }
  Matrix4<Scalar> out = A;
  out.diagonal() -= damping;
  return out;
}

template <typename Scalar = double>
SystemMatrices<Scalar> build_system(const SystemParams& params, const MeasurementConfig& meas,
                                    const MatrixOptions& options = {}) {
  params.validate();
  SystemMatrices<Scalar> out;
  out.drift = build_drift<Scalar>(params);
  out.diffusion = build_diffusion<Scalar>(params, options.diffusion_sign);
  const auto vectors = build_measurement<Scalar>(params, meas);
  out.meas_C = vectors.C;
  out.meas_F = vectors.F;
  out.innovation = options.innovation;
  if (options.flatten_channels) {
    out.meas_C = {vectors.C[left] + vectors.C[right], Vector4<Scalar>::Zero()};
    out.meas_F = {vectors.F[left] + vectors.F[right], Vector4<Scalar>::Zero()};
    out.flattened = true;
  }
  return out;
}

/// N spheres at increasing positions along a chiral waveguide with common
/// Γ_L, Γ_R and wavenumber k.
struct ChainSpec {
  std::vector<MagnonMode> modes;
  std::vector<double> positions;
  double gamma_L = 0.0;
  double gamma_R = 0.0;
  double k = 0.0;

  void validate() const {
    if (modes.empty()) throw std::invalid_argument("chain needs at least one mode");
    if (positions.size() != modes.size()) {
      throw std::invalid_argument("chain needs one position per mode");
    }
    for (std::size_t j = 1; j < positions.size(); ++j) {
      if (!(positions[j] > positions[j - 1])) {
        throw std::invalid_argument("chain positions must be strictly increasing (duplicate or unordered)");
      }
    }
    if (gamma_L < 0.0 || gamma_R < 0.0 || !(gamma_L + gamma_R > 0.0)) {
      throw std::invalid_argument("no waveguide coupling");
    }
    for (const auto& mode : modes) mode.validate();
  }
};

template <typename Scalar = double>
struct ChainMatrices {
  MatrixX<Scalar> drift;
  MatrixX<Scalar> diffusion;
};

/// Drift and diffusion of the N-mode chiral chain. Mode i is driven by
/// every upstream mode l: right-movers from z_l < z_i with amplitude
/// Γ_R e^{ik(z_i−z_l)}, left-movers from z_l > z_i with Γ_L e^{ik(z_l−z_i)}.
/// Each sphere sees half of its own emission (θ(0) = 1/2). Diffusion comes
/// from the collective jump operators M_λ = Σ_j e^{−ik_λ z_j} m_j.
template <typename Scalar = double>
ChainMatrices<Scalar> build_chain(const ChainSpec& spec) {
  spec.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(spec.modes.size());
  ChainMatrices<Scalar> out{MatrixX<Scalar>::Zero(2 * n, 2 * n), MatrixX<Scalar>::Zero(2 * n, 2 * n)};

  const double linewidth_wg = 0.5 * (spec.gamma_L + spec.gamma_R);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& mode = spec.modes[i];
    out.drift.template block<2, 2>(2 * i, 2 * i) =
        detail::local_block<Scalar>(mode, 0.5 * mode.kappa + linewidth_wg);
    out.diffusion.template block<2, 2>(2 * i, 2 * i).diagonal().setConstant(
        Scalar(mode.kappa * (mode.n_bar + 0.5)));
    for (Eigen::Index l = 0; l < n; ++l) {
      const double dz = spec.positions[i] - spec.positions[l];
      if (dz > 0.0) {
        out.drift.template block<2, 2>(2 * i, 2 * l) =
            detail::coupling_block<Scalar>(spec.gamma_R * std::polar(1.0, spec.k * dz));
      } else if (dz < 0.0) {
        out.drift.template block<2, 2>(2 * i, 2 * l) =
            detail::coupling_block<Scalar>(spec.gamma_L * std::polar(1.0, -spec.k * dz));
      }
    }
  }

  // Γ_λ Re(l_λ† l_λ) with l_λ the quadrature coefficients of M_λ, using
  // m = (x + i p)/√2.
  const std::array<std::pair<double, double>, 2> channels{
      std::pair{spec.gamma_L, -spec.k}, std::pair{spec.gamma_R, spec.k}};
  for (const auto& [rate, k_dir] : channels) {
    if (rate == 0.0) continue;
    VectorXcd coeff(2 * n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const complexd c = std::polar(1.0, -k_dir * spec.positions[j]) / std::sqrt(2.0);
      coeff(2 * j) = c;
      coeff(2 * j + 1) = complexd(0.0, 1.0) * c;
    }
    const MatrixXcd outer = coeff.conjugate() * coeff.transpose();
    out.diffusion += (rate * outer.real()).template cast<Scalar>();
  }
  return out;
}

}  // namespace chiralmag
