#pragma once

#include "chiralmag/dynamics.hpp"
#include "chiralmag/matrices.hpp"
#include "chiralmag/types.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace chiralmag {

/// Conditional covariance feeding the mean equation: either a constant
/// steady state or an RK4 trajectory sampled on the same step grid.
class ConditionalCovariance {
 public:
  ConditionalCovariance(const Matrix4d& steady) : steady_(steady) {}
  ConditionalCovariance(RiccatiTrajectory<double> trajectory);

  /// σ_c at step n; past the end of a trajectory the last sample is held.
  const Matrix4d& at(std::size_t step) const;
  bool is_steady() const { return !trajectory_.has_value(); }

 private:
  Matrix4d steady_;
  std::optional<RiccatiTrajectory<double>> trajectory_;
};

struct TrajectoryOptions {
  double dt = 0.0;
  double t_final = 0.0;
  int record_every = 1;
  std::uint64_t seed = 0;
  Vector4d initial_mean = Vector4d::Zero();
};

/// One realisation of the filtered means and homodyne records. Increments
/// are summed over each recording interval: current_increment = ∫ I_λ dt and
/// wiener_increment = ∫ dW_λ over (times[k-1], times[k]]; entry 0 is zero.
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vector4d> means;
  std::vector<std::array<double, 2>> current_increment;
  std::vector<std::array<double, 2>> wiener_increment;
  std::uint64_t seed = 0;
};

/// Euler–Maruyama for dμ̄ = Ā μ̄ dt + Σ_λ (σ_c g_λ − F_λ) dW_λ with
/// I_λ dt = √2 C_λᵀ μ̄ dt + dW_λ. Ā = A when gains is empty.
/// Seed contract: a std::mt19937_64 seeded with std::seed_seq over the two
/// 32-bit halves of `seed`; increments are √dt · std::normal_distribution
/// draws, L before R at each step.
TrajectoryRecord simulate_trajectory(const SystemMatrices<double>& mats,
                                     const ConditionalCovariance& sigma_c,
                                     const std::optional<FeedbackGains>& gains,
                                     const TrajectoryOptions& options);

/// Seed of trajectory `index` in an ensemble started from `base` (splitmix64).
std::uint64_t trajectory_seed(std::uint64_t base, std::uint64_t index);

/// n_traj independent trajectories, seeds from trajectory_seed(options.seed, i);
/// results are in index order whatever the thread count.
std::vector<TrajectoryRecord> simulate_ensemble(const SystemMatrices<double>& mats,
                                                const ConditionalCovariance& sigma_c,
                                                const std::optional<FeedbackGains>& gains,
                                                const TrajectoryOptions& options, std::size_t n_traj,
                                                int threads = 1);

/// Running second moment of the means over a time window.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator(double t_begin, double t_end) : t_begin_(t_begin), t_end_(t_end) {}

  void add(const TrajectoryRecord& record);
  void merge(const EnsembleAccumulator& other);
  std::size_t samples() const { return count_; }
  std::size_t trajectories() const { return trajectories_; }
  /// Throws std::invalid_argument with fewer than two trajectories or samples.
  Matrix4d result() const;

 private:
  double t_begin_;
  double t_end_;
  Matrix4d sum_ = Matrix4d::Zero();
  std::size_t count_ = 0;
  std::size_t trajectories_ = 0;
};

/// ½⟨μ̄μ̄ᵀ + (μ̄μ̄ᵀ)ᵀ⟩ averaged over every record and every sample with
/// t in [t_begin, t_end].
Matrix4d ensemble_stats(const std::vector<TrajectoryRecord>& records, double t_begin, double t_end);

/// CSV with header t,x1,p1,x2,p2,I_L,I_R; values at 17 significant digits.
/// Currents are interval averages; cells of inactive channels stay empty.
void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& record,
                          std::array<bool, 2> active_channels = {true, true});

}  // namespace chiralmag
