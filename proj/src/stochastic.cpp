#include "chiralmag/stochastic.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace chiralmag {

ConditionalCovariance::ConditionalCovariance(RiccatiTrajectory<double> trajectory)
    : steady_(trajectory.sigma.empty() ? Matrix4d::Zero() : trajectory.sigma.back()),
      trajectory_(std::move(trajectory)) {
  if (trajectory_->sigma.empty()) {
    throw std::invalid_argument("conditional covariance trajectory is empty");
  }
}

const Matrix4d& ConditionalCovariance::at(std::size_t step) const {
  if (!trajectory_) return steady_;
  const auto& samples = trajectory_->sigma;
  return step < samples.size() ? samples[step] : samples.back();
}

std::uint64_t trajectory_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrajectoryRecord simulate_trajectory(const SystemMatrices<double>& mats,
                                     const ConditionalCovariance& sigma_c,
                                     const std::optional<FeedbackGains>& gains,
                                     const TrajectoryOptions& options) {
  if (!(options.dt > 0.0) || !(options.t_final >= 0.0) || options.record_every < 1) {
    throw std::invalid_argument("simulate_trajectory: need dt > 0, t_final >= 0, record_every >= 1");
  }
  const Matrix4d drift = gains ? apply_feedback(mats.drift, *gains) : mats.drift;
  const double dt = options.dt;
  const double sqrt_dt = std::sqrt(dt);
  const auto steps = static_cast<std::size_t>(std::llround(options.t_final / dt));

  std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                    static_cast<std::uint32_t>(options.seed >> 32)};
  std::mt19937_64 engine(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::array<Vector4d, 2> readout{std::sqrt(2.0) * mats.meas_C[left],
                                  std::sqrt(2.0) * mats.meas_C[right]};
  std::array<Vector4d, 2> loading{};
  auto refresh_loading = [&](std::size_t step) {
    const Matrix4d& sigma = sigma_c.at(step);
    for (int l = 0; l < 2; ++l) loading[l] = mats.innovation_vector(sigma, l);
  };
  refresh_loading(0);

  TrajectoryRecord record;
  record.seed = options.seed;
  const std::size_t samples = steps / options.record_every + 2;
  record.times.reserve(samples);
  record.means.reserve(samples);
  record.current_increment.reserve(samples);
  record.wiener_increment.reserve(samples);
  record.times.push_back(0.0);
  record.means.push_back(options.initial_mean);
  record.current_increment.push_back({0.0, 0.0});
  record.wiener_increment.push_back({0.0, 0.0});

  Vector4d mean = options.initial_mean;
  std::array<double, 2> current_acc{0.0, 0.0};
  std::array<double, 2> wiener_acc{0.0, 0.0};
  for (std::size_t n = 0; n < steps; ++n) {
    if (!sigma_c.is_steady()) refresh_loading(n);
    const std::array<double, 2> dW{sqrt_dt * normal(engine), sqrt_dt * normal(engine)};
    Vector4d next = mean + dt * (drift * mean);
    for (int l = 0; l < 2; ++l) {
      next += loading[l] * dW[l];
      current_acc[l] += readout[l].dot(mean) * dt + dW[l];
      wiener_acc[l] += dW[l];
    }
    mean = next;
    if (!(mean.norm() < divergence_norm)) {
      throw DivergenceError(fmt::format("trajectory diverged at t = {:.6g} s (seed {})",
                                        (n + 1) * dt, options.seed));
    }
    if ((n + 1) % options.record_every == 0 || n + 1 == steps) {
      record.times.push_back((n + 1) * dt);
      record.means.push_back(mean);
      record.current_increment.push_back(current_acc);
      record.wiener_increment.push_back(wiener_acc);
      current_acc = {0.0, 0.0};
      wiener_acc = {0.0, 0.0};
    }
  }
  return record;
}

std::vector<TrajectoryRecord> simulate_ensemble(const SystemMatrices<double>& mats,
                                                const ConditionalCovariance& sigma_c,
                                                const std::optional<FeedbackGains>& gains,
                                                const TrajectoryOptions& options, std::size_t n_traj,
                                                int threads) {
  std::vector<TrajectoryRecord> records(n_traj);
  tbb::global_control limit(tbb::global_control::max_allowed_parallelism,
                            static_cast<std::size_t>(std::max(1, threads)));
  tbb::parallel_for(std::size_t{0}, n_traj, [&](std::size_t i) {
    TrajectoryOptions local = options;
    local.seed = trajectory_seed(options.seed, i);
    records[i] = simulate_trajectory(mats, sigma_c, gains, local);
  });
  return records;
}

void EnsembleAccumulator::add(const TrajectoryRecord& record) {
  for (std::size_t k = 0; k < record.times.size(); ++k) {
    const double t = record.times[k];
    if (t < t_begin_ || t > t_end_) continue;
    sum_.noalias() += record.means[k] * record.means[k].transpose();
    ++count_;
  }
  ++trajectories_;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  sum_ += other.sum_;
  count_ += other.count_;
  trajectories_ += other.trajectories_;
}

Matrix4d EnsembleAccumulator::result() const {
  if (trajectories_ < 2) {
    throw std::invalid_argument("ensemble_stats needs at least two trajectories");
  }
  if (count_ < 2) {
    throw std::invalid_argument("ensemble_stats: fewer than two samples inside the window");
  }
  const Matrix4d mean = sum_ / static_cast<double>(count_);
  return (mean + mean.transpose()) / 2.0;
}

Matrix4d ensemble_stats(const std::vector<TrajectoryRecord>& records, double t_begin, double t_end) {
  EnsembleAccumulator acc(t_begin, t_end);
  for (const auto& record : records) acc.add(record);
  return acc.result();
}

void write_trajectory_csv(std::ostream& out, const TrajectoryRecord& record,
                          std::array<bool, 2> active_channels) {
  out << "t,x1,p1,x2,p2,I_L,I_R\n";
  for (std::size_t k = 0; k < record.times.size(); ++k) {
    const double interval = k == 0 ? 0.0 : record.times[k] - record.times[k - 1];
    const auto& m = record.means[k];
    std::array<std::string, 2> current;
    for (int l = 0; l < 2; ++l) {
      if (!active_channels[l]) continue;
      current[l] = fmt::format("{:.17g}", interval > 0.0 ? record.current_increment[k][l] / interval : 0.0);
    }
    fmt::print(out, "{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", record.times[k], m(0), m(1), m(2),
               m(3), current[0], current[1]);
  }
}

}  // namespace chiralmag
