#include "chiralmag/sweep.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace chiralmag;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  std::string summary;
  std::uint64_t seed = 0;
  int threads = 1;
  bool literal_paper_C = false;
  bool printed_innovation = false;
  bool printed_diffusion = false;
};

Scenario load(const GlobalOptions& opts) {
  Scenario s = opts.config.empty() ? parse_scenario_text("{}") : parse_scenario(opts.config);
  if (opts.literal_paper_C) s.solver.flatten_channels = true;
  if (opts.printed_innovation) s.solver.innovation = InnovationConvention::printed;
  if (opts.printed_diffusion) s.solver.diffusion_sign = DiffusionSign::printed;
  if (opts.out.empty()) {
    return s;
  }
  s.output.csv = opts.out;
  return s;
}

MatrixOptions matrix_options(const GlobalOptions& opts) {
  MatrixOptions m;
  m.flatten_channels = opts.literal_paper_C;
  if (opts.printed_innovation) m.innovation = InnovationConvention::printed;
  if (opts.printed_diffusion) m.diffusion_sign = DiffusionSign::printed;
  return m;
}

void emit_rows(const std::vector<SweepRow>& rows, const std::vector<std::string>& notes,
               const std::string& csv_path, const std::string& summary_path,
               const std::vector<std::string>& measures) {
  if (csv_path.empty()) {
    write_rows_csv(std::cout, rows, measures);
  } else {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", csv_path));
    write_rows_csv(out, rows, measures);
  }
  if (!summary_path.empty()) {
    std::ofstream out(summary_path);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", summary_path));
    out << rows_summary_json(rows, notes);
  }
  for (const auto& note : notes) std::cerr << note << '\n';
}

std::string summary_path(const GlobalOptions& opts, const Scenario& s) {
  return opts.summary.empty() ? s.output.summary : opts.summary;
}

int run_steady(const GlobalOptions& opts) {
  const Scenario s = load(opts);
  SweepRow row = evaluate_point(scenario_inputs(s));
  row.series = "steady";
  emit_rows({row}, {}, s.output.csv, summary_path(opts, s), s.output.measures);
  return 0;
}

int run_sweep_command(const GlobalOptions& opts, bool feedback) {
  const Scenario s = load(opts);
  const auto rows = feedback ? run_feedback(s, opts.threads) : run_sweep(s, opts.threads);
  emit_rows(rows, {}, s.output.csv, summary_path(opts, s), s.output.measures);
  return 0;
}

int run_trajectory_command(const GlobalOptions& opts, int n_traj_override) {
  Scenario s = load(opts);
  const std::size_t n_traj =
      static_cast<std::size_t>(n_traj_override > 0 ? n_traj_override : s.solver.trajectory.n_traj);
  const TrajectoryReport report = run_trajectory(s, n_traj, opts.seed, opts.threads);

  const std::filesystem::path dir = opts.out.empty() ? std::filesystem::path(".") : std::filesystem::path(opts.out);
  std::filesystem::create_directories(dir);
  const auto mats = build_system(s.params(), s.measurement_config(), s.matrix_options());
  const std::array<bool, 2> active{!mats.meas_C[left].isZero(0), !mats.meas_C[right].isZero(0)};
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    std::ofstream out(dir / fmt::format("traj_{:05d}.csv", i));
    write_trajectory_csv(out, report.records[i], active);
  }

  std::ofstream ens(dir / "ensemble.csv");
  ens << "row,col,sample,predicted\n";
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      fmt::print(ens, "{},{},{:.17g},{:.17g}\n", r, c, report.sample(r, c), report.predicted(r, c));
    }
  }
  fmt::print(std::cout,
             "trajectories {} dt {:.6g} s t_final {:.6g} s window [{:.6g}, {:.6g}] s "
             "mismatch {:.6g}\n",
             report.n_traj, report.dt, report.t_final, report.window_start, report.t_final,
             report.mismatch);
  return 0;
}

int run_preset_command(const GlobalOptions& opts, const std::string& name) {
  const PresetResult result = run_preset(name, matrix_options(opts), opts.threads);
  emit_rows(result.rows, result.notes, opts.out, opts.summary, known_measures());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-magnon chiral waveguide Gaussian dynamics"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions opts;
  app.add_option("--config", opts.config, "Scenario JSON file")->check(CLI::ExistingFile);
  app.add_option("--out", opts.out, "Output CSV path (trajectory: output directory)");
  app.add_option("--summary", opts.summary, "Optional JSON summary path");
  app.add_option("--seed", opts.seed, "Base RNG seed");
  app.add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--literal-paper-C", opts.literal_paper_C,
               "Merge both homodyne channels into one measurement vector");
  app.add_flag("--printed-innovation", opts.printed_innovation,
               "Use sigma*C - F as the innovation vector");
  app.add_flag("--printed-diffusion", opts.printed_diffusion,
               "Flip the sign of the sin(kd) diffusion cross term");

  auto* steady = app.add_subcommand("steady", "Steady states and measures at one point");
  auto* sweep = app.add_subcommand("sweep", "Parameter sweep");
  auto* feedback = app.add_subcommand("feedback", "Feedback fidelity sweep over gains");
  auto* trajectory = app.add_subcommand("trajectory", "Stochastic mean trajectories");
  int n_traj = 0;
  trajectory->add_option("--n-traj", n_traj, "Number of trajectories (overrides the config)");
  auto* preset = app.add_subcommand("preset", "Figure reproduction presets");
  std::string preset_name;
  preset->add_option("name", preset_name, "Preset name")->required()->check(CLI::IsMember(preset_names()));

  CLI11_PARSE(app, argc, argv);

  try {
    if (steady->parsed()) return run_steady(opts);
    if (sweep->parsed()) return run_sweep_command(opts, false);
    if (feedback->parsed()) return run_sweep_command(opts, true);
    if (trajectory->parsed()) return run_trajectory_command(opts, n_traj);
    if (preset->parsed()) return run_preset_command(opts, preset_name);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
