#include "chiralmag/scenario.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace chiralmag {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_object(const json& node, const std::string& path,
                  std::initializer_list<const char*> allowed) {
  if (!node.is_object()) {
    throw ScenarioError(fmt::format("scenario key '{}': expected an object", path));
  }
  for (const auto& item : node.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* name) { return item.key() == name; });
    if (!known) {
      throw ScenarioError(fmt::format("scenario: unknown key '{}'", join(path, item.key())));
    }
  }
}

double read_number(const json& node, const std::string& path) {
  if (!node.is_number()) {
    throw ScenarioError(fmt::format("scenario key '{}': expected a number", path));
  }
  const double value = node.get<double>();
  if (!std::isfinite(value)) {
    throw ScenarioError(fmt::format("scenario key '{}': value must be finite", path));
  }
  return value;
}

void read_number(const json& obj, const std::string& path, const char* key, double& out) {
  if (obj.contains(key)) out = read_number(obj.at(key), join(path, key));
}

void read_optional(const json& obj, const std::string& path, const char* key,
                   std::optional<double>& out) {
  if (obj.contains(key)) out = read_number(obj.at(key), join(path, key));
}

void read_int(const json& obj, const std::string& path, const char* key, int& out) {
  if (!obj.contains(key)) return;
  const json& node = obj.at(key);
  if (!node.is_number_integer()) {
    throw ScenarioError(fmt::format("scenario key '{}': expected an integer", join(path, key)));
  }
  out = node.get<int>();
}

void read_string(const json& obj, const std::string& path, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const json& node = obj.at(key);
  if (!node.is_string()) {
    throw ScenarioError(fmt::format("scenario key '{}': expected a string", join(path, key)));
  }
  out = node.get<std::string>();
}

void read_bool(const json& obj, const std::string& path, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& node = obj.at(key);
  if (!node.is_boolean()) {
    throw ScenarioError(fmt::format("scenario key '{}': expected true or false", join(path, key)));
  }
  out = node.get<bool>();
}

void read_angle(const json& obj, const std::string& path, const char* key, Angle& out) {
  if (!obj.contains(key)) return;
  const json& node = obj.at(key);
  const std::string where = join(path, key);
  if (node.is_string()) {
    try {
      out = {parse_angle_text(node.get<std::string>()), node.get<std::string>()};
    } catch (const std::invalid_argument& err) {
      throw ScenarioError(fmt::format("scenario key '{}': {}", where, err.what()));
    }
    return;
  }
  out = {read_number(node, where), ""};
}

template <typename Enum>
Enum read_choice(const json& obj, const std::string& path, const char* key, Enum fallback,
                 std::initializer_list<std::pair<const char*, Enum>> choices) {
  std::string text;
  read_string(obj, path, key, text);
  if (text.empty()) return fallback;
  for (const auto& [name, value] : choices) {
    if (text == name) return value;
  }
  throw ScenarioError(fmt::format("scenario key '{}': unrecognised value '{}'", join(path, key), text));
}

ordered_json angle_json(const Angle& angle) {
  return angle.text.empty() ? ordered_json(angle.radians) : ordered_json(angle.text);
}

const char* sign_name(DiffusionSign sign) {
  return sign == DiffusionSign::consistent ? "consistent" : "printed";
}

const char* innovation_name(InnovationConvention conv) {
  return conv == InnovationConvention::consistent ? "consistent" : "printed";
}

void parse_modes(const json& node, Scenario& s) {
  if (!node.is_array() || node.size() != 2) {
    throw ScenarioError("scenario key 'modes': expected an array of two objects");
  }
  for (std::size_t j = 0; j < 2; ++j) {
    const std::string path = fmt::format("modes[{}]", j);
    const json& m = node.at(j);
    check_object(m, path, {"omega_m_GHz", "kappa_MHz", "T_mK", "n_bar", "K_tilde_MHz", "Delta_MHz"});
    ModeConfig& mode = s.modes[j];
    read_number(m, path, "omega_m_GHz", mode.omega_m_GHz);
    read_number(m, path, "kappa_MHz", mode.kappa_MHz);
    read_optional(m, path, "T_mK", mode.T_mK);
    read_optional(m, path, "n_bar", mode.n_bar);
    read_number(m, path, "K_tilde_MHz", mode.K_tilde_MHz);
    read_number(m, path, "Delta_MHz", mode.Delta_MHz);
  }
}

}  // namespace

double parse_angle_text(const std::string& raw) {
  auto trim = [](std::string_view v) {
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
    return v;
  };
  auto to_double = [&](std::string_view v) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), value);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(value)) {
      throw std::invalid_argument(fmt::format("cannot read angle '{}'", raw));
    }
    return value;
  };
  std::string_view text = trim(raw);
  if (text.size() >= 2 && text.substr(text.size() - 2) == "pi") {
    std::string_view factor = trim(text.substr(0, text.size() - 2));
    if (!factor.empty() && factor.back() == '*') factor = trim(factor.substr(0, factor.size() - 1));
    if (factor.empty() || factor == "+") return pi;
    if (factor == "-") return -pi;
    return to_double(factor) * pi;
  }
  if (text.empty()) throw std::invalid_argument("empty angle string");
  return to_double(text);
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "kd") return SweepAxis::kd;
  if (name == "K_tilde") return SweepAxis::K_tilde;
  if (name == "D") return SweepAxis::D;
  if (name == "gain_R1") return SweepAxis::gain_R1;
  if (name == "gain_ratio") return SweepAxis::gain_ratio;
  throw ScenarioError(fmt::format("unrecognised sweep axis '{}'", name));
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kd: return "kd";
    case SweepAxis::K_tilde: return "K_tilde";
    case SweepAxis::D: return "D";
    case SweepAxis::gain_R1: return "gain_R1";
    case SweepAxis::gain_ratio: return "gain_ratio";
  }
  return "?";
}

SystemParams Scenario::params() const {
  SystemParams p;
  for (int j = 0; j < 2; ++j) {
    const ModeConfig& in = modes[j];
    MagnonMode& mode = p.mode(j);
    mode.omega_m = two_pi * 1e9 * in.omega_m_GHz;
    mode.kappa = from_mhz(in.kappa_MHz);
    mode.n_bar = in.n_bar ? *in.n_bar : thermal_occupation(mode.omega_m, 1e-3 * in.T_mK.value_or(30.0));
    mode.K_tilde = from_mhz(in.K_tilde_MHz);
    mode.Delta = from_mhz(in.Delta_MHz);
  }
  const double gamma_R = from_mhz(coupling.gamma_R_MHz);
  if (coupling.gamma_L_MHz) {
    p.coupling = {from_mhz(*coupling.gamma_L_MHz), gamma_R, coupling.kd.radians};
  } else {
    p.coupling = WaveguideCoupling::from_chirality(gamma_R, coupling.D.value_or(0.0), coupling.kd.radians);
  }
  return p;
}

MeasurementConfig Scenario::measurement_config() const {
  return {measurement.eta_L, measurement.eta_R, measurement.theta_L.radians, measurement.theta_R.radians};
}

FeedbackGains Scenario::gains() const {
  FeedbackGains g;
  for (int l = 0; l < 2; ++l) {
    for (int j = 0; j < 2; ++j) {
      g.x[l][j] = from_mhz(gains_MHz[4 * l + 2 * j]);
      g.p[l][j] = from_mhz(gains_MHz[4 * l + 2 * j + 1]);
    }
  }
  return g;
}

MatrixOptions Scenario::matrix_options() const {
  return {solver.diffusion_sign, solver.innovation, solver.flatten_channels};
}

RiccatiOptions Scenario::riccati_options() const {
  return {solver.dt_scale, solver.tolerance, solver.t_max_scale};
}

bool Scenario::wants(const std::string& measure) const {
  return std::find(output.measures.begin(), output.measures.end(), measure) != output.measures.end();
}

void Scenario::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ScenarioError(fmt::format("scenario key '{}': {}", key, what));
  };
  for (int j = 0; j < 2; ++j) {
    const ModeConfig& m = modes[j];
    const std::string path = fmt::format("modes[{}]", j);
    if (!(m.omega_m_GHz > 0.0)) fail(path + ".omega_m_GHz", "must be positive");
    if (!(m.kappa_MHz > 0.0)) fail(path + ".kappa_MHz", "must be positive");
    if (m.T_mK && m.n_bar) fail(path, "give either T_mK or n_bar, not both");
    if (m.T_mK && *m.T_mK < 0.0) fail(path + ".T_mK", "must be non-negative");
    if (m.n_bar && *m.n_bar < 0.0) fail(path + ".n_bar", "must be non-negative");
    if (m.K_tilde_MHz < 0.0) fail(path + ".K_tilde_MHz", "must be non-negative");
  }
  if (coupling.D && coupling.gamma_L_MHz) fail("coupling", "give either D or gamma_L_MHz, not both");
  if (coupling.gamma_R_MHz < 0.0) fail("coupling.gamma_R_MHz", "must be non-negative");
  if (coupling.gamma_L_MHz) {
    if (*coupling.gamma_L_MHz < 0.0) fail("coupling.gamma_L_MHz", "must be non-negative");
    if (!(*coupling.gamma_L_MHz + coupling.gamma_R_MHz > 0.0)) fail("coupling", "no waveguide coupling");
  } else {
    const double D = coupling.D.value_or(0.0);
    if (!(D > -1.0 && D <= 1.0)) fail("coupling.D", "must lie in (-1, 1] at fixed gamma_R");
    if (!(coupling.gamma_R_MHz > 0.0)) fail("coupling.gamma_R_MHz", "must be positive when D is given");
  }
  if (measurement.eta_L < 0.0 || measurement.eta_L > 1.0) fail("measurement.eta_L", "outside [0, 1]");
  if (measurement.eta_R < 0.0 || measurement.eta_R > 1.0) fail("measurement.eta_R", "outside [0, 1]");
  if (sweep.points < 1) fail("sweep.points", "must be at least 1");
  if (sweep.series && sweep.series->values.empty()) fail("sweep.series.values", "must not be empty");
  if (solver.dt_scale <= 0.0) fail("solver.dt_scale", "must be positive");
  if (solver.tolerance <= 0.0) fail("solver.tolerance", "must be positive");
  if (solver.t_max_scale <= 0.0) fail("solver.t_max_scale", "must be positive");
  const TrajectoryConfig& t = solver.trajectory;
  if (t.n_traj < 1) fail("solver.trajectory.n_traj", "must be at least 1");
  if (t.dt_scale <= 0.0) fail("solver.trajectory.dt_scale", "must be positive");
  if (t.t_final_us < 0.0) fail("solver.trajectory.t_final_us", "must be non-negative");
  if (t.record_every < 1) fail("solver.trajectory.record_every", "must be at least 1");
  if (t.dump_limit < 0) fail("solver.trajectory.dump_limit", "must be non-negative");
  for (const auto& name : output.measures) {
    if (std::find(known_measures().begin(), known_measures().end(), name) == known_measures().end()) {
      fail("output.measures", fmt::format("unknown measure '{}'", name));
    }
  }
}

Scenario parse_scenario_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    throw ScenarioError(fmt::format("scenario: malformed JSON ({})", err.what()));
  }
  check_object(root, "", {"modes", "coupling", "measurement", "feedback", "sweep", "solver", "output"});

  Scenario s;
  if (root.contains("modes")) parse_modes(root.at("modes"), s);
  for (std::size_t j = 0; j < s.modes.size(); ++j) {
    if (!s.modes[j].T_mK.has_value() && !s.modes[j].n_bar.has_value()) s.modes[j].T_mK.emplace(30.0);
  }

  if (root.contains("coupling")) {
    const json& c = root.at("coupling");
    check_object(c, "coupling", {"gamma_R_MHz", "D", "gamma_L_MHz", "kd"});
    read_number(c, "coupling", "gamma_R_MHz", s.coupling.gamma_R_MHz);
    read_optional(c, "coupling", "D", s.coupling.D);
    read_optional(c, "coupling", "gamma_L_MHz", s.coupling.gamma_L_MHz);
    read_angle(c, "coupling", "kd", s.coupling.kd);
  }
  if (!s.coupling.D && !s.coupling.gamma_L_MHz) s.coupling.D = 0.0;

  if (root.contains("measurement")) {
    const json& m = root.at("measurement");
    check_object(m, "measurement", {"eta_L", "eta_R", "theta_L", "theta_R"});
    read_number(m, "measurement", "eta_L", s.measurement.eta_L);
    read_number(m, "measurement", "eta_R", s.measurement.eta_R);
    read_angle(m, "measurement", "theta_L", s.measurement.theta_L);
    read_angle(m, "measurement", "theta_R", s.measurement.theta_R);
  }

  if (root.contains("feedback")) {
    const json& f = root.at("feedback");
    check_object(f, "feedback", {"gains_MHz"});
    if (f.contains("gains_MHz")) {
      const json& g = f.at("gains_MHz");
      if (!g.is_array() || g.size() != 8) {
        throw ScenarioError("scenario key 'feedback.gains_MHz': expected an array of 8 numbers");
      }
      for (std::size_t i = 0; i < 8; ++i) {
        s.gains_MHz[i] = read_number(g.at(i), fmt::format("feedback.gains_MHz[{}]", i));
      }
    }
  }

  if (root.contains("sweep")) {
    const json& w = root.at("sweep");
    check_object(w, "sweep", {"axis", "lo", "hi", "points", "mpa", "ratio", "gain_R1_MHz", "series", "label"});
    std::string axis;
    read_string(w, "sweep", "axis", axis);
    if (!axis.empty()) {
      try {
        s.sweep.axis = parse_axis(axis);
      } catch (const ScenarioError& err) {
        throw ScenarioError(fmt::format("scenario key 'sweep.axis': {}", err.what()));
      }
    }
    read_angle(w, "sweep", "lo", s.sweep.lo);
    read_angle(w, "sweep", "hi", s.sweep.hi);
    read_int(w, "sweep", "points", s.sweep.points);
    s.sweep.mpa = read_choice(w, "sweep", "mpa", MpaKind::symmetric,
                              {{"symmetric", MpaKind::symmetric}, {"asymmetric", MpaKind::asymmetric}});
    read_number(w, "sweep", "ratio", s.sweep.ratio);
    read_number(w, "sweep", "gain_R1_MHz", s.sweep.gain_R1_MHz);
    read_string(w, "sweep", "label", s.sweep.label);
    if (w.contains("series")) {
      const json& sr = w.at("series");
      check_object(sr, "sweep.series", {"axis", "values"});
      SeriesConfig series;
      std::string series_axis;
      read_string(sr, "sweep.series", "axis", series_axis);
      if (series_axis.empty()) {
        throw ScenarioError("scenario key 'sweep.series.axis': required");
      }
      try {
        series.axis = parse_axis(series_axis);
      } catch (const ScenarioError& err) {
        throw ScenarioError(fmt::format("scenario key 'sweep.series.axis': {}", err.what()));
      }
      if (!sr.contains("values") || !sr.at("values").is_array()) {
        throw ScenarioError("scenario key 'sweep.series.values': expected an array of numbers");
      }
      for (std::size_t i = 0; i < sr.at("values").size(); ++i) {
        series.values.push_back(
            read_number(sr.at("values").at(i), fmt::format("sweep.series.values[{}]", i)));
      }
      s.sweep.series = series;
    }
  }

  if (root.contains("solver")) {
    const json& v = root.at("solver");
    check_object(v, "solver", {"dt_scale", "tolerance", "t_max_scale", "diffusion_sign", "innovation",
                               "flatten_channels", "trajectory"});
    read_number(v, "solver", "dt_scale", s.solver.dt_scale);
    read_number(v, "solver", "tolerance", s.solver.tolerance);
    read_number(v, "solver", "t_max_scale", s.solver.t_max_scale);
    s.solver.diffusion_sign =
        read_choice(v, "solver", "diffusion_sign", DiffusionSign::consistent,
                    {{"consistent", DiffusionSign::consistent}, {"printed", DiffusionSign::printed}});
    s.solver.innovation = read_choice(
        v, "solver", "innovation", InnovationConvention::consistent,
        {{"consistent", InnovationConvention::consistent}, {"printed", InnovationConvention::printed}});
    read_bool(v, "solver", "flatten_channels", s.solver.flatten_channels);
    if (v.contains("trajectory")) {
      const json& t = v.at("trajectory");
      const std::string path = "solver.trajectory";
      check_object(t, path, {"n_traj", "dt_scale", "t_final_us", "window_start_us", "record_every",
                             "dump_limit", "initial_mean"});
      TrajectoryConfig& tc = s.solver.trajectory;
      read_int(t, path, "n_traj", tc.n_traj);
      read_number(t, path, "dt_scale", tc.dt_scale);
      read_number(t, path, "t_final_us", tc.t_final_us);
      read_number(t, path, "window_start_us", tc.window_start_us);
      read_int(t, path, "record_every", tc.record_every);
      read_int(t, path, "dump_limit", tc.dump_limit);
      if (t.contains("initial_mean")) {
        const json& m = t.at("initial_mean");
        if (!m.is_array() || m.size() != 4) {
          throw ScenarioError("scenario key 'solver.trajectory.initial_mean': expected an array of 4 numbers");
        }
        for (std::size_t i = 0; i < 4; ++i) {
          tc.initial_mean[i] = read_number(m.at(i), fmt::format("{}.initial_mean[{}]", path, i));
        }
      }
    }
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    check_object(o, "output", {"measures", "csv", "summary"});
    if (o.contains("measures")) {
      const json& list = o.at("measures");
      if (!list.is_array()) {
        throw ScenarioError("scenario key 'output.measures': expected an array of strings");
      }
      s.output.measures.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (!list.at(i).is_string()) {
          throw ScenarioError(fmt::format("scenario key 'output.measures[{}]': expected a string", i));
        }
        s.output.measures.push_back(list.at(i).get<std::string>());
      }
    }
    read_string(o, "output", "csv", s.output.csv);
    read_string(o, "output", "summary", s.output.summary);
  }

  s.validate();
  return s;
}

Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError(fmt::format("scenario: cannot open '{}'", path));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str());
}

std::string emit_scenario(const Scenario& s) {
  ordered_json root;
  ordered_json modes = ordered_json::array();
  for (const ModeConfig& m : s.modes) {
    ordered_json node;
    node["omega_m_GHz"] = m.omega_m_GHz;
    node["kappa_MHz"] = m.kappa_MHz;
    if (m.T_mK) node["T_mK"] = *m.T_mK;
    if (m.n_bar) node["n_bar"] = *m.n_bar;
    node["K_tilde_MHz"] = m.K_tilde_MHz;
    node["Delta_MHz"] = m.Delta_MHz;
    modes.push_back(node);
  }
  root["modes"] = modes;

  ordered_json coupling;
  coupling["gamma_R_MHz"] = s.coupling.gamma_R_MHz;
  if (s.coupling.D) coupling["D"] = *s.coupling.D;
  if (s.coupling.gamma_L_MHz) coupling["gamma_L_MHz"] = *s.coupling.gamma_L_MHz;
  coupling["kd"] = angle_json(s.coupling.kd);
  root["coupling"] = coupling;

  ordered_json meas;
  meas["eta_L"] = s.measurement.eta_L;
  meas["eta_R"] = s.measurement.eta_R;
  meas["theta_L"] = angle_json(s.measurement.theta_L);
  meas["theta_R"] = angle_json(s.measurement.theta_R);
  root["measurement"] = meas;

  root["feedback"]["gains_MHz"] = s.gains_MHz;

  ordered_json sweep;
  sweep["axis"] = axis_name(s.sweep.axis);
  sweep["lo"] = angle_json(s.sweep.lo);
  sweep["hi"] = angle_json(s.sweep.hi);
  sweep["points"] = s.sweep.points;
  sweep["mpa"] = s.sweep.mpa == MpaKind::symmetric ? "symmetric" : "asymmetric";
  sweep["ratio"] = s.sweep.ratio;
  sweep["gain_R1_MHz"] = s.sweep.gain_R1_MHz;
  if (s.sweep.series) {
    sweep["series"]["axis"] = axis_name(s.sweep.series->axis);
    sweep["series"]["values"] = s.sweep.series->values;
  }
  sweep["label"] = s.sweep.label;
  root["sweep"] = sweep;

  ordered_json solver;
  solver["dt_scale"] = s.solver.dt_scale;
  solver["tolerance"] = s.solver.tolerance;
  solver["t_max_scale"] = s.solver.t_max_scale;
  solver["diffusion_sign"] = sign_name(s.solver.diffusion_sign);
  solver["innovation"] = innovation_name(s.solver.innovation);
  solver["flatten_channels"] = s.solver.flatten_channels;
  const TrajectoryConfig& t = s.solver.trajectory;
  solver["trajectory"] = {{"n_traj", t.n_traj},
                          {"dt_scale", t.dt_scale},
                          {"t_final_us", t.t_final_us},
                          {"window_start_us", t.window_start_us},
                          {"record_every", t.record_every},
                          {"dump_limit", t.dump_limit},
                          {"initial_mean", t.initial_mean}};
  root["solver"] = solver;

  ordered_json output;
  output["measures"] = s.output.measures;
  output["csv"] = s.output.csv;
  output["summary"] = s.output.summary;
  root["output"] = output;

  return root.dump(2) + "\n";
}

}  // namespace chiralmag
