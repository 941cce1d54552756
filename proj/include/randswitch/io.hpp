#pragma once

// CSV and JSON serialization. CSV: comma separated, '#'-prefixed header
// lines, shortest round-trip decimal for every double.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "randswitch/control.hpp"
#include "randswitch/converter.hpp"
#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/spectrum.hpp"
#include "randswitch/switching.hpp"

namespace randswitch::io {

using nlohmann::json;

/// Shortest decimal that parses back to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_header(std::ostream& os, const std::vector<std::string>& lines) {
  for (const auto& l : lines) os << "# " << l << '\n';
}

// ---------------------------------------------------------------------------
// Distribution specs and JSON
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument(what + ": not a number: '" + s + "'");
  }
  return v;
}

inline int to_int(const std::string& s, const std::string& what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument(what + ": not an integer: '" + s + "'");
  }
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// {"kind", "lmin", "lmax", "probs": [[l, p], ...], "diagnostics": {"alpha", "beta"}}
/// plus the moments for convenience.
inline json dist_to_json(const PulseLengthDist& d) {
  json j;
  j["kind"] = std::string(to_string(d.kind()));
  j["lmin"] = d.lmin();
  j["lmax"] = d.lmax();
  json probs = json::array();
  for (int l = d.lmin(); l <= d.lmax(); ++l) probs.push_back(json::array({l, d.prob(l)}));
  j["probs"] = probs;
  if (d.diagnostics()) j["diagnostics"] = {{"alpha", d.diagnostics()->alpha}, {"beta", d.diagnostics()->beta}};
  const auto m = d.moments();
  j["moments"] = {{"mean", m.mean}, {"second", m.second}, {"variance", m.variance}};
  return j;
}

/// Accepts the form written by dist_to_json. Lengths missing from "probs"
/// get probability 0.
inline PulseLengthDist dist_from_json(const json& j) {
  try {
    const auto& pairs = j.at("probs");
    if (!pairs.is_array() || pairs.empty()) throw std::invalid_argument("\"probs\" must be a non-empty array");
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (const auto& e : pairs) {
      const int l = e.at(0).get<int>();
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    const int lmin = j.value("lmin", lo);
    const int lmax = j.value("lmax", hi);
    randswitch::detail::require(lmin >= 1 && lmin <= lo && hi <= lmax, "\"probs\" lengths outside [lmin, lmax]");
    std::vector<double> probs(static_cast<std::size_t>(lmax - lmin + 1), 0.0);
    double total = 0.0;
    for (const auto& e : pairs) {
      const double pr = e.at(1).get<double>();
      probs[static_cast<std::size_t>(e.at(0).get<int>() - lmin)] += pr;
      total += pr;
    }
    randswitch::detail::require(std::abs(total - 1.0) <= 1e-9, "distribution probabilities must sum to 1");
    DistKind kind = DistKind::custom;
    if (j.contains("kind")) {
      const auto k = dist_kind_from_string(j.at("kind").get<std::string>());
      if (!k) throw std::invalid_argument("unknown distribution kind");
      kind = *k;
    }
    std::optional<ExpFamilyParams> diag;
    if (j.contains("diagnostics")) {
      const auto& dj = j.at("diagnostics");
      diag = ExpFamilyParams{dj.at("alpha").get<double>(), dj.at("beta").get<double>()};
    }
    return PulseLengthDist(kind, lmin, std::move(probs), diag);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed distribution JSON: ") + e.what());
  }
}

/// det:L, uniform:a:b, huffman:N, canonical:L1:L2:lmin:lmax,
/// gaussian:mu:var:lmin:lmax, file:path (distribution JSON).
inline PulseLengthDist parse_dist_spec(std::string_view spec) {
  const auto parts = detail::split(spec, ':');
  const std::string& k = parts[0];
  auto need = [&](std::size_t n) {
    if (parts.size() != n + 1) {
      throw std::invalid_argument("distribution '" + k + "' takes " + std::to_string(n) + " parameter(s)");
    }
  };
  if (k == "det") {
    need(1);
    return make_deterministic(detail::to_int(parts[1], "det length"));
  }
  if (k == "uniform") {
    need(2);
    return make_uniform(detail::to_int(parts[1], "uniform lmin"), detail::to_int(parts[2], "uniform lmax"));
  }
  if (k == "huffman") {
    need(1);
    return make_huffman(detail::to_int(parts[1], "huffman lmax"));
  }
  if (k == "canonical") {
    need(4);
    return make_canonical(detail::to_double(parts[1], "canonical L1"), detail::to_double(parts[2], "canonical L2"),
                          detail::to_int(parts[3], "canonical lmin"), detail::to_int(parts[4], "canonical lmax"));
  }
  if (k == "gaussian") {
    need(4);
    return make_gaussian(detail::to_double(parts[1], "gaussian mu"), detail::to_double(parts[2], "gaussian var"),
                         detail::to_int(parts[3], "gaussian lmin"), detail::to_int(parts[4], "gaussian lmax"));
  }
  if (k == "file") {
    const auto pos = spec.find(':');
    const std::string path(spec.substr(pos + 1));
    json j;
    try {
      j = json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
      throw std::invalid_argument("'" + path + "' is not valid JSON: " + e.what());
    }
    return dist_from_json(j);
  }
  throw std::invalid_argument("unknown distribution '" + k + "'");
}

inline void write_dist_csv(std::ostream& os, const PulseLengthDist& d,
                           const std::vector<std::string>& header = {}) {
  write_header(os, header);
  const auto m = d.moments();
  os << "# kind=" << to_string(d.kind()) << " mean=" << fmt(m.mean) << " second_moment=" << fmt(m.second)
     << " variance=" << fmt(m.variance) << '\n';
  os << "ell,prob\n";
  for (int l = d.lmin(); l <= d.lmax(); ++l) os << l << ',' << fmt(d.prob(l)) << '\n';
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

inline void write_sequence_csv(std::ostream& os, const SwitchSequence& seq,
                               const std::vector<std::string>& header = {}) {
  write_header(os, header);
  os << "k,a_k,ell_k,t_start_seconds\n";
  for (std::size_t k = 0; k < seq.size(); ++k) {
    os << k << ',' << static_cast<int>(seq.amps()[k]) << ',' << seq.lens()[k] << ','
       << fmt(seq.start_seconds(k)) << '\n';
  }
}

/// Compact form: amplitudes as a 0/1 string.
inline json sequence_to_json(const SwitchSequence& seq) {
  std::string a(seq.size(), '0');
  for (std::size_t k = 0; k < seq.size(); ++k) a[k] = seq.amps()[k] ? '1' : '0';
  return json{{"t_eps", seq.t_eps()}, {"amps", a}, {"lens", seq.lens()}};
}

inline SwitchSequence sequence_from_json(const json& j) {
  try {
    const auto a = j.at("amps").get<std::string>();
    std::vector<std::uint8_t> amps(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      randswitch::detail::require(a[k] == '0' || a[k] == '1', "amplitude string must contain only 0 and 1");
      amps[k] = a[k] == '1';
    }
    return SwitchSequence(j.at("t_eps").get<double>(), std::move(amps), j.at("lens").get<std::vector<int>>());
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed sequence JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// PSD curves
// ---------------------------------------------------------------------------

struct Column {
  std::string name;
  std::vector<double> values;
};

/// 10 log10(v); -inf for v = 0.
inline std::vector<double> to_db(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 10.0 * std::log10(v[i]);
  return out;
}

/// f_hz, noise, then extra columns of equal length.
inline void write_psd_csv(std::ostream& os, const PsdCurve& c, const std::vector<Column>& extra = {},
                          const std::vector<std::string>& header = {}) {
  for (const auto& col : extra) randswitch::detail::require(col.values.size() == c.size(), "column length mismatch");
  write_header(os, header);
  os << "# dc_weight=" << fmt(c.dc_weight) << '\n';
  os << "f_hz,noise";
  for (const auto& col : extra) os << ',' << col.name;
  os << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    os << fmt(c.freqs[i]) << ',' << fmt(c.noise[i]);
    for (const auto& col : extra) os << ',' << fmt(col.values[i]);
    os << '\n';
  }
}

inline json psd_to_json(const PsdCurve& c) {
  return json{{"freqs", c.freqs}, {"noise", c.noise}, {"dc_weight", c.dc_weight}};
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(name + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument(name + " rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw std::invalid_argument(name + " must be an array");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace detail

inline BuckParams buck_params_from_json(const json& j) {
  try {
    BuckParams b;
    b.L = j.at("L").get<double>();
    b.C = j.at("C").get<double>();
    b.R = j.at("R").get<double>();
    b.r = j.value("r", 0.0);
    b.Vg = j.value("Vg", 1.0);
    b.validate();
    return b;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed buck JSON: ") + e.what());
  }
}

/// Either {A1, A2, B1, B2, Vg, labels?, units?}, {"buck": {L, C, R, r, Vg}}
/// or the buck fields at top level.
inline ConverterModel model_from_json(const json& j) {
  try {
    if (j.contains("buck")) return buck_model(buck_params_from_json(j.at("buck")));
    if (!j.contains("A1") && j.contains("L")) return buck_model(buck_params_from_json(j));
    ConverterModel m;
    m.A1 = detail::matrix_from_json(j.at("A1"), "A1");
    m.A2 = detail::matrix_from_json(j.at("A2"), "A2");
    m.B1 = detail::vector_from_json(j.at("B1"), "B1");
    m.B2 = detail::vector_from_json(j.at("B2"), "B2");
    m.Vg = j.value("Vg", 1.0);
    if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("units")) m.units = j.at("units").get<std::vector<std::string>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed model JSON: ") + e.what());
  }
}

inline json model_to_json(const ConverterModel& m) {
  json j{{"A1", detail::matrix_to_json(m.A1)},
         {"A2", detail::matrix_to_json(m.A2)},
         {"B1", detail::vector_to_json(m.B1)},
         {"B2", detail::vector_to_json(m.B2)},
         {"Vg", m.Vg}};
  if (!m.labels.empty()) j["labels"] = m.labels;
  if (!m.units.empty()) j["units"] = m.units;
  return j;
}

inline json buck_report_to_json(const BuckReport& r) {
  return json{{"p", r.p},
              {"V", r.V},
              {"I", r.I},
              {"alpha", r.alpha},
              {"eta", r.eta},
              {"P_in", r.P_in},
              {"P_out", r.P_out},
              {"f_s", r.f_s},
              {"lf_floor", r.lf_floor},
              {"lf_floor_eta_linear", r.lf_floor_eta_linear},
              {"limit_floor", r.limit_floor},
              {"sigma_i", r.sigma_i_cov},
              {"sigma_v", r.sigma_v_cov},
              {"sigma_i_closed_form", r.sigma_i_closed},
              {"sigma_v_closed_form", r.sigma_v_closed},
              {"sigma_v_closed_form_literal", std::sqrt(std::max(0.0, r.closed.sigma_v2_literal))},
              {"nu", r.closed.nu},
              {"gamma", r.closed.gamma}};
}

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

inline ControllerSpec controller_from_json(const json& j) {
  try {
    ControllerSpec s;
    const auto kind = controller_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown controller kind '" + j.at("kind").get<std::string>() + "'");
    s.kind = *kind;
    s.p_ref = j.value("p_ref", 0.5);
    if (j.contains("bands")) {
      for (const auto& b : j.at("bands")) {
        HysteresisBand hb;
        hb.state = b.at("state").get<int>();
        hb.lower = b.at("lower").get<double>();
        hb.upper = b.at("upper").get<double>();
        hb.amp_below = b.value("amp_below", 1);
        hb.amp_above = b.value("amp_above", 0);
        s.bands.push_back(hb);
      }
    }
    s.k_I = j.value("k_I", 0.0);
    s.V_d = j.value("V_d", 0.0);
    s.v_state = j.value("v_state", -1);
    s.s_I0 = j.value("s_I0", 0.0);
    s.anti_windup = j.value("anti_windup", true);
    s.event_detection = j.value("event_detection", false);
    if (j.contains("x_d")) s.x_d = detail::vector_from_json(j.at("x_d"), "x_d");
    if (j.contains("K")) s.K = detail::vector_from_json(j.at("K"), "K").transpose();
    return s;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed controller JSON: ") + e.what());
  }
}

inline json controller_to_json(const ControllerSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))}, {"p_ref", s.p_ref}};
  if (!s.bands.empty()) {
    json bands = json::array();
    for (const auto& b : s.bands) {
      bands.push_back({{"state", b.state}, {"lower", b.lower}, {"upper", b.upper},
                       {"amp_below", b.amp_below}, {"amp_above", b.amp_above}});
    }
    j["bands"] = bands;
  }
  if (s.kind == ControllerKind::integral) {
    j["k_I"] = s.k_I;
    j["V_d"] = s.V_d;
    j["v_state"] = s.v_state;
    j["s_I0"] = s.s_I0;
    j["anti_windup"] = s.anti_windup;
  }
  if (s.kind == ControllerKind::state_feedback) {
    j["x_d"] = detail::vector_to_json(s.x_d);
    j["K"] = detail::vector_to_json(s.K.transpose());
  }
  if (s.event_detection) j["event_detection"] = true;
  return j;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

inline std::string state_column(const ConverterModel& m, Eigen::Index j) {
  std::string name = m.label(j);
  if (!m.units.empty()) name += "_" + m.units[static_cast<std::size_t>(j)];
  return name;
}

/// Pulse-boundary rows, or sample rows when samples were recorded.
inline void write_trajectory_csv(std::ostream& os, const ConverterModel& m, const Trajectory& tr,
                                 const std::vector<std::string>& header = {}) {
  write_header(os, header);
  os << "t_seconds";
  for (Eigen::Index j = 0; j < m.dim(); ++j) os << ',' << state_column(m, j);
  os << ",a_k\n";
  auto row = [&](double t, const Eigen::VectorXd& x, int a) {
    os << fmt(t);
    for (Eigen::Index j = 0; j < x.size(); ++j) os << ',' << fmt(x[j]);
    os << ',' << a << '\n';
  };
  if (!tr.sample_t.empty()) {
    for (std::size_t i = 0; i < tr.sample_t.size(); ++i) row(tr.sample_t[i], tr.sample_x[i], tr.sample_a[i]);
  } else {
    for (std::size_t k = 0; k < tr.t_start.size(); ++k) row(tr.t_start[k], tr.x_start[k], tr.amps[k]);
  }
}

inline void write_closed_loop_csv(std::ostream& os, const ConverterModel& m, const ClosedLoopLog& log,
                                  const std::vector<std::string>& header = {}) {
  write_header(os, header);
  os << "t_seconds";
  for (Eigen::Index j = 0; j < m.dim(); ++j) os << ',' << state_column(m, j);
  os << ",p_used,a_k,ell_k,s_I\n";
  for (std::size_t k = 0; k < log.size(); ++k) {
    os << fmt(log.t[k]);
    for (Eigen::Index j = 0; j < log.dim; ++j) os << ',' << fmt(log.state(k, j));
    os << ',' << fmt(log.p_used[k]) << ',' << log.amps[k] << ',' << log.lens[k] << ',' << fmt(log.s_I[k]) << '\n';
  }
}

}  // namespace randswitch::io
