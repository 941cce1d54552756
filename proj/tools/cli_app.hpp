#pragma once

// Command-line front end. run_cli() is separate from main() so tests can
// drive it with captured streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "randswitch/randswitch.hpp"

#ifndef RANDSWITCH_VERSION
#define RANDSWITCH_VERSION "0.0.0"
#endif

namespace randswitch::cli {

enum ExitCode : int { ok = 0, usage = 2, numerical = 3 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string joined_args(int argc, const char* const* argv) {
  std::string s = "randswitch";
  for (int i = 1; i < argc; ++i) {
    s += ' ';
    s += argv[i];
  }
  return s;
}

// Writes to --out when given, else to the captured stdout.
class Sink {
public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      os_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw UsageError("--out: cannot open '" + path + "' for writing");
      os_ = file_.get();
    }
  }
  std::ostream& get() { return *os_; }

private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

inline io::json load_json_file(const std::string& path, const std::string& flag) {
  try {
    return io::json::parse(io::detail::read_file(path));
  } catch (const io::json::exception& e) {
    throw UsageError(flag + ": '" + path + "' is not valid JSON: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

inline PulseLengthDist parse_dist(const std::string& spec, const std::string& flag) {
  try {
    return io::parse_dist_spec(spec);
  } catch (const NumericalError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

inline Eigen::VectorXd parse_vector(const std::string& s, Eigen::Index n, const std::string& flag) {
  if (s.empty()) return Eigen::VectorXd::Zero(n);
  const auto parts = io::detail::split(s, ',');
  if (static_cast<Eigen::Index>(parts.size()) != n) {
    throw UsageError(flag + ": expected " + std::to_string(n) + " comma-separated values");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    try {
      v[j] = io::detail::to_double(parts[static_cast<std::size_t>(j)], flag);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return v;
}

inline std::vector<std::string> provenance(const std::string& cmdline) {
  return {std::string("randswitch ") + RANDSWITCH_VERSION, "command: " + cmdline};
}

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::int64_t> counts;
};

inline Histogram histogram(const std::vector<double>& v, int bins) {
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (v.empty()) return h;
  h.lo = *std::min_element(v.begin(), v.end());
  h.hi = *std::max_element(v.begin(), v.end());
  const double w = (h.hi - h.lo) / bins;
  for (double x : v) {
    auto i = w > 0.0 ? static_cast<std::int64_t>((x - h.lo) / w) : 0;
    i = std::clamp<std::int64_t>(i, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(i)];
  }
  return h;
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random switching (RS/FRS) analysis and simulation for two-topology DC-DC converters",
               "randswitch"};
  app.set_version_flag("--version", std::string(RANDSWITCH_VERSION));
  app.require_subcommand(1);
  const std::string cmdline = detail::joined_args(argc, argv);

  std::function<void()> action;
  auto add = [&](const std::string& name, const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    return sub;
  };

  // Shared option storage; each subcommand binds the subset it uses.
  double p = 0.5;
  double t_eps = 1.0;
  std::string len_spec = "det:1";
  std::size_t pulses = 1000;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format = "csv";

  auto prob_opt = [&](CLI::App* s) {
    s->add_option("--p", p, "probability of the 'on' amplitude")->check(CLI::Range(0.0, 1.0));
  };
  auto teps_opt = [&](CLI::App* s) {
    s->add_option("--t-eps", t_eps, "fundamental switching quantum in seconds")->check(CLI::PositiveNumber);
  };
  auto dist_opt = [&](CLI::App* s, const std::string& flag) {
    s->add_option(flag, len_spec,
                  "pulse-length distribution: det:L | uniform:a:b | huffman:N | "
                  "canonical:L1:L2:lmin:lmax | gaussian:mu:var:lmin:lmax | file:path");
  };
  auto seed_opt = [&](CLI::App* s) { s->add_option("--seed", seed, "64-bit random seed"); };
  auto out_opt = [&](CLI::App* s) { s->add_option("-o,--out", out_path, "output file (default stdout)"); };
  auto fmt_opt = [&](CLI::App* s) {
    s->add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto need_seed = [&](const std::string& why) {
    if (!seed) throw UsageError("--seed is required " + why);
    return *seed;
  };

  // gen ---------------------------------------------------------------------
  auto* gen = add("gen", "generate a switching sequence");
  prob_opt(gen);
  teps_opt(gen);
  dist_opt(gen, "--len");
  gen->add_option("--pulses", pulses, "number of pulses")->check(CLI::PositiveNumber);
  seed_opt(gen);
  out_opt(gen);
  fmt_opt(gen);
  gen->callback([&] {
    action = [&] {
      const auto s = need_seed("for gen");
      const SwitchPolicy policy(p, detail::parse_dist(len_spec, "--len"));
      Rng rng(s);
      const auto seq = generate(policy, pulses, t_eps, rng);
      detail::Sink sink(out_path, out);
      if (format == "json") {
        auto j = io::sequence_to_json(seq);
        j["command"] = cmdline;
        sink.get() << j.dump() << '\n';
      } else {
        auto h = detail::provenance(cmdline);
        h.push_back("units: t_start in seconds, ell in quanta");
        io::write_sequence_csv(sink.get(), seq, h);
      }
    };
  });

  // psd ---------------------------------------------------------------------
  auto* psd = add("psd", "power spectral density of a switching function");
  std::string mode = "frs";
  int l_rs = 1;
  std::string grid = "log";
  std::size_t points = 1024;
  double fmax = 50.0;
  bool envelope = false;
  bool db = false;
  std::size_t trials = 200;
  std::size_t mc_pulses = 500;
  psd->add_option("--mode", mode, "rs | frs | mc")->check(CLI::IsMember({"rs", "frs", "mc"}));
  prob_opt(psd);
  teps_opt(psd);
  psd->add_option("--l", l_rs, "RS pulse length in quanta")->check(CLI::PositiveNumber);
  dist_opt(psd, "--dist");
  psd->add_option("--grid", grid, "log | dense")->check(CLI::IsMember({"log", "dense"}));
  psd->add_option("--points", points, "log-grid points per side")->check(CLI::Range(2, 1 << 22));
  psd->add_option("--fmax", fmax, "grid edge in units of 1/t_eps")->check(CLI::PositiveNumber);
  psd->add_flag("--envelope", envelope, "add the Lorentzian envelope column");
  psd->add_flag("--db", db, "add 10 log10 columns for every curve");
  psd->add_option("--trials", trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  psd->add_option("--pulses", mc_pulses, "pulses per Monte-Carlo record")->check(CLI::PositiveNumber);
  seed_opt(psd);
  out_opt(psd);
  psd->callback([&] {
    action = [&] {
      const auto dist = mode == "rs" ? make_deterministic(l_rs) : detail::parse_dist(len_spec, "--dist");
      const auto freqs = grid == "log" ? log_grid(t_eps, points, 1e-3, fmax) : dense_grid(t_eps, dist.lmax(), fmax);
      const PsdCurve analytic = mode == "rs" ? psd_rs(p, l_rs, t_eps, freqs) : psd_frs(p, dist, t_eps, freqs);
      std::vector<io::Column> extra;
      auto h = detail::provenance(cmdline);
      h.push_back("units: freq in Hz, noise in 1/Hz (two-sided)");
      if (mode == "mc") {
        const auto s = need_seed("for --mode mc");
        const SwitchPolicy policy(p, dist);
        const auto est = mc_psd_estimate(policy, mc_pulses, trials, t_eps, freqs, s);
        extra.push_back({"mc_estimate", est.noise});
        h.push_back("mc_dc_weight=" + io::fmt(est.dc_weight) +
                    " dc_lobe_halfwidth_hz=" + io::fmt(dc_lobe_halfwidth(dist, mc_pulses, t_eps)));
      }
      if (envelope) {
        const auto fit = fit_envelope(p, dist, t_eps);
        extra.push_back({"envelope", envelope_curve(fit, freqs).noise});
        h.push_back("envelope G=" + io::fmt(fit.G) + " w_rad_per_s=" + io::fmt(fit.w));
      }
      if (db) {
        const std::size_t n = extra.size();
        extra.push_back({"noise_db", io::to_db(analytic.noise)});
        for (std::size_t i = 0; i < n; ++i) extra.push_back({extra[i].name + "_db", io::to_db(extra[i].values)});
      }
      detail::Sink sink(out_path, out);
      io::write_psd_csv(sink.get(), analytic, extra, h);
    };
  });

  // envelope ----------------------------------------------------------------
  auto* env = add("envelope", "Lorentzian envelope parameters");
  bool env_curve = false;
  prob_opt(env);
  teps_opt(env);
  dist_opt(env, "--dist");
  env->add_flag("--curve", env_curve, "emit the envelope on a log grid as CSV");
  env->add_option("--points", points, "log-grid points per side")->check(CLI::Range(2, 1 << 22));
  out_opt(env);
  env->callback([&] {
    action = [&] {
      const auto dist = detail::parse_dist(len_spec, "--dist");
      const auto fit = fit_envelope(p, dist, t_eps);
      detail::Sink sink(out_path, out);
      if (env_curve) {
        const auto freqs = log_grid(t_eps, points);
        auto h = detail::provenance(cmdline);
        h.push_back("envelope G=" + io::fmt(fit.G) + " w_rad_per_s=" + io::fmt(fit.w));
        io::write_psd_csv(sink.get(), envelope_curve(fit, freqs), {}, h);
      } else {
        const io::json j{{"G", fit.G},
                         {"w_rad_per_s", fit.w},
                         {"corner_hz", fit.corner_hz()},
                         {"lf_level", lf_noise_level(p, dist, t_eps)},
                         {"degenerate", fit.degenerate},
                         {"command", cmdline}};
        sink.get() << j.dump(2) << '\n';
      }
    };
  });

  // buck --------------------------------------------------------------------
  auto* buck = add("buck", "buck converter analysis and simulation");
  BuckParams bp{0.0, 0.0, 0.0, 0.0, 1.0};
  bool simulate_flag = false;
  bool histogram_flag = false;
  int bins = 50;
  std::string controller = "open_loop";
  double k_I = 0.0;
  std::optional<double> V_d;
  int spq = 4;
  buck->add_option("--L", bp.L, "inductance, H")->required()->check(CLI::PositiveNumber);
  buck->add_option("--C", bp.C, "capacitance, F")->required()->check(CLI::PositiveNumber);
  buck->add_option("--R", bp.R, "load resistance, ohm")->required()->check(CLI::PositiveNumber);
  buck->add_option("--r", bp.r, "series resistance, ohm")->check(CLI::NonNegativeNumber);
  buck->add_option("--Vg", bp.Vg, "input voltage, V")->check(CLI::PositiveNumber);
  prob_opt(buck);
  teps_opt(buck);
  dist_opt(buck, "--dist");
  buck->add_flag("--simulate", simulate_flag, "simulate and write the trajectory CSV");
  buck->add_flag("--histogram", histogram_flag, "simulate and write histograms of i and v samples");
  buck->add_option("--bins", bins, "histogram bins")->check(CLI::Range(1, 100000));
  buck->add_option("--controller", controller, "open_loop | integral")
      ->check(CLI::IsMember({"open_loop", "integral"}));
  buck->add_option("--kI", k_I, "integral gain, 1/(V s)");
  buck->add_option("--Vd", V_d, "voltage setpoint, V");
  buck->add_option("--pulses", pulses, "pulses to simulate")->check(CLI::PositiveNumber);
  buck->add_option("--samples-per-quantum", spq, "histogram samples per quantum")->check(CLI::Range(1, 1024));
  seed_opt(buck);
  out_opt(buck);
  buck->callback([&] {
    action = [&] {
      const auto dist = detail::parse_dist(len_spec, "--dist");
      const auto model = buck_model(bp);
      detail::Sink sink(out_path, out);
      if (!simulate_flag && !histogram_flag) {
        auto j = io::buck_report_to_json(buck_analysis(bp, p, dist, t_eps));
        j["command"] = cmdline;
        sink.get() << j.dump(2) << '\n';
        return;
      }
      const auto s = need_seed("for buck --simulate/--histogram");
      Rng rng(s);
      const Eigen::VectorXd x0 = p > 0.0 ? dc_solve(model, p).X : Eigen::VectorXd::Zero(2);
      if (histogram_flag) {
        std::vector<double> iv, vv;
        struct Collect {
          std::vector<double>* i;
          std::vector<double>* v;
          void on_sample(double, const Eigen::VectorXd& x, int) {
            i->push_back(x[0]);
            v->push_back(x[1]);
          }
        } col{&iv, &vv};
        const SwitchPolicy policy(p, dist);
        SimulateOptions opt;
        opt.samples_per_quantum = spq;
        simulate(model, PolicyDecider{&policy, &rng}, x0, pulses, t_eps, col, opt);
        const auto hi = detail::histogram(iv, bins);
        const auto hv = detail::histogram(vv, bins);
        const io::json j{{"i", {{"lo", hi.lo}, {"hi", hi.hi}, {"counts", hi.counts}}},
                         {"v", {{"lo", hv.lo}, {"hi", hv.hi}, {"counts", hv.counts}}},
                         {"samples", iv.size()},
                         {"command", cmdline}};
        sink.get() << j.dump() << '\n';
        return;
      }
      auto h = detail::provenance(cmdline);
      if (controller == "integral") {
        if (!V_d) throw UsageError("--Vd is required with --controller integral");
        ControllerSpec spec;
        spec.kind = ControllerKind::integral;
        spec.k_I = k_I;
        spec.V_d = *V_d;
        spec.v_state = 1;
        ClosedLoopLog log;
        run_closed_loop(model, spec, dist, Eigen::VectorXd::Zero(2), pulses, t_eps, rng, &log);
        io::write_closed_loop_csv(sink.get(), model, log, h);
      } else {
        const SwitchPolicy policy(p, dist);
        const auto tr = simulate_open_loop(model, policy, x0, pulses, t_eps, rng);
        io::write_trajectory_csv(sink.get(), model, tr, h);
      }
    };
  });

  // sim ---------------------------------------------------------------------
  auto* sim = add("sim", "open-loop simulation of a converter model");
  std::string model_path;
  std::string x0_str;
  int sim_spq = 0;
  sim->add_option("--model", model_path, "model JSON")->required();
  prob_opt(sim);
  teps_opt(sim);
  dist_opt(sim, "--dist");
  sim->add_option("--pulses", pulses, "number of pulses")->check(CLI::PositiveNumber);
  sim->add_option("--x0", x0_str, "initial state, comma separated (default: zero)");
  sim->add_option("--samples-per-quantum", sim_spq, "intra-pulse samples per quantum")->check(CLI::Range(0, 1024));
  seed_opt(sim);
  out_opt(sim);
  sim->callback([&] {
    action = [&] {
      const auto s = need_seed("for sim");
      ConverterModel model;
      try {
        model = io::model_from_json(detail::load_json_file(model_path, "--model"));
      } catch (const UsageError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--model: ") + e.what());
      }
      const auto x0 = detail::parse_vector(x0_str, model.dim(), "--x0");
      const SwitchPolicy policy(p, detail::parse_dist(len_spec, "--dist"));
      Rng rng(s);
      SimulateOptions opt;
      opt.samples_per_quantum = sim_spq;
      const auto tr = simulate_open_loop(model, policy, x0, pulses, t_eps, rng, opt);
      detail::Sink sink(out_path, out);
      io::write_trajectory_csv(sink.get(), model, tr, detail::provenance(cmdline));
    };
  });

  // control -----------------------------------------------------------------
  auto* ctl = add("control", "closed-loop simulation with a controller spec");
  std::string controller_path;
  ctl->add_option("--model", model_path, "model JSON")->required();
  ctl->add_option("--controller", controller_path, "controller JSON")->required();
  teps_opt(ctl);
  dist_opt(ctl, "--dist");
  ctl->add_option("--pulses", pulses, "number of pulses")->check(CLI::PositiveNumber);
  ctl->add_option("--x0", x0_str, "initial state, comma separated (default: zero)");
  seed_opt(ctl);
  out_opt(ctl);
  ctl->callback([&] {
    action = [&] {
      const auto s = need_seed("for control");
      ConverterModel model;
      ControllerSpec spec;
      try {
        model = io::model_from_json(detail::load_json_file(model_path, "--model"));
      } catch (const UsageError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--model: ") + e.what());
      }
      try {
        spec = io::controller_from_json(detail::load_json_file(controller_path, "--controller"));
        spec.validate(model.dim());
      } catch (const UsageError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--controller: ") + e.what());
      }
      const auto x0 = detail::parse_vector(x0_str, model.dim(), "--x0");
      const auto dist = detail::parse_dist(len_spec, "--dist");
      Rng rng(s);
      ClosedLoopLog log;
      run_closed_loop(model, spec, dist, x0, pulses, t_eps, rng, &log);
      detail::Sink sink(out_path, out);
      io::write_closed_loop_csv(sink.get(), model, log, detail::provenance(cmdline));
    };
  });

  // dist --------------------------------------------------------------------
  auto* dst = add("dist", "pulse-length distribution table and moments");
  dist_opt(dst, "--dist");
  out_opt(dst);
  fmt_opt(dst);
  dst->callback([&] {
    action = [&] {
      const auto dist = detail::parse_dist(len_spec, "--dist");
      detail::Sink sink(out_path, out);
      if (format == "json") {
        sink.get() << io::dist_to_json(dist).dump(2) << '\n';
      } else {
        io::write_dist_csv(sink.get(), dist, detail::provenance(cmdline));
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return usage;
  }
  try {
    if (action) action();
    return ok;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical;
  }
}

}  // namespace randswitch::cli
