#pragma once

// Conditional-probability switching controllers: open loop, RS with
// hysteresis, random integral control and random state feedback. Decisions
// are taken once per pulse boundary from the state at that instant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "randswitch/converter.hpp"
#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/rng.hpp"

namespace randswitch {

enum class ControllerKind { open_loop, hysteresis, integral, state_feedback };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::open_loop: return "open_loop";
    case ControllerKind::hysteresis: return "hysteresis";
    case ControllerKind::integral: return "integral";
    case ControllerKind::state_feedback: return "state_feedback";
  }
  return "open_loop";
}

inline std::optional<ControllerKind> controller_kind_from_string(std::string_view s) {
  for (auto k : {ControllerKind::open_loop, ControllerKind::hysteresis, ControllerKind::integral,
                 ControllerKind::state_feedback}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// Band [lower, upper] on one state. Outside it the amplitude is forced.
struct HysteresisBand {
  int state = 0;
  double lower = 0.0;
  double upper = 0.0;
  int amp_below = 1;
  int amp_above = 0;
};

struct ControllerSpec {
  ControllerKind kind = ControllerKind::open_loop;
  double p_ref = 0.5;
  std::vector<HysteresisBand> bands;
  // integral
  double k_I = 0.0;
  double V_d = 0.0;
  int v_state = -1;  // measured state; -1 selects the last one
  double s_I0 = 0.0;
  bool anti_windup = true;
  // state feedback
  Eigen::VectorXd x_d;
  Eigen::RowVectorXd K;
  // hysteresis: end a pulse at the first quantum boundary that violates a band
  bool event_detection = false;

  void validate(Eigen::Index n) const {
    detail::require(p_ref >= 0.0 && p_ref <= 1.0 && std::isfinite(p_ref), "p_ref must be in [0, 1]");
    for (const auto& b : bands) {
      detail::require(b.state >= 0 && b.state < n, "hysteresis band refers to a missing state");
      detail::require(b.lower < b.upper, "hysteresis band requires lower < upper");
      detail::require((b.amp_below == 0 || b.amp_below == 1) && (b.amp_above == 0 || b.amp_above == 1),
                      "forced amplitudes must be 0 or 1");
    }
    if (kind == ControllerKind::hysteresis) detail::require(!bands.empty(), "hysteresis needs at least one band");
    if (kind == ControllerKind::integral) {
      detail::require(std::isfinite(k_I) && std::isfinite(V_d) && std::isfinite(s_I0),
                      "integral gain and setpoint must be finite");
      detail::require(v_state >= -1 && v_state < n, "v_state out of range");
    }
    if (kind == ControllerKind::state_feedback) {
      detail::require(x_d.size() == n, "x_d must match the state dimension");
      detail::require(K.size() == n, "K must match the state dimension");
    }
  }

  int measured_state(Eigen::Index n) const { return v_state < 0 ? static_cast<int>(n) - 1 : v_state; }
};

struct ControllerState {
  double s_I = 0.0;
  bool saturated = false;
  double last_p = 0.0;
};

inline ControllerState initial_state(const ControllerSpec& spec) {
  ControllerState s;
  s.s_I = spec.s_I0;
  return s;
}

/// 1 for u >= 1, 0 for u <= 0, u otherwise.
inline double sat(double u) {
  if (u >= 1.0) return 1.0;
  if (u <= 0.0) return 0.0;
  return u;
}

/// First band the state lies outside of, if any.
inline const HysteresisBand* violated_band(const ControllerSpec& spec, const Eigen::VectorXd& x) {
  for (const auto& b : spec.bands) {
    const double v = x[b.state];
    if (v < b.lower || v > b.upper) return &b;
  }
  return nullptr;
}

inline double state_feedback_p(const ControllerSpec& spec, const Eigen::VectorXd& x) {
  return sat(spec.p_ref - spec.K.dot(spec.x_d - x));
}

/// Probability that the next amplitude is 1.
inline double decision_probability(const ControllerSpec& spec, const ControllerState& cs,
                                   const Eigen::VectorXd& x) {
  switch (spec.kind) {
    case ControllerKind::open_loop: return spec.p_ref;
    case ControllerKind::hysteresis: {
      if (const auto* b = violated_band(spec, x)) {
        return x[b->state] < b->lower ? b->amp_below : b->amp_above;
      }
      return spec.p_ref;
    }
    case ControllerKind::integral: return sat(spec.k_I * cs.s_I);
    case ControllerKind::state_feedback: return state_feedback_p(spec, x);
  }
  return spec.p_ref;
}

/// Draws the amplitude. Exactly one uniform is consumed per call, forced or
/// not, and the two outcomes have probabilities P and 1 - P.
inline int decide_amplitude(const ControllerSpec& spec, ControllerState& cs, const Eigen::VectorXd& x,
                            Rng& rng) {
  const double p = decision_probability(spec, cs, x);
  cs.last_p = p;
  return rng.uniform() < p ? 1 : 0;
}

/// Euler step s_I += (V_d - v) dt. With anti-windup the integrator holds
/// while the output is pinned at 0 or 1 and the error pushes further out.
inline ControllerState integral_update(const ControllerSpec& spec, ControllerState cs, double v_meas,
                                       double dt) {
  detail::require(dt > 0.0, "dt must be > 0");
  const double e = spec.V_d - v_meas;
  const double u = spec.k_I * cs.s_I;
  const bool high = u >= 1.0 && spec.k_I * e > 0.0;
  const bool low = u <= 0.0 && spec.k_I * e < 0.0;
  cs.saturated = u >= 1.0 || u <= 0.0;
  if (!(spec.anti_windup && (high || low))) cs.s_I += e * dt;
  cs.last_p = sat(spec.k_I * cs.s_I);
  return cs;
}

struct PRefSolution {
  double p = 0.0;
  double residual = 0.0;  // |X(p) - x_d| over the constrained states, relative
  bool reachable = false;
};

/// p in [0, 1] minimizing |X(p) - x_d| over the entries of x_d that are not
/// NaN. Scan followed by Gauss-Newton with dX/dp = -A(p)^-1 beta Vg.
inline PRefSolution hysteresis_p_ref(const ConverterModel& model, const Eigen::VectorXd& x_d,
                                     double tolerance = 1e-8) {
  model.validate();
  detail::require(x_d.size() == model.dim(), "x_d must match the state dimension");
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < x_d.size(); ++j) {
    if (!std::isnan(x_d[j])) idx.push_back(j);
  }
  detail::require(!idx.empty(), "x_d constrains no state");
  double ref = 0.0;
  for (auto j : idx) ref += x_d[j] * x_d[j];
  ref = std::sqrt(ref);
  auto residual_vec = [&](double p, Eigen::VectorXd* dXdp) {
    const auto op = dc_solve(model, p);
    Eigen::VectorXd r(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) r[static_cast<Eigen::Index>(i)] = op.X[idx[i]] - x_d[idx[i]];
    if (dXdp) {
      const Eigen::VectorXd d = -model.averaged_A(p).fullPivLu().solve(op.beta * model.Vg);
      dXdp->resize(r.size());
      for (std::size_t i = 0; i < idx.size(); ++i) (*dXdp)[static_cast<Eigen::Index>(i)] = d[idx[i]];
    }
    return r;
  };
  double best_p = 0.0, best = std::numeric_limits<double>::infinity();
  constexpr int scan = 200;
  for (int i = 0; i <= scan; ++i) {
    const double p = static_cast<double>(i) / scan;
    double v;
    try {
      v = residual_vec(p, nullptr).norm();
    } catch (const SingularSystem&) {
      continue;
    }
    if (v < best) {
      best = v;
      best_p = p;
    }
  }
  if (!std::isfinite(best)) throw SingularSystem("averaged matrix singular for every p");
  double p = best_p;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd J;
    const Eigen::VectorXd r = residual_vec(p, &J);
    const double jj = J.squaredNorm();
    if (jj == 0.0) break;
    double next = std::clamp(p - J.dot(r) / jj, 0.0, 1.0);
    double nr = residual_vec(next, nullptr).norm();
    while (nr > r.norm() && std::abs(next - p) > 1e-16) {
      next = 0.5 * (next + p);
      nr = residual_vec(next, nullptr).norm();
    }
    const bool done = std::abs(next - p) <= 1e-15;
    if (nr <= r.norm()) p = next;
    if (done) break;
  }
  PRefSolution s;
  s.p = p;
  s.residual = residual_vec(p, nullptr).norm() / std::max(ref, 1e-300);
  s.reachable = s.residual <= tolerance;
  return s;
}

/// lambda_min / (5 k_I) with lambda_min the slowest averaged decay rate.
inline double quasi_static_rate_limit(const ConverterModel& model, double p, double k_I) {
  const Eigen::VectorXcd ev = model.averaged_A(p).eigenvalues();
  double lmin = std::numeric_limits<double>::infinity();
  for (const auto& l : ev) {
    if (!(l.real() < 0.0)) throw UnstableSystem("averaged system has an eigenvalue with Re >= 0");
    lmin = std::min(lmin, std::abs(l.real()));
  }
  if (k_I == 0.0) return std::numeric_limits<double>::infinity();
  return lmin / (5.0 * std::abs(k_I));
}

/// Whether an integrator rate bound |ds_I/dt| <= rate keeps p quasi-static.
inline bool quasi_static_check(const ConverterModel& model, double p, double k_I, double rate) {
  return std::abs(rate) <= quasi_static_rate_limit(model, p, k_I);
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

/// Decider for converter simulate(): amplitude from the controller, then
/// pulse length from the distribution. The integrator advances by the pulse
/// just decided, using the boundary measurement.
class ClosedLoopDecider {
public:
  ClosedLoopDecider(const ControllerSpec& spec, const PulseLengthDist& dist, Rng& rng, Eigen::Index n)
      : spec_(&spec), dist_(&dist), rng_(&rng), state_(initial_state(spec)),
        v_state_(spec.measured_state(n)) {
    spec.validate(n);
  }

  PulseDecision operator()(std::size_t, double, const Eigen::VectorXd& x) {
    s_I_used_ = state_.s_I;
    PulseDecision d;
    d.a = decide_amplitude(*spec_, state_, x, *rng_);
    p_used_ = state_.last_p;
    d.len = dist_->sample(*rng_);
    if (spec_->kind == ControllerKind::integral) {
      state_ = integral_update(*spec_, state_, x[v_state_], d.len * t_eps_);
    }
    a_ = d.a;
    return d;
  }

  /// With event detection, ends the pulse once a band is violated in the
  /// direction the current amplitude does not correct.
  bool split(const Eigen::VectorXd& x) const {
    if (!spec_->event_detection || spec_->kind != ControllerKind::hysteresis) return false;
    const auto* b = violated_band(*spec_, x);
    if (!b) return false;
    const int forced = x[b->state] < b->lower ? b->amp_below : b->amp_above;
    return forced != a_;
  }

  void set_t_eps(double t) { t_eps_ = t; }
  const ControllerState& state() const noexcept { return state_; }
  double p_used() const noexcept { return p_used_; }
  double s_I_used() const noexcept { return s_I_used_; }

private:
  const ControllerSpec* spec_;
  const PulseLengthDist* dist_;
  Rng* rng_;
  ControllerState state_;
  int v_state_;
  double t_eps_ = 1.0;
  double p_used_ = 0.0;
  double s_I_used_ = 0.0;
  int a_ = 0;
};

/// Per-pulse closed-loop log: (t, x, p_used, a_k, l_k, s_I) at each boundary.
struct ClosedLoopLog {
  Eigen::Index dim = 0;
  std::vector<double> t;
  std::vector<double> x;  // row-major, dim entries per pulse
  std::vector<double> p_used;
  std::vector<int> amps;
  std::vector<int> lens;
  std::vector<double> s_I;
  Eigen::VectorXd x_end;
  double t_end = 0.0;

  std::size_t size() const noexcept { return t.size(); }
  double state(std::size_t k, Eigen::Index j) const { return x[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)]; }
};

namespace detail {

template <class Inner>
struct ClosedLoopLogger {
  ClosedLoopLog* log;
  const ClosedLoopDecider* dec;
  Inner* inner;

  void on_pulse(std::size_t k, double t, const Eigen::VectorXd& x, int a, int l) {
    if (log) {
      log->t.push_back(t);
      for (Eigen::Index j = 0; j < x.size(); ++j) log->x.push_back(x[j]);
      log->p_used.push_back(dec->p_used());
      log->amps.push_back(a);
      log->lens.push_back(l);
      log->s_I.push_back(dec->s_I_used());
    }
    if constexpr (PulseObserver<Inner>) inner->on_pulse(k, t, x, a, l);
  }
  void on_sample(double t, const Eigen::VectorXd& x, int a) {
    if constexpr (SampleObserver<Inner>) inner->on_sample(t, x, a);
  }
  void on_end(double t, const Eigen::VectorXd& x) {
    if (log) {
      log->t_end = t;
      log->x_end = x;
    }
    if constexpr (EndObserver<Inner>) inner->on_end(t, x);
  }
};

struct NoObserver {};

}  // namespace detail

/// Runs the closed loop for n_pulses. `log` may be null; `obs` receives the
/// usual simulate() callbacks.
template <class Observer = detail::NoObserver>
ControllerState run_closed_loop(const ConverterModel& model, const ControllerSpec& spec,
                                const PulseLengthDist& dist, const Eigen::VectorXd& x0,
                                std::size_t n_pulses, double t_eps, Rng& rng, ClosedLoopLog* log,
                                Observer&& obs = {}, const SimulateOptions& opt = {}) {
  ClosedLoopDecider dec(spec, dist, rng, model.dim());
  dec.set_t_eps(t_eps);
  if (log) {
    *log = ClosedLoopLog{};
    log->dim = model.dim();
    log->t.reserve(n_pulses);
    log->x.reserve(n_pulses * static_cast<std::size_t>(model.dim()));
  }
  using Inner = std::remove_reference_t<Observer>;
  detail::ClosedLoopLogger<Inner> logger{log, &dec, &obs};
  simulate(model, dec, x0, n_pulses, t_eps, logger, opt);
  return dec.state();
}

}  // namespace randswitch
