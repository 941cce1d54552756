#pragma once

// Two-topology converters x' = A_a x + B_a Vg, a in {0, 1}: DC operating point,
// pulse-exact simulation through matrix exponentials, pulse-boundary moment
// equilibrium, ripple transfer functions and the buck closed forms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/rng.hpp"
#include "randswitch/spectrum.hpp"
#include "randswitch/switching.hpp"

namespace randswitch {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Topology 1 is active while a = 1, topology 2 while a = 0.
struct ConverterModel {
  MatrixXd A1, A2;
  VectorXd B1, B2;
  double Vg = 1.0;
  std::vector<std::string> labels;
  std::vector<std::string> units;

  Eigen::Index dim() const { return A1.rows(); }

  void validate() const {
    const auto n = A1.rows();
    detail::require(n >= 1, "model needs at least one state");
    detail::require(A1.cols() == n && A2.rows() == n && A2.cols() == n,
                    "A1 and A2 must be square and of equal size");
    detail::require(B1.size() == n && B2.size() == n, "B1 and B2 must match the state dimension");
    detail::require(A1.allFinite() && A2.allFinite() && B1.allFinite() && B2.allFinite() &&
                        std::isfinite(Vg),
                    "model entries must be finite");
    detail::require(labels.empty() || labels.size() == static_cast<std::size_t>(n),
                    "one label per state required");
    detail::require(units.empty() || units.size() == static_cast<std::size_t>(n),
                    "one unit per state required");
  }

  const MatrixXd& A(int a) const { return a ? A1 : A2; }
  const VectorXd& B(int a) const { return a ? B1 : B2; }
  MatrixXd averaged_A(double p) const { return p * A1 + (1.0 - p) * A2; }
  VectorXd averaged_B(double p) const { return p * B1 + (1.0 - p) * B2; }

  std::string label(Eigen::Index j) const {
    return labels.empty() ? "x" + std::to_string(j) : labels[static_cast<std::size_t>(j)];
  }
};

struct OperatingPoint {
  double p = 0.0;
  VectorXd X;     // DC state
  VectorXd beta;  // ripple drive per volt: (A1 - A2) X / Vg + (B1 - B2)
  double residual = 0.0;
};

/// Solves 0 = (pA1 + p'A2) X + (pB1 + p'B2) Vg.
inline OperatingPoint dc_solve(const ConverterModel& m, double p) {
  m.validate();
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(m.Vg != 0.0, "Vg must be non-zero");
  const MatrixXd A = m.averaged_A(p);
  const VectorXd b = m.averaged_B(p) * m.Vg;
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) throw SingularSystem("averaged matrix pA1 + (1-p)A2 is singular");
  OperatingPoint op;
  op.p = p;
  op.X = lu.solve(-b);
  const double scale = A.norm() * op.X.norm() + b.norm();
  op.residual = scale > 0.0 ? (A * op.X + b).norm() / scale : 0.0;
  if (!(op.residual <= 1e-10)) throw SingularSystem("averaged matrix is too ill-conditioned for a DC solve");
  op.beta = (m.A1 - m.A2) * op.X / m.Vg + (m.B1 - m.B2);
  return op;
}

// ---------------------------------------------------------------------------
// Exact stepping
// ---------------------------------------------------------------------------

/// Affine map x -> F x + g.
struct AffineStep {
  MatrixXd F;
  VectorXd g;

  VectorXd apply(const VectorXd& x) const { return F * x + g; }

  /// (*this) after `first`.
  AffineStep after(const AffineStep& first) const { return {F * first.F, F * first.g + g}; }
};

/// Flow of x' = A x + b over dt via exp([[A, b], [0, 0]] dt); needs no
/// inverse of A.
inline AffineStep affine_flow(const MatrixXd& A, const VectorXd& b, double dt) {
  detail::require(dt >= 0.0 && std::isfinite(dt), "dt must be >= 0");
  const auto n = A.rows();
  MatrixXd M = MatrixXd::Zero(n + 1, n + 1);
  M.topLeftCorner(n, n) = A * dt;
  M.topRightCorner(n, 1) = b * dt;
  const MatrixXd E = M.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, 1)};
}

inline AffineStep topology_flow(const ConverterModel& m, int a, double dt) {
  return affine_flow(m.A(a), m.B(a) * m.Vg, dt);
}

/// State after dt seconds in topology a.
inline VectorXd step_exact(const ConverterModel& m, const VectorXd& x, int a, double dt) {
  detail::require(dt > 0.0, "dt must be > 0");
  detail::require(x.size() == m.dim(), "state dimension mismatch");
  return topology_flow(m, a, dt).apply(x);
}

/// Per-(topology, length) cache of pulse maps on a fixed t_eps lattice.
class StepCache {
public:
  StepCache(const ConverterModel& m, double t_eps) : model_(&m), t_eps_(t_eps) {
    detail::require(t_eps > 0.0, "t_eps must be > 0");
  }

  double t_eps() const noexcept { return t_eps_; }

  const AffineStep& pulse(int a, std::int64_t ticks) {
    const auto key = std::pair{a ? 1 : 0, ticks};
    auto it = pulses_.find(key);
    if (it == pulses_.end()) {
      it = pulses_.emplace(key, topology_flow(*model_, key.first, static_cast<double>(ticks) * t_eps_)).first;
    }
    return it->second;
  }

  /// Maps for sampling at quantum midpoints with s samples per quantum:
  /// first reaches offset t_eps / (2s), then each advances t_eps / s.
  const std::pair<AffineStep, AffineStep>& sampler(int a, int s) {
    const auto key = std::pair{a ? 1 : 0, s};
    auto it = samplers_.find(key);
    if (it == samplers_.end()) {
      const double sub = t_eps_ / s;
      it = samplers_.emplace(key, std::pair{topology_flow(*model_, key.first, 0.5 * sub),
                                            topology_flow(*model_, key.first, sub)}).first;
    }
    return it->second;
  }

private:
  const ConverterModel* model_;
  double t_eps_;
  std::map<std::pair<int, std::int64_t>, AffineStep> pulses_;
  std::map<std::pair<int, int>, std::pair<AffineStep, AffineStep>> samplers_;
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct PulseDecision {
  int a = 0;
  int len = 1;
};

/// Open-loop decider: a ~ Bernoulli(p) then l ~ pulse_dist.
struct PolicyDecider {
  const SwitchPolicy* policy;
  Rng* rng;

  PulseDecision operator()(std::size_t, double, const VectorXd&) {
    PulseDecision d;
    d.a = rng->bernoulli(policy->p) ? 1 : 0;
    d.len = policy->pulse_dist.sample(*rng);
    return d;
  }
};

struct SimulateOptions {
  int samples_per_quantum = 0;  // 0: pulse boundaries only
  double divergence_bound = 1e150;
};

namespace detail {

template <class Obs>
concept PulseObserver = requires(Obs o, std::size_t k, double t, const VectorXd& x, int a, int l) {
  o.on_pulse(k, t, x, a, l);
};

template <class Obs>
concept SampleObserver = requires(Obs o, double t, const VectorXd& x, int a) { o.on_sample(t, x, a); };

template <class Obs>
concept EndObserver = requires(Obs o, double t, const VectorXd& x) { o.on_end(t, x); };

template <class Dec>
concept SplittingDecider = requires(Dec d, const VectorXd& x) {
  { d.split(x) } -> std::convertible_to<bool>;
};

inline void check_finite(const VectorXd& x, std::size_t k, double bound) {
  if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > bound) {
    throw NumericalDivergence(k, "state diverged");
  }
}

}  // namespace detail

/// Runs n_pulses pulses from x0. `decide(k, t, x)` returns the amplitude and
/// length of pulse k given the boundary state. The observer may implement
/// on_pulse(k, t, x_start, a, len), on_sample(t, x, a) (quantum-midpoint
/// samples when options.samples_per_quantum > 0) and on_end(t, x).
///
/// A decider with split(x) is polled after every quantum; returning true
/// ends the pulse there and the shortened length is reported.
///
/// Returns the final state.
template <class Decider, class Observer>
VectorXd simulate(const ConverterModel& model, Decider&& decide, const VectorXd& x0,
                  std::size_t n_pulses, double t_eps, Observer&& obs,
                  const SimulateOptions& opt = {}) {
  model.validate();
  detail::require(x0.size() == model.dim(), "initial state dimension mismatch");
  detail::require(opt.samples_per_quantum >= 0, "samples_per_quantum must be >= 0");
  StepCache cache(model, t_eps);
  VectorXd x = x0;
  std::int64_t tick = 0;
  const int s = opt.samples_per_quantum;
  for (std::size_t k = 0; k < n_pulses; ++k) {
    const double t0 = static_cast<double>(tick) * t_eps;
    const PulseDecision d = decide(k, t0, static_cast<const VectorXd&>(x));
    detail::require(d.a == 0 || d.a == 1, "decider returned an amplitude outside {0, 1}");
    detail::require(d.len >= 1, "decider returned a pulse length < 1");
    int len = d.len;
    VectorXd x_next;
    if constexpr (detail::SplittingDecider<Decider>) {
      // Quantum by quantum so the decider can cut the pulse short.
      const AffineStep& q = cache.pulse(d.a, 1);
      x_next = x;
      int done = 0;
      while (done < len) {
        if constexpr (detail::SampleObserver<Observer>) {
          if (s > 0) {
            const auto& [half, sub] = cache.sampler(d.a, s);
            VectorXd y = half.apply(x_next);
            for (int i = 0; i < s; ++i) {
              obs.on_sample((static_cast<double>(tick + done) + (i + 0.5) / s) * t_eps, y, d.a);
              if (i + 1 < s) y = sub.apply(y);
            }
          }
        }
        x_next = q.apply(x_next);
        ++done;
        detail::check_finite(x_next, k, opt.divergence_bound);
        if (done < len && decide.split(static_cast<const VectorXd&>(x_next))) break;
      }
      len = done;
    } else {
      if constexpr (detail::SampleObserver<Observer>) {
        if (s > 0) {
          const auto& [half, sub] = cache.sampler(d.a, s);
          VectorXd y = half.apply(x);
          const int total = len * s;
          for (int i = 0; i < total; ++i) {
            obs.on_sample(t0 + (i + 0.5) * t_eps / s, y, d.a);
            if (i + 1 < total) y = sub.apply(y);
          }
          detail::check_finite(y, k, opt.divergence_bound);
        }
      }
      x_next = cache.pulse(d.a, len).apply(x);
      detail::check_finite(x_next, k, opt.divergence_bound);
    }
    if constexpr (detail::PulseObserver<Observer>) obs.on_pulse(k, t0, x, d.a, len);
    x = std::move(x_next);
    tick += len;
  }
  if constexpr (detail::EndObserver<Observer>) obs.on_end(static_cast<double>(tick) * t_eps, x);
  return x;
}

/// Stored trajectory: boundary states, pulse decisions and optional samples.
struct Trajectory {
  double t_eps = 0.0;
  std::vector<double> t_start;
  std::vector<VectorXd> x_start;
  std::vector<int> amps;
  std::vector<int> lens;
  double t_end = 0.0;
  VectorXd x_end;
  std::vector<double> sample_t;
  std::vector<VectorXd> sample_x;
  std::vector<int> sample_a;
};

struct TrajectoryRecorder {
  Trajectory* out;

  void on_pulse(std::size_t, double t, const VectorXd& x, int a, int l) {
    out->t_start.push_back(t);
    out->x_start.push_back(x);
    out->amps.push_back(a);
    out->lens.push_back(l);
  }
  void on_sample(double t, const VectorXd& x, int a) {
    out->sample_t.push_back(t);
    out->sample_x.push_back(x);
    out->sample_a.push_back(a);
  }
  void on_end(double t, const VectorXd& x) {
    out->t_end = t;
    out->x_end = x;
  }
};

/// Open-loop convenience wrapper.
inline Trajectory simulate_open_loop(const ConverterModel& model, const SwitchPolicy& policy,
                                     const VectorXd& x0, std::size_t n_pulses, double t_eps,
                                     Rng& rng, const SimulateOptions& opt = {}) {
  Trajectory tr;
  tr.t_eps = t_eps;
  simulate(model, PolicyDecider{&policy, &rng}, x0, n_pulses, t_eps, TrajectoryRecorder{&tr}, opt);
  return tr;
}

// ---------------------------------------------------------------------------
// Averaged dynamics
// ---------------------------------------------------------------------------

/// One step of the linear-ripple mean recursion of length T.
inline VectorXd mean_update(const ConverterModel& m, double p, const VectorXd& mean, double T) {
  detail::require(T > 0.0, "T must be > 0");
  return mean + T * (m.averaged_A(p) * mean + m.averaged_B(p) * m.Vg);
}

/// FRS variant: steps by the mean pulse duration E{l} t_eps.
inline VectorXd mean_update(const ConverterModel& m, double p, const PulseLengthDist& dist,
                            double t_eps, const VectorXd& mean) {
  return mean_update(m, p, mean, dist.moments().mean * t_eps);
}

/// Largest |lambda| of the averaged matrix.
inline double fastest_mode(const ConverterModel& m, double p) {
  const Eigen::VectorXcd ev = m.averaged_A(p).eigenvalues();
  double r = 0.0;
  for (const auto& l : ev) r = std::max(r, std::abs(l));
  return r;
}

/// |lambda_max| T <= 0.1: the mean recursion is in its linear-ripple band.
inline bool linear_ripple_valid(const ConverterModel& m, double p, double T) {
  return fastest_mode(m, p) * T <= 0.1;
}

/// Exact solution of the averaged ODE x' = (pA1 + p'A2) x + (pB1 + p'B2) Vg.
inline VectorXd averaged_flow(const ConverterModel& m, double p, const VectorXd& x, double dt) {
  return affine_flow(m.averaged_A(p), m.averaged_B(p) * m.Vg, dt).apply(x);
}

// ---------------------------------------------------------------------------
// Moment equilibrium
// ---------------------------------------------------------------------------

struct CovarianceResult {
  VectorXd mean_boundary;  // E{x} at pulse starts
  MatrixXd cov_boundary;
  VectorXd mean_time;      // time-averaged E{x}
  MatrixXd cov_time;       // time-averaged covariance; diagonal = ripple power
  double spectral_radius = 0.0;
};

/// Stationary moments of the open-loop pulse recursion x' = F_{a,l} x + g_{a,l}
/// with a ~ Bernoulli(p) and l ~ pulse_dist independent of x.
///
/// The boundary moments are the exact fixed point, solved directly through
/// the vectorized second-moment map. Time averages weight each pulse by its
/// duration and sample it at samples_per_quantum midpoints per quantum.
inline CovarianceResult covariance_equilibrium(const ConverterModel& model, double p,
                                               const PulseLengthDist& dist, double t_eps,
                                               int samples_per_quantum = 4) {
  model.validate();
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  detail::require(samples_per_quantum >= 1, "samples_per_quantum must be >= 1");
  const auto n = model.dim();
  StepCache cache(model, t_eps);

  struct Branch {
    double w;
    int a;
    int l;
    const AffineStep* step;
  };
  std::vector<Branch> branches;
  for (int a = 0; a <= 1; ++a) {
    const double pa = a ? p : 1.0 - p;
    if (pa == 0.0) continue;
    for (int l = dist.lmin(); l <= dist.lmax(); ++l) {
      const double pl = dist.prob(l);
      if (pl == 0.0) continue;
      branches.push_back({pa * pl, a, l, &cache.pulse(a, l)});
    }
  }

  // Mean: m = sum w (F m + g).
  MatrixXd Fbar = MatrixXd::Zero(n, n);
  VectorXd gbar = VectorXd::Zero(n);
  for (const auto& b : branches) {
    Fbar += b.w * b.step->F;
    gbar += b.w * b.step->g;
  }
  MatrixXd K = MatrixXd::Zero(n * n, n * n);
  for (const auto& b : branches) K += b.w * Eigen::kroneckerProduct(b.step->F, b.step->F).eval();
  double rho = 0.0;
  for (const auto& l : K.eigenvalues()) rho = std::max(rho, std::abs(l));
  for (const auto& l : Fbar.eigenvalues()) rho = std::max(rho, std::abs(l));
  if (!(rho < 1.0)) {
    throw UnstableSystem("pulse recursion is not contracting (spectral radius " + std::to_string(rho) + ")");
  }
  const MatrixXd I = MatrixXd::Identity(n, n);
  CovarianceResult r;
  r.spectral_radius = rho;
  r.mean_boundary = (I - Fbar).partialPivLu().solve(gbar);
  const VectorXd& m = r.mean_boundary;

  // Deviation form: y' = F y + d with d = F m + g - m, E{d} = 0.
  MatrixXd C = MatrixXd::Zero(n, n);
  for (const auto& b : branches) {
    const VectorXd d = b.step->F * m + b.step->g - m;
    C += b.w * d * d.transpose();
  }
  const MatrixXd Kn = MatrixXd::Identity(n * n, n * n) - K;
  const VectorXd vecP = Kn.partialPivLu().solve(Eigen::Map<const VectorXd>(C.data(), n * n));
  MatrixXd P = Eigen::Map<const MatrixXd>(vecP.data(), n, n);
  P = 0.5 * (P + P.transpose());

  // One application of the map must reproduce the fixed point.
  MatrixXd P1 = C;
  for (const auto& b : branches) P1 += b.w * b.step->F * P * b.step->F.transpose();
  const double scale = std::max(P.lpNorm<Eigen::Infinity>(), C.lpNorm<Eigen::Infinity>());
  if (scale > 0.0 && (P1 - P).lpNorm<Eigen::Infinity>() > 1e-12 * std::max(1.0, scale)) {
    throw NonConvergence("covariance fixed point failed verification");
  }
  r.cov_boundary = P;

  // Time averages relative to the boundary mean to limit cancellation.
  const int s = samples_per_quantum;
  const int max_offsets = dist.lmax() * s;
  // survive[q] = P{l > q}: the pulse still runs during quantum q.
  std::vector<double> survive(static_cast<std::size_t>(dist.lmax()), 0.0);
  for (int q = 0; q < dist.lmax(); ++q) {
    for (int l = std::max(dist.lmin(), q + 1); l <= dist.lmax(); ++l) survive[static_cast<std::size_t>(q)] += dist.prob(l);
  }
  VectorXd m_acc = VectorXd::Zero(n);
  MatrixXd s_acc = MatrixXd::Zero(n, n);
  double weight = 0.0;
  for (int a = 0; a <= 1; ++a) {
    const double pa = a ? p : 1.0 - p;
    if (pa == 0.0) continue;
    const auto& [half, sub] = cache.sampler(a, s);
    // Offset j state: y_j = F_j y + h_j with y = x - m at the boundary.
    AffineStep map = half;
    for (int j = 0; j < max_offsets; ++j) {
      const double pr = survive[static_cast<std::size_t>(j / s)];
      if (pr > 0.0) {
        const VectorXd h = map.F * m + map.g - m;
        const double w = pa * pr;
        m_acc += w * h;
        s_acc += w * (map.F * P * map.F.transpose() + h * h.transpose());
        weight += w;
      }
      map = sub.after(map);
    }
  }
  const VectorXd dm = m_acc / weight;
  r.mean_time = m + dm;
  r.cov_time = s_acc / weight - dm * dm.transpose();
  r.cov_time = 0.5 * (r.cov_time + r.cov_time.transpose());
  return r;
}

// ---------------------------------------------------------------------------
// Ripple transfer and spectra
// ---------------------------------------------------------------------------

/// H(s) = (sI - (pA1 + p'A2))^-1 beta, the per-volt control-to-state map.
class RippleTransfer {
public:
  RippleTransfer(const ConverterModel& m, double p) : Abar_(m.averaged_A(p)) {
    beta_ = dc_solve(m, p).beta;
  }

  const VectorXd& beta() const noexcept { return beta_; }

  Eigen::VectorXcd response(double f) const {
    const std::complex<double> s(0.0, 2.0 * std::numbers::pi * f);
    Eigen::MatrixXcd M = -Abar_.cast<std::complex<double>>();
    M.diagonal().array() += s;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(M);
    if (!lu.isInvertible()) {
      throw SingularSystem("sI - A is singular at f = " + std::to_string(f));
    }
    return lu.solve(beta_.cast<std::complex<double>>());
  }

  /// |H_j(j 2 pi f)|^2 for every state j.
  VectorXd mag_sq(double f) const { return response(f).cwiseAbs2(); }

private:
  MatrixXd Abar_;
  VectorXd beta_;
};

inline RippleTransfer ripple_transfer_mag_sq(const ConverterModel& m, double p) {
  return RippleTransfer(m, p);
}

/// Ripple PSD of every state: |H_j|^2 Vg^2 S of the mean-removed switching
/// function. No impulse at f = 0.
inline std::vector<PsdCurve> ripple_psd(const ConverterModel& m, double p, const PulseLengthDist& dist,
                                        double t_eps, const std::vector<double>& freqs) {
  const RippleTransfer H(m, p);
  const PsdCurve sq = mix_affine(1.0, -p, psd_frs(p, dist, t_eps, freqs), p);
  std::vector<VectorXd> mags;
  mags.reserve(freqs.size());
  for (double f : freqs) mags.push_back(H.mag_sq(f));
  const VectorXd dc = H.mag_sq(0.0);
  std::vector<PsdCurve> out;
  for (Eigen::Index j = 0; j < m.dim(); ++j) {
    PsdCurve c{freqs, std::vector<double>(freqs.size()), 0.0};
    for (std::size_t i = 0; i < freqs.size(); ++i) c.noise[i] = mags[i][j] * m.Vg * m.Vg * sq.noise[i];
    c.dc_weight = dc[j] * m.Vg * m.Vg * sq.dc_weight;
    out.push_back(std::move(c));
  }
  return out;
}

/// Full-state PSD: ripple plus X_j^2 at f = 0.
inline std::vector<PsdCurve> state_psd(const ConverterModel& m, double p, const PulseLengthDist& dist,
                                       double t_eps, const std::vector<double>& freqs) {
  auto curves = ripple_psd(m, p, dist, t_eps, freqs);
  const auto op = dc_solve(m, p);
  for (Eigen::Index j = 0; j < m.dim(); ++j) curves[static_cast<std::size_t>(j)].dc_weight += op.X[j] * op.X[j];
  return curves;
}

// ---------------------------------------------------------------------------
// Buck converter
// ---------------------------------------------------------------------------

struct BuckParams {
  double L = 0.0;
  double C = 0.0;
  double R = 0.0;
  double r = 0.0;
  double Vg = 0.0;

  void validate() const {
    detail::require(L > 0.0 && C > 0.0 && R > 0.0 && Vg > 0.0, "buck L, C, R, Vg must be > 0");
    detail::require(r >= 0.0, "buck r must be >= 0");
    detail::require(std::isfinite(L * C * R * r * Vg), "buck parameters must be finite");
  }
};

/// States (i, v). On: L i' = Vg - i r - v; off: L i' = -v; C v' = i - v / R.
inline ConverterModel buck_model(const BuckParams& b) {
  b.validate();
  ConverterModel m;
  m.A1.resize(2, 2);
  m.A1 << -b.r / b.L, -1.0 / b.L, 1.0 / b.C, -1.0 / (b.R * b.C);
  m.A2.resize(2, 2);
  m.A2 << 0.0, -1.0 / b.L, 1.0 / b.C, -1.0 / (b.R * b.C);
  m.B1 = VectorXd::Zero(2);
  m.B1[0] = 1.0 / b.L;
  m.B2 = VectorXd::Zero(2);
  m.Vg = b.Vg;
  m.labels = {"i", "v"};
  m.units = {"A", "V"};
  return m;
}

/// Closed-form variances of the buck ripple for switching frequency f_s.
struct BuckClosedForm {
  double nu = 0.0;
  double gamma = 0.0;
  double sigma_i2 = 0.0;
  double sigma_v2 = 0.0;          // L R^2 / nu scaling
  double sigma_v2_literal = 0.0;  // L R^3 / nu scaling as printed
};

inline BuckClosedForm buck_closed_form(const BuckParams& b, double p, double fs) {
  const double L = b.L, C = b.C, R = b.R, r = b.r, Vg = b.Vg;
  const double ifs = 1.0 / fs;
  BuckClosedForm c;
  c.nu = R * C * (R + p * r) + L;
  c.gamma = 2 * p * r * C * C * L * R * R * R - 2 * ifs * C * L * R * R * R -
            p * r * r * ifs * C * C * R * R * R + 2 * C * L * L * R * R +
            2 * p * p * r * r * C * C * L * R * R - 6 * p * r * ifs * C * L * R * R -
            p * p * r * r * r * ifs * C * C * R * R + 2 * p * r * C * L * L * R - ifs * L * L * R -
            3 * p * p * r * r * ifs * C * L * R - p * r * r * ifs * C * L * R - p * r * ifs * L * L;
  const double a = R / (R + p * r);
  c.sigma_i2 = R * C * p * (1 - p) * Vg * Vg / fs * a * a * c.nu / c.gamma;
  c.sigma_v2 = c.sigma_i2 / c.nu * L * R * R;
  c.sigma_v2_literal = c.sigma_i2 / c.nu * L * R * R * R;
  return c;
}

struct BuckReport {
  double p = 0.0;
  double V = 0.0;
  double I = 0.0;
  double alpha = 0.0;
  double eta = 0.0;
  double P_in = 0.0;
  double P_out = 0.0;
  double f_s = 0.0;
  double lf_floor = 0.0;             // |H_v(0)|^2 Vg^2 S(0) of the ripple
  double lf_floor_eta_linear = 0.0;  // eta Vg^2 p(1-p) t_eps (E + V/E)
  double limit_floor = 0.0;          // eta Vg^2 p(1-p) t_eps
  double sigma_i_cov = 0.0;
  double sigma_v_cov = 0.0;
  BuckClosedForm closed;
  double sigma_i_closed = 0.0;
  double sigma_v_closed = 0.0;
};

inline BuckReport buck_analysis(const BuckParams& b, double p, const PulseLengthDist& dist, double t_eps) {
  b.validate();
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  const auto model = buck_model(b);
  const auto op = dc_solve(model, p);
  const auto mom = dist.moments();
  BuckReport r;
  r.p = p;
  r.I = op.X[0];
  r.V = op.X[1];
  r.alpha = b.R / (b.R + p * b.r);
  r.eta = r.alpha;
  r.P_in = b.Vg * b.Vg * p * p / (b.R + p * b.r);
  r.P_out = p * p * b.Vg * b.Vg * b.R / ((b.R + p * b.r) * (b.R + p * b.r));
  r.f_s = mean_switching_frequency(dist, t_eps);
  const double s0 = p * (1 - p) * t_eps * (mom.mean + mom.variance / mom.mean);
  const double h0 = 1.0 / (1.0 + p * b.r / b.R);
  r.lf_floor = h0 * h0 * r.alpha * r.alpha * b.Vg * b.Vg * s0;
  r.lf_floor_eta_linear = r.eta * b.Vg * b.Vg * s0;
  r.limit_floor = r.eta * b.Vg * b.Vg * p * (1 - p) * t_eps;
  if (p > 0.0 && p < 1.0) {
    const auto cov = covariance_equilibrium(model, p, dist, t_eps);
    r.sigma_i_cov = std::sqrt(std::max(0.0, cov.cov_time(0, 0)));
    r.sigma_v_cov = std::sqrt(std::max(0.0, cov.cov_time(1, 1)));
  }
  r.closed = buck_closed_form(b, p, r.f_s);
  r.sigma_i_closed = std::sqrt(std::max(0.0, r.closed.sigma_i2));
  r.sigma_v_closed = std::sqrt(std::max(0.0, r.closed.sigma_v2));
  return r;
}

}  // namespace randswitch
