#pragma once

// Power spectral densities of RS/FRS switching functions, the two-parameter
// Lorentzian envelope, PSD propagation rules, and a Monte-Carlo estimator
// that evaluates record transforms in closed form (no time sampling, no FFT).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/rng.hpp"
#include "randswitch/switching.hpp"

namespace randswitch {

/// Two-sided PSD: continuous part sampled on `freqs` plus the weight of the
/// impulse at f = 0.
struct PsdCurve {
  std::vector<double> freqs;
  std::vector<double> noise;
  double dc_weight = 0.0;

  std::size_t size() const noexcept { return freqs.size(); }
};

// ---------------------------------------------------------------------------
// Frequency grids
// ---------------------------------------------------------------------------

/// f = 0, plus `points_per_side` log-spaced frequencies in
/// [fmin, fmax] / t_eps mirrored onto the negative axis. Plot grid.
inline std::vector<double> log_grid(double t_eps, std::size_t points_per_side = 1024,
                                    double fmin = 1e-3, double fmax = 50.0) {
  detail::require(t_eps > 0.0 && fmin > 0.0 && fmax > fmin && points_per_side >= 2,
                  "invalid log grid parameters");
  std::vector<double> pos(points_per_side);
  const double a = std::log(fmin), b = std::log(fmax);
  for (std::size_t i = 0; i < points_per_side; ++i) {
    pos[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points_per_side - 1)) / t_eps;
  }
  std::vector<double> g;
  g.reserve(2 * points_per_side + 1);
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) g.push_back(-*it);
  g.push_back(0.0);
  g.insert(g.end(), pos.begin(), pos.end());
  return g;
}

/// Uniform grid on [-fmax, fmax] / t_eps with `per_period` points in every
/// 1 / (lmax t_eps) interval. Resolves the sinc^2 ripple of any pulse length
/// up to lmax; used for quadrature.
inline std::vector<double> dense_grid(double t_eps, int lmax, double fmax = 50.0,
                                      int per_period = 16) {
  detail::require(t_eps > 0.0 && lmax >= 1 && fmax > 0.0 && per_period >= 4,
                  "invalid dense grid parameters");
  const double h = 1.0 / (static_cast<double>(per_period) * lmax * t_eps);
  const auto n = static_cast<std::int64_t>(std::llround(fmax / t_eps / h));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(2 * n + 1));
  for (std::int64_t i = -n; i <= n; ++i) g.push_back(static_cast<double>(i) * h);
  return g;
}

// ---------------------------------------------------------------------------
// Analytic spectra
// ---------------------------------------------------------------------------

/// |F{Rect(t / T)}|^2 = sin^2(pi f T) / (pi f)^2, with value T^2 at f = 0.
inline double rect_transform_sq(double f, double T) {
  const double x = std::numbers::pi * f * T;
  if (std::abs(x) < 1e-4) return T * T * (1.0 - x * x / 3.0);
  const double s = std::sin(x) / x;
  return T * T * s * s;
}

/// RS with fixed pulse length l: p(1-p) sin^2(pi f t_l) / (t_l (pi f)^2) + p^2 delta(f).
inline PsdCurve psd_rs(double p, int l, double t_eps, const std::vector<double>& freqs) {
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(l >= 1, "pulse length must be >= 1");
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  const double t_l = l * t_eps;
  const double gain = p * (1.0 - p) / t_l;
  PsdCurve c{freqs, std::vector<double>(freqs.size()), p * p};
  for (std::size_t i = 0; i < freqs.size(); ++i) c.noise[i] = gain * rect_transform_sq(freqs[i], t_l);
  return c;
}

/// FRS: p(1-p) / (E{l} t_eps) * E_l{|U_l(f)|^2} + p^2 delta(f).
inline PsdCurve psd_frs(double p, const PulseLengthDist& dist, double t_eps,
                        const std::vector<double>& freqs) {
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  const double gain = p * (1.0 - p) / (dist.moments().mean * t_eps);
  PsdCurve c{freqs, std::vector<double>(freqs.size()), p * p};
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double f = freqs[i];
    c.noise[i] = gain * dist.expect([&](int l) { return rect_transform_sq(f, l * t_eps); });
  }
  return c;
}

/// Zero-frequency noise level p(1-p) (E{l^2} / E{l}) t_eps.
inline double lf_noise_level(double p, const PulseLengthDist& dist, double t_eps) {
  const auto m = dist.moments();
  return p * (1.0 - p) * (m.second / m.mean) * t_eps;
}

// ---------------------------------------------------------------------------
// Lorentzian envelope  S_e(f) = 2 G w / (w^2 + (2 pi f)^2)
// ---------------------------------------------------------------------------

struct EnvelopeFit {
  double G = 0.0;  // total noise power
  double w = 0.0;  // corner, rad/s
  bool degenerate = false;  // p in {0, 1}: no noise to fit

  double corner_hz() const { return w / (2.0 * std::numbers::pi); }
};

/// G = p(1-p) matches the total noise power; w = 2 E{l} / (t_eps E{l^2})
/// matches the zero-frequency level.
inline EnvelopeFit fit_envelope(double p, const PulseLengthDist& dist, double t_eps) {
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  const auto m = dist.moments();
  EnvelopeFit fit;
  fit.G = p * (1.0 - p);
  fit.w = 2.0 * m.mean / (t_eps * m.second);
  fit.degenerate = fit.G == 0.0;
  return fit;
}

inline double envelope_eval(const EnvelopeFit& fit, double f) {
  const double wf = 2.0 * std::numbers::pi * f;
  return 2.0 * fit.G * fit.w / (fit.w * fit.w + wf * wf);
}

/// Integral of the envelope over [-F, F]; tends to G as F grows.
inline double envelope_integral(const EnvelopeFit& fit, double F) {
  return fit.G * (2.0 / std::numbers::pi) * std::atan(2.0 * std::numbers::pi * F / fit.w);
}

inline PsdCurve envelope_curve(const EnvelopeFit& fit, const std::vector<double>& freqs) {
  PsdCurve c{freqs, std::vector<double>(freqs.size()), 0.0};
  for (std::size_t i = 0; i < freqs.size(); ++i) c.noise[i] = envelope_eval(fit, freqs[i]);
  return c;
}

// ---------------------------------------------------------------------------
// Propagation rules
// ---------------------------------------------------------------------------

/// Output PSD of an LTI system: |H(f)|^2 S(f); the impulse scales by |H(0)|^2.
template <class MagSq>
PsdCurve filter_psd(const PsdCurve& in, MagSq&& h_mag_sq) {
  PsdCurve out = in;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double h = h_mag_sq(in.freqs[i]);
    detail::require(h >= 0.0, "|H|^2 must be non-negative");
    out.noise[i] = h * in.noise[i];
  }
  out.dc_weight = h_mag_sq(0.0) * in.dc_weight;
  return out;
}

/// PSD of x = a q + b given the PSD of q and its mean.
inline PsdCurve mix_affine(double a, double b, const PsdCurve& in, double mean_q) {
  PsdCurve out = in;
  for (double& v : out.noise) v *= a * a;
  out.dc_weight = a * a * in.dc_weight + 2.0 * a * b * mean_q + b * b;
  // Cancellation (e.g. ripple extraction) can leave a rounding residue.
  if (std::abs(out.dc_weight) <= 1e-15 * (a * a * in.dc_weight + b * b)) out.dc_weight = 0.0;
  return out;
}

/// PSD of w = a dy/dt + b y: (a^2 w^2 + b^2) S_yy. The derivative removes
/// the impulse, leaving b^2 times the DC weight.
inline PsdCurve mix_derivative(double a, double b, const PsdCurve& in) {
  PsdCurve out = in;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * in.freqs[i];
    out.noise[i] = (a * a * w * w + b * b) * in.noise[i];
  }
  out.dc_weight = b * b * in.dc_weight;
  return out;
}

// ---------------------------------------------------------------------------
// Integrals
// ---------------------------------------------------------------------------

struct TotalPsd {
  double total = 0.0;     // integral + tail + dc
  double integral = 0.0;  // trapezoid over the grid
  double tail = 0.0;      // estimated power beyond the grid edges
  double dc = 0.0;
  bool tail_warning = false;  // tail exceeds 1% of the integral
};

namespace detail {

// Mean of S f^2 over grid points with |f| in [F/2, F] on one side. For a
// C / f^2 tail this estimates C and averages out sinc ripple.
inline double tail_coefficient(const PsdCurve& c, bool positive) {
  double edge = 0.0;
  for (double f : c.freqs) edge = std::max(edge, positive ? f : -f);
  if (edge <= 0.0) return 0.0;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double f = positive ? c.freqs[i] : -c.freqs[i];
    if (f >= 0.5 * edge && f <= edge) {
      acc += c.noise[i] * f * f;
      ++n;
    }
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace detail

/// Total power: trapezoid over the (sorted) grid, an analytic C / f^2 tail
/// beyond each edge, and the DC weight.
inline TotalPsd total_psd(const PsdCurve& c) {
  detail::require(c.freqs.size() == c.noise.size() && c.freqs.size() >= 2,
                  "PSD curve needs at least two grid points");
  detail::require(std::is_sorted(c.freqs.begin(), c.freqs.end()), "frequency grid must be sorted");
  TotalPsd r;
  for (std::size_t i = 1; i < c.size(); ++i) {
    r.integral += 0.5 * (c.noise[i] + c.noise[i - 1]) * (c.freqs[i] - c.freqs[i - 1]);
  }
  const double f_hi = c.freqs.back();
  const double f_lo = -c.freqs.front();
  if (f_hi > 0.0) r.tail += detail::tail_coefficient(c, true) / f_hi;
  if (f_lo > 0.0) r.tail += detail::tail_coefficient(c, false) / f_lo;
  r.dc = c.dc_weight;
  r.total = r.integral + r.tail + r.dc;
  r.tail_warning = r.tail > 0.01 * r.integral;
  return r;
}

/// Log-log slope of S between fa and fb, each level taken as the band mean of
/// S f^2 over [f, f + band]. With band a multiple of 1 / t_eps the sinc
/// ripple of every integer pulse length averages out exactly.
inline double loglog_slope(const PsdCurve& c, double fa, double fb, double band) {
  auto level = [&](double f0) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double f = c.freqs[i];
      if (f >= f0 && f < f0 + band) {
        acc += c.noise[i] * f * f;
        ++n;
      }
    }
    detail::require(n > 0, "no grid points in slope band");
    return acc / static_cast<double>(n);
  };
  return std::log(level(fb) / level(fa)) / std::log(fb / fa) - 2.0;
}

/// Piecewise-constant record segment.
struct Segment {
  double duration;
  double value;
};

/// Duration-weighted mean of a piecewise-constant record.
inline double time_average(const std::vector<Segment>& record) {
  double t = 0.0, acc = 0.0;
  for (const auto& s : record) {
    detail::require(s.duration >= 0.0, "segment duration must be >= 0");
    t += s.duration;
    acc += s.duration * s.value;
  }
  if (!(t > 0.0)) throw std::invalid_argument("time average of a zero-duration record");
  return acc / t;
}

// ---------------------------------------------------------------------------
// Monte-Carlo estimator
// ---------------------------------------------------------------------------

namespace detail {

// |Q(f)|^2 of the mean-removed record: Q(f) = sum_k d_k (E_k - E_{k+1}) / (j w)
// with E_k = exp(-j w T_k) and d_k = a_k - mean. Advances E_k by per-length
// phase factors.
inline void accumulate_periodogram(const SwitchSequence& seq, double mean,
                                   const std::vector<double>& freqs, int lmax,
                                   std::vector<double>& acc) {
  const double t_eps = seq.t_eps();
  const double duration = seq.duration();
  const auto& a = seq.amps();
  const auto& lens = seq.lens();
  std::vector<std::complex<double>> step(static_cast<std::size_t>(lmax) + 1);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * freqs[i];
    if (w == 0.0) continue;
    for (int m = 1; m <= lmax; ++m) step[static_cast<std::size_t>(m)] = std::polar(1.0, -w * m * t_eps);
    std::complex<double> e(1.0, 0.0), s(0.0, 0.0);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const std::complex<double> next = e * step[static_cast<std::size_t>(lens[k])];
      s += (static_cast<double>(a[k]) - mean) * (e - next);
      e = next;
      if ((k & 255U) == 255U) e /= std::abs(e);
    }
    acc[i] += std::norm(s) / (w * w) / duration;
  }
}

}  // namespace detail

/// Averages the periodogram |Q_T(f)|^2 / T of n_trials independent records.
/// Trial i uses Rng::derive(seed, i), so results depend only on the inputs.
/// Each record's time-weighted mean is removed before transforming; the
/// returned dc_weight is the square of the trial-averaged record mean.
inline PsdCurve mc_psd_estimate(const SwitchPolicy& policy, std::size_t n_pulses,
                                std::size_t n_trials, double t_eps,
                                const std::vector<double>& freqs, std::uint64_t seed) {
  detail::require(n_pulses >= 1 && n_trials >= 1, "need at least one pulse and one trial");
  PsdCurve c{freqs, std::vector<double>(freqs.size(), 0.0), 0.0};
  double mean_acc = 0.0;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    Rng rng = Rng::derive(seed, trial);
    const SwitchSequence seq = generate(policy, n_pulses, t_eps, rng);
    const double mean = seq.time_mean();
    mean_acc += mean;
    detail::accumulate_periodogram(seq, mean, freqs, policy.pulse_dist.lmax(), c.noise);
  }
  for (double& v : c.noise) v /= static_cast<double>(n_trials);
  const double m = mean_acc / static_cast<double>(n_trials);
  c.dc_weight = m * m;
  return c;
}

/// Half-width of the low-frequency region where a record of n_pulses is
/// dominated by the smeared DC lobe: 2 / T_record.
inline double dc_lobe_halfwidth(const PulseLengthDist& dist, std::size_t n_pulses, double t_eps) {
  return 2.0 / (static_cast<double>(n_pulses) * dist.moments().mean * t_eps);
}

/// RMS of (estimate - reference) / reference over grid points with
/// |f| >= f_exclude and a reference above `floor` times its maximum.
inline double rms_relative_error(const PsdCurve& estimate, const PsdCurve& reference,
                                 double f_exclude, double floor = 1e-9) {
  detail::require(estimate.size() == reference.size(), "curves differ in size");
  double peak = 0.0;
  for (double v : reference.noise) peak = std::max(peak, v);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (std::abs(reference.freqs[i]) < f_exclude) continue;
    if (reference.noise[i] <= floor * peak) continue;
    const double r = (estimate.noise[i] - reference.noise[i]) / reference.noise[i];
    acc += r * r;
    ++n;
  }
  detail::require(n > 0, "no grid points left for comparison");
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace randswitch
