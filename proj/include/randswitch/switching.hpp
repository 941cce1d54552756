#pragma once

// Random switching (RS) and fully random switching (FRS) sequences: the
// universal switching function q(t) = sum_k a_k Rect((t - T_k) / (l_k t_eps)).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "randswitch/dist.hpp"
#include "randswitch/error.hpp"
#include "randswitch/rng.hpp"

namespace randswitch {

enum class SwitchKind { rs, frs };

/// Open-loop switching law: a_k ~ Bernoulli(p), l_k ~ pulse_dist, independent.
/// RS requires a point-mass pulse distribution.
struct SwitchPolicy {
  double p;
  PulseLengthDist pulse_dist;
  SwitchKind kind;

  SwitchPolicy(double p_on, PulseLengthDist dist)
      : p(p_on), pulse_dist(std::move(dist)),
        kind(pulse_dist.is_point_mass() ? SwitchKind::rs : SwitchKind::frs) {
    validate();
  }

  SwitchPolicy(double p_on, PulseLengthDist dist, SwitchKind k)
      : p(p_on), pulse_dist(std::move(dist)), kind(k) {
    validate();
  }

  void validate() const {
    detail::require(p >= 0.0 && p <= 1.0 && std::isfinite(p), "switching probability must be in [0, 1]");
    detail::require(kind == SwitchKind::frs || pulse_dist.is_point_mass(),
                    "RS policy requires a deterministic pulse length");
  }
};

/// Turn-on / turn-off energies in joules.
struct LossModel {
  double w_on = 0.0;
  double w_off = 0.0;
};

/// A realized switching waveform. Pulse k occupies
/// [start_ticks(k), start_ticks(k) + lens[k]) in units of t_eps.
class SwitchSequence {
public:
  SwitchSequence(double t_eps, std::vector<std::uint8_t> amps, std::vector<int> lens)
      : t_eps_(t_eps), amps_(std::move(amps)), lens_(std::move(lens)) {
    detail::require(t_eps_ > 0.0 && std::isfinite(t_eps_), "t_eps must be > 0");
    detail::require(amps_.size() == lens_.size(), "amplitude and length lists differ in size");
    starts_.resize(lens_.size() + 1);
    starts_[0] = 0;
    for (std::size_t k = 0; k < lens_.size(); ++k) {
      detail::require(amps_[k] <= 1, "amplitudes must be 0 or 1");
      detail::require(lens_[k] >= 1, "pulse lengths must be >= 1");
      starts_[k + 1] = starts_[k] + lens_[k];
    }
  }

  double t_eps() const noexcept { return t_eps_; }
  std::size_t size() const noexcept { return amps_.size(); }
  bool empty() const noexcept { return amps_.empty(); }
  const std::vector<std::uint8_t>& amps() const noexcept { return amps_; }
  const std::vector<int>& lens() const noexcept { return lens_; }

  /// Start of pulse k in quanta; start_ticks(size()) is the total length.
  std::int64_t start_ticks(std::size_t k) const { return starts_.at(k); }
  double start_seconds(std::size_t k) const { return static_cast<double>(starts_.at(k)) * t_eps_; }
  std::int64_t total_ticks() const noexcept { return starts_.back(); }
  double duration() const noexcept { return static_cast<double>(starts_.back()) * t_eps_; }

  /// Time-weighted mean of q, i.e. sum a_k l_k / sum l_k.
  double time_mean() const {
    std::int64_t on = 0;
    for (std::size_t k = 0; k < amps_.size(); ++k) on += amps_[k] * lens_[k];
    return static_cast<double>(on) / static_cast<double>(starts_.back());
  }

private:
  double t_eps_;
  std::vector<std::uint8_t> amps_;
  std::vector<int> lens_;
  std::vector<std::int64_t> starts_;
};

/// Draws n_pulses (a_k, l_k) pairs; per pulse the amplitude is drawn before
/// the length.
inline SwitchSequence generate(const SwitchPolicy& policy, std::size_t n_pulses, double t_eps,
                               Rng& rng) {
  detail::require(n_pulses >= 1, "n_pulses must be >= 1");
  std::vector<std::uint8_t> amps(n_pulses);
  std::vector<int> lens(n_pulses);
  for (std::size_t k = 0; k < n_pulses; ++k) {
    amps[k] = rng.bernoulli(policy.p) ? 1 : 0;
    lens[k] = policy.pulse_dist.sample(rng);
  }
  return SwitchSequence(t_eps, std::move(amps), std::move(lens));
}

struct DutyEstimate {
  double mean;
  double stddev;
};

/// Fraction of "on" quanta in a window of N quanta: p +/- sqrt(p(1-p)/N).
inline DutyEstimate duty_estimate(std::int64_t n, double p) {
  detail::require(n >= 1, "window length must be >= 1");
  detail::require(p >= 0.0 && p <= 1.0, "p must be in [0, 1]");
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

struct TransitionCounts {
  std::int64_t n_on = 0;
  std::int64_t n_off = 0;
};

/// Counts 0->1 and 1->0 changes between consecutive pulses. The first pulse
/// has no predecessor and contributes nothing.
inline TransitionCounts count_transitions(const SwitchSequence& seq) {
  detail::require(!seq.empty(), "cannot count transitions of an empty sequence");
  TransitionCounts c;
  const auto& a = seq.amps();
  for (std::size_t k = 1; k < a.size(); ++k) {
    if (a[k] == 1 && a[k - 1] == 0) ++c.n_on;
    if (a[k] == 0 && a[k - 1] == 1) ++c.n_off;
  }
  return c;
}

/// Mean pulse-boundary rate 1 / (E{l} t_eps): the long-run number of
/// decision instants per second.
inline double mean_switching_frequency(const PulseLengthDist& dist, double t_eps) {
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  return 1.0 / (dist.moments().mean * t_eps);
}

/// E{1 / (l t_eps)}, the per-pulse harmonic rate. Equals
/// mean_switching_frequency only for a point mass.
inline double harmonic_switching_frequency(const PulseLengthDist& dist, double t_eps) {
  detail::require(t_eps > 0.0, "t_eps must be > 0");
  return dist.expect([&](int l) { return 1.0 / (l * t_eps); });
}

/// Expected switching power (W_on + W_off) p (1 - p) f_s with f_s the mean
/// pulse-boundary rate.
inline double expected_switch_loss(const SwitchPolicy& policy, const LossModel& loss, double t_eps) {
  detail::require(loss.w_on >= 0.0 && loss.w_off >= 0.0, "switching energies must be >= 0");
  return (loss.w_on + loss.w_off) * policy.p * (1.0 - policy.p) *
         mean_switching_frequency(policy.pulse_dist, t_eps);
}

/// Loss bound for PWM-type schemes with one on and one off edge per period.
inline double rpwm_switch_loss(const LossModel& loss, double mean_frequency) {
  return (loss.w_on + loss.w_off) * mean_frequency;
}

/// Empirical switching power of a realized sequence.
inline double simulated_switch_loss(const SwitchSequence& seq, const LossModel& loss) {
  const auto c = count_transitions(seq);
  return (loss.w_on * static_cast<double>(c.n_on) + loss.w_off * static_cast<double>(c.n_off)) /
         seq.duration();
}

/// Number of N-quantum RPPM waveforms with a single contiguous block of m
/// "on" quanta.
inline std::int64_t count_rppm_sequences(std::int64_t n, std::int64_t m) {
  detail::require(m >= 0 && n >= 0, "counts must be non-negative");
  detail::require(m <= n, "on-time m exceeds period N");
  return n - m + 1;
}

/// RPPM combined with random carrier frequency: periods N_i = Nmin + i and
/// on-times m_i = mmin + i for i = 0 .. Nmax - Nmin.
inline std::int64_t count_rcf_rppm_sequences(std::int64_t n_min, std::int64_t n_max,
                                             std::int64_t m_min) {
  detail::require(1 <= m_min && m_min <= n_min && n_min <= n_max,
                  "requires 1 <= mmin <= Nmin <= Nmax");
  return (n_max - n_min + 1) * (n_min - m_min + 1);
}

}  // namespace randswitch
