#pragma once

// Discrete pulse-length distributions on integer lengths l >= 1, measured in
// multiples of the fundamental switching quantum.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "randswitch/error.hpp"
#include "randswitch/rng.hpp"

namespace randswitch {

enum class DistKind { deterministic, uniform, canonical, gaussian, huffman, custom };

inline std::string_view to_string(DistKind k) {
  switch (k) {
    case DistKind::deterministic: return "deterministic";
    case DistKind::uniform: return "uniform";
    case DistKind::canonical: return "canonical";
    case DistKind::gaussian: return "gaussian";
    case DistKind::huffman: return "huffman";
    case DistKind::custom: return "custom";
  }
  return "custom";
}

inline std::optional<DistKind> dist_kind_from_string(std::string_view s) {
  for (auto k : {DistKind::deterministic, DistKind::uniform, DistKind::canonical,
                 DistKind::gaussian, DistKind::huffman, DistKind::custom}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct Moments {
  double mean = 0.0;      // E{l}
  double second = 0.0;    // E{l^2}
  double variance = 0.0;  // V{l}
};

/// Exponential-family parameters of P{l} ~ exp(-alpha*l - beta*l^2).
struct ExpFamilyParams {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Immutable probability distribution over pulse lengths [lmin, lmax].
class PulseLengthDist {
public:
  /// Builds a distribution from (possibly unnormalized) non-negative weights
  /// for lengths lmin, lmin+1, ... The weights are normalized here.
  PulseLengthDist(DistKind kind, int lmin, std::vector<double> weights,
                  std::optional<ExpFamilyParams> diagnostics = std::nullopt)
      : kind_(kind), lmin_(lmin), probs_(std::move(weights)), diagnostics_(diagnostics) {
    detail::require(lmin_ >= 1, "pulse length below the fundamental quantum (lmin < 1)");
    detail::require(!probs_.empty(), "empty pulse-length support");
    double total = 0.0;
    for (double w : probs_) {
      detail::require(std::isfinite(w) && w >= 0.0, "pulse-length weights must be finite and >= 0");
      total += w;
    }
    detail::require(total > 0.0, "pulse-length weights sum to zero");
    for (double& w : probs_) w /= total;
    cdf_.resize(probs_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += probs_[i];
      cdf_[i] = acc;
    }
    last_positive_ = probs_.size() - 1;
    while (last_positive_ > 0 && probs_[last_positive_] == 0.0) --last_positive_;
  }

  DistKind kind() const noexcept { return kind_; }
  int lmin() const noexcept { return lmin_; }
  int lmax() const noexcept { return lmin_ + static_cast<int>(probs_.size()) - 1; }
  std::size_t size() const noexcept { return probs_.size(); }

  /// Probabilities indexed by l - lmin.
  std::span<const double> probs() const noexcept { return probs_; }

  double prob(int l) const {
    if (l < lmin() || l > lmax()) return 0.0;
    return probs_[static_cast<std::size_t>(l - lmin_)];
  }

  const std::optional<ExpFamilyParams>& diagnostics() const noexcept { return diagnostics_; }

  bool is_point_mass() const {
    return std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }) == 1;
  }

  /// Inverse-CDF draw; consumes exactly one uniform from the stream.
  int sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf_.begin());
    if (idx > last_positive_) idx = last_positive_;
    return lmin_ + static_cast<int>(idx);
  }

  Moments moments() const {
    Moments m;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double l = static_cast<double>(lmin_) + static_cast<double>(i);
      m.mean += probs_[i] * l;
      m.second += probs_[i] * l * l;
    }
    double var = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double d = static_cast<double>(lmin_) + static_cast<double>(i) - m.mean;
      var += probs_[i] * d * d;
    }
    m.variance = var;
    return m;
  }

  /// Expectation of g(l) under the distribution.
  template <class F>
  double expect(F&& g) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (probs_[i] == 0.0) continue;
      acc += probs_[i] * g(lmin_ + static_cast<int>(i));
    }
    return acc;
  }

private:
  DistKind kind_;
  int lmin_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
  std::size_t last_positive_ = 0;
  std::optional<ExpFamilyParams> diagnostics_;
};

inline Moments moments(const PulseLengthDist& d) { return d.moments(); }

inline int sample(const PulseLengthDist& d, Rng& rng) { return d.sample(rng); }

inline PulseLengthDist make_deterministic(int l) {
  detail::require(l >= 1, "pulse length must be >= 1 (got " + std::to_string(l) + ")");
  return PulseLengthDist(DistKind::deterministic, l, {1.0});
}

inline PulseLengthDist make_uniform(int lmin, int lmax) {
  detail::require(lmin >= 1 && lmax >= lmin, "uniform support requires 1 <= lmin <= lmax");
  return PulseLengthDist(DistKind::uniform, lmin,
                         std::vector<double>(static_cast<std::size_t>(lmax - lmin + 1), 1.0),
                         ExpFamilyParams{0.0, 0.0});
}

/// P{l} = 2^-l / Z on [1, lmax]. Moments approach (2, 6) as lmax grows; the
/// truncation error is O(lmax * 2^-lmax).
inline PulseLengthDist make_huffman(int lmax) {
  detail::require(lmax >= 1, "huffman lmax must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(lmax));
  for (int l = 1; l <= lmax; ++l) w[static_cast<std::size_t>(l - 1)] = std::ldexp(1.0, -l);
  return PulseLengthDist(DistKind::huffman, 1, std::move(w),
                         ExpFamilyParams{std::log(2.0), 0.0});
}

/// Discrete normal kernel exp(-(l - mu)^2 / (2 var)) on [lmin, lmax]. mu and
/// var are kernel parameters, not the resulting moments.
inline PulseLengthDist make_gaussian(double mu, double var, int lmin, int lmax) {
  detail::require(std::isfinite(mu), "gaussian mu must be finite");
  detail::require(var > 0.0 && std::isfinite(var), "gaussian variance must be > 0");
  detail::require(lmin >= 1 && lmax >= lmin, "gaussian support requires 1 <= lmin <= lmax");
  const std::size_t n = static_cast<std::size_t>(lmax - lmin + 1);
  std::vector<double> logw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(lmin) + static_cast<double>(i) - mu;
    logw[i] = -d * d / (2.0 * var);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  for (double& v : logw) v = std::exp(v - top);
  return PulseLengthDist(DistKind::gaussian, lmin, std::move(logw),
                         ExpFamilyParams{-mu / var, 1.0 / (2.0 * var)});
}

inline PulseLengthDist make_custom(int lmin, std::vector<double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  detail::require(std::abs(total - 1.0) <= 1e-9, "custom probabilities must sum to 1");
  return PulseLengthDist(DistKind::custom, lmin, std::move(probs));
}

// ---------------------------------------------------------------------------
// Maximum-entropy distribution with prescribed E{l} and E{l^2}
// ---------------------------------------------------------------------------

struct CanonicalOptions {
  int max_iterations = 200;
  double tolerance = 1e-10;  // relative residual on both moments
};

/// Feasible range of E{l^2} for a given mean on integer support [lmin, lmax].
struct SecondMomentRange {
  double lo;
  double hi;
};

inline SecondMomentRange second_moment_range(double mean, int lmin, int lmax) {
  const double fl = std::floor(mean);
  const double frac = mean - fl;
  // Least spread: mass on the two neighbouring integers.
  const double lo = mean * mean + frac * (1.0 - frac);
  // Most spread: mass on the two endpoints.
  const double hi = (lmin + lmax) * mean - static_cast<double>(lmin) * lmax;
  return {lo, hi};
}

namespace detail {

// Exponential family in the centred, scaled coordinate u = (l - c) / s with
// sufficient statistics (u, u^2). Working in u keeps the Hessian well scaled
// for any support width.
class CanonicalFamily {
public:
  CanonicalFamily(int lmin, int lmax)
      : lmin_(lmin), n_(static_cast<std::size_t>(lmax - lmin + 1)),
        c_(0.5 * (lmin + lmax)), s_(std::max(1.0, 0.5 * (lmax - lmin))) {
    u_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) u_[i] = (static_cast<double>(lmin) + i - c_) / s_;
  }

  double center() const { return c_; }
  double scale() const { return s_; }
  std::size_t size() const { return n_; }
  double u(std::size_t i) const { return u_[i]; }

  // Probabilities and log-partition at natural parameters theta.
  double probabilities(const Eigen::Vector2d& theta, std::vector<double>& p) const {
    p.resize(n_);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_; ++i) {
      p[i] = theta[0] * u_[i] + theta[1] * u_[i] * u_[i];
      top = std::max(top, p[i]);
    }
    double z = 0.0;
    for (double& v : p) {
      v = std::exp(v - top);
      z += v;
    }
    for (double& v : p) v /= z;
    return top + std::log(z);
  }

  Eigen::Vector2d mean_stats(const std::vector<double>& p) const {
    Eigen::Vector2d m = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n_; ++i) {
      m[0] += p[i] * u_[i];
      m[1] += p[i] * u_[i] * u_[i];
    }
    return m;
  }

  Eigen::Matrix2d covariance(const std::vector<double>& p, const Eigen::Vector2d& m) const {
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < n_; ++i) {
      const double a = u_[i] - m[0];
      const double b = u_[i] * u_[i] - m[1];
      h(0, 0) += p[i] * a * a;
      h(0, 1) += p[i] * a * b;
      h(1, 1) += p[i] * b * b;
    }
    h(1, 0) = h(0, 1);
    return h;
  }

  Eigen::Vector2d to_scaled_targets(double L1, double L2) const {
    return {(L1 - c_) / s_, (L2 - 2.0 * c_ * L1 + c_ * c_) / (s_ * s_)};
  }

  ExpFamilyParams to_alpha_beta(const Eigen::Vector2d& theta) const {
    return {-(theta[0] / s_ - 2.0 * c_ * theta[1] / (s_ * s_)), -theta[1] / (s_ * s_)};
  }

private:
  int lmin_;
  std::size_t n_;
  double c_;
  double s_;
  std::vector<double> u_;
};

inline bool moments_match(const std::vector<double>& p, int lmin, double L1, double L2,
                          double tol) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double l = static_cast<double>(lmin) + static_cast<double>(i);
    m1 += p[i] * l;
    m2 += p[i] * l * l;
  }
  return std::abs(m1 - L1) <= tol * L1 && std::abs(m2 - L2) <= tol * L2;
}

// Damped Newton on the convex dual  F(theta) = log Z(theta) - theta . t.
inline bool canonical_newton(const CanonicalFamily& fam, const Eigen::Vector2d& target,
                             int lmin, double L1, double L2, const CanonicalOptions& opt,
                             Eigen::Vector2d& theta, std::vector<double>& p) {
  theta.setZero();
  double logz = fam.probabilities(theta, p);
  double f = logz - theta.dot(target);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (moments_match(p, lmin, L1, L2, opt.tolerance)) return true;
    const Eigen::Vector2d m = fam.mean_stats(p);
    const Eigen::Vector2d grad = m - target;
    Eigen::Matrix2d hess = fam.covariance(p, m);
    hess.diagonal().array() += 1e-14;
    Eigen::Vector2d step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) return false;
    // Backtracking line search (Armijo).
    if (grad.dot(step) >= 0.0) step = -grad;
    double t = 1.0;
    std::vector<double> trial;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::Vector2d cand = theta + t * step;
      const double lz = fam.probabilities(cand, trial);
      const double fc = lz - cand.dot(target);
      if (fc <= f + 1e-4 * t * grad.dot(step) || std::abs(fc - f) <= 1e-15 * std::abs(f)) {
        theta = cand;
        p.swap(trial);
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return moments_match(p, lmin, L1, L2, opt.tolerance);
  }
  return moments_match(p, lmin, L1, L2, opt.tolerance);
}

// Fallback: nested bisection. For fixed theta2 the mean is increasing in
// theta1; along the mean-matched curve E{u^2} is increasing in theta2.
inline bool canonical_bisection(const CanonicalFamily& fam, const Eigen::Vector2d& target,
                                int lmin, double L1, double L2, const CanonicalOptions& opt,
                                Eigen::Vector2d& theta, std::vector<double>& p) {
  auto match_mean = [&](double th2) {
    double lo = -1.0, hi = 1.0;
    auto mean_at = [&](double th1) {
      fam.probabilities(Eigen::Vector2d(th1, th2), p);
      return fam.mean_stats(p)[0];
    };
    while (mean_at(lo) > target[0] && lo > -1e12) lo *= 2.0;
    while (mean_at(hi) < target[0] && hi < 1e12) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++i) {
      const double mid = 0.5 * (lo + hi);
      (mean_at(mid) < target[0] ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto second_at = [&](double th2) {
    const double th1 = match_mean(th2);
    fam.probabilities(Eigen::Vector2d(th1, th2), p);
    return std::pair{th1, fam.mean_stats(p)[1]};
  };
  double lo = -1.0, hi = 1.0;
  while (second_at(lo).second > target[1] && lo > -1e12) lo *= 2.0;
  while (second_at(hi).second < target[1] && hi < 1e12) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (second_at(mid).second < target[1] ? lo : hi) = mid;
  }
  const double th2 = 0.5 * (lo + hi);
  const auto [th1, unused] = second_at(th2);
  (void)unused;
  theta = Eigen::Vector2d(th1, th2);
  fam.probabilities(theta, p);
  return moments_match(p, lmin, L1, L2, opt.tolerance);
}

}  // namespace detail

/// Maximum-entropy distribution on [lmin, lmax] with E{l} = L1, E{l^2} = L2,
/// i.e. P{l} = exp(-alpha l - beta l^2) / Z. Targets on the boundary of the
/// feasible set yield the limiting two-point (or one-point) distribution and
/// carry no alpha/beta diagnostics.
///
/// Throws InfeasibleMoments when no distribution on the support attains the
/// targets and NonConvergence when neither solver meets the tolerance.
inline PulseLengthDist make_canonical(double L1, double L2, int lmin, int lmax,
                                      const CanonicalOptions& opt = {}) {
  detail::require(lmin >= 1 && lmax >= lmin, "canonical support requires 1 <= lmin <= lmax");
  detail::require(std::isfinite(L1) && std::isfinite(L2), "moment targets must be finite");
  const double edge_tol = 1e-12 * std::max(1.0, std::abs(L2));
  if (L1 < lmin - 1e-12 * lmin || L1 > lmax + 1e-12 * lmax) {
    throw InfeasibleMoments("mean " + std::to_string(L1) + " outside support [" +
                            std::to_string(lmin) + ", " + std::to_string(lmax) + "]");
  }
  L1 = std::clamp(L1, static_cast<double>(lmin), static_cast<double>(lmax));
  const auto range = second_moment_range(L1, lmin, lmax);
  if (L2 < range.lo - edge_tol || L2 > range.hi + edge_tol) {
    throw InfeasibleMoments("second moment " + std::to_string(L2) + " outside feasible range [" +
                            std::to_string(range.lo) + ", " + std::to_string(range.hi) + "]");
  }
  const std::size_t n = static_cast<std::size_t>(lmax - lmin + 1);
  auto two_point = [&](int a, int b) {
    std::vector<double> w(n, 0.0);
    if (a == b) {
      w[static_cast<std::size_t>(a - lmin)] = 1.0;
    } else {
      const double pb = (L1 - a) / static_cast<double>(b - a);
      w[static_cast<std::size_t>(a - lmin)] = 1.0 - pb;
      w[static_cast<std::size_t>(b - lmin)] = pb;
    }
    return PulseLengthDist(DistKind::canonical, lmin, std::move(w));
  };
  if (range.hi - range.lo <= edge_tol || L2 <= range.lo + edge_tol) {
    const int a = static_cast<int>(std::floor(L1));
    const int b = std::min(lmax, static_cast<int>(std::ceil(L1)));
    return two_point(a, b);
  }
  if (L2 >= range.hi - edge_tol) return two_point(lmin, lmax);

  detail::CanonicalFamily fam(lmin, lmax);
  const Eigen::Vector2d target = fam.to_scaled_targets(L1, L2);
  Eigen::Vector2d theta;
  std::vector<double> p;
  bool ok = detail::canonical_newton(fam, target, lmin, L1, L2, opt, theta, p);
  if (!ok) ok = detail::canonical_bisection(fam, target, lmin, L1, L2, opt, theta, p);
  if (!ok) {
    throw NonConvergence("maximum-entropy solver did not reach tolerance for (" +
                         std::to_string(L1) + ", " + std::to_string(L2) + ")");
  }
  return PulseLengthDist(DistKind::canonical, lmin, std::move(p), fam.to_alpha_beta(theta));
}

}  // namespace randswitch
