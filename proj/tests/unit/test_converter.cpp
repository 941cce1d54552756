#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "moment_iteration.hpp"
#include "ode.hpp"
#include "stats.hpp"
#include "randswitch/converter.hpp"

using namespace randswitch;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double pi = std::numbers::pi;

BuckParams fast_buck() { return {100e-6, 40e-6, 1.2, 0.05, 12.0}; }

ConverterModel scalar_model() {
  ConverterModel m;
  m.A1 = MatrixXd::Constant(1, 1, -1.0);
  m.A2 = m.A1;
  m.B1 = VectorXd::Constant(1, 1.0);
  m.B2 = m.B1;
  m.Vg = 1.0;
  return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Hand-derived buck transfer: v / u = alpha / (LC s^2 + (L/R + p r C) s + 1 + p r / R)
double buck_hv_mag_sq(const BuckParams& b, double p, double f) {
  const double w = 2 * pi * f;
  const double alpha = b.R / (b.R + p * b.r);
  const double re = 1.0 + p * b.r / b.R - b.L * b.C * w * w;
  const double im = (b.L / b.R + p * b.r * b.C) * w;
  return alpha * alpha / (re * re + im * im);
}

}  // namespace

TEST(Model, ValidateRejectsMismatch) {
  ConverterModel m = scalar_model();
  m.A2 = MatrixXd::Zero(2, 2);
  EXPECT_THROW(m.validate(), std::invalid_argument);
  EXPECT_THROW(buck_model({1e-6, 0.0, 1.0, 0.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(buck_model({1e-6, 1e-6, 1.0, -0.1, 1.0}), std::invalid_argument);
}

TEST(DcSolve, PaperExample) {
  const auto op = dc_solve(buck_model({1e-3, 1e-4, 10.0, 0.1, 12.0}), 0.5);
  EXPECT_NEAR(op.X[1], 60.0 / 10.05, 1e-12);
  EXPECT_NEAR(op.X[0], 6.0 / 10.05, 1e-13);
  EXPECT_LT(op.residual, 1e-10);
}

TEST(DcSolve, LosslessAndRandomDraws) {
  const auto op = dc_solve(buck_model({2e-4, 3e-5, 4.0, 0.0, 24.0}), 0.3);
  EXPECT_NEAR(op.X[1], 0.3 * 24.0, 1e-12);
  EXPECT_NEAR(op.X[0], 0.3 * 24.0 / 4.0, 1e-13);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const BuckParams b{std::exp(-9 + 4 * rng.uniform()), std::exp(-12 + 5 * rng.uniform()),
                       0.5 + 50 * rng.uniform(), 0.5 * rng.uniform(), 1 + 100 * rng.uniform()};
    const double p = 0.05 + 0.9 * rng.uniform();
    const auto x = dc_solve(buck_model(b), p).X;
    const double V = p * b.Vg * b.R / (b.R + p * b.r);
    EXPECT_LT(rel(x[1], V), 1e-10);
    EXPECT_LT(rel(x[0], V / b.R), 1e-10);
  }
}

TEST(DcSolve, SingleTopologyAndSingular) {
  const auto m = buck_model(fast_buck());
  const auto op = dc_solve(m, 0.0);
  const VectorXd ref = -m.A2.fullPivLu().solve(m.B2 * m.Vg);
  EXPECT_NEAR((op.X - ref).norm(), 0.0, 1e-14);
  ConverterModel s = scalar_model();
  s.A1(0, 0) = 0.0;
  s.A2(0, 0) = 0.0;
  EXPECT_THROW(dc_solve(s, 0.5), SingularSystem);
}

TEST(DcSolve, BetaDefinition) {
  const auto b = fast_buck();
  const auto op = dc_solve(buck_model(b), 0.4);
  const double alpha = b.R / (b.R + 0.4 * b.r);
  EXPECT_NEAR(op.beta[0], alpha / b.L, 1e-9 * alpha / b.L);
  EXPECT_EQ(op.beta[1], 0.0);
}

TEST(StepExact, ScalarClosedForm) {
  const auto m = scalar_model();
  EXPECT_NEAR(step_exact(m, VectorXd::Zero(1), 1, 1.0)[0], 1.0 - std::exp(-1.0), 1e-15);
}

TEST(StepExact, SmallStepFirstOrder) {
  const auto m = buck_model(fast_buck());
  const VectorXd x(VectorXd::Map(std::array{1.5, 4.0}.data(), 2));
  for (double dt : {1e-8, 1e-9}) {
    const VectorXd dx = m.A1 * x + m.B1 * m.Vg;
    const VectorXd ref = x + dt * dx;
    const VectorXd got = step_exact(m, x, 1, dt);
    // remainder is dt^2 / 2 A (A x + b) to leading order
    const double second = 0.5 * dt * dt * (m.A1 * dx).norm();
    EXPECT_LT((got - ref).norm(), 1.01 * second);
    EXPECT_LT((got - x).norm(), 1.01 * dt * dx.norm());
  }
}

TEST(StepExact, Semigroup) {
  const auto m = buck_model(fast_buck());
  const VectorXd x = VectorXd::Constant(2, 2.0);
  for (int a : {0, 1}) {
    const VectorXd two = step_exact(m, step_exact(m, x, a, 3e-6), a, 7e-6);
    const VectorXd one = step_exact(m, x, a, 1e-5);
    EXPECT_LT((two - one).lpNorm<Eigen::Infinity>(), 1e-12 * (1.0 + one.norm()));
  }
}

TEST(StepExact, SingularTopologyMatchesOde) {
  // lossless LC with open load: A singular, handled by the augmented form
  ConverterModel m;
  m.A1.resize(2, 2);
  m.A1 << 0.0, -1.0, 1.0, 0.0;
  m.A2 = MatrixXd::Zero(2, 2);
  m.B1 = VectorXd::Zero(2);
  m.B2 = VectorXd::Constant(2, 1.0);
  m.Vg = 2.0;
  const VectorXd x = VectorXd::Constant(2, 0.5);
  const VectorXd got = step_exact(m, x, 0, 1.3);
  EXPECT_NEAR(got[0], 0.5 + 2.6, 1e-14);
  const VectorXd osc = step_exact(m, x, 1, 2.0);
  const VectorXd ref = oracle::integrate_affine(m.A1, VectorXd::Zero(2), x, 2.0);
  EXPECT_LT((osc - ref).norm(), 1e-11);
}

TEST(StepExact, MatchesOdeOnBuck) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const VectorXd x = VectorXd::Constant(2, 1.0);
  for (int a : {0, 1}) {
    const VectorXd got = step_exact(m, x, a, 5e-5);
    const VectorXd ref = oracle::integrate_affine(m.A(a), m.B(a) * m.Vg, x, 5e-5);
    EXPECT_LT((got - ref).norm(), 1e-10 * (1.0 + ref.norm()));
  }
}

TEST(Simulate, FixedTopologyConverges) {
  const auto m = buck_model(fast_buck());
  Rng rng(1);
  const auto tr = simulate_open_loop(m, SwitchPolicy(1.0, make_deterministic(1)), VectorXd::Zero(2), 20000,
                                     1e-6, rng);
  const VectorXd eq = -m.A1.fullPivLu().solve(m.B1 * m.Vg);
  EXPECT_LT((tr.x_end - eq).norm(), 1e-9 * eq.norm());
  for (int a : tr.amps) ASSERT_EQ(a, 1);
}

TEST(Simulate, SubdivisionDoesNotChangeBoundaries) {
  const auto m = buck_model(fast_buck());
  const SwitchPolicy pol(0.5, make_uniform(1, 4));
  Trajectory ref;
  for (int s : {0, 1, 3, 8}) {
    Rng rng(5);
    SimulateOptions opt;
    opt.samples_per_quantum = s;
    const auto tr = simulate_open_loop(m, pol, VectorXd::Zero(2), 2000, 1e-6, rng, opt);
    if (s == 0) {
      ref = tr;
      EXPECT_TRUE(tr.sample_t.empty());
      continue;
    }
    ASSERT_EQ(tr.x_start.size(), ref.x_start.size());
    for (std::size_t k = 0; k < tr.x_start.size(); ++k) {
      ASSERT_EQ(tr.x_start[k], ref.x_start[k]);
    }
    std::int64_t ticks = 0;
    for (int l : tr.lens) ticks += l;
    EXPECT_EQ(tr.sample_t.size(), static_cast<std::size_t>(ticks * s));
  }
}

TEST(Simulate, SamplesLieOnExactFlow) {
  const auto m = buck_model(fast_buck());
  Rng rng(6);
  SimulateOptions opt;
  opt.samples_per_quantum = 2;
  const auto tr = simulate_open_loop(m, SwitchPolicy(0.5, make_uniform(1, 3)), VectorXd::Zero(2), 50, 1e-6, rng,
                                     opt);
  // first sample of pulse 7 is a quarter quantum past its start
  std::size_t idx = 0;
  for (std::size_t k = 0; k < 7; ++k) idx += static_cast<std::size_t>(tr.lens[k] * 2);
  const VectorXd ref = oracle::integrate_affine(m.A(tr.amps[7]), m.B(tr.amps[7]) * m.Vg, tr.x_start[7], 0.25e-6);
  EXPECT_NEAR(tr.sample_t[idx], tr.t_start[7] + 0.25e-6, 1e-18);
  EXPECT_LT((tr.sample_x[idx] - ref).norm(), 1e-10);
}

TEST(Simulate, DivergenceReportsPulseIndex) {
  ConverterModel m = scalar_model();
  m.A1(0, 0) = 50.0;
  m.A2(0, 0) = 50.0;
  Rng rng(1);
  SimulateOptions opt;
  opt.divergence_bound = 1e6;
  try {
    simulate_open_loop(m, SwitchPolicy(0.5, make_deterministic(1)), VectorXd::Constant(1, 1.0), 100, 0.1, rng,
                       opt);
    FAIL() << "expected divergence";
  } catch (const NumericalDivergence& e) {
    // 1 grows as e^{5k}, passing 1e6 during pulse 2
    EXPECT_EQ(e.pulse_index(), 2u);
  }
}

TEST(Simulate, DeciderSeesBoundaryState) {
  const auto m = scalar_model();
  std::vector<double> seen;
  auto decide = [&](std::size_t, double, const VectorXd& x) {
    seen.push_back(x[0]);
    return PulseDecision{1, 2};
  };
  struct None {};
  simulate(m, decide, VectorXd::Zero(1), 3, 0.5, None{});
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_EQ(seen[0], 0.0);
  EXPECT_NEAR(seen[1], 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(seen[2], 1.0 - std::exp(-2.0), 1e-15);
}

TEST(Simulate, LongRunMeansMatchDcAndVoltSecondBalance) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const double p = 0.5;
  const auto op = dc_solve(m, p);
  Rng rng(12);
  SimulateOptions opt;
  opt.samples_per_quantum = 1;
  struct Acc {
    const ConverterModel* m;
    std::vector<double> v, vl;
    std::size_t skip = 20000, n = 0;
    void on_sample(double, const VectorXd& x, int a) {
      if (n++ < skip) return;
      v.push_back(x[1]);
      vl.push_back((m->A(a) * x + m->B(a) * m->Vg)[0]);
    }
  } acc{&m, {}, {}};
  const SwitchPolicy pol(p, make_deterministic(1));
  simulate(m, PolicyDecider{&pol, &rng}, op.X, 220000, 1e-6, acc, opt);
  const auto sv = oracle::summarize(acc.v);
  EXPECT_LT(std::abs(sv.mean - op.X[1]), 3.0 * oracle::batch_mean_stderr(acc.v));
  const auto sl = oracle::summarize(acc.vl);
  EXPECT_LT(std::abs(sl.mean), 3.0 * oracle::batch_mean_stderr(acc.vl));
}

TEST(MeanUpdate, FixedPointAndLinearity) {
  const auto m = buck_model(fast_buck());
  const auto op = dc_solve(m, 0.3);
  EXPECT_LT((mean_update(m, 0.3, op.X, 1e-6) - op.X).norm(), 1e-9);
  const VectorXd x = VectorXd::Zero(2);
  const VectorXd d1 = mean_update(m, 0.3, x, 2e-7) - x;
  const VectorXd d2 = mean_update(m, 0.3, x, 1e-7) - x;
  EXPECT_LT((d1 - 2 * d2).norm(), 1e-12 * d1.norm());
  const auto d = make_uniform(1, 5);
  EXPECT_EQ(mean_update(m, 0.3, d, 1e-7, x), mean_update(m, 0.3, x, 3e-7));
  EXPECT_TRUE(linear_ripple_valid(m, 0.3, 1e-6));
  EXPECT_FALSE(linear_ripple_valid(m, 0.3, 1e-2));
}

TEST(MeanUpdate, TracksAveragedOdeWithFirstOrderError) {
  const auto m = buck_model(fast_buck());
  const double p = 0.5, horizon = 2e-3;
  const VectorXd x0 = VectorXd::Zero(2);
  const VectorXd ref = oracle::integrate_affine(m.averaged_A(p), m.averaged_B(p) * m.Vg, x0, horizon);
  EXPECT_LT((averaged_flow(m, p, x0, horizon) - ref).norm(), 1e-9 * ref.norm());
  double prev = 0.0;
  for (int steps : {2000, 4000, 8000}) {
    VectorXd x = x0;
    for (int k = 0; k < steps; ++k) x = mean_update(m, p, x, horizon / steps);
    const double err = (x - ref).norm();
    if (prev > 0.0) EXPECT_NEAR(prev / err, 2.0, 0.2);
    prev = err;
  }
}

TEST(Covariance, DegenerateDutyGivesZero) {
  const auto m = buck_model(fast_buck());
  for (double p : {0.0, 1.0}) {
    const auto r = covariance_equilibrium(m, p, make_deterministic(1), 1e-6);
    EXPECT_LT(r.cov_boundary.cwiseAbs().maxCoeff(), 1e-20);
    EXPECT_LT(r.cov_time.cwiseAbs().maxCoeff(), 1e-20);
  }
}

TEST(Covariance, MatchesMomentIterationOracle) {
  // slow-ish circuit so the plain iteration converges quickly
  const BuckParams b{100e-6, 40e-6, 1.2, 0.05, 12.0};
  const auto m = buck_model(b);
  const double p = 0.4, t = 20e-6;
  const auto d = make_uniform(1, 3);
  const auto r = covariance_equilibrium(m, p, d, t);
  std::vector<oracle::Branch> br;
  for (int a = 0; a <= 1; ++a) {
    for (int l = 1; l <= 3; ++l) {
      br.push_back({(a ? p : 1 - p) * d.prob(l), m.A(a), m.B(a) * m.Vg, l * t});
    }
  }
  const auto ref = oracle::iterate_moments(br, 2, 2000000, 1e-15);
  EXPECT_LT((r.mean_boundary - ref.mean).norm(), 1e-8 * ref.mean.norm());
  EXPECT_LT((r.cov_boundary - ref.cov).cwiseAbs().maxCoeff(), 1e-7 * ref.cov.cwiseAbs().maxCoeff());
  EXPECT_LT(r.spectral_radius, 1.0);
}

TEST(Covariance, UnstableRejected) {
  ConverterModel m = scalar_model();
  m.A1(0, 0) = 0.5;
  m.A2(0, 0) = 0.5;
  EXPECT_THROW(covariance_equilibrium(m, 0.5, make_deterministic(1), 1.0), UnstableSystem);
}

TEST(Covariance, TimeAverageAgreesWithSimulation) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const double p = 0.5;
  const auto d = make_uniform(1, 3);
  const auto r = covariance_equilibrium(m, p, d, 1e-6, 2);
  Rng rng(31);
  SimulateOptions opt;
  opt.samples_per_quantum = 2;
  struct Acc {
    std::vector<double> v;
    std::size_t n = 0;
    void on_sample(double, const VectorXd& x, int) {
      if (n++ >= 40000) v.push_back(x[1]);
    }
  } acc;
  const SwitchPolicy pol(p, d);
  simulate(m, PolicyDecider{&pol, &rng}, r.mean_boundary, 150000, 1e-6, acc, opt);
  const auto s = oracle::summarize(acc.v);
  EXPECT_NEAR(s.mean, r.mean_time[1], 3 * oracle::batch_mean_stderr(acc.v) + 1e-12);
  EXPECT_NEAR(s.var / r.cov_time(1, 1), 1.0, 0.1);
}

TEST(RippleTransfer, MatchesHandDerivedBuck) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const double p = 0.35;
  const auto H = ripple_transfer_mag_sq(m, p);
  for (double f : {0.0, 10.0, 1e3, 2.5e3, 1e5, 1e7}) {
    const double hv = buck_hv_mag_sq(b, p, f);
    const double w = 2 * pi * f;
    const double hi = hv * (b.R * b.R * b.C * b.C * w * w + 1.0) / (b.R * b.R);
    EXPECT_LT(rel(H.mag_sq(f)[1], hv), 1e-10) << f;
    EXPECT_LT(rel(H.mag_sq(f)[0], hi), 1e-10) << f;
  }
  const VectorXd dc = m.averaged_A(p).fullPivLu().solve(H.beta()).cwiseAbs2();
  EXPECT_LT((H.mag_sq(0.0) - dc).norm(), 1e-12 * dc.norm());
}

TEST(RippleTransfer, SecondOrderRollOff) {
  const auto m = buck_model(fast_buck());
  const auto H = ripple_transfer_mag_sq(m, 0.5);
  const double f1 = 1e7, f2 = 1e8;
  const double slope_v = std::log(H.mag_sq(f2)[1] / H.mag_sq(f1)[1]) / std::log(f2 / f1);
  const double slope_i = std::log(H.mag_sq(f2)[0] / H.mag_sq(f1)[0]) / std::log(f2 / f1);
  EXPECT_NEAR(slope_v, -4.0, 0.01);
  EXPECT_NEAR(slope_i, -2.0, 0.01);
}

TEST(RippleTransfer, LosslessResonanceReported) {
  ConverterModel m;
  m.A1.resize(2, 2);
  m.A1 << 0.0, -1.0, 1.0, 0.0;
  m.A2 = m.A1;
  m.B1 = VectorXd::Zero(2);
  m.B1[0] = 1.0;
  m.B2 = VectorXd::Zero(2);
  m.Vg = 1.0;
  const auto H = ripple_transfer_mag_sq(m, 0.5);
  EXPECT_THROW(H.mag_sq(1.0 / (2 * pi)), SingularSystem);
}

TEST(RipplePsd, CurrentVoltageRatioAndZeroDuty) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const auto g = log_grid(1e-6, 64);
  const auto c = ripple_psd(m, 0.5, make_uniform(1, 3), 1e-6, g);
  ASSERT_EQ(c.size(), 2u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = 2 * pi * g[i];
    const double k = (b.R * b.R * b.C * b.C * w * w + 1.0) / (b.R * b.R);
    EXPECT_LT(std::abs(c[0].noise[i] - k * c[1].noise[i]), 1e-10 * c[0].noise[i] + 1e-300);
  }
  EXPECT_EQ(c[0].dc_weight, 0.0);
  for (const auto& curve : ripple_psd(m, 0.0, make_uniform(1, 3), 1e-6, g)) {
    for (double v : curve.noise) EXPECT_EQ(v, 0.0);
  }
  const auto full = state_psd(m, 0.5, make_uniform(1, 3), 1e-6, g);
  const auto op = dc_solve(m, 0.5);
  EXPECT_NEAR(full[1].dc_weight, op.X[1] * op.X[1], 1e-12);
}

TEST(RipplePsd, FilterPipelineMatchesHandTransfer) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const double p = 0.5, t = 1e-6;
  const auto g = log_grid(t, 64);
  const auto sq = mix_affine(1.0, -p, psd_rs(p, 1, t, g), p);
  const auto v = filter_psd(sq, [&](double f) { return buck_hv_mag_sq(b, p, f) * b.Vg * b.Vg; });
  const auto c = ripple_psd(m, p, make_deterministic(1), t, g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(std::abs(c[1].noise[i] - v.noise[i]), 1e-9 * v.noise[i] + 1e-300);
}

TEST(RipplePsd, IntegralMatchesCovariance) {
  const auto m = buck_model(fast_buck());
  const double p = 0.5, t = 1e-6;
  const auto d = make_uniform(1, 3);
  const auto c = ripple_psd(m, p, d, t, log_grid(t, 4096, 1e-5, 50.0));
  const auto cov = covariance_equilibrium(m, p, d, t);
  EXPECT_NEAR(total_psd(c[0]).total / cov.cov_time(0, 0), 1.0, 0.1);
  EXPECT_NEAR(total_psd(c[1]).total / cov.cov_time(1, 1), 1.0, 0.1);
}

TEST(Buck, PaperEfficiencyAndLossless) {
  const auto r = buck_analysis({1e-3, 1e-4, 10.0, 0.1, 12.0}, 0.5, make_deterministic(1), 1e-6);
  EXPECT_NEAR(r.eta, 10.0 / 10.05, 1e-12);
  EXPECT_NEAR(r.V, 60.0 / 10.05, 1e-10);
  EXPECT_NEAR(r.P_out / r.P_in, r.eta, 1e-12);
  const auto d = make_uniform(1, 5);
  const auto l = buck_analysis({1e-3, 1e-4, 10.0, 0.0, 12.0}, 0.25, d, 1e-6);
  EXPECT_DOUBLE_EQ(l.eta, 1.0);
  EXPECT_NEAR(l.V, 3.0, 1e-12);
  const auto mo = d.moments();
  const double floor = 144.0 * 0.25 * 0.75 * 1e-6 * (mo.mean + mo.variance / mo.mean);
  EXPECT_NEAR(l.lf_floor, floor, 1e-12 * floor);
  EXPECT_NEAR(l.lf_floor_eta_linear, floor, 1e-12 * floor);
}

TEST(Buck, LfFloorMatchesGenericPipeline) {
  const auto b = fast_buck();
  const double p = 0.4, t = 1e-6;
  const auto d = make_huffman(10);
  const auto r = buck_analysis(b, p, d, t);
  const auto c = ripple_psd(buck_model(b), p, d, t, {0.0});
  EXPECT_NEAR(r.lf_floor / c[1].noise[0], 1.0, 1e-9);
  EXPECT_GT(r.lf_floor, r.limit_floor * r.eta * r.eta * r.eta);
}

TEST(Buck, ClosedFormVersusCovariance) {
  const auto r = buck_analysis(fast_buck(), 0.5, make_deterministic(1), 1e-6);
  EXPECT_NEAR(r.sigma_i_closed / r.sigma_i_cov, 1.0, 0.1);
  EXPECT_NEAR(r.sigma_v_closed / r.sigma_v_cov, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(r.f_s, 1e6);
}

TEST(Ripple, SwitchUncorrelatedWithStateAtPulseStart) {
  const auto b = fast_buck();
  const auto m = buck_model(b);
  const double p = 0.3;
  const auto X = dc_solve(m, p).X;
  const SwitchPolicy pol(p, make_uniform(1, 4));
  Rng rng(77);
  struct Obs {
    VectorXd X;
    double p;
    std::vector<double> qi, qv;
    void on_pulse(std::size_t k, double, const VectorXd& x, int a, int) {
      if (k < 5000) return;
      qi.push_back((a - p) * (x[0] - X[0]));
      qv.push_back((a - p) * (x[1] - X[1]));
    }
  } obs{X, p, {}, {}};
  simulate(m, PolicyDecider{&pol, &rng}, X, 205000, 1e-6, obs);
  for (const auto* s : {&obs.qi, &obs.qv}) {
    const auto st = oracle::summarize(*s);
    EXPECT_LT(std::abs(st.mean), 4.0 * std::sqrt(st.var / static_cast<double>(s->size())));
  }
}
