#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "randswitch/io.hpp"

using namespace randswitch;
using io::json;

TEST(Fmt, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) {
    EXPECT_EQ(std::stod(io::fmt(v)), v);
  }
}

TEST(DistJson, RoundTrip) {
  for (const auto& d : {make_uniform(2, 6), make_huffman(9), make_canonical(3.0, 12.0, 1, 8)}) {
    const auto j = io::dist_to_json(d);
    EXPECT_EQ(j["probs"].size(), d.size());
    EXPECT_EQ(j["probs"][0][0].get<int>(), d.lmin());
    const auto back = io::dist_from_json(json::parse(j.dump()));
    EXPECT_EQ(back.kind(), d.kind());
    EXPECT_EQ(back.lmin(), d.lmin());
    for (int l = d.lmin(); l <= d.lmax(); ++l) EXPECT_EQ(back.prob(l), d.prob(l));
    EXPECT_EQ(back.diagnostics().has_value(), d.diagnostics().has_value());
  }
}

TEST(DistJson, SparsePairsAndErrors) {
  const auto d = io::dist_from_json(json::parse(R"({"probs": [[2, 0.25], [5, 0.75]]})"));
  EXPECT_EQ(d.lmin(), 2);
  EXPECT_EQ(d.lmax(), 5);
  EXPECT_EQ(d.prob(3), 0.0);
  EXPECT_EQ(d.kind(), DistKind::custom);
  EXPECT_THROW(io::dist_from_json(json::parse(R"({"probs": [[1, 0.5]]})")), std::invalid_argument);
  EXPECT_THROW(io::dist_from_json(json::parse(R"({"probs": []})")), std::invalid_argument);
  EXPECT_THROW(io::dist_from_json(json::parse(R"({"probs": [[0, 1.0]]})")), std::invalid_argument);
  EXPECT_THROW(io::dist_from_json(json::parse(R"({"p": 1})")), std::invalid_argument);
}

TEST(DistSpec, Parses) {
  EXPECT_EQ(io::parse_dist_spec("det:3").prob(3), 1.0);
  EXPECT_EQ(io::parse_dist_spec("uniform:1:5").size(), 5u);
  EXPECT_NEAR(io::parse_dist_spec("huffman:3").prob(1), 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(io::parse_dist_spec("canonical:5.5:38.5:1:10").prob(4), 0.1, 1e-8);
  EXPECT_EQ(io::parse_dist_spec("gaussian:3:1:1:6").kind(), DistKind::gaussian);
  for (const char* bad : {"det", "det:x", "uniform:1", "poisson:3", "det:1:2", "file:/nonexistent/d.json"}) {
    EXPECT_THROW(io::parse_dist_spec(bad), std::invalid_argument) << bad;
  }
}

TEST(DistSpec, FileForm) {
  const std::string dir = RANDSWITCH_TEST_DATA;
  const auto d = io::parse_dist_spec("file:" + dir + "/dist_sparse.json");
  EXPECT_EQ(d.lmin(), 1);
  EXPECT_DOUBLE_EQ(d.prob(1), 0.5);
  EXPECT_DOUBLE_EQ(d.prob(4), 0.5);
}

TEST(SequenceIo, JsonRoundTripAndCsv) {
  const SwitchSequence seq(2e-6, {1, 0, 1}, {1, 3, 2});
  const auto back = io::sequence_from_json(json::parse(io::sequence_to_json(seq).dump()));
  EXPECT_EQ(back.amps(), seq.amps());
  EXPECT_EQ(back.lens(), seq.lens());
  EXPECT_EQ(back.t_eps(), seq.t_eps());
  EXPECT_THROW(io::sequence_from_json(json::parse(R"({"t_eps": 1, "amps": "012", "lens": [1,1,1]})")),
               std::invalid_argument);
  std::ostringstream os;
  io::write_sequence_csv(os, seq, {"hello"});
  EXPECT_EQ(os.str(), "# hello\nk,a_k,ell_k,t_start_seconds\n0,1,1,0\n1,0,3,2e-06\n2,1,2,8e-06\n");
}

TEST(PsdIo, CsvLayout) {
  PsdCurve c{{-1.0, 0.0, 1.0}, {0.5, 1.0, 0.5}, 0.25};
  std::ostringstream os;
  io::write_psd_csv(os, c, {{"env", {1.0, 2.0, 1.0}}, {"env_db", io::to_db({1.0, 10.0, 100.0})}});
  EXPECT_EQ(os.str(), "# dc_weight=0.25\nf_hz,noise,env,env_db\n-1,0.5,1,0\n0,1,2,10\n1,0.5,1,20\n");
  EXPECT_THROW(io::write_psd_csv(os, c, {{"bad", {1.0}}}), std::invalid_argument);
  const auto j = io::psd_to_json(c);
  EXPECT_EQ(j["dc_weight"].get<double>(), 0.25);
  EXPECT_EQ(j["freqs"].size(), 3u);
  EXPECT_TRUE(std::isinf(io::to_db({0.0})[0]));
}

TEST(ModelIo, FullMatricesBuckShorthandAndRoundTrip) {
  const auto full = io::model_from_json(json::parse(R"({
    "A1": [[-1, 0], [0, -2]], "A2": [[-3, 0], [0, -4]], "B1": [1, 0], "B2": [0, 1],
    "Vg": 5, "labels": ["a", "b"]})"));
  EXPECT_EQ(full.dim(), 2);
  EXPECT_EQ(full.A2(1, 1), -4.0);
  EXPECT_EQ(full.Vg, 5.0);
  EXPECT_EQ(full.label(1), "b");
  const auto back = io::model_from_json(io::model_to_json(full));
  EXPECT_EQ(back.A1, full.A1);
  EXPECT_EQ(back.B2, full.B2);

  const auto buck = io::model_from_json(json::parse(R"({"L": 1e-4, "C": 4e-5, "R": 1.2, "r": 0.05, "Vg": 12})"));
  const auto ref = buck_model({1e-4, 4e-5, 1.2, 0.05, 12});
  EXPECT_EQ(buck.A1, ref.A1);
  EXPECT_EQ(buck.labels, ref.labels);
  const auto nested = io::model_from_json(json::parse(R"({"buck": {"L": 1e-4, "C": 4e-5, "R": 1.2, "Vg": 12}})"));
  EXPECT_EQ(nested.A1(0, 0), 0.0);

  EXPECT_THROW(io::model_from_json(json::parse(R"({"A1": [[1, 2]], "A2": [[1]], "B1": [1], "B2": [1]})")),
               std::invalid_argument);
  EXPECT_THROW(io::model_from_json(json::parse(R"({"L": -1, "C": 1, "R": 1, "Vg": 1})")), std::invalid_argument);
}

TEST(ControllerIo, RoundTrip) {
  ControllerSpec s;
  s.kind = ControllerKind::hysteresis;
  s.p_ref = 0.4;
  s.bands.push_back({1, 4.5, 5.5, 1, 0});
  auto back = io::controller_from_json(json::parse(io::controller_to_json(s).dump()));
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.bands.size(), 1u);
  EXPECT_EQ(back.bands[0].upper, 5.5);

  ControllerSpec f;
  f.kind = ControllerKind::state_feedback;
  f.x_d = Eigen::VectorXd::Constant(2, 1.5);
  f.K = Eigen::RowVectorXd::Constant(2, -0.25);
  back = io::controller_from_json(io::controller_to_json(f));
  EXPECT_EQ(back.x_d, f.x_d);
  EXPECT_EQ(back.K, f.K);
  EXPECT_THROW(io::controller_from_json(json::parse(R"({"kind": "pid"})")), std::invalid_argument);
}

TEST(TrajectoryIo, Columns) {
  const auto m = buck_model({1e-4, 4e-5, 1.2, 0.05, 12});
  Trajectory tr;
  tr.t_start = {0.0, 1e-6};
  tr.x_start = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 0.5)};
  tr.amps = {1, 0};
  tr.lens = {1, 1};
  std::ostringstream os;
  io::write_trajectory_csv(os, m, tr);
  EXPECT_EQ(os.str(), "t_seconds,i_A,v_V,a_k\n0,0,0,1\n1e-06,0.5,0.5,0\n");
}
