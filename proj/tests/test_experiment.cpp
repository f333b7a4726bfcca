// Copyright 2026 The nplex Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "nplex/experiment.hpp"

using namespace nplex;

namespace {

// A desk-sized configuration that still runs the whole pipeline.
RunConfig small_config() {
  RunConfig c;
  c.ensemble.N = 600;
  c.ensemble.M = 80;
  c.ensemble.signal_dominant_count = 9;
  c.trials = 3;
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Config, DefaultsMaterialized) {
  const json j = to_json(RunConfig{});
  EXPECT_EQ(j.at("master_seed"), 42);
  EXPECT_EQ(j.at("solver"), "bpdn");
  EXPECT_EQ(j.at("threshold"), 0.4);
  EXPECT_EQ(j.at("ensemble").at("N"), 10000);
  EXPECT_EQ(j.at("ensemble").at("M"), 100);
  EXPECT_NEAR(j.at("bpdn").at("eta").get<double>(), 2.578342490826242, 1e-12);
  EXPECT_EQ(j.at("rng"), kRngAlgorithm);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = small_config();
  c.solver = SolverKind::Omp;
  c.threshold = 0.3;
  c.ensemble.placement = SignalPlacement::Scattered;
  c.ensemble.receiver_noise_variance = 0.05;
  c.eta = 1.25;
  const json j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
}

TEST(Config, PartialJsonTakesDefaults) {
  const RunConfig c = run_config_from_json(json::parse(R"({"trials": 7, "ensemble": {"M": 50}})"));
  EXPECT_EQ(c.trials, 7);
  EXPECT_EQ(c.ensemble.M, 50);
  EXPECT_EQ(c.ensemble.N, 10000);
}

TEST(Config, UnknownFieldNamed) {
  try {
    run_config_from_json(json::parse(R"({"ensemble": {"MM": 3}})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("ensemble.MM"), std::string::npos);
  }
}

TEST(Config, UnknownSolverRejected) {
  EXPECT_EQ(code_of([] { run_config_from_json(json::parse(R"({"solver": "lasso"})")); }), ErrorCode::ConfigError);
}

TEST(Config, WrongTypeRejected) {
  EXPECT_EQ(code_of([] { run_config_from_json(json::parse(R"({"trials": "many"})")); }), ErrorCode::ConfigError);
}

TEST(Config, ZeroMeasurementsRejectedBeforeWork) {
  RunConfig c = small_config();
  c.ensemble.M = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { run_trials(c); }), ErrorCode::InvalidArgument);
}

TEST(Seeds, TrialSeedsDistinct) {
  const TrialSeeds a = seeds_for_trial(42, 0);
  const TrialSeeds b = seeds_for_trial(42, 1);
  EXPECT_NE(a.transmitter, a.receiver);
  EXPECT_NE(a.transmitter, b.transmitter);
  EXPECT_EQ(a.transmitter, seeds_for_trial(42, 0).transmitter);
}

TEST(Trial, EndToEndSmall) {
  const RunConfig c = small_config();
  const TrialOutcome t = run_trial(c, 0, seeds_for_trial(c.master_seed, 0));
  ASSERT_TRUE(t.completed()) << *t.error;
  EXPECT_EQ(t.true_support, (IndexList{0, 1, 2, 3}));
  EXPECT_EQ(t.signals.size(), 4u);
  EXPECT_EQ(t.y.size(), 80);
  EXPECT_LE(t.result.residual_norm, t.eta * (1.0 + 1e-8));
  for (const auto& s : t.signals) EXPECT_EQ(s.original.size(), 80);
}

TEST(Trial, ThreadedMatchesSerial) {
  RunConfig c = small_config();
  const auto serial = run_trials(c);
  c.threads = 3;
  const auto threaded = run_trials(c);
  ASSERT_EQ(serial.size(), threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(to_json(serial[i]).dump(), to_json(threaded[i]).dump());
}

TEST(Trial, PermutedReceiverMapsBack) {
  RunConfig c = small_config();
  c.ensemble.permute_receiver_columns = true;
  c.ensemble.receiver_noise_variance = 0.0;
  c.eta = 0.0;
  c.trials = 1;
  const auto out = run_trials(c);
  ASSERT_TRUE(out[0].completed()) << *out[0].error;
  EXPECT_EQ(out[0].recovered_support, (IndexList{0, 1, 2, 3}));
}

TEST(Trial, OmpRoute) {
  RunConfig c = small_config();
  c.solver = SolverKind::Omp;
  c.omp_max_sparsity = 4;
  const auto out = run_trials(c);
  for (const auto& t : out) {
    ASSERT_TRUE(t.completed());
    EXPECT_EQ(t.result.solver, "omp");
    EXPECT_LE(t.recovered_support.size(), 4u);
  }
}

TEST(Trial, DebiasRefitsOnSupport) {
  RunConfig c = small_config();
  c.debias = true;
  c.trials = 1;
  const auto out = run_trials(c);
  ASSERT_TRUE(out[0].completed());
  Index nonzero = 0;
  for (Index i = 0; i < out[0].result.x_star.size(); ++i) nonzero += out[0].result.x_star[i] != 0.0;
  EXPECT_EQ(nonzero, static_cast<Index>(out[0].result.recovered_support.size()));
}

TEST(Trial, ErrorsAreRecordedPerTrial) {
  RunConfig c = small_config();
  c.ensemble.N = 20;
  c.ensemble.signal_dominant_count = 5;
  c.ensemble.M = 40;  // M > N: the residual floor is positive
  c.ensemble.receiver_noise_variance = 0.0;
  c.eta = 0.0;
  c.trials = 2;
  const auto out = run_trials(c);
  for (const auto& t : out) {
    ASSERT_FALSE(t.completed());
    EXPECT_NE(t.error->find("InfeasibleEta"), std::string::npos);
  }
}

TEST(Report, ShapeAndAggregate) {
  const RunConfig c = small_config();
  const auto out = run_trials(c);
  const json r = run_report(c, out);
  EXPECT_EQ(r.at("aggregate").at("trials"), 3);
  EXPECT_EQ(r.at("trials").size(), 3u);
  const json& first = r.at("trials").at(0);
  for (const char* key : {"seeds", "true_support", "recovered_support", "signals", "result", "eta", "sir_db"})
    EXPECT_TRUE(first.contains(key)) << key;
  for (const char* key : {"solver", "eta", "iterations", "residual_norm", "support", "coefficients"})
    EXPECT_TRUE(first.at("result").contains(key)) << key;
}

TEST(Report, PairCsv) {
  SignalScore s;
  s.original = Eigen::Vector2d(1.0, 0.5);
  s.reconstructed = Eigen::Vector2d(0.75, 0.25);
  EXPECT_EQ(reconstruction_pair_csv(s), "n,original,reconstructed\n0,1,0.75\n1,0.5,0.25\n");
}

TEST(Sweep, PointConfigScalesSignalBlock) {
  const EnsembleConfig c = sweep_point_config(EnsembleConfig{}, SweepSettings{}, 2000, 8, 60);
  EXPECT_EQ(c.N, 2000);
  EXPECT_EQ(c.M, 60);
  EXPECT_EQ(c.k, 8);
  EXPECT_EQ(c.signal_dominant_count, 30);
  EXPECT_EQ(c.multiplexed_weights.size(), 8u);
}

TEST(Sweep, TinyGridRuns) {
  RunConfig c;
  c.sweep.N_values = {300};
  c.sweep.k_values = {1, 2};
  c.sweep.M_values = {5, 60};
  c.sweep.trials = 3;
  const SweepResult s = run_sweep(c);
  ASSERT_EQ(s.grid.size(), 4u);
  const json j = to_json(s);
  EXPECT_EQ(j.at("grid").size(), 4u);
  EXPECT_TRUE(j.contains("fit"));
  EXPECT_EQ(run_sweep(c).to_csv(), s.to_csv());  // deterministic
}
