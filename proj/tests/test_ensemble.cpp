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

#include <algorithm>
#include <cmath>
#include <set>

#include "nplex/analysis.hpp"
#include "nplex/ensemble.hpp"

using namespace nplex;

namespace {

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

// Built once; the full-size ensemble takes a fraction of a second.
struct FullScaleFixture : ::testing::Test {
  static void SetUpTestSuite() {
    config = new EnsembleConfig{};
    A = new Ensemble(build_ensemble(*config, Rng(11)));
    w = new WeightVector(build_weight_vector(*config, *A, Rng(11)));
  }
  static void TearDownTestSuite() {
    delete config;
    delete A;
    delete w;
  }
  static inline EnsembleConfig* config = nullptr;
  static inline Ensemble* A = nullptr;
  static inline WeightVector* w = nullptr;
};

}  // namespace

TEST_F(FullScaleFixture, DefaultShape) {
  EXPECT_EQ(A->M(), 100);
  EXPECT_EQ(A->N(), 10000);
  ASSERT_EQ(A->signal_indices.size(), 150u);
  for (std::size_t j = 0; j < 150; ++j) EXPECT_EQ(A->signal_indices[j], static_cast<Index>(j));
  EXPECT_TRUE(A->matrix.allFinite());
}

TEST_F(FullScaleFixture, SignalColumnsFollowHrPlusNoise) {
  // Column j equals the HR signal from stream j plus observation noise of variance 0.01.
  const Rng root(11);
  double resid_var = 0.0;
  for (Index j = 0; j < 150; ++j) {
    const Signal clean = ensemble_hr_signal(*config, root, j);
    resid_var += (A->matrix.col(j) - clean.samples()).squaredNorm() / 100.0;
  }
  EXPECT_NEAR(resid_var / 150.0, 0.01, 0.001);
}

TEST_F(FullScaleFixture, NoiseColumnsAreStandardNormal) {
  const Eigen::MatrixXd noise = A->matrix.rightCols(9850);
  EXPECT_NEAR(noise.mean(), 0.0, 0.005);
  EXPECT_NEAR(noise.squaredNorm() / double(noise.size()), 1.0, 0.01);
}

TEST_F(FullScaleFixture, DefaultWeights) {
  ASSERT_EQ(w->significant_support, (IndexList{0, 1, 2, 3}));
  EXPECT_EQ(w->values[0], 1.0);
  EXPECT_EQ(w->values[1], 0.9);
  EXPECT_EQ(w->values[2], 0.8);
  EXPECT_EQ(w->values[3], 0.7);
  for (Index i = 4; i < 150; ++i) {
    EXPECT_GE(w->values[i], 0.0);
    EXPECT_LT(w->values[i], 0.02);
  }
  for (Index i = 150; i < 10000; ++i) {
    EXPECT_GE(w->values[i], 0.0);
    EXPECT_LT(w->values[i], 0.001);
  }
  EXPECT_TRUE(w->separation_holds());
}

TEST_F(FullScaleFixture, AnyThresholdInGapSelectsSupport) {
  for (double T : {0.021, 0.1, 0.4, 0.69}) {
    IndexList above;
    for (Index i = 0; i < w->values.size(); ++i)
      if (std::abs(w->values[i]) > T) above.push_back(i);
    EXPECT_EQ(above, w->significant_support) << "T=" << T;
  }
}

TEST_F(FullScaleFixture, ReceiverCopyKeepsSignalBlockCorrelated) {
  const Ensemble Ah = perturb_ensemble(*A, 0.01, Rng(12));
  EXPECT_EQ(Ah.signal_indices, A->signal_indices);
  double mean_corr = 0.0;
  for (Index j = 0; j < 150; ++j) mean_corr += correlation(A->matrix.col(j), Ah.matrix.col(j));
  EXPECT_GT(mean_corr / 150.0, 0.9);

  int small = 0;
  for (Index j = 150; j < 10000; ++j)
    if (std::abs(correlation(A->matrix.col(j), Ah.matrix.col(j))) < 0.35) ++small;
  EXPECT_GE(small, static_cast<int>(0.95 * 9850));
}

TEST_F(FullScaleFixture, ZeroPerturbationWithTransmitterSeedIsIdentity) {
  const Ensemble Ah = perturb_ensemble(*A, 0.0, Rng(11));
  EXPECT_EQ(Ah.matrix, A->matrix);
}

TEST_F(FullScaleFixture, ZeroPerturbationKeepsSignalBlock) {
  const Ensemble Ah = perturb_ensemble(*A, 0.0, Rng(99));
  EXPECT_EQ(Ah.matrix.leftCols(150), A->matrix.leftCols(150));
  EXPECT_NE(Ah.matrix.rightCols(9850), A->matrix.rightCols(9850));
}

TEST_F(FullScaleFixture, ColumnNormsOfNoiseColumns) {
  const Eigen::VectorXd norms = column_norms(*A);
  int inside = 0;
  for (Index j = 150; j < 10000; ++j)
    if (norms[j] >= 8.0 && norms[j] <= 12.0) ++inside;
  EXPECT_GE(inside, static_cast<int>(0.99 * 9850));
}

TEST(Ensemble, AllNoiseColumnVariance) {
  EnsembleConfig c;
  c.k = 0;
  c.multiplexed_weights.clear();
  c.signal_dominant_count = 0;
  const Ensemble A = build_ensemble(c, Rng(5));
  double avg = 0.0;
  for (Index j = 0; j < A.N(); ++j) {
    const Eigen::VectorXd col = A.matrix.col(j);
    avg += (col.array() - col.mean()).square().sum() / 99.0;
  }
  avg /= double(A.N());
  EXPECT_GE(avg, 0.97);
  EXPECT_LE(avg, 1.03);
}

TEST(Ensemble, MinimalShape) {
  EnsembleConfig c;
  c.N = 1;
  c.M = 1;
  c.k = 0;
  c.multiplexed_weights.clear();
  c.signal_dominant_count = 0;
  const Ensemble A = build_ensemble(c, Rng(5));
  ASSERT_EQ(A.matrix.rows(), 1);
  ASSERT_EQ(A.matrix.cols(), 1);
  EXPECT_TRUE(std::isfinite(A.matrix(0, 0)));
  EXPECT_NE(A.matrix(0, 0), 0.0);
}

TEST(Ensemble, ReproducibleUnderSeed) {
  EnsembleConfig c;
  c.N = 300;
  c.signal_dominant_count = 10;
  const Ensemble a = build_ensemble(c, Rng(77));
  const Ensemble b = build_ensemble(c, Rng(77));
  EXPECT_EQ(a.matrix, b.matrix);
  EXPECT_EQ(build_weight_vector(c, a, Rng(77)).values, build_weight_vector(c, b, Rng(77)).values);
  EXPECT_NE(build_ensemble(c, Rng(78)).matrix, a.matrix);
}

TEST(Ensemble, ConfigValidation) {
  EnsembleConfig c;
  c.M = 0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  c = EnsembleConfig{};
  c.k = 200;
  EXPECT_THROW(c.validate(), Error);
  c = EnsembleConfig{};
  c.multiplexed_weights = {1.0};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Ensemble, ScatteredPlacementDistinct) {
  EnsembleConfig c;
  c.N = 400;
  c.signal_dominant_count = 20;
  c.placement = SignalPlacement::Scattered;
  const Ensemble A = build_ensemble(c, Rng(3));
  const std::set<Index> unique(A.signal_indices.begin(), A.signal_indices.end());
  EXPECT_EQ(unique.size(), 20u);
  EXPECT_LT(*unique.rbegin(), 400);
  EXPECT_NE(A.signal_indices, (IndexList{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19}));
  const WeightVector w = build_weight_vector(c, A, Rng(3));
  EXPECT_EQ(w.significant_support, IndexList(A.signal_indices.begin(), A.signal_indices.begin() + 4));
  EXPECT_TRUE(w.separation_holds());
}

TEST(Weights, EmptySupport) {
  EnsembleConfig c;
  c.N = 200;
  c.signal_dominant_count = 10;
  c.k = 0;
  c.multiplexed_weights.clear();
  const Ensemble A = build_ensemble(c, Rng(1));
  const WeightVector w = build_weight_vector(c, A, Rng(1));
  EXPECT_TRUE(w.significant_support.empty());
  EXPECT_LT(w.values.cwiseAbs().maxCoeff(), 0.02);
}

TEST(Weights, DefaultLinspace) {
  EXPECT_EQ(default_multiplexed_weights(1), (std::vector<double>{1.0}));
  const auto w4 = default_multiplexed_weights(4);
  const double expected[] = {1.0, 0.9, 0.8, 0.7};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w4[static_cast<std::size_t>(i)], expected[i], 1e-15);
  const auto w8 = default_multiplexed_weights(8);
  EXPECT_DOUBLE_EQ(w8.front(), 1.0);
  EXPECT_DOUBLE_EQ(w8.back(), 0.7);
}

TEST(Weights, SignedMode) {
  EnsembleConfig c;
  c.N = 2000;
  c.signal_dominant_count = 30;
  c.signed_weights = true;
  const Ensemble A = build_ensemble(c, Rng(1));
  const WeightVector w = build_weight_vector(c, A, Rng(1));
  EXPECT_LT(w.values.minCoeff(), 0.0);
  EXPECT_TRUE(w.separation_holds());
}

TEST(Weights, CsvLayout) {
  WeightVector w;
  w.values = Eigen::Vector3d(0.5, 0.25, 1.0);
  w.significant_support = {2};
  EXPECT_EQ(w.to_csv(), "index,value,is_significant\n0,0.5,0\n1,0.25,0\n2,1,1\n");
}

TEST(Perturb, PermutationTracksOrigins) {
  EnsembleConfig c;
  c.N = 100;
  c.signal_dominant_count = 8;
  const Ensemble A = build_ensemble(c, Rng(4));
  const Ensemble Ah = perturb_ensemble(A, 0.0, Rng(4), true);
  ASSERT_EQ(Ah.column_origin.size(), 100u);
  for (Index j = 0; j < 100; ++j) EXPECT_EQ(Ah.matrix.col(j), A.matrix.col(Ah.origin_of(j)));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(Ah.origin_of(Ah.signal_indices[i]), A.signal_indices[i]);
}

TEST(Perturb, NegativeVarianceRejected) {
  Ensemble A;
  A.matrix = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(perturb_ensemble(A, -1.0, Rng(1)), Error);
}

TEST(ColumnNorms, TrivialColumns) {
  Ensemble A;
  A.matrix = Eigen::MatrixXd::Zero(3, 2);
  A.matrix(0, 1) = 1.0;
  const Eigen::VectorXd n = column_norms(A);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_EQ(n[1], 1.0);
}

TEST(Coherence, PureNoiseDecreasesWithM) {
  double previous = 2.0;
  for (Index M : {50, 100, 400}) {
    Rng rng(21);
    Eigen::MatrixXd A(M, 500);
    for (Index j = 0; j < 500; ++j)
      for (Index i = 0; i < M; ++i) A(i, j) = rng.normal();
    const double mu = mutual_coherence(A);
    EXPECT_LT(mu, previous) << "M=" << M;
    previous = mu;
  }
}

TEST(Serialization, RoundTrip) {
  EnsembleConfig c;
  c.N = 40;
  c.M = 7;
  c.signal_dominant_count = 5;
  const Ensemble A = build_ensemble(c, Rng(9));
  const std::string bytes = serialize_ensemble(A);
  EXPECT_EQ(bytes.substr(0, 6), "NPLEX1");
  const Ensemble B = deserialize_ensemble(bytes);
  EXPECT_EQ(B.matrix, A.matrix);
  EXPECT_EQ(B.signal_indices, A.signal_indices);
  EXPECT_EQ(B.seeds, A.seeds);
}

TEST(Serialization, CorruptHeaderRejected) {
  EXPECT_THROW(deserialize_ensemble("NOTNPLEX"), Error);
  Ensemble A;
  A.matrix = Eigen::MatrixXd::Ones(2, 2);
  std::string bytes = serialize_ensemble(A);
  bytes.pop_back();
  EXPECT_THROW(deserialize_ensemble(bytes), Error);
}
