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

#pragma once

// Recovery-quality metrics, the coherence diagnostic and the
// measurements-versus-sparsity sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "nplex/ensemble.hpp"
#include "nplex/error.hpp"
#include "nplex/io.hpp"
#include "nplex/rng.hpp"

namespace nplex {

struct SupportMetrics {
  double precision = 0.0;
  double recall = 0.0;
  bool exact_match = false;
};

inline SupportMetrics support_metrics(const IndexList& true_support, const IndexList& recovered) {
  const std::set<Index> truth(true_support.begin(), true_support.end());
  const std::set<Index> found(recovered.begin(), recovered.end());
  std::size_t hits = 0;
  for (Index i : found) hits += truth.count(i);

  SupportMetrics m;
  if (found.empty()) {
    m.precision = truth.empty() ? 1.0 : 0.0;
  } else {
    m.precision = double(hits) / double(found.size());
  }
  m.recall = truth.empty() ? 1.0 : double(hits) / double(truth.size());
  m.exact_match = m.precision == 1.0 && m.recall == 1.0;
  return m;
}

struct ReconstructionMetrics {
  double pearson_correlation = 0.0;
  double relative_l2_error = 0.0;
};

/// Pearson correlation and |orig - rec| / |orig|. A constant original has no
/// defined correlation; a constant reconstruction scores correlation 0.
inline ReconstructionMetrics reconstruction_metrics(const Eigen::VectorXd& original,
                                                    const Eigen::VectorXd& reconstructed) {
  require(original.size() == reconstructed.size(), ErrorCode::DimensionMismatch, "signal lengths differ");
  require(original.size() >= 2, ErrorCode::DegenerateSignal, "need at least two samples");
  const Eigen::ArrayXd a = original.array() - original.mean();
  const Eigen::ArrayXd b = reconstructed.array() - reconstructed.mean();
  const double va = a.square().sum();
  const double vb = b.square().sum();
  require(va > 0.0, ErrorCode::DegenerateSignal, "original signal is constant");
  ReconstructionMetrics m;
  m.pearson_correlation = vb > 0.0 ? (a * b).sum() / std::sqrt(va * vb) : 0.0;
  m.relative_l2_error = (original - reconstructed).norm() / original.norm();
  return m;
}

/// max_{i != j} |<a_i, a_j>| / (|a_i| |a_j|), over all columns or over a
/// seeded random subset of `subset_size` columns.
inline double mutual_coherence(const Eigen::MatrixXd& A, std::optional<Index> subset_size = std::nullopt,
                               std::uint64_t seed = 0) {
  IndexList columns;
  if (subset_size && *subset_size < A.cols()) {
    columns = detail::draw_distinct(A.cols(), *subset_size, Rng(seed).derive(stream_tag::kPlacement));
    std::sort(columns.begin(), columns.end());
  } else {
    columns.resize(static_cast<std::size_t>(A.cols()));
    std::iota(columns.begin(), columns.end(), Index{0});
  }
  const auto n = static_cast<Index>(columns.size());
  Eigen::MatrixXd unit(A.rows(), n);
  for (Index j = 0; j < n; ++j) {
    const double norm = A.col(columns[static_cast<std::size_t>(j)]).norm();
    require(norm > 0.0, ErrorCode::ZeroColumn, "column " + std::to_string(columns[static_cast<std::size_t>(j)]) + " is zero");
    unit.col(j) = A.col(columns[static_cast<std::size_t>(j)]) / norm;
  }
  if (n < 2) return 0.0;
  const Eigen::MatrixXd gram = unit.transpose() * unit;
  double mu = 0.0;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < j; ++i) mu = std::max(mu, std::abs(gram(i, j)));
  return std::min(mu, 1.0);
}

inline double mutual_coherence(const Ensemble& e, std::optional<Index> subset_size = std::nullopt,
                               std::uint64_t seed = 0) {
  return mutual_coherence(e.matrix, subset_size, seed);
}

struct SweepPoint {
  Index N = 0;
  Index k = 0;
  Index M = 0;
  Index trials = 0;
  Index successes = 0;
  Index failures = 0;  // trials that raised instead of finishing
  double success_rate = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  Index trials = 0;
  std::map<std::pair<Index, Index>, Index> m_star;  // (N, k) -> smallest M reaching the target rate
  double target_rate = 0.9;

  /// Success rates along M for one (N, k), in grid order.
  std::vector<double> curve(Index N, Index k) const {
    std::vector<double> out;
    for (const auto& p : grid)
      if (p.N == N && p.k == k) out.push_back(p.success_rate);
    return out;
  }

  std::string to_csv() const {
    std::string out = "N,k,M,success_rate,trials\n";
    for (const auto& p : grid) {
      out += std::to_string(p.N) + ',' + std::to_string(p.k) + ',' + std::to_string(p.M) + ',' +
             io::format_double(p.success_rate) + ',' + std::to_string(p.trials) + '\n';
    }
    return out;
  }
};

/// Number of downward steps along a curve, and the largest of them.
inline std::pair<int, double> count_inversions(const std::vector<double>& curve) {
  int count = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double drop = curve[i - 1] - curve[i];
    if (drop > 1e-12) {
      ++count;
      worst = std::max(worst, drop);
    }
  }
  return {count, worst};
}

/// Monotone up to at most one inversion no larger than `tolerance`.
inline bool nearly_monotone(const std::vector<double>& curve, double tolerance = 0.05) {
  const auto [count, worst] = count_inversions(curve);
  return count == 0 || (count == 1 && worst <= tolerance + 1e-12);
}

inline std::uint64_t trial_seed(std::uint64_t master, Index N, Index k, Index M, Index trial) {
  std::uint64_t h = splitmix64(master);
  for (auto v : {N, k, M, trial}) h = splitmix64(h ^ static_cast<std::uint64_t>(v));
  return h;
}

struct SweepGrid {
  std::vector<Index> N_values;
  std::vector<Index> k_values;
  std::vector<Index> M_values;
  Index trials = 50;
  std::uint64_t master_seed = 0;
  double target_rate = 0.9;
};

/// Runs `trial(config, seed)` for every grid point and trial; the callable
/// returns true on exact support recovery. A trial that throws counts as a
/// failure and the sweep continues. Seeds depend only on (master seed, N, k,
/// M, trial index).
using SweepTrial = std::function<bool(const EnsembleConfig&, std::uint64_t)>;
using SweepConfigurer = std::function<EnsembleConfig(const EnsembleConfig&, Index N, Index k, Index M)>;

inline SweepResult measurement_sweep(const EnsembleConfig& base, const SweepGrid& grid, const SweepConfigurer& configure,
                                     const SweepTrial& trial) {
  require(!grid.N_values.empty() && !grid.k_values.empty() && !grid.M_values.empty(), ErrorCode::InvalidArgument,
          "sweep grid must be nonempty");
  require(grid.trials >= 1, ErrorCode::InvalidArgument, "trials must be >= 1");
  SweepResult result;
  result.trials = grid.trials;
  result.target_rate = grid.target_rate;
  for (Index N : grid.N_values) {
    for (Index k : grid.k_values) {
      std::optional<Index> m_star;
      for (Index M : grid.M_values) {
        SweepPoint point{N, k, M, grid.trials, 0, 0, 0.0};
        const EnsembleConfig config = configure(base, N, k, M);
        for (Index t = 0; t < grid.trials; ++t) {
          try {
            if (trial(config, trial_seed(grid.master_seed, N, k, M, t))) ++point.successes;
          } catch (const Error&) {
            ++point.failures;
          }
        }
        point.success_rate = double(point.successes) / double(point.trials);
        if (!m_star && point.success_rate >= grid.target_rate) m_star = M;
        result.grid.push_back(point);
      }
      if (m_star) result.m_star[{N, k}] = *m_star;
    }
  }
  return result;
}

struct MeasurementFit {
  double C = 0.0;
  double residual = 0.0;  // l2 norm of m_star - C k log(N/k)
  Index points = 0;
};

/// Least-squares fit of m_star = C * k * log(N / k) through the origin.
/// Accepts integer m_star from a sweep or real-valued targets.
template <class Value>
MeasurementFit fit_measurement_constant(const std::map<std::pair<Index, Index>, Value>& m_star) {
  require(m_star.size() >= 2, ErrorCode::InsufficientData, "need at least two (N, k) points with a defined m_star");
  double num = 0.0;
  double den = 0.0;
  for (const auto& [nk, m] : m_star) {
    const double f = double(nk.second) * std::log(double(nk.first) / double(nk.second));
    num += f * double(m);
    den += f * f;
  }
  require(den > 0.0, ErrorCode::InsufficientData, "k log(N/k) vanishes on every point");
  MeasurementFit fit;
  fit.C = num / den;
  double ss = 0.0;
  for (const auto& [nk, m] : m_star) {
    const double f = double(nk.second) * std::log(double(nk.first) / double(nk.second));
    ss += (double(m) - fit.C * f) * (double(m) - fit.C * f);
  }
  fit.residual = std::sqrt(ss);
  fit.points = static_cast<Index>(m_star.size());
  return fit;
}

inline MeasurementFit fit_measurement_constant(const SweepResult& sweep) { return fit_measurement_constant(sweep.m_star); }

}  // namespace nplex
