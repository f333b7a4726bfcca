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

// Demultiplexing: sparse recovery of x from y and the receiver's matrix Â.
//
// BPDN (min |x|_1 s.t. |Âx - y|_2 <= eta) is solved through the penalized
// form  min 0.5 |Âx - y|^2 + lambda |x|_1, by default on a column-normalized
// copy of Â (see BpdnSettings::normalize_columns).
// The inner solver is FISTA with gradient-based adaptive restart; every few
// iterations the current sign pattern is tried as an exact active set, and a
// KKT check promotes it to the exact minimizer. lambda is bisected (in log
// space) until the residual sits in [0.99 eta, eta]. eta = 0 is basis
// pursuit, handled by Bregman iteration over exact penalized solves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nplex/ensemble.hpp"
#include "nplex/error.hpp"
#include "nplex/io.hpp"
#include "nplex/multiplex.hpp"

namespace nplex {

struct BpdnSettings {
  double eta = 0.0;
  long max_iterations = 100000;  // per penalized solve
  double convergence_tolerance = 1e-8;
  /// Step length as a fraction of 1/L, L the Lipschitz constant of the
  /// gradient of the smooth part. Must lie in (0, 1].
  double penalty_parameter = 1.0;
  int max_bisection_steps = 60;
  double residual_window = 0.01;  // accept residual in [(1 - window) eta, eta]
  /// Solve on unit-norm columns of Â. The objective in the original scale is
  /// then sum_j |a_j| |x_j| instead of |x|_1; the two agree when Â already
  /// has unit columns.
  bool normalize_columns = true;

  void validate() const {
    require(eta >= 0.0 && std::isfinite(eta), ErrorCode::InvalidArgument, "eta must be >= 0");
    require(max_iterations >= 1, ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    require(convergence_tolerance > 0.0, ErrorCode::InvalidArgument, "convergence_tolerance must be > 0");
    require(penalty_parameter > 0.0 && penalty_parameter <= 1.0, ErrorCode::InvalidArgument,
            "penalty_parameter must lie in (0, 1]");
    require(max_bisection_steps >= 1, ErrorCode::InvalidArgument, "max_bisection_steps must be >= 1");
    require(residual_window > 0.0 && residual_window < 1.0, ErrorCode::InvalidArgument,
            "residual_window must lie in (0, 1)");
  }
};

enum class SolverStatus { Converged, MaxIterationsExceeded };

struct RecoveryResult {
  std::string solver;
  double eta = 0.0;
  double threshold = 0.0;
  Eigen::VectorXd x_star;
  IndexList recovered_support;
  double residual_norm = 0.0;
  long iterations = 0;
  double penalty = 0.0;  // lambda of the final penalized solve (BPDN only)
  SolverStatus status = SolverStatus::Converged;
  std::map<Index, Eigen::VectorXd> per_signal_reconstructions;

  bool converged() const { return status == SolverStatus::Converged; }
};

namespace detail {

inline double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

/// Largest singular value squared, by power iteration on A^T A.
inline double spectral_norm_sq(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.cols()) / std::sqrt(double(A.cols()));
  double estimate = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    if (std::abs(next - estimate) <= 1e-10 * next) return next;
    estimate = next;
  }
  return estimate;
}

inline Eigen::VectorXd sparse_product(const Eigen::MatrixXd& A, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(A.rows());
  for (Index j = 0; j < x.size(); ++j)
    if (x[j] != 0.0) out.noalias() += x[j] * A.col(j);
  return out;
}

/// Column-normalized copy of Â; zero columns stay zero and are never used.
struct NormalizedMatrix {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd norms;

  NormalizedMatrix(const Eigen::MatrixXd& A, bool normalize)
      : matrix(A), norms(A.colwise().norm().transpose()) {
    for (Index j = 0; j < A.cols(); ++j) {
      if (norms[j] > 0.0 && normalize) {
        matrix.col(j) /= norms[j];
      } else if (norms[j] > 0.0) {
        norms[j] = 1.0;
      }
    }
  }

  Eigen::VectorXd to_original_scale(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
    for (Index j = 0; j < x.size(); ++j)
      if (norms[j] > 0.0) out[j] = x[j] / norms[j];
    return out;
  }
};

/// Exact minimizer of 0.5|Ax-y|^2 + lambda|x|_1 for a fixed sign pattern, if
/// that pattern is consistent and passes the KKT check.
inline bool polish_active_set(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double lambda,
                              Eigen::VectorXd& x) {
  IndexList active;
  for (Index j = 0; j < x.size(); ++j)
    if (x[j] != 0.0) active.push_back(j);
  const auto s = static_cast<Index>(active.size());
  if (s > A.rows()) return false;

  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(x.size());
  if (s > 0) {
    Eigen::MatrixXd As(A.rows(), s);
    Eigen::VectorXd sign(s);
    for (Index i = 0; i < s; ++i) {
      As.col(i) = A.col(active[static_cast<std::size_t>(i)]);
      sign[i] = x[active[static_cast<std::size_t>(i)]] > 0.0 ? 1.0 : -1.0;
    }
    const Eigen::MatrixXd gram = As.transpose() * As;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Eigen::VectorXd d = ldlt.vectorD();
    if (d.minCoeff() <= 1e-12 * d.maxCoeff()) return false;
    const Eigen::VectorXd xs = ldlt.solve(As.transpose() * y - lambda * sign);
    for (Index i = 0; i < s; ++i) {
      if (!(xs[i] * sign[i] > 0.0)) return false;
      candidate[active[static_cast<std::size_t>(i)]] = xs[i];
    }
  }
  const Eigen::VectorXd correlation = A.transpose() * (y - sparse_product(A, candidate));
  for (Index j = 0; j < x.size(); ++j) {
    if (candidate[j] != 0.0) continue;
    if (std::abs(correlation[j]) > lambda * (1.0 + 1e-9)) return false;
  }
  x = std::move(candidate);
  return true;
}

struct PenalizedSolve {
  Eigen::VectorXd x;
  long iterations = 0;
  bool converged = false;
};

/// FISTA with adaptive restart and periodic exact active-set polishing.
inline PenalizedSolve solve_penalized(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, double lambda,
                                      double lipschitz, const Eigen::VectorXd& warm, const BpdnSettings& settings) {
  constexpr long kPolishEvery = 25;
  PenalizedSolve out;
  const Index N = A.cols();
  const double step = settings.penalty_parameter / std::max(lipschitz, std::numeric_limits<double>::min());
  const double threshold = step * lambda;

  Eigen::VectorXd x = warm;
  if (polish_active_set(A, y, lambda, x)) {
    out.x = std::move(x);
    out.converged = true;
    return out;
  }
  x = warm;
  Eigen::VectorXd Ax = sparse_product(A, x);
  Eigen::VectorXd z = x;
  Eigen::VectorXd Az = Ax;
  Eigen::VectorXd x_next(N);
  double theta = 1.0;

  for (long it = 1; it <= settings.max_iterations; ++it) {
    const Eigen::VectorXd gradient = A.transpose() * (Az - y);
    for (Index j = 0; j < N; ++j) x_next[j] = soft(z[j] - step * gradient[j], threshold);
    const Eigen::VectorXd Ax_next = sparse_product(A, x_next);

    const double change = (x_next - x).norm();
    const double scale = x_next.norm();
    const bool restart = (z - x_next).dot(x_next - x) > 0.0;
    if (restart) {
      theta = 1.0;
      z = x_next;
      Az = Ax_next;
    } else {
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      const double beta = (theta - 1.0) / theta_next;
      z = x_next + beta * (x_next - x);
      Az = Ax_next + beta * (Ax_next - Ax);
      theta = theta_next;
    }
    x = x_next;
    Ax = Ax_next;
    out.iterations = it;

    if (change <= settings.convergence_tolerance * std::max(scale, std::numeric_limits<double>::min())) {
      Eigen::VectorXd polished = x;
      if (polish_active_set(A, y, lambda, polished)) x = std::move(polished);
      out.converged = true;
      break;
    }
    if (it % kPolishEvery == 0) {
      Eigen::VectorXd polished = x;
      if (polish_active_set(A, y, lambda, polished)) {
        x = std::move(polished);
        out.converged = true;
        break;
      }
    }
  }
  out.x = std::move(x);
  return out;
}

/// Distance from y to the range of A.
inline double minimum_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  const Index rank = qr.rank();
  if (rank == 0) return y.norm();
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), rank);
  return (y - Q * (Q.transpose() * y)).norm();
}

inline void check_problem(const Ensemble& A_hat, const Measurement& y) {
  require(A_hat.M() == y.size(), ErrorCode::DimensionMismatch,
          "matrix has " + std::to_string(A_hat.M()) + " rows, measurement has " + std::to_string(y.size()));
  require(y.y.allFinite(), ErrorCode::InvalidArgument, "measurement must be finite");
}

}  // namespace detail

/// Basis pursuit denoising on Â. x* is returned in the original column scale.
inline RecoveryResult solve_bpdn(const Ensemble& A_hat, const Measurement& measurement, const BpdnSettings& settings) {
  settings.validate();
  detail::check_problem(A_hat, measurement);
  const Eigen::VectorXd& y = measurement.y;
  const detail::NormalizedMatrix normalized(A_hat.matrix, settings.normalize_columns);
  const Eigen::MatrixXd& A = normalized.matrix;
  const Index N = A.cols();

  RecoveryResult result;
  result.solver = "bpdn";
  result.eta = settings.eta;
  result.x_star = Eigen::VectorXd::Zero(N);

  const double y_norm = y.norm();
  if (y_norm <= settings.eta) {
    result.residual_norm = y_norm;
    return result;
  }
  const double floor_residual = detail::minimum_residual(A, y);
  if (floor_residual > settings.eta + 1e-9 * y_norm) {
    throw Error(ErrorCode::InfeasibleEta, "eta " + io::format_double(settings.eta) +
                                              " is below the smallest achievable residual " +
                                              io::format_double(floor_residual));
  }

  const double lipschitz = detail::spectral_norm_sq(A);
  const double lambda_max = (A.transpose() * y).cwiseAbs().maxCoeff();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(N);
  bool all_converged = true;

  if (settings.eta <= 1e-12 * y_norm) {
    // Basis pursuit: Bregman iteration adds the residual back into the data.
    const double lambda = 0.1 * lambda_max;
    Eigen::VectorXd target = y;
    for (int outer = 0; outer < 1000; ++outer) {
      auto solve = detail::solve_penalized(A, target, lambda, lipschitz, x, settings);
      result.iterations += solve.iterations;
      all_converged = all_converged && solve.converged;
      x = std::move(solve.x);
      const Eigen::VectorXd residual = y - detail::sparse_product(A, x);
      if (residual.norm() <= 1e-12 * y_norm) break;
      target += residual;
      if (outer == 999) all_converged = false;
    }
    result.penalty = lambda;
  } else {
    // Walk down from lambda_max by halving until the residual drops under
    // eta (warm-started along the way), then bisect log(lambda) inside the
    // bracket. Residual is non-decreasing in lambda.
    double hi = std::log(lambda_max);
    double lo = hi;
    bool have_feasible = false;
    bool done = false;
    Eigen::VectorXd best = x;
    double best_lambda = 0.0;
    bool best_converged = false;
    const auto evaluate = [&](double log_lambda) {
      const double lambda = std::exp(log_lambda);
      auto solve = detail::solve_penalized(A, y, lambda, lipschitz, x, settings);
      result.iterations += solve.iterations;
      x = solve.x;
      const double residual = (y - detail::sparse_product(A, x)).norm();
      const bool feasible = residual <= settings.eta;
      if (feasible) {
        have_feasible = true;
        best = x;
        best_lambda = lambda;
        best_converged = solve.converged;
        done = residual >= (1.0 - settings.residual_window) * settings.eta;
      }
      return feasible;
    };
    constexpr int kMaxHalvings = 60;
    for (int step = 0; step < kMaxHalvings && !have_feasible; ++step) {
      lo -= std::log(2.0);
      if (!evaluate(lo)) hi = lo;
    }
    for (int step = 0; step < settings.max_bisection_steps && have_feasible && !done; ++step) {
      const double mid = 0.5 * (lo + hi);
      if (evaluate(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    if (!have_feasible) {
      all_converged = false;
    } else {
      all_converged = best_converged;
      x = std::move(best);
    }
    result.penalty = best_lambda;
  }

  result.x_star = normalized.to_original_scale(x);
  result.residual_norm = (A_hat.matrix * result.x_star - y).norm();
  result.status = all_converged ? SolverStatus::Converged : SolverStatus::MaxIterationsExceeded;
  return result;
}

struct OmpStopping {
  Index max_sparsity = 0;          // 0 means min(M, N)
  double residual_threshold = 0.0;  // stop once |r|_2 <= this
};

/// Orthogonal matching pursuit on Â. Columns are selected by largest
/// |<a_j, r>| / |a_j|; amplitudes are the least-squares fit on the selected
/// columns in their original scale.
inline RecoveryResult solve_omp(const Ensemble& A_hat, const Measurement& measurement, const OmpStopping& stopping) {
  detail::check_problem(A_hat, measurement);
  const Eigen::MatrixXd& A = A_hat.matrix;
  const Eigen::VectorXd& y = measurement.y;
  const Index limit = std::min(A.rows(), A.cols());
  require(stopping.max_sparsity >= 0 && stopping.max_sparsity <= A.rows(), ErrorCode::InvalidArgument,
          "stopping sparsity must lie in [0, M]");
  require(stopping.residual_threshold >= 0.0, ErrorCode::InvalidArgument, "residual threshold must be >= 0");
  const Index target = stopping.max_sparsity == 0 ? limit : std::min(stopping.max_sparsity, limit);
  const Eigen::VectorXd norms = A.colwise().norm().transpose();

  RecoveryResult result;
  result.solver = "omp";
  result.eta = stopping.residual_threshold;
  result.x_star = Eigen::VectorXd::Zero(A.cols());

  IndexList selected;
  std::vector<bool> used(static_cast<std::size_t>(A.cols()), false);
  Eigen::VectorXd residual = y;
  Eigen::VectorXd amplitudes;
  const double scale = std::max(y.norm(), std::numeric_limits<double>::min());

  while (static_cast<Index>(selected.size()) < target && residual.norm() > stopping.residual_threshold) {
    const Eigen::VectorXd correlation = A.transpose() * residual;
    Index best = -1;
    double best_score = 0.0;
    for (Index j = 0; j < A.cols(); ++j) {
      if (used[static_cast<std::size_t>(j)] || norms[j] == 0.0) continue;
      const double score = std::abs(correlation[j]) / norms[j];
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0 || best_score <= 1e-14 * scale) break;  // residual orthogonal to every column
    selected.push_back(best);
    used[static_cast<std::size_t>(best)] = true;

    Eigen::MatrixXd As(A.rows(), static_cast<Index>(selected.size()));
    for (std::size_t i = 0; i < selected.size(); ++i) As.col(static_cast<Index>(i)) = A.col(selected[i]);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(As);
    const Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
    const double condition = diag.minCoeff() > 0.0 ? diag.maxCoeff() / diag.minCoeff()
                                                   : std::numeric_limits<double>::infinity();
    if (condition > 1e12) {
      throw Error(ErrorCode::RankDeficientSelection,
                  "selected columns are numerically rank-deficient (condition estimate " +
                      io::format_double(condition) + ")");
    }
    amplitudes = qr.solve(y);
    residual = y - As * amplitudes;
    result.iterations += 1;
  }
  for (std::size_t i = 0; i < selected.size(); ++i) result.x_star[selected[i]] = amplitudes[static_cast<Index>(i)];
  result.residual_norm = (A * result.x_star - y).norm();
  return result;
}

/// {i : |x_i| > T}, strict.
inline IndexList recover_support(const Eigen::VectorXd& x_star, double threshold) {
  require(threshold > 0.0, ErrorCode::InvalidArgument, "threshold must be positive");
  IndexList support;
  for (Index i = 0; i < x_star.size(); ++i)
    if (std::abs(x_star[i]) > threshold) support.push_back(i);
  return support;
}

/// x*_i times column i of Â, in the original column scale.
inline std::map<Index, Eigen::VectorXd> demultiplex(const Eigen::VectorXd& x_star, const IndexList& support,
                                                    const Ensemble& A_hat) {
  require(x_star.size() == A_hat.N(), ErrorCode::DimensionMismatch, "x* length differs from column count");
  std::map<Index, Eigen::VectorXd> out;
  for (Index i : support) {
    require(i >= 0 && i < A_hat.N(), ErrorCode::InvalidArgument, "support index out of range");
    out.emplace(i, x_star[i] * A_hat.matrix.col(i));
  }
  return out;
}

/// Least-squares amplitudes on a fixed support; other entries zero.
inline Eigen::VectorXd refit_on_support(const Ensemble& A_hat, const Measurement& y, const IndexList& support) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(A_hat.N());
  if (support.empty()) return out;
  Eigen::MatrixXd As(A_hat.M(), static_cast<Index>(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i) As.col(static_cast<Index>(i)) = A_hat.matrix.col(support[i]);
  const Eigen::VectorXd coef = As.colPivHouseholderQr().solve(y.y);
  for (std::size_t i = 0; i < support.size(); ++i) out[support[i]] = coef[static_cast<Index>(i)];
  return out;
}

/// Heuristic residual radius: eta = c * sqrt(M * sum_i x_i^2 * sigma^2), the
/// expected norm of sum_i x_i eps_i scaled by a safety factor c.
inline double estimate_eta(Index M, const std::vector<double>& assumed_amplitudes, double column_noise_variance,
                           double safety = 1.5) {
  require(column_noise_variance >= 0.0, ErrorCode::InvalidArgument, "column noise variance must be >= 0");
  double energy = 0.0;
  for (double a : assumed_amplitudes) energy += a * a;
  return safety * std::sqrt(static_cast<double>(M) * energy * column_noise_variance);
}

/// Assumed amplitudes from a config: the k multiplexed weights plus every
/// other signal-dominant column at the midpoint of its weight range.
inline double estimate_eta(const EnsembleConfig& config, double column_noise_variance, double safety = 1.5) {
  std::vector<double> amplitudes = config.multiplexed_weights;
  const double mid = 0.5 * (config.background_signal_weight_range.first + config.background_signal_weight_range.second);
  amplitudes.insert(amplitudes.end(), static_cast<std::size_t>(config.signal_dominant_count - config.k), mid);
  return estimate_eta(config.M, amplitudes, column_noise_variance, safety);
}

}  // namespace nplex
