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

// Experiment driver: run configuration (JSON, all defaults materialized),
// the end-to-end transmit/receive/recover pipeline for one trial, and the
// reports the command-line tool writes.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nplex/analysis.hpp"
#include "nplex/ensemble.hpp"
#include "nplex/error.hpp"
#include "nplex/multiplex.hpp"
#include "nplex/recovery.hpp"
#include "nplex/rng.hpp"

namespace nplex {

using json = nlohmann::json;

enum class SolverKind { Bpdn, Omp };

struct SweepSettings {
  std::vector<Index> N_values{2000};
  std::vector<Index> k_values{4, 8};
  std::vector<Index> M_values{20, 30, 40, 50, 60, 70, 80, 100, 120, 150, 200, 250};
  Index trials = 50;
  double signal_dominant_fraction = 0.015;
  double target_rate = 0.9;
};

struct SimulateSettings {
  Index signals = 4;
  Index length = 100;
  double noise_variance = 0.01;
};

struct RunConfig {
  EnsembleConfig ensemble{};
  SolverKind solver = SolverKind::Bpdn;
  BpdnSettings bpdn{};
  std::optional<double> eta;  // unset: estimate_eta
  double eta_safety = 1.5;
  Index omp_max_sparsity = 0;
  std::optional<double> omp_residual_threshold;  // unset: same as eta
  double threshold = 0.4;
  bool debias = false;
  Index trials = 1;
  unsigned threads = 1;
  std::uint64_t master_seed = 42;
  std::string output_dir = "out";
  SweepSettings sweep{};
  SimulateSettings simulate{};

  double resolved_eta() const {
    return eta ? *eta : estimate_eta(ensemble, ensemble.receiver_noise_variance, eta_safety);
  }

  void validate() const {
    ensemble.validate();
    require(threshold > 0.0, ErrorCode::ConfigError, "threshold: must be positive");
    require(trials >= 1, ErrorCode::ConfigError, "trials: must be at least 1");
    require(threads >= 1, ErrorCode::ConfigError, "threads: must be at least 1");
    require(eta_safety >= 0.0, ErrorCode::ConfigError, "bpdn.eta_safety: must be >= 0");
    require(!eta || *eta >= 0.0, ErrorCode::ConfigError, "bpdn.eta: must be >= 0");
    require(omp_max_sparsity >= 0 && omp_max_sparsity <= ensemble.M, ErrorCode::ConfigError,
            "omp.max_sparsity: must lie in [0, M]");
    BpdnSettings s = bpdn;
    s.eta = resolved_eta();
    s.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON schema

namespace detail {

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  require(j.is_object(), ErrorCode::ConfigError, where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
    require(ok, ErrorCode::ConfigError, (where.empty() ? "" : where + ".") + it.key() + ": unknown field");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, (where.empty() ? "" : where + ".") + key + ": " + e.what());
  }
}

inline std::string placement_name(SignalPlacement p) { return p == SignalPlacement::Leading ? "leading" : "scattered"; }

}  // namespace detail

inline std::string solver_name(SolverKind s) { return s == SolverKind::Bpdn ? "bpdn" : "omp"; }

inline SolverKind parse_solver(const std::string& name) {
  if (name == "bpdn") return SolverKind::Bpdn;
  if (name == "omp") return SolverKind::Omp;
  throw Error(ErrorCode::ConfigError, "solver: unknown solver '" + name + "' (expected bpdn or omp)");
}

/// Resolved configuration, every field present.
inline json to_json(const RunConfig& c) {
  const auto& e = c.ensemble;
  json hr = {{"I", e.hr.I},
             {"r", e.hr.r},
             {"dt", e.hr.dt},
             {"sample_interval", e.hr.sample_interval},
             {"transient", e.hr.transient},
             {"divergence_bound", e.hr.divergence_bound}};
  json ensemble = {{"N", e.N},
                   {"M", e.M},
                   {"k", e.k},
                   {"signal_dominant_count", e.signal_dominant_count},
                   {"signal_noise_variance", e.signal_noise_variance},
                   {"noise_column_variance", e.noise_column_variance},
                   {"multiplexed_weights", e.multiplexed_weights},
                   {"background_signal_weight_range", {e.background_signal_weight_range.first, e.background_signal_weight_range.second}},
                   {"noise_column_weight_range", {e.noise_column_weight_range.first, e.noise_column_weight_range.second}},
                   {"signed_weights", e.signed_weights},
                   {"placement", detail::placement_name(e.placement)},
                   {"hr", hr}};
  json receiver = {{"column_noise_variance", e.receiver_noise_variance}, {"permute_columns", e.permute_receiver_columns}};
  json bpdn = {{"eta", c.resolved_eta()},
               {"eta_safety", c.eta_safety},
               {"max_iterations", c.bpdn.max_iterations},
               {"convergence_tolerance", c.bpdn.convergence_tolerance},
               {"penalty_parameter", c.bpdn.penalty_parameter},
               {"max_bisection_steps", c.bpdn.max_bisection_steps},
               {"residual_window", c.bpdn.residual_window},
               {"normalize_columns", c.bpdn.normalize_columns}};
  json omp = {{"max_sparsity", c.omp_max_sparsity},
              {"residual_threshold", c.omp_residual_threshold ? *c.omp_residual_threshold : c.resolved_eta()}};
  json sweep = {{"N_values", c.sweep.N_values},
                {"k_values", c.sweep.k_values},
                {"M_values", c.sweep.M_values},
                {"trials", c.sweep.trials},
                {"signal_dominant_fraction", c.sweep.signal_dominant_fraction},
                {"target_rate", c.sweep.target_rate}};
  json simulate = {{"signals", c.simulate.signals}, {"length", c.simulate.length}, {"noise_variance", c.simulate.noise_variance}};
  return {{"rng", kRngAlgorithm},
          {"master_seed", c.master_seed},
          {"trials", c.trials},
          {"threads", c.threads},
          {"output_dir", c.output_dir},
          {"solver", solver_name(c.solver)},
          {"threshold", c.threshold},
          {"debias", c.debias},
          {"ensemble", ensemble},
          {"receiver", receiver},
          {"bpdn", bpdn},
          {"omp", omp},
          {"sweep", sweep},
          {"simulate", simulate}};
}

/// Overlays a (possibly partial) JSON document on the defaults. Unknown
/// fields are rejected by name.
inline RunConfig run_config_from_json(const json& j, RunConfig c = {}) {
  using detail::read;
  detail::reject_unknown(j, "", {"rng", "master_seed", "trials", "threads", "output_dir", "solver", "threshold", "debias",
                                 "ensemble", "receiver", "bpdn", "omp", "sweep", "simulate"});
  if (j.contains("rng")) {
    require(j.at("rng") == kRngAlgorithm, ErrorCode::ConfigError,
            std::string("rng: only '") + kRngAlgorithm + "' is supported");
  }
  read(j, "master_seed", c.master_seed, "");
  read(j, "trials", c.trials, "");
  read(j, "threads", c.threads, "");
  read(j, "output_dir", c.output_dir, "");
  if (j.contains("solver")) {
    require(j.at("solver").is_string(), ErrorCode::ConfigError, "solver: expected a string");
    c.solver = parse_solver(j.at("solver").get<std::string>());
  }
  read(j, "threshold", c.threshold, "");
  read(j, "debias", c.debias, "");

  auto& e = c.ensemble;
  if (j.contains("ensemble")) {
    const json& je = j.at("ensemble");
    detail::reject_unknown(je, "ensemble", {"N", "M", "k", "signal_dominant_count", "signal_noise_variance",
                                            "noise_column_variance", "multiplexed_weights",
                                            "background_signal_weight_range", "noise_column_weight_range",
                                            "signed_weights", "placement", "hr"});
    read(je, "N", e.N, "ensemble");
    read(je, "M", e.M, "ensemble");
    const Index old_k = e.k;
    read(je, "k", e.k, "ensemble");
    if (e.k != old_k && !je.contains("multiplexed_weights")) e.multiplexed_weights = default_multiplexed_weights(e.k);
    read(je, "signal_dominant_count", e.signal_dominant_count, "ensemble");
    read(je, "signal_noise_variance", e.signal_noise_variance, "ensemble");
    read(je, "noise_column_variance", e.noise_column_variance, "ensemble");
    read(je, "multiplexed_weights", e.multiplexed_weights, "ensemble");
    read(je, "background_signal_weight_range", e.background_signal_weight_range, "ensemble");
    read(je, "noise_column_weight_range", e.noise_column_weight_range, "ensemble");
    read(je, "signed_weights", e.signed_weights, "ensemble");
    if (je.contains("placement")) {
      const auto p = je.at("placement").get<std::string>();
      require(p == "leading" || p == "scattered", ErrorCode::ConfigError,
              "ensemble.placement: expected 'leading' or 'scattered'");
      e.placement = p == "leading" ? SignalPlacement::Leading : SignalPlacement::Scattered;
    }
    if (je.contains("hr")) {
      const json& jh = je.at("hr");
      detail::reject_unknown(jh, "ensemble.hr", {"I", "r", "dt", "sample_interval", "transient", "divergence_bound"});
      read(jh, "I", e.hr.I, "ensemble.hr");
      read(jh, "r", e.hr.r, "ensemble.hr");
      read(jh, "dt", e.hr.dt, "ensemble.hr");
      read(jh, "sample_interval", e.hr.sample_interval, "ensemble.hr");
      read(jh, "transient", e.hr.transient, "ensemble.hr");
      read(jh, "divergence_bound", e.hr.divergence_bound, "ensemble.hr");
    }
  }
  if (j.contains("receiver")) {
    const json& jr = j.at("receiver");
    detail::reject_unknown(jr, "receiver", {"column_noise_variance", "permute_columns"});
    read(jr, "column_noise_variance", e.receiver_noise_variance, "receiver");
    read(jr, "permute_columns", e.permute_receiver_columns, "receiver");
  }
  if (j.contains("bpdn")) {
    const json& jb = j.at("bpdn");
    detail::reject_unknown(jb, "bpdn", {"eta", "eta_safety", "max_iterations", "convergence_tolerance",
                                        "penalty_parameter", "max_bisection_steps", "residual_window",
                                        "normalize_columns"});
    if (jb.contains("eta") && !jb.at("eta").is_null()) c.eta = jb.at("eta").get<double>();
    read(jb, "eta_safety", c.eta_safety, "bpdn");
    read(jb, "max_iterations", c.bpdn.max_iterations, "bpdn");
    read(jb, "convergence_tolerance", c.bpdn.convergence_tolerance, "bpdn");
    read(jb, "penalty_parameter", c.bpdn.penalty_parameter, "bpdn");
    read(jb, "max_bisection_steps", c.bpdn.max_bisection_steps, "bpdn");
    read(jb, "residual_window", c.bpdn.residual_window, "bpdn");
    read(jb, "normalize_columns", c.bpdn.normalize_columns, "bpdn");
  }
  if (j.contains("omp")) {
    const json& jo = j.at("omp");
    detail::reject_unknown(jo, "omp", {"max_sparsity", "residual_threshold"});
    read(jo, "max_sparsity", c.omp_max_sparsity, "omp");
    if (jo.contains("residual_threshold") && !jo.at("residual_threshold").is_null())
      c.omp_residual_threshold = jo.at("residual_threshold").get<double>();
  }
  if (j.contains("sweep")) {
    const json& js = j.at("sweep");
    detail::reject_unknown(js, "sweep", {"N_values", "k_values", "M_values", "trials", "signal_dominant_fraction", "target_rate"});
    read(js, "N_values", c.sweep.N_values, "sweep");
    read(js, "k_values", c.sweep.k_values, "sweep");
    read(js, "M_values", c.sweep.M_values, "sweep");
    read(js, "trials", c.sweep.trials, "sweep");
    read(js, "signal_dominant_fraction", c.sweep.signal_dominant_fraction, "sweep");
    read(js, "target_rate", c.sweep.target_rate, "sweep");
  }
  if (j.contains("simulate")) {
    const json& jm = j.at("simulate");
    detail::reject_unknown(jm, "simulate", {"signals", "length", "noise_variance"});
    read(jm, "signals", c.simulate.signals, "simulate");
    read(jm, "length", c.simulate.length, "simulate");
    read(jm, "noise_variance", c.simulate.noise_variance, "simulate");
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// One trial of the pipeline

struct TrialSeeds {
  std::uint64_t transmitter = 0;
  std::uint64_t receiver = 0;
};

inline TrialSeeds seeds_for_trial(std::uint64_t master, Index trial) {
  const auto t = static_cast<std::uint64_t>(trial);
  return {splitmix64(master ^ splitmix64(2 * t + 1)), splitmix64(master ^ splitmix64(2 * t + 2))};
}

struct SignalScore {
  Index index = 0;  // transmitter column
  bool recovered = false;
  double weight = 0.0;
  double estimate = 0.0;
  ReconstructionMetrics metrics{};
  Eigen::VectorXd original;       // w_i * a_i at the transmitter
  Eigen::VectorXd reconstructed;  // x*_i * â_i at the receiver
};

struct TrialOutcome {
  Index trial = 0;
  TrialSeeds seeds{};
  std::optional<std::string> error;
  double eta = 0.0;
  double sir_db = 0.0;
  IndexList true_support;
  IndexList recovered_support;  // transmitter columns
  SupportMetrics support{};
  RecoveryResult result{};
  std::vector<SignalScore> signals;
  Eigen::VectorXd y;
  Eigen::VectorXd interference;

  bool completed() const { return !error.has_value(); }
  bool success() const { return completed() && support.exact_match; }
};

/// Transmit with A, receive with the perturbed Â, recover, threshold and score.
inline TrialOutcome run_trial(const RunConfig& config, Index trial, const TrialSeeds& seeds) {
  TrialOutcome out;
  out.trial = trial;
  out.seeds = seeds;
  try {
    EnsembleConfig ec = config.ensemble;
    ec.seed = seeds.transmitter;
    ec.receiver_seed = seeds.receiver;
    const Rng tx(seeds.transmitter);
    const Ensemble A = build_ensemble(ec, tx);
    const WeightVector w = build_weight_vector(ec, A, tx);
    const Measurement y = multiplex(A, w);
    out.true_support = w.significant_support;
    out.y = y.y;
    out.interference = interference_component(A, w).y;
    if (out.interference.squaredNorm() > 0.0) out.sir_db = signal_to_interference_ratio(A, w);

    const Ensemble A_hat = perturb_ensemble(A, ec.receiver_noise_variance, Rng(seeds.receiver), ec.permute_receiver_columns);
    out.eta = config.resolved_eta();
    if (config.solver == SolverKind::Bpdn) {
      BpdnSettings s = config.bpdn;
      s.eta = out.eta;
      out.result = solve_bpdn(A_hat, y, s);
    } else {
      OmpStopping stop;
      stop.max_sparsity = config.omp_max_sparsity;
      stop.residual_threshold = config.omp_residual_threshold ? *config.omp_residual_threshold : out.eta;
      out.result = solve_omp(A_hat, y, stop);
    }
    out.result.threshold = config.threshold;
    out.result.recovered_support = recover_support(out.result.x_star, config.threshold);
    if (config.debias) {
      out.result.x_star = refit_on_support(A_hat, y, out.result.recovered_support);
      out.result.residual_norm = (A_hat.matrix * out.result.x_star - y.y).norm();
    }
    out.result.per_signal_reconstructions = demultiplex(out.result.x_star, out.result.recovered_support, A_hat);

    // Map receiver positions back to transmitter columns.
    std::vector<Index> receiver_position(static_cast<std::size_t>(A.N()));
    for (Index j = 0; j < A_hat.N(); ++j) receiver_position[static_cast<std::size_t>(A_hat.origin_of(j))] = j;
    for (Index j : out.result.recovered_support) out.recovered_support.push_back(A_hat.origin_of(j));
    std::sort(out.recovered_support.begin(), out.recovered_support.end());
    out.support = support_metrics(out.true_support, out.recovered_support);

    const std::set<Index> recovered(out.recovered_support.begin(), out.recovered_support.end());
    for (Index i : out.true_support) {
      const Index p = receiver_position[static_cast<std::size_t>(i)];
      SignalScore score;
      score.index = i;
      score.recovered = recovered.count(i) > 0;
      score.weight = w.values[i];
      score.estimate = out.result.x_star[p];
      score.original = w.values[i] * A.matrix.col(i);
      score.reconstructed = out.result.x_star[p] * A_hat.matrix.col(p);
      score.metrics = reconstruction_metrics(score.original, score.reconstructed);
      out.signals.push_back(std::move(score));
    }
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

/// Runs trials 0..n-1 on `threads` workers; outcome order is by trial index.
inline std::vector<TrialOutcome> run_trials(const RunConfig& config) {
  config.validate();
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(config.trials));
  std::atomic<Index> next{0};
  const auto worker = [&] {
    for (Index t = next++; t < config.trials; t = next++)
      outcomes[static_cast<std::size_t>(t)] = run_trial(config, t, seeds_for_trial(config.master_seed, t));
  };
  const unsigned n = std::min<unsigned>(config.threads, static_cast<unsigned>(config.trials));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return outcomes;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const RecoveryResult& r) {
  json coefficients = json::object();
  for (Index i = 0; i < r.x_star.size(); ++i)
    if (r.x_star[i] != 0.0) coefficients[std::to_string(i)] = r.x_star[i];
  return {{"solver", r.solver},
          {"eta", r.eta},
          {"threshold", r.threshold},
          {"iterations", r.iterations},
          {"residual_norm", r.residual_norm},
          {"penalty", r.penalty},
          {"converged", r.converged()},
          {"support", r.recovered_support},
          {"coefficients", coefficients}};
}

inline json to_json(const TrialOutcome& t) {
  json j = {{"trial", t.trial},
            {"seeds", {{"transmitter", t.seeds.transmitter}, {"receiver", t.seeds.receiver}}},
            {"status", t.completed() ? "completed" : "error"}};
  if (t.error) {
    j["error"] = *t.error;
    return j;
  }
  json signals = json::array();
  for (const auto& s : t.signals) {
    signals.push_back({{"index", s.index},
                       {"recovered", s.recovered},
                       {"weight", s.weight},
                       {"estimate", s.estimate},
                       {"pearson_correlation", s.metrics.pearson_correlation},
                       {"relative_l2_error", s.metrics.relative_l2_error}});
  }
  j["eta"] = t.eta;
  j["sir_db"] = t.sir_db;
  j["true_support"] = t.true_support;
  j["recovered_support"] = t.recovered_support;
  j["support_metrics"] = {{"precision", t.support.precision}, {"recall", t.support.recall}, {"exact_match", t.support.exact_match}};
  j["signals"] = signals;
  j["result"] = to_json(t.result);
  return j;
}

inline json aggregate_report(const std::vector<TrialOutcome>& outcomes) {
  Index completed = 0, exact = 0;
  double precision = 0.0, recall = 0.0;
  for (const auto& t : outcomes) {
    if (!t.completed()) continue;
    ++completed;
    exact += t.support.exact_match ? 1 : 0;
    precision += t.support.precision;
    recall += t.support.recall;
  }
  json agg = {{"trials", static_cast<Index>(outcomes.size())},
              {"completed", completed},
              {"exact_support_successes", exact},
              {"exact_support_rate", completed ? double(exact) / double(outcomes.size()) : 0.0},
              {"mean_precision", completed ? precision / double(completed) : 0.0},
              {"mean_recall", completed ? recall / double(completed) : 0.0}};
  return agg;
}

inline json run_report(const RunConfig& config, const std::vector<TrialOutcome>& outcomes) {
  json trials = json::array();
  for (const auto& t : outcomes) trials.push_back(to_json(t));
  return {{"config", to_json(config)}, {"aggregate", aggregate_report(outcomes)}, {"trials", trials}};
}

/// `n,original,reconstructed` for one multiplexed signal.
inline std::string reconstruction_pair_csv(const SignalScore& s) {
  std::string out = "n,original,reconstructed\n";
  for (Index n = 0; n < s.original.size(); ++n)
    out += std::to_string(n) + ',' + io::format_double(s.original[n]) + ',' + io::format_double(s.reconstructed[n]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

/// Config for one sweep grid point: N, k and M replaced, the signal-dominant
/// block scaled with N, k multiplexed weights spread over [0.7, 1.0].
inline EnsembleConfig sweep_point_config(const EnsembleConfig& base, const SweepSettings& sweep, Index N, Index k, Index M) {
  EnsembleConfig c = base;
  c.N = N;
  c.M = M;
  c.k = k;
  c.signal_dominant_count = std::max<Index>(k, static_cast<Index>(std::llround(sweep.signal_dominant_fraction * double(N))));
  c.multiplexed_weights = default_multiplexed_weights(k);
  return c;
}

inline SweepResult run_sweep(const RunConfig& config) {
  config.validate();
  SweepGrid grid;
  grid.N_values = config.sweep.N_values;
  grid.k_values = config.sweep.k_values;
  grid.M_values = config.sweep.M_values;
  grid.trials = config.sweep.trials;
  grid.master_seed = config.master_seed;
  grid.target_rate = config.sweep.target_rate;
  const auto configure = [&config](const EnsembleConfig& base, Index N, Index k, Index M) {
    return sweep_point_config(base, config.sweep, N, k, M);
  };
  const auto trial = [&config](const EnsembleConfig& ec, std::uint64_t seed) {
    RunConfig point = config;
    point.ensemble = ec;
    point.eta.reset();  // eta follows the grid point's M and k
    const TrialOutcome t = run_trial(point, 0, {splitmix64(seed ^ 1), splitmix64(seed ^ 2)});
    if (t.error) throw Error(ErrorCode::InvalidArgument, *t.error);
    return t.support.exact_match;
  };
  return measurement_sweep(config.ensemble, grid, configure, trial);
}

inline json to_json(const SweepResult& s) {
  json grid = json::array();
  for (const auto& p : s.grid) {
    grid.push_back({{"N", p.N}, {"k", p.k}, {"M", p.M}, {"success_rate", p.success_rate}, {"successes", p.successes},
                    {"failures", p.failures}, {"trials", p.trials}});
  }
  json m_star = json::array();
  for (const auto& [nk, m] : s.m_star) m_star.push_back({{"N", nk.first}, {"k", nk.second}, {"m_star", m}});
  json j = {{"trials", s.trials}, {"target_rate", s.target_rate}, {"grid", grid}, {"m_star", m_star}};
  try {
    const MeasurementFit fit = fit_measurement_constant(s);
    j["fit"] = {{"C", fit.C}, {"residual", fit.residual}, {"points", fit.points}};
  } catch (const Error& e) {
    j["fit"] = {{"error", e.what()}};
  }
  return j;
}

}  // namespace nplex
