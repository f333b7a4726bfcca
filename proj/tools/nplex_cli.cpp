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

// nplex: simulate chaotic neuron signals, multiplex them into one scalar
// stream amid thousands of noisy interferers, and demultiplex at a receiver
// that only holds a corrupted copy of the mixing matrix.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nplex.hpp"

namespace fs = std::filesystem;
using nplex::Index;
using nplex::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<Index> trials;
  std::optional<std::string> solver;
  std::optional<double> threshold;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (missing fields take defaults)");
  cmd->add_option("--seed", o.seed, "master seed (u64)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--trials", o.trials, "number of trials");
  cmd->add_option("--solver", o.solver, "bpdn | omp");
  cmd->add_option("--threshold", o.threshold, "support threshold T");
  cmd->add_option("--threads", o.threads, "worker threads for independent trials");
}

nplex::RunConfig resolve(const CommonOptions& o) {
  nplex::RunConfig c = o.config_path.empty() ? nplex::RunConfig{} : nplex::load_run_config(o.config_path);
  if (o.seed) c.master_seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.trials) c.trials = *o.trials;
  if (o.solver) c.solver = nplex::parse_solver(*o.solver);
  if (o.threshold) c.threshold = *o.threshold;
  if (o.threads) c.threads = *o.threads;
  return c;
}

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write_probe";
  nplex::io::write_text(probe, "");
  fs::remove(probe, ec);
}

// Wall-clock data lives only here so every other file is reproducible.
void write_metadata(const fs::path& dir, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  nplex::io::write_text(dir / "metadata.json", json{{"command", command}, {"written_at", stamp}}.dump(2) + "\n");
}

void write_config(const fs::path& dir, const nplex::RunConfig& c) {
  nplex::io::write_text(dir / "config.resolved.json", nplex::to_json(c).dump(2) + "\n");
}

std::string padded(Index v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max<int>(0, width - static_cast<int>(s.size()))), '0') + s;
}

int cmd_simulate(nplex::RunConfig c, std::optional<Index> signals, std::optional<Index> length,
                 std::optional<double> noise) {
  if (signals) c.simulate.signals = *signals;
  if (length) c.simulate.length = *length;
  if (noise) c.simulate.noise_variance = *noise;
  nplex::require(c.simulate.length >= 1, nplex::ErrorCode::ConfigError, "simulate.length: must be at least 1");
  nplex::require(c.simulate.signals >= 1, nplex::ErrorCode::ConfigError, "simulate.signals: must be at least 1");
  nplex::require(c.simulate.noise_variance >= 0.0, nplex::ErrorCode::ConfigError, "simulate.noise_variance: must be >= 0");
  c.ensemble.hr.validate();

  const fs::path dir = c.output_dir;
  prepare_output(dir);
  // Same streams as the signal-dominant columns of trial 0's ensemble.
  const nplex::Rng tx(nplex::seeds_for_trial(c.master_seed, 0).transmitter);
  nplex::EnsembleConfig ec = c.ensemble;
  ec.M = c.simulate.length;
  json summary = json::array();
  for (Index j = 0; j < c.simulate.signals; ++j) {
    const nplex::Signal clean = nplex::ensemble_hr_signal(ec, tx, j);
    nplex::Rng noise_rng = tx.derive(nplex::stream_tag::kObservationNoise, static_cast<std::uint64_t>(j));
    const nplex::Signal noisy = nplex::add_gaussian_noise(clean, c.simulate.noise_variance, noise_rng);
    const std::string stem = "signal_" + std::to_string(j + 1);
    nplex::io::write_text(dir / (stem + "_clean.csv"), clean.to_csv());
    nplex::io::write_text(dir / (stem + "_noisy.csv"), noisy.to_csv());
    summary.push_back({{"signal", j + 1},
                       {"length", clean.size()},
                       {"clean_min", clean.samples().minCoeff()},
                       {"clean_max", clean.samples().maxCoeff()},
                       {"clean_mean", clean.samples().mean()},
                       {"noise_variance", c.simulate.noise_variance}});
  }
  write_config(dir, c);
  nplex::io::write_text(dir / "simulate_summary.json", json{{"signals", summary}}.dump(2) + "\n");
  write_metadata(dir, "simulate-neuron");
  std::cout << "wrote " << c.simulate.signals << " signal pairs to " << dir.string() << "\n";
  return 0;
}

int cmd_run(const nplex::RunConfig& c) {
  c.validate();
  const fs::path dir = c.output_dir;
  prepare_output(dir);
  const auto outcomes = nplex::run_trials(c);
  const int width = std::max<int>(3, static_cast<int>(std::to_string(c.trials - 1).size()));
  bool all_completed = true;
  for (const auto& t : outcomes) {
    const fs::path tdir = dir / ("trial_" + padded(t.trial, width));
    if (!t.completed()) {
      all_completed = false;
      nplex::io::write_text(tdir / "result.json", nplex::to_json(t).dump(2) + "\n");
      std::cerr << "trial " << t.trial << " failed: " << *t.error << "\n";
      continue;
    }
    nplex::io::write_text(tdir / "result.json", nplex::to_json(t.result).dump(2) + "\n");
    for (const auto& [idx, rec] : t.result.per_signal_reconstructions)
      nplex::io::write_text(tdir / ("reconstruction_" + std::to_string(idx) + ".csv"),
                            nplex::io::series_csv({rec.data(), static_cast<std::size_t>(rec.size())}));
    for (const auto& s : t.signals)
      nplex::io::write_text(tdir / ("signal_" + std::to_string(s.index) + "_pair.csv"), nplex::reconstruction_pair_csv(s));
    nplex::io::write_text(tdir / "measurement.csv",
                          nplex::overlay_csv({t.y, ""}, {t.interference, ""}));
  }
  const json report = nplex::run_report(c, outcomes);
  nplex::io::write_text(dir / "report.json", report.dump(2) + "\n");
  write_config(dir, c);
  write_metadata(dir, "run");
  const auto& agg = report.at("aggregate");
  std::cout << "trials " << agg.at("trials") << ", completed " << agg.at("completed") << ", exact support "
            << agg.at("exact_support_successes") << " (rate " << agg.at("exact_support_rate") << ")\n";
  return all_completed ? 0 : 1;
}

int cmd_sweep(nplex::RunConfig c, const std::vector<Index>& n_grid, const std::vector<Index>& k_grid,
              const std::vector<Index>& m_grid, std::optional<Index> trials) {
  if (!n_grid.empty()) c.sweep.N_values = n_grid;
  if (!k_grid.empty()) c.sweep.k_values = k_grid;
  if (!m_grid.empty()) c.sweep.M_values = m_grid;
  if (trials) c.sweep.trials = *trials;
  const fs::path dir = c.output_dir;
  prepare_output(dir);
  const nplex::SweepResult sweep = nplex::run_sweep(c);
  const json j = nplex::to_json(sweep);
  nplex::io::write_text(dir / "sweep.json", j.dump(2) + "\n");
  nplex::io::write_text(dir / "sweep.csv", sweep.to_csv());
  write_config(dir, c);
  write_metadata(dir, "sweep");
  for (const auto& p : sweep.grid)
    std::cout << "N=" << p.N << " k=" << p.k << " M=" << p.M << " success=" << p.success_rate << "\n";
  if (j.at("fit").contains("C")) {
    std::cout << "fitted C = " << j.at("fit").at("C") << "\n";
  } else {
    std::cout << "fit: " << j.at("fit").at("error").get<std::string>() << "\n";
  }
  return 0;
}

json ensemble_summary(const nplex::Ensemble& e) {
  const Eigen::VectorXd norms = nplex::column_norms(e);
  json j = {{"M", e.M()},
            {"N", e.N()},
            {"signal_dominant_count", e.signal_indices.size()},
            {"seeds", e.seeds},
            {"noise_column_variance", e.noise_column_variance},
            {"column_norm_min", norms.minCoeff()},
            {"column_norm_max", norms.maxCoeff()},
            {"column_norm_mean", norms.mean()}};
  if (norms.minCoeff() > 0.0 && e.N() >= 2)
    j["mutual_coherence_subset500"] = nplex::mutual_coherence(e, std::min<Index>(500, e.N()), 0);
  if (!e.signal_indices.empty() && e.signal_indices.size() >= 2) {
    nplex::Ensemble block;
    block.matrix.resize(e.M(), static_cast<Index>(e.signal_indices.size()));
    for (std::size_t i = 0; i < e.signal_indices.size(); ++i) block.matrix.col(static_cast<Index>(i)) = e.matrix.col(e.signal_indices[i]);
    if (block.matrix.colwise().norm().minCoeff() > 0.0) j["mutual_coherence_signal_block"] = nplex::mutual_coherence(block);
  }
  return j;
}

int cmd_inspect(const nplex::RunConfig& c, const std::string& ensemble_path, const std::string& export_path) {
  if (!ensemble_path.empty()) {
    std::cout << json{{"ensemble", ensemble_summary(nplex::load_ensemble(ensemble_path))}}.dump(2) << "\n";
    return 0;
  }
  c.validate();
  const auto seeds = nplex::seeds_for_trial(c.master_seed, 0);
  const nplex::Rng tx(seeds.transmitter);
  nplex::EnsembleConfig ec = c.ensemble;
  ec.seed = seeds.transmitter;
  const nplex::Ensemble A = nplex::build_ensemble(ec, tx);
  const nplex::WeightVector w = nplex::build_weight_vector(ec, A, tx);
  json out = {{"config", nplex::to_json(c)}, {"ensemble", ensemble_summary(A)}};
  out["weights"] = {{"significant_support", w.significant_support}, {"separation_holds", w.separation_holds()}};
  if (nplex::interference_component(A, w).y.squaredNorm() > 0.0)
    out["signal_to_interference_db"] = nplex::signal_to_interference_ratio(A, w);
  if (!export_path.empty()) {
    const fs::path p = export_path;
    if (p.extension() == ".csv") {
      nplex::io::write_text(p, nplex::ensemble_csv(A));
    } else {
      nplex::save_ensemble(p, A);
    }
    fs::path wp = p;
    wp.replace_filename(p.stem().string() + "_weights.csv");
    nplex::io::write_text(wp, w.to_csv());
    out["exported"] = {p.string(), wp.string()};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nplex: compressed-sensing multiplexing of chaotic neuron signals"};
  app.require_subcommand(1);

  CommonOptions sim_opts, run_opts, sweep_opts, inspect_opts;

  auto* sim = app.add_subcommand("simulate-neuron", "integrate Hindmarsh-Rose neurons and write clean/noisy signal CSVs");
  add_common(sim, sim_opts);
  std::optional<Index> sim_signals, sim_length;
  std::optional<double> sim_noise;
  sim->add_option("--signals", sim_signals, "number of neurons to simulate");
  sim->add_option("--length", sim_length, "samples per signal (display length)");
  sim->add_option("--noise-variance", sim_noise, "observation noise variance");

  auto* run = app.add_subcommand("run", "multiplex, perturb, recover and score");
  add_common(run, run_opts);

  auto* sweep = app.add_subcommand("sweep", "success rate over a (N, k, M) grid and the fitted measurement constant");
  add_common(sweep, sweep_opts);
  std::vector<Index> n_grid, k_grid, m_grid;
  std::optional<Index> sweep_trials;
  sweep->add_option("--n-grid", n_grid, "N values")->delimiter(',');
  sweep->add_option("--k-grid", k_grid, "k values")->delimiter(',');
  sweep->add_option("--m-grid", m_grid, "M values")->delimiter(',');
  sweep->add_option("--sweep-trials", sweep_trials, "trials per grid point");

  auto* inspect = app.add_subcommand("inspect", "print resolved config and ensemble metadata");
  add_common(inspect, inspect_opts);
  std::string ensemble_path, export_path;
  inspect->add_option("--ensemble", ensemble_path, "NPLEX1 ensemble file to describe");
  inspect->add_option("--export", export_path, "write trial 0's ensemble (binary, or CSV for *.csv) and weights");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(resolve(sim_opts), sim_signals, sim_length, sim_noise);
    if (*run) return cmd_run(resolve(run_opts));
    if (*sweep) {
      nplex::RunConfig c = resolve(sweep_opts);
      if (sweep_opts.trials) c.sweep.trials = *sweep_opts.trials;
      return cmd_sweep(c, n_grid, k_grid, m_grid, sweep_trials);
    }
    if (*inspect) return cmd_inspect(resolve(inspect_opts), ensemble_path, export_path);
  } catch (const nplex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
