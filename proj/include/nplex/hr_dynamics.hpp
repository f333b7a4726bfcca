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

// Hindmarsh-Rose neuron: integration, sampling to discrete-time signals,
// observation noise and a finite-time divergence-rate diagnostic.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nplex/error.hpp"
#include "nplex/io.hpp"
#include "nplex/rng.hpp"

namespace nplex {

struct HrParams {
  double I = 3.28;               // external current
  double r = 0.0021;             // slow-variable rate ("internal state")
  double dt = 0.01;              // RK4 step, model time units
  double sample_interval = 1.0;  // sampling period, model time units
  double transient = 500.0;      // discarded before the first sample
  double divergence_bound = 1e6;

  /// Steps of `dt` per sample; throws unless sample_interval is an integer multiple of dt.
  std::size_t sample_stride() const {
    const double ratio = sample_interval / dt;
    const double rounded = std::round(ratio);
    require(rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-12 * std::max(1.0, ratio),
            ErrorCode::InvalidArgument, "sample_interval must be an integer multiple of dt");
    return static_cast<std::size_t>(rounded);
  }

  std::size_t transient_steps() const { return static_cast<std::size_t>(std::llround(transient / dt)); }

  void validate() const {
    require(std::isfinite(I) && std::isfinite(r), ErrorCode::InvalidArgument, "HR parameters must be finite");
    require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
    require(sample_interval > 0.0, ErrorCode::InvalidArgument, "sample_interval must be positive");
    require(transient >= 0.0, ErrorCode::InvalidArgument, "transient must be non-negative");
    require(divergence_bound > 0.0, ErrorCode::InvalidArgument, "divergence_bound must be positive");
    (void)sample_stride();
  }
};

/// A phase-space point: membrane voltage S, fast auxiliary P, slow auxiliary Q.
struct HrState {
  double S = 0.0;
  double P = 0.0;
  double Q = 0.0;

  bool finite() const { return std::isfinite(S) && std::isfinite(P) && std::isfinite(Q); }
  double max_abs() const { return std::max({std::abs(S), std::abs(P), std::abs(Q)}); }

  friend HrState operator+(const HrState& a, const HrState& b) { return {a.S + b.S, a.P + b.P, a.Q + b.Q}; }
  friend HrState operator-(const HrState& a, const HrState& b) { return {a.S - b.S, a.P - b.P, a.Q - b.Q}; }
  friend HrState operator*(double c, const HrState& a) { return {c * a.S, c * a.P, c * a.Q}; }
  friend bool operator==(const HrState&, const HrState&) = default;
};

inline double norm(const HrState& s) { return std::sqrt(s.S * s.S + s.P * s.P + s.Q * s.Q); }

/// Fixed-length, finite sequence of samples s(n), n = 0..M-1.
class Signal {
 public:
  Signal() = default;
  explicit Signal(Eigen::VectorXd samples) : samples_(std::move(samples)) {
    require(samples_.allFinite(), ErrorCode::InvalidArgument, "signal samples must be finite");
  }

  Eigen::Index size() const { return samples_.size(); }
  double operator[](Eigen::Index n) const { return samples_[n]; }
  const Eigen::VectorXd& samples() const { return samples_; }

  std::string to_csv() const { return io::series_csv({samples_.data(), static_cast<std::size_t>(samples_.size())}); }

 private:
  Eigen::VectorXd samples_;
};

/// Right-hand side of the Hindmarsh-Rose system.
inline HrState hr_derivative(const HrState& s, const HrParams& p) {
  return {s.P + 3.0 * s.S * s.S - s.S * s.S * s.S - s.Q + p.I,
          1.0 - 5.0 * s.S * s.S - s.P,
          -p.r * (s.Q - 4.0 * (s.S + 8.0 / 5.0))};
}

template <class Field>
HrState rk4_step(const Field& field, const HrState& s, double dt) {
  const HrState k1 = field(s);
  const HrState k2 = field(s + (0.5 * dt) * k1);
  const HrState k3 = field(s + (0.5 * dt) * k2);
  const HrState k4 = field(s + dt * k3);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace detail {

inline void check_bounded(const HrState& s, double bound, std::size_t step) {
  if (!s.finite() || s.max_abs() > bound) {
    throw Error(ErrorCode::IntegrationDiverged,
                "state left the bound " + io::format_double(bound) + " at step " + std::to_string(step));
  }
}

inline std::size_t step_count(double duration, double dt) {
  require(duration > 0.0, ErrorCode::InvalidArgument, "duration must be positive");
  return static_cast<std::size_t>(std::floor(duration / dt * (1.0 + 1e-12)));
}

}  // namespace detail

/// Fixed-step RK4 trajectory for an arbitrary vector field; length steps+1.
template <class Field>
std::vector<HrState> integrate_field(const Field& field, const HrState& initial, double dt, std::size_t steps,
                                     double bound) {
  require(initial.finite(), ErrorCode::InvalidArgument, "initial state must be finite");
  std::vector<HrState> trajectory;
  trajectory.reserve(steps + 1);
  trajectory.push_back(initial);
  HrState s = initial;
  for (std::size_t i = 1; i <= steps; ++i) {
    s = rk4_step(field, s, dt);
    detail::check_bounded(s, bound, i);
    trajectory.push_back(s);
  }
  return trajectory;
}

/// Trajectory sampled every dt over [0, duration]; length floor(duration/dt)+1.
inline std::vector<HrState> integrate(const HrParams& params, const HrState& initial, double duration) {
  params.validate();
  const auto field = [&params](const HrState& s) { return hr_derivative(s, params); };
  return integrate_field(field, initial, params.dt, detail::step_count(duration, params.dt), params.divergence_bound);
}

/// S at times transient + m * sample_interval, m = 0..length-1.
inline Signal sample_signal(const std::vector<HrState>& trajectory, const HrParams& params, std::size_t length) {
  require(length >= 1, ErrorCode::InvalidArgument, "signal length must be at least 1");
  const std::size_t stride = params.sample_stride();
  const std::size_t offset = params.transient_steps();
  const std::size_t last = offset + (length - 1) * stride;
  require(last < trajectory.size(), ErrorCode::TrajectoryTooShort,
          "need index " + std::to_string(last) + ", trajectory has " + std::to_string(trajectory.size()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(length));
  for (std::size_t m = 0; m < length; ++m) out[static_cast<Eigen::Index>(m)] = trajectory[offset + m * stride].S;
  return Signal(std::move(out));
}

/// Model time needed so that sample_signal can supply `length` samples.
inline double required_duration(const HrParams& params, std::size_t length) {
  const std::size_t steps = params.transient_steps() + (length - 1) * params.sample_stride();
  return static_cast<double>(steps) * params.dt;
}

/// Integrate and sample in one pass without keeping the trajectory.
/// Produces the same samples as integrate() followed by sample_signal().
inline Signal simulate_signal(const HrParams& params, const HrState& initial, std::size_t length) {
  params.validate();
  require(length >= 1, ErrorCode::InvalidArgument, "signal length must be at least 1");
  require(initial.finite(), ErrorCode::InvalidArgument, "initial state must be finite");
  const auto field = [&params](const HrState& s) { return hr_derivative(s, params); };
  const std::size_t stride = params.sample_stride();
  const std::size_t offset = params.transient_steps();
  const std::size_t last = offset + (length - 1) * stride;
  Eigen::VectorXd out(static_cast<Eigen::Index>(length));
  HrState s = initial;
  for (std::size_t i = 0;; ++i) {
    if (i >= offset && (i - offset) % stride == 0) out[static_cast<Eigen::Index>((i - offset) / stride)] = s.S;
    if (i == last) break;
    s = rk4_step(field, s, params.dt);
    detail::check_bounded(s, params.divergence_bound, i + 1);
  }
  return Signal(std::move(out));
}

/// s(n) + e(n), e(n) i.i.d. N(0, variance).
inline Signal add_gaussian_noise(const Signal& signal, double variance, Rng& rng) {
  require(variance >= 0.0 && std::isfinite(variance), ErrorCode::InvalidArgument, "variance must be >= 0");
  if (variance == 0.0) return signal;
  const double sd = std::sqrt(variance);
  Eigen::VectorXd out = signal.samples();
  for (Eigen::Index n = 0; n < out.size(); ++n) out[n] += sd * rng.normal();
  return Signal(std::move(out));
}

/// Uniform draw from [-1, 1]^3.
inline HrState random_initial_state(Rng& rng) {
  const double s = rng.uniform(-1.0, 1.0);
  const double p = rng.uniform(-1.0, 1.0);
  const double q = rng.uniform(-1.0, 1.0);
  return {s, p, q};
}

struct DivergenceSettings {
  double separation = 1e-8;
  double horizon = 2000.0;
  double renormalize_every = 1.0;  // model time between renormalizations
};

/// Benettin-style estimate of the largest divergence rate for a vector field.
/// A companion trajectory starts `separation` away in S; every
/// `renormalize_every` time units the log growth of the separation is
/// accumulated and the companion is pulled back to the reference at the
/// original distance. Integration starts after `transient` time units.
template <class Field>
double divergence_exponent_field(const Field& field, const HrState& initial, double dt, double transient,
                                 double bound, const DivergenceSettings& settings) {
  require(settings.separation > 0.0 && std::isfinite(settings.separation), ErrorCode::InvalidArgument,
          "separation must be positive");
  require(settings.horizon > 0.0, ErrorCode::InvalidArgument, "horizon must be positive");
  require(settings.renormalize_every >= dt, ErrorCode::InvalidArgument, "renormalization interval below dt");
  require(initial.finite(), ErrorCode::InvalidArgument, "initial state must be finite");

  HrState ref = initial;
  const auto transient_steps = static_cast<std::size_t>(std::llround(transient / dt));
  for (std::size_t i = 0; i < transient_steps; ++i) {
    ref = rk4_step(field, ref, dt);
    detail::check_bounded(ref, bound, i + 1);
  }

  const auto per_block = static_cast<std::size_t>(std::llround(settings.renormalize_every / dt));
  const auto blocks = static_cast<std::size_t>(std::floor(settings.horizon / (per_block * dt) * (1.0 + 1e-12)));
  require(blocks >= 1, ErrorCode::InvalidArgument, "horizon shorter than one renormalization interval");

  HrState companion = ref + HrState{settings.separation, 0.0, 0.0};
  double log_growth = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < per_block; ++i) {
      ref = rk4_step(field, ref, dt);
      companion = rk4_step(field, companion, dt);
    }
    detail::check_bounded(ref, bound, (b + 1) * per_block);
    detail::check_bounded(companion, bound, (b + 1) * per_block);
    const HrState delta = companion - ref;
    const double distance = norm(delta);
    require(distance > 0.0, ErrorCode::DegenerateDenominator, "trajectories collapsed onto each other");
    log_growth += std::log(distance / settings.separation);
    companion = ref + (settings.separation / distance) * delta;
  }
  return log_growth / (static_cast<double>(blocks * per_block) * dt);
}

inline double divergence_exponent(const HrParams& params, const HrState& initial,
                                  const DivergenceSettings& settings = {}) {
  params.validate();
  const auto field = [&params](const HrState& s) { return hr_derivative(s, params); };
  return divergence_exponent_field(field, initial, params.dt, params.transient, params.divergence_bound, settings);
}

}  // namespace nplex
