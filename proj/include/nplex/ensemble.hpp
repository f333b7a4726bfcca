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

// Transmitter-side mixing matrix A, the sparse weight vector x and the
// receiver-side corrupted copy of A.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nplex/error.hpp"
#include "nplex/hr_dynamics.hpp"
#include "nplex/io.hpp"
#include "nplex/rng.hpp"

namespace nplex {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

enum class SignalPlacement { Leading, Scattered };

struct EnsembleConfig {
  Index N = 10000;
  Index M = 100;
  Index k = 4;
  Index signal_dominant_count = 150;
  HrParams hr{};
  double signal_noise_variance = 0.01;
  double noise_column_variance = 1.0;
  std::vector<double> multiplexed_weights{1.0, 0.9, 0.8, 0.7};
  std::pair<double, double> background_signal_weight_range{0.0, 0.02};
  std::pair<double, double> noise_column_weight_range{0.0, 0.001};
  bool signed_weights = false;
  SignalPlacement placement = SignalPlacement::Leading;
  std::uint64_t seed = 1;

  // Receiver side.
  double receiver_noise_variance = 0.01;
  std::uint64_t receiver_seed = 2;
  bool permute_receiver_columns = false;

  void validate() const {
    hr.validate();
    require(M >= 1, ErrorCode::InvalidArgument, "M must be at least 1");
    require(k >= 0 && k <= signal_dominant_count && signal_dominant_count <= N, ErrorCode::InvalidArgument,
            "need 0 <= k <= signal_dominant_count <= N");
    require(static_cast<Index>(multiplexed_weights.size()) == k, ErrorCode::InvalidArgument,
            "multiplexed_weights must hold exactly k values");
    require(signal_noise_variance >= 0.0 && noise_column_variance >= 0.0 && receiver_noise_variance >= 0.0,
            ErrorCode::InvalidArgument, "variances must be non-negative");
    require(background_signal_weight_range.first <= background_signal_weight_range.second &&
                noise_column_weight_range.first <= noise_column_weight_range.second,
            ErrorCode::InvalidArgument, "weight ranges must satisfy lo <= hi");
  }
};

/// k weights evenly spaced from 1.0 down to 0.7; k = 4 gives 1.0, 0.9, 0.8, 0.7.
inline std::vector<double> default_multiplexed_weights(Index k) {
  std::vector<double> w(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) w[static_cast<std::size_t>(i)] = k == 1 ? 1.0 : 1.0 - 0.3 * double(i) / double(k - 1);
  return w;
}

struct Ensemble {
  Eigen::MatrixXd matrix;  // M x N, one neuron per column
  /// signal_indices[j] is the column holding the j-th HR signal. The first k
  /// of them carry the multiplexed weights.
  IndexList signal_indices;
  double noise_column_variance = 1.0;
  std::vector<std::uint64_t> seeds;
  /// Receiver copies only: column j was derived from transmitter column
  /// column_origin[j]. Empty means the identity.
  IndexList column_origin;

  Index M() const { return matrix.rows(); }
  Index N() const { return matrix.cols(); }

  std::vector<bool> signal_mask() const {
    std::vector<bool> mask(static_cast<std::size_t>(N()), false);
    for (Index i : signal_indices) mask[static_cast<std::size_t>(i)] = true;
    return mask;
  }

  Index origin_of(Index column) const {
    return column_origin.empty() ? column : column_origin[static_cast<std::size_t>(column)];
  }
};

struct WeightVector {
  Eigen::VectorXd values;
  IndexList significant_support;  // in signal order s_1..s_k

  /// Smallest significant magnitude exceeds every other magnitude.
  bool separation_holds() const {
    if (significant_support.empty()) return true;
    std::vector<bool> sig(static_cast<std::size_t>(values.size()), false);
    double min_sig = std::numeric_limits<double>::infinity();
    for (Index i : significant_support) {
      sig[static_cast<std::size_t>(i)] = true;
      min_sig = std::min(min_sig, std::abs(values[i]));
    }
    double max_rest = 0.0;
    for (Index i = 0; i < values.size(); ++i)
      if (!sig[static_cast<std::size_t>(i)]) max_rest = std::max(max_rest, std::abs(values[i]));
    return min_sig > max_rest;
  }

  std::string to_csv() const {
    std::vector<bool> sig(static_cast<std::size_t>(values.size()), false);
    for (Index i : significant_support) sig[static_cast<std::size_t>(i)] = true;
    std::string out = "index,value,is_significant\n";
    for (Index i = 0; i < values.size(); ++i) {
      out += std::to_string(i) + ',' + io::format_double(values[i]) + ',' +
             (sig[static_cast<std::size_t>(i)] ? "1" : "0") + '\n';
    }
    return out;
  }
};

namespace stream_tag {
inline constexpr std::uint64_t kPlacement = 1;
inline constexpr std::uint64_t kInitialState = 2;
inline constexpr std::uint64_t kObservationNoise = 3;
inline constexpr std::uint64_t kNoiseColumn = 4;
inline constexpr std::uint64_t kWeights = 5;
inline constexpr std::uint64_t kPerturbation = 6;
inline constexpr std::uint64_t kPermutation = 7;
}  // namespace stream_tag

namespace detail {

inline void fill_gaussian_column(Eigen::Ref<Eigen::VectorXd> column, double variance, Rng rng) {
  const double sd = std::sqrt(variance);
  for (Index n = 0; n < column.size(); ++n) column[n] = sd * rng.normal();
}

// Partial Fisher-Yates; returns `count` distinct indices from [0, n) in draw order.
inline IndexList draw_distinct(Index n, Index count, Rng rng) {
  IndexList pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const auto j = i + static_cast<Index>(std::min<std::uint64_t>(
                           static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(span)), span - 1));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace detail

/// Noiseless samples of HR signal j of the ensemble built from `rng`.
inline Signal ensemble_hr_signal(const EnsembleConfig& config, const Rng& rng, Index j) {
  Rng init = rng.derive(stream_tag::kInitialState, static_cast<std::uint64_t>(j));
  return simulate_signal(config.hr, random_initial_state(init), static_cast<std::size_t>(config.M));
}

/// Builds A. Signal-dominant columns are sampled HR signals from independent
/// random initial states plus N(0, signal_noise_variance); the rest are
/// i.i.d. N(0, noise_column_variance). Every column draws from its own
/// derived stream, so the result depends only on (config, seed).
inline Ensemble build_ensemble(const EnsembleConfig& config, const Rng& rng) {
  config.validate();
  Ensemble e;
  e.matrix.resize(config.M, config.N);
  e.noise_column_variance = config.noise_column_variance;
  e.seeds = {rng.seed()};

  if (config.placement == SignalPlacement::Leading) {
    e.signal_indices.resize(static_cast<std::size_t>(config.signal_dominant_count));
    std::iota(e.signal_indices.begin(), e.signal_indices.end(), Index{0});
  } else {
    e.signal_indices =
        detail::draw_distinct(config.N, config.signal_dominant_count, rng.derive(stream_tag::kPlacement));
  }

  const auto mask = e.signal_mask();
  for (std::size_t j = 0; j < e.signal_indices.size(); ++j) {
    const Index col = e.signal_indices[j];
    Rng init = rng.derive(stream_tag::kInitialState, j);
    Rng noise = rng.derive(stream_tag::kObservationNoise, j);
    const Signal clean = simulate_signal(config.hr, random_initial_state(init), static_cast<std::size_t>(config.M));
    e.matrix.col(col) = add_gaussian_noise(clean, config.signal_noise_variance, noise).samples();
  }
  for (Index col = 0; col < config.N; ++col) {
    if (mask[static_cast<std::size_t>(col)]) continue;
    detail::fill_gaussian_column(e.matrix.col(col), config.noise_column_variance,
                                 rng.derive(stream_tag::kNoiseColumn, static_cast<std::uint64_t>(col)));
  }
  return e;
}

/// Multiplexed weights on the first k signal-dominant columns, uniform
/// background draws everywhere else.
inline WeightVector build_weight_vector(const EnsembleConfig& config, const Ensemble& ensemble, const Rng& rng) {
  config.validate();
  require(ensemble.N() == config.N && static_cast<Index>(ensemble.signal_indices.size()) == config.signal_dominant_count,
          ErrorCode::DimensionMismatch, "ensemble was not built from this config");
  WeightVector w;
  w.values = Eigen::VectorXd::Zero(config.N);
  w.significant_support.assign(ensemble.signal_indices.begin(), ensemble.signal_indices.begin() + config.k);

  std::vector<char> role(static_cast<std::size_t>(config.N), 0);  // 0 noise, 1 background signal, 2 multiplexed
  for (Index i : ensemble.signal_indices) role[static_cast<std::size_t>(i)] = 1;
  for (Index j = 0; j < config.k; ++j) {
    const Index col = w.significant_support[static_cast<std::size_t>(j)];
    role[static_cast<std::size_t>(col)] = 2;
    w.values[col] = config.multiplexed_weights[static_cast<std::size_t>(j)];
  }

  Rng draws = rng.derive(stream_tag::kWeights);
  for (Index col = 0; col < config.N; ++col) {
    const char r = role[static_cast<std::size_t>(col)];
    if (r == 2) continue;
    const auto [lo, hi] = r == 1 ? config.background_signal_weight_range : config.noise_column_weight_range;
    double value = draws.uniform(lo, hi);
    if (config.signed_weights && draws.uniform() < 0.5) value = -value;
    w.values[col] = value;
  }
  return w;
}

/// Receiver copy Â. Signal-dominant columns get an independent N(0, variance)
/// perturbation added; every noise-dominant column is replaced by a fresh
/// N(0, noise_column_variance) draw from the receiver's streams. Reusing the
/// transmitter seed therefore reproduces the transmitter's noise columns.
inline Ensemble perturb_ensemble(const Ensemble& ensemble, double column_noise_variance, const Rng& rng,
                                 bool permute_columns = false) {
  require(column_noise_variance >= 0.0 && std::isfinite(column_noise_variance), ErrorCode::InvalidArgument,
          "column_noise_variance must be >= 0");
  Ensemble out;
  out.matrix.resize(ensemble.M(), ensemble.N());
  out.signal_indices = ensemble.signal_indices;
  out.noise_column_variance = ensemble.noise_column_variance;
  out.seeds = ensemble.seeds;
  out.seeds.push_back(rng.seed());

  const auto mask = ensemble.signal_mask();
  const double sd = std::sqrt(column_noise_variance);
  for (Index col = 0; col < ensemble.N(); ++col) {
    if (mask[static_cast<std::size_t>(col)]) {
      out.matrix.col(col) = ensemble.matrix.col(col);
      if (column_noise_variance > 0.0) {
        Rng eps = rng.derive(stream_tag::kPerturbation, static_cast<std::uint64_t>(col));
        for (Index n = 0; n < out.M(); ++n) out.matrix(n, col) += sd * eps.normal();
      }
    } else {
      detail::fill_gaussian_column(out.matrix.col(col), ensemble.noise_column_variance,
                                   rng.derive(stream_tag::kNoiseColumn, static_cast<std::uint64_t>(col)));
    }
  }

  if (permute_columns) {
    const IndexList order = detail::draw_distinct(ensemble.N(), ensemble.N(), rng.derive(stream_tag::kPermutation));
    Eigen::MatrixXd permuted(out.M(), out.N());
    IndexList position_of(static_cast<std::size_t>(out.N()));
    for (Index j = 0; j < out.N(); ++j) {
      const Index src = order[static_cast<std::size_t>(j)];
      permuted.col(j) = out.matrix.col(src);
      position_of[static_cast<std::size_t>(src)] = j;
    }
    out.matrix = std::move(permuted);
    out.column_origin.resize(static_cast<std::size_t>(out.N()));
    for (Index j = 0; j < out.N(); ++j) out.column_origin[static_cast<std::size_t>(j)] = ensemble.origin_of(order[static_cast<std::size_t>(j)]);
    for (Index& i : out.signal_indices) i = position_of[static_cast<std::size_t>(i)];
  } else {
    out.column_origin = ensemble.column_origin;
  }
  return out;
}

inline Eigen::VectorXd column_norms(const Ensemble& ensemble) { return ensemble.matrix.colwise().norm().transpose(); }

// ---------------------------------------------------------------------------
// Serialization. Binary layout, all integers and floats little-endian:
//   "NPLEX1" | u64 M | u64 N | u64 signal_count | u64 seed_count |
//   u64 seeds[seed_count] | f64 noise_column_variance |
//   u64 signal_indices[signal_count] | f64 entries[M*N] row-major

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  require(pos + sizeof(T) <= in.size(), ErrorCode::IoError, "truncated ensemble file");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace detail

inline constexpr std::string_view kEnsembleMagic = "NPLEX1";

inline std::string serialize_ensemble(const Ensemble& e) {
  std::string out(kEnsembleMagic);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e.M()));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e.N()));
  detail::put_le<std::uint64_t>(out, e.signal_indices.size());
  detail::put_le<std::uint64_t>(out, e.seeds.size());
  for (auto s : e.seeds) detail::put_le<std::uint64_t>(out, s);
  detail::put_le<double>(out, e.noise_column_variance);
  for (auto i : e.signal_indices) detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(i));
  out.reserve(out.size() + static_cast<std::size_t>(e.M() * e.N()) * sizeof(double));
  for (Index row = 0; row < e.M(); ++row)
    for (Index col = 0; col < e.N(); ++col) detail::put_le<double>(out, e.matrix(row, col));
  return out;
}

inline Ensemble deserialize_ensemble(const std::string& bytes) {
  require(bytes.compare(0, kEnsembleMagic.size(), kEnsembleMagic) == 0, ErrorCode::IoError, "bad ensemble magic");
  std::size_t pos = kEnsembleMagic.size();
  Ensemble e;
  const auto M = detail::get_le<std::uint64_t>(bytes, pos);
  const auto N = detail::get_le<std::uint64_t>(bytes, pos);
  const auto signal_count = detail::get_le<std::uint64_t>(bytes, pos);
  const auto seed_count = detail::get_le<std::uint64_t>(bytes, pos);
  require(signal_count <= N && seed_count < (1u << 20), ErrorCode::IoError, "corrupt ensemble header");
  for (std::uint64_t i = 0; i < seed_count; ++i) e.seeds.push_back(detail::get_le<std::uint64_t>(bytes, pos));
  e.noise_column_variance = detail::get_le<double>(bytes, pos);
  for (std::uint64_t i = 0; i < signal_count; ++i) {
    const auto idx = detail::get_le<std::uint64_t>(bytes, pos);
    require(idx < N, ErrorCode::IoError, "signal index out of range");
    e.signal_indices.push_back(static_cast<Index>(idx));
  }
  require(bytes.size() - pos == M * N * sizeof(double), ErrorCode::IoError, "ensemble payload size mismatch");
  e.matrix.resize(static_cast<Index>(M), static_cast<Index>(N));
  for (Index row = 0; row < e.M(); ++row)
    for (Index col = 0; col < e.N(); ++col) e.matrix(row, col) = detail::get_le<double>(bytes, pos);
  return e;
}

inline void save_ensemble(const std::filesystem::path& path, const Ensemble& e) {
  io::write_text(path, serialize_ensemble(e));
}

inline Ensemble load_ensemble(const std::filesystem::path& path) { return deserialize_ensemble(io::read_text(path)); }

/// Row per sample, column per neuron.
inline std::string ensemble_csv(const Ensemble& e) {
  std::string out = "n";
  for (Index col = 0; col < e.N(); ++col) out += ",c" + std::to_string(col);
  out += '\n';
  for (Index row = 0; row < e.M(); ++row) {
    out += std::to_string(row);
    for (Index col = 0; col < e.N(); ++col) out += ',' + io::format_double(e.matrix(row, col));
    out += '\n';
  }
  return out;
}

}  // namespace nplex
