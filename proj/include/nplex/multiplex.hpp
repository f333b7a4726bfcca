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

// Forms the transmitted scalar stream y = A x and splits it into the part
// carried by the multiplexed signals and the interference from everything else.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "nplex/ensemble.hpp"
#include "nplex/error.hpp"
#include "nplex/io.hpp"

namespace nplex {

struct Measurement {
  Eigen::VectorXd y;
  std::string provenance;

  Index size() const { return y.size(); }
  std::string to_csv() const { return io::series_csv({y.data(), static_cast<std::size_t>(y.size())}); }
};

namespace detail {

inline void check_dims(const Ensemble& ensemble, const Eigen::VectorXd& x) {
  require(ensemble.N() == x.size(), ErrorCode::DimensionMismatch,
          "matrix has " + std::to_string(ensemble.N()) + " columns, weights have " + std::to_string(x.size()));
}

inline std::string provenance_of(const Ensemble& ensemble) {
  std::string out = "ensemble(M=" + std::to_string(ensemble.M()) + ",N=" + std::to_string(ensemble.N()) + ",seeds=";
  for (std::size_t i = 0; i < ensemble.seeds.size(); ++i) out += (i ? "/" : "") + std::to_string(ensemble.seeds[i]);
  return out + ")";
}

}  // namespace detail

inline Measurement multiplex(const Ensemble& ensemble, const Eigen::VectorXd& x) {
  detail::check_dims(ensemble, x);
  Measurement m{ensemble.matrix * x, detail::provenance_of(ensemble)};
  require(m.y.allFinite(), ErrorCode::InvalidArgument, "measurement is not finite");
  return m;
}

inline Measurement multiplex(const Ensemble& ensemble, const WeightVector& x) { return multiplex(ensemble, x.values); }

/// x restricted to its significant support (everything else zeroed).
inline Eigen::VectorXd support_part(const WeightVector& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.values.size());
  for (Index i : x.significant_support) out[i] = x.values[i];
  return out;
}

/// A x' with the significant support zeroed: everything except the
/// multiplexed signals.
inline Measurement interference_component(const Ensemble& ensemble, const WeightVector& x) {
  detail::check_dims(ensemble, x.values);
  Eigen::VectorXd rest = x.values - support_part(x);
  return multiplex(ensemble, rest);
}

inline Measurement signal_component(const Ensemble& ensemble, const WeightVector& x) {
  detail::check_dims(ensemble, x.values);
  return multiplex(ensemble, support_part(x));
}

/// 10 log10(|A x_support|^2 / |A x_rest|^2), in dB.
inline double signal_to_interference_ratio(const Ensemble& ensemble, const WeightVector& x) {
  const double signal = signal_component(ensemble, x).y.squaredNorm();
  const double interference = interference_component(ensemble, x).y.squaredNorm();
  require(interference > 0.0, ErrorCode::DegenerateDenominator, "interference component is identically zero");
  return 10.0 * std::log10(signal / interference);
}

/// Two-series CSV `n,y,interference` for the signal-vs-interference overlay.
inline std::string overlay_csv(const Measurement& y, const Measurement& interference) {
  require(y.size() == interference.size(), ErrorCode::DimensionMismatch, "series lengths differ");
  std::string out = "n,y,interference\n";
  for (Index n = 0; n < y.size(); ++n)
    out += std::to_string(n) + ',' + io::format_double(y.y[n]) + ',' + io::format_double(interference.y[n]) + '\n';
  return out;
}

}  // namespace nplex
