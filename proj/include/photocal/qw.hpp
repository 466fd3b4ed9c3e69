/* Copyright 2026 The Photocal Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "photocal/forward.hpp"
#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

/// Coin-operator parameters at one lattice site and time step:
///   C = [[cos t, e^{i g} sin t], [-e^{i b} sin t, e^{i(g+b)} cos t]]
/// in the (up, down) coin basis, followed by the loss factor sqrt(alpha) on
/// both components.
struct CoinParams {
  double theta = kPi / 4.0;
  double gamma = 0.0;
  double beta = 0.0;
  double alpha = 1.0;
};

/// Per-step, per-site coins covering the light cone of a walk started at
/// the central position. site_coins[t-1][k] acts at position offset
/// (t-1) - 2k from the start, k = 0..t-1. Sites never reached may be
/// omitted (identity coin, no loss).
struct CoinSpec {
  int steps = 0;
  std::vector<std::vector<CoinParams>> site_coins;

  static CoinSpec uniform(int steps, const CoinParams& coin) {
    CoinSpec cs;
    cs.steps = steps;
    cs.site_coins.resize(steps);
    for (int t = 1; t <= steps; ++t) {
      cs.site_coins[t - 1].assign(t, coin);
    }
    return cs;
  }
};

/// Walker state on positions [-T, T] relative to the start, tensored with
/// the two-dimensional coin. Amplitude layout: index 2*p + c with
/// p = x - x0 + T and c = 0 for up, 1 for down.
struct WalkState {
  int steps = 0;  // sets the position range
  CVector amps;   // size 2 * (2*steps + 1)

  static WalkState localized(int steps, int coin) {
    if (steps < 1) throw ConfigError("WalkState: steps must be >= 1");
    if (coin != 0 && coin != 1) throw ConfigError("WalkState: coin is 0 or 1");
    WalkState w;
    w.steps = steps;
    w.amps.assign(2 * (2 * steps + 1), Complex(0.0, 0.0));
    w.amps[2 * steps + coin] = Complex(1.0, 0.0);
    return w;
  }

  Complex& at(int pos_offset, int coin) {
    return amps[2 * (pos_offset + steps) + coin];
  }
  Complex at(int pos_offset, int coin) const {
    return amps[2 * (pos_offset + steps) + coin];
  }

  double norm_squared() const {
    double n = 0.0;
    for (const Complex& a : amps) n += std::norm(a);
    return n;
  }
};

namespace detail {

inline void apply_coin_and_loss(WalkState& w, int pos_offset,
                                const CoinParams& cp) {
  const double c = std::cos(cp.theta);
  const double s = std::sin(cp.theta);
  const Complex eg(std::cos(cp.gamma), std::sin(cp.gamma));
  const Complex eb(std::cos(cp.beta), std::sin(cp.beta));
  const double r = std::sqrt(cp.alpha);
  Complex& up = w.at(pos_offset, 0);
  Complex& down = w.at(pos_offset, 1);
  const Complex u0 = up;
  const Complex d0 = down;
  up = r * (c * u0 + eg * s * d0);
  down = r * (-eb * s * u0 + eg * eb * c * d0);
}

inline void apply_shift(WalkState& w) {
  // down moves to x-1, up moves to x+1; T steps from the center never leave
  // the array, and exact zeros at the edges shift out harmlessly.
  CVector next(w.amps.size(), Complex(0.0, 0.0));
  const int width = 2 * w.steps + 1;
  for (int p = 0; p < width; ++p) {
    const Complex up = w.amps[2 * p + 0];
    const Complex down = w.amps[2 * p + 1];
    if (p + 1 < width) {
      next[2 * (p + 1) + 0] = up;
    } else if (up != Complex(0.0, 0.0)) {
      throw NumericError("walk shift: amplitude left the position range");
    }
    if (p - 1 >= 0) {
      next[2 * (p - 1) + 1] = down;
    } else if (down != Complex(0.0, 0.0)) {
      throw NumericError("walk shift: amplitude left the position range");
    }
  }
  w.amps = std::move(next);
}

}  // namespace detail

/// Runs T steps of the lossy discrete-time walk, each step applying the
/// coin, then the loss operator, then the shift. The returned state may be
/// subnormalized when any alpha < 1.
inline WalkState walk_state(int steps, const CoinSpec& coins,
                            const WalkState& initial) {
  if (steps < 1) throw ConfigError("walk_state: steps must be >= 1");
  if (coins.steps != steps ||
      static_cast<int>(coins.site_coins.size()) != steps) {
    throw ConfigError("walk_state: coin spec does not cover the steps");
  }
  if (initial.steps != steps) {
    throw ConfigError("walk_state: initial state dimension mismatch");
  }
  WalkState w = initial;
  for (int t = 1; t <= steps; ++t) {
    const auto& sites = coins.site_coins[t - 1];
    for (std::size_t k = 0; k < sites.size(); ++k) {
      const int offset = (t - 1) - 2 * static_cast<int>(k);
      detail::apply_coin_and_loss(w, offset, sites[k]);
    }
    detail::apply_shift(w);
  }
  return w;
}

/// Probability of each (position, coin) basis state.
inline std::vector<double> walk_distribution(const WalkState& w) {
  std::vector<double> p(w.amps.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(w.amps[i]);
  return p;
}

/// Coin spec reproducing the mesh exactly, derived from the light-cone
/// wiring. The waveguide crossings between layers swap which arm carries
/// the up- and down-moving components, so the mesh unit equals the coin
/// matrix composed with that swap: mapping a mesh unit (theta, phi) onto the
/// coin form gives theta_c = pi/2 - theta, gamma = 0, beta = phi + pi, and
/// the localized lower-arm input enters as the up coin component.
inline CoinSpec coin_spec_from_mesh(const CircuitSpec& spec,
                                    const Parameters& params,
                                    const std::vector<double>& currents) {
  check_dimensions(spec, params);
  const std::vector<double> phi =
      currents_to_phases(params.a, params.b, currents);
  CoinSpec cs;
  cs.steps = spec.steps;
  cs.site_coins.resize(spec.steps);
  for (int t = 1; t <= spec.steps; ++t) {
    const Layer& layer = spec.layers[t - 1];
    auto& sites = cs.site_coins[t - 1];
    sites.resize(layer.units.size());
    for (std::size_t k = 0; k < layer.units.size(); ++k) {
      const Unit& u = layer.units[k];
      CoinParams cp;
      cp.theta = kPi / 2.0 - params.theta[u.bs_index];
      cp.gamma = 0.0;
      cp.beta = (u.has_shifter() ? phi[u.ps_index] : 0.0) + kPi;
      cp.alpha = params.alpha[u.bs_index];
      sites[k] = cp;
    }
  }
  return cs;
}

/// Output-port probabilities of a finished walk in mesh order (top to
/// bottom). After T steps the populated basis states are (x0+T, up), then
/// (x, down), (x, up) for x = x0+T-2 down to x0-T+2, then (x0-T, down).
inline std::vector<double> walk_port_distribution(const WalkState& w) {
  const int T = w.steps;
  std::vector<double> p(2 * T, 0.0);
  p[0] = std::norm(w.at(T, 0));
  for (int j = 1; j < T; ++j) {
    p[2 * j - 1] = std::norm(w.at(T - 2 * j, 1));
    p[2 * j] = std::norm(w.at(T - 2 * j, 0));
  }
  p[2 * T - 1] = std::norm(w.at(-T, 1));
  return p;
}

/// Runs the mesh and the independent walk model from the same localized
/// input (phases taken from b at zero current) and returns the maximum
/// absolute difference between the two raw output distributions.
inline double mesh_equivalence_check(int steps, const Parameters& params) {
  const CircuitSpec spec = build_qw_mesh(steps);
  check_dimensions(spec, params);
  const std::vector<double> zero_currents(spec.ps_count, 0.0);

  const CVector psi =
      evolve(spec, params, zero_currents, localized_input(spec));
  std::vector<double> mesh_p(spec.mode_count);
  for (int m = 0; m < spec.mode_count; ++m) mesh_p[m] = std::norm(psi[m]);

  const CoinSpec coins = coin_spec_from_mesh(spec, params, zero_currents);
  const WalkState final_state =
      walk_state(steps, coins, WalkState::localized(steps, 0));
  const std::vector<double> walk_p = walk_port_distribution(final_state);

  double dev = 0.0;
  for (int m = 0; m < spec.mode_count; ++m) {
    dev = std::max(dev, std::abs(mesh_p[m] - walk_p[m]));
  }
  return dev;
}

/// Currents realizing the given target phases by inverting phi = a I^2 + b:
/// I_k = sqrt(wrap(phi_k - b_k) / a_k) with wrap into [0, 2pi). Throws when
/// any required current exceeds the hardware range, listing the offenders.
inline std::vector<double> currents_for_phases(
    const CircuitSpec& spec, const Parameters& params,
    const std::vector<double>& target_phases, double max_current = 7.0) {
  check_dimensions(spec, params);
  if (target_phases.size() != static_cast<std::size_t>(spec.ps_count)) {
    throw ConfigError("currents_for_phases: target length mismatch");
  }
  std::vector<double> currents(spec.ps_count);
  std::string offenders;
  for (int k = 0; k < spec.ps_count; ++k) {
    if (!(params.a[k] > 0.0)) {
      throw ConfigError("currents_for_phases: nonpositive a coefficient at " +
                        std::to_string(k));
    }
    const double needed = wrap_to_2pi(target_phases[k] - params.b[k]);
    const double current = std::sqrt(needed / params.a[k]);
    if (current > max_current + 1e-12) {
      if (!offenders.empty()) offenders += ", ";
      offenders += std::to_string(k);
    }
    currents[k] = current;
  }
  if (!offenders.empty()) {
    throw NumericError(
        "currents_for_phases: target phase unreachable within the current "
        "range for shifters " +
        offenders);
  }
  return currents;
}

/// The walk preparation used for the balanced (Hadamard-type) walk: phase
/// pi/2 on the first shifter, zero on every other.
inline std::vector<double> hadamard_phase_targets(const CircuitSpec& spec) {
  std::vector<double> targets(spec.ps_count, 0.0);
  if (spec.ps_count > 0) targets[0] = kPi / 2.0;
  return targets;
}

inline std::vector<double> hadamard_walk_currents(const CircuitSpec& spec,
                                                  const Parameters& calibrated,
                                                  double max_current = 7.0) {
  return currents_for_phases(spec, calibrated, hadamard_phase_targets(spec),
                             max_current);
}

/// Ideal-chip output distribution over all 2T ports for the balanced-walk
/// preparation (localized lower-arm input, first phase pi/2, rest zero).
inline std::vector<double> hadamard_reference_distribution(int steps) {
  const CircuitSpec spec = build_qw_mesh(steps);
  Parameters params = Parameters::ideal(spec);
  const std::vector<double> targets = hadamard_phase_targets(spec);
  for (int k = 0; k < spec.ps_count; ++k) params.b[k] = targets[k];
  const std::vector<double> zero_currents(spec.ps_count, 0.0);
  const CVector psi =
      evolve(spec, params, zero_currents, localized_input(spec));
  std::vector<double> p(spec.mode_count);
  for (int m = 0; m < spec.mode_count; ++m) p[m] = std::norm(psi[m]);
  return p;
}

/// Plot-ready delimited export: port index, reference value, model value.
inline std::string distribution_export(const std::vector<double>& reference,
                                       const std::vector<double>& model) {
  if (reference.size() != model.size()) {
    throw ConfigError("distribution_export: length mismatch");
  }
  std::ostringstream out;
  out << "port\treference\tmodel\n";
  for (std::size_t m = 0; m < reference.size(); ++m) {
    out << m << '\t' << format_double(reference[m]) << '\t'
        << format_double(model[m]) << '\n';
  }
  return out.str();
}

}  // namespace photocal
