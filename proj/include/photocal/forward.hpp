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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

/// Full trainable parameter set of the hardware model:
///   a, b    phase-current law phi = a*I^2 + b, one pair per phase shifter
///   theta   beam-splitter angle (reflectivity sin^2 theta), per splitter
///   alpha   transfer efficiency per splitter (1 - alpha is its loss)
///   eta     relative coupling efficiency per observed output port
struct Parameters {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> theta;
  std::vector<double> alpha;
  std::vector<double> eta;

  /// Ideal-hardware prior: a = 0.12, b = 0, theta = pi/4, alpha = eta = 1.
  static Parameters ideal(const CircuitSpec& spec) {
    Parameters p;
    p.a.assign(spec.ps_count, 0.12);
    p.b.assign(spec.ps_count, 0.0);
    p.theta.assign(spec.bs_count, kPi / 4.0);
    p.alpha.assign(spec.bs_count, 1.0);
    p.eta.assign(spec.active_ports().size(), 1.0);
    return p;
  }
};

enum class ParamGroup { kA, kB, kTheta, kAlpha, kEta };

/// Fixed flattened ordering (a, b, theta, alpha, eta) shared by gradients,
/// optimizer state and trainable masks.
struct ParamLayout {
  int n_ps = 0;
  int n_bs = 0;
  int n_ports = 0;

  explicit ParamLayout(const CircuitSpec& spec)
      : n_ps(spec.ps_count),
        n_bs(spec.bs_count),
        n_ports(static_cast<int>(spec.active_ports().size())) {}

  int offset_a() const { return 0; }
  int offset_b() const { return n_ps; }
  int offset_theta() const { return 2 * n_ps; }
  int offset_alpha() const { return 2 * n_ps + n_bs; }
  int offset_eta() const { return 2 * n_ps + 2 * n_bs; }
  int total() const { return 2 * n_ps + 2 * n_bs + n_ports; }

  ParamGroup group_of(int flat_index) const {
    if (flat_index < offset_b()) return ParamGroup::kA;
    if (flat_index < offset_theta()) return ParamGroup::kB;
    if (flat_index < offset_alpha()) return ParamGroup::kTheta;
    if (flat_index < offset_eta()) return ParamGroup::kAlpha;
    return ParamGroup::kEta;
  }

  std::vector<double> flatten(const Parameters& p) const {
    std::vector<double> x;
    x.reserve(total());
    x.insert(x.end(), p.a.begin(), p.a.end());
    x.insert(x.end(), p.b.begin(), p.b.end());
    x.insert(x.end(), p.theta.begin(), p.theta.end());
    x.insert(x.end(), p.alpha.begin(), p.alpha.end());
    x.insert(x.end(), p.eta.begin(), p.eta.end());
    return x;
  }

  Parameters unflatten(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != total()) {
      throw ConfigError("unflatten: wrong flat parameter length");
    }
    Parameters p;
    auto at = x.begin();
    p.a.assign(at, at + n_ps);
    at += n_ps;
    p.b.assign(at, at + n_ps);
    at += n_ps;
    p.theta.assign(at, at + n_bs);
    at += n_bs;
    p.alpha.assign(at, at + n_bs);
    at += n_bs;
    p.eta.assign(at, at + n_ports);
    return p;
  }
};

inline void check_dimensions(const CircuitSpec& spec, const Parameters& p) {
  const auto n_ports = spec.active_ports().size();
  if (p.a.size() != static_cast<std::size_t>(spec.ps_count) ||
      p.b.size() != static_cast<std::size_t>(spec.ps_count) ||
      p.theta.size() != static_cast<std::size_t>(spec.bs_count) ||
      p.alpha.size() != static_cast<std::size_t>(spec.bs_count) ||
      p.eta.size() != n_ports) {
    throw ConfigError("parameter arrays do not match the circuit spec");
  }
}

/// phi_k = a_k * I_k^2 + b_k, elementwise, no wrapping (phases enter the
/// model only through exp(i*phi)).
inline std::vector<double> currents_to_phases(const std::vector<double>& a,
                                              const std::vector<double>& b,
                                              const std::vector<double>& I) {
  if (a.size() != b.size() || a.size() != I.size()) {
    throw ConfigError("currents_to_phases: length mismatch");
  }
  std::vector<double> phi(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    phi[k] = a[k] * I[k] * I[k] + b[k];
  }
  return phi;
}

/// Applies one unit in place: the pair (psi_i, psi_{i+1}) is multiplied by
/// sqrt(alpha) * [[cos t, sin t], [-sin t, cos t]]; if phi is present the
/// shifter diag{1, e^{i phi}} then acts on the lower mode i+1.
inline void apply_unit(CVector& psi, const Unit& u, double theta, double alpha,
                       std::optional<double> phi) {
  const int i = u.top_mode;
  if (i < 0 || i + 1 >= static_cast<int>(psi.size())) {
    throw ConfigError("apply_unit: mode pair out of range");
  }
  if (alpha <= 0.0) {
    throw NumericError("apply_unit: nonpositive transfer efficiency");
  }
  const double r = std::sqrt(alpha);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const Complex top = psi[i];
  const Complex bot = psi[i + 1];
  psi[i] = r * (c * top + s * bot);
  Complex lower = r * (-s * top + c * bot);
  if (phi) {
    lower *= Complex(std::cos(*phi), std::sin(*phi));
  }
  psi[i + 1] = lower;
}

inline CVector localized_input(const CircuitSpec& spec) {
  CVector psi(spec.mode_count, Complex(0.0, 0.0));
  psi[spec.input_mode] = Complex(1.0, 0.0);
  return psi;
}

/// Runs the full layered pipeline on an amplitude vector: phases from the
/// currents, then every unit in layer order.
inline CVector evolve(const CircuitSpec& spec, const Parameters& params,
                      const std::vector<double>& currents,
                      const CVector& psi_in) {
  check_dimensions(spec, params);
  if (psi_in.size() != static_cast<std::size_t>(spec.mode_count)) {
    throw ConfigError("evolve: input state dimension mismatch");
  }
  const std::vector<double> phi =
      currents_to_phases(params.a, params.b, currents);
  CVector psi = psi_in;
  for (const Layer& layer : spec.layers) {
    for (const Unit& u : layer.units) {
      apply_unit(psi, u, params.theta[u.bs_index], params.alpha[u.bs_index],
                 u.has_shifter() ? std::optional<double>(phi[u.ps_index])
                                 : std::nullopt);
    }
  }
  return psi;
}

/// Measured-port model: |psi_v|^2 on active ports, weighted by eta and
/// renormalized to total probability one.
inline std::vector<double> output_distribution(const CircuitSpec& spec,
                                               const Parameters& params,
                                               const std::vector<double>& currents,
                                               const CVector& psi_in) {
  const CVector psi = evolve(spec, params, currents, psi_in);
  const std::vector<int> ports = spec.active_ports();
  if (ports.empty()) {
    throw NumericError("output_distribution: no active ports");
  }
  std::vector<double> p(ports.size());
  NeumaierSum total;
  for (std::size_t v = 0; v < ports.size(); ++v) {
    const Complex amp = psi[ports[v]];
    p[v] = params.eta[v] * std::norm(amp);
    total.add(p[v]);
  }
  const double s = total.value();
  if (!(s > 0.0)) {
    throw NumericError(
        "output_distribution: degenerate distribution (zero weight on active "
        "ports)");
  }
  for (double& x : p) x /= s;
  return p;
}

/// Dense transfer matrix of the parameterized network at the given currents
/// (column j = response to the basis input on mode j). Mainly used by the
/// measurement-section builder and by test oracles.
inline Eigen::MatrixXcd transfer_matrix(const CircuitSpec& spec,
                                        const Parameters& params,
                                        const std::vector<double>& currents) {
  const int n = spec.mode_count;
  Eigen::MatrixXcd m(n, n);
  for (int j = 0; j < n; ++j) {
    CVector e(n, Complex(0.0, 0.0));
    e[j] = Complex(1.0, 0.0);
    const CVector col = evolve(spec, params, currents, e);
    for (int i = 0; i < n; ++i) m(i, j) = col[i];
  }
  return m;
}

}  // namespace photocal
