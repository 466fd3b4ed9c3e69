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

#include <atomic>
#include <cmath>
#include <thread>
#include <utility>
#include <vector>

#include "photocal/data.hpp"
#include "photocal/forward.hpp"
#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

using Mask = std::vector<std::uint8_t>;

/// One real partial derivative per flattened parameter (a, b, theta, alpha,
/// eta), with the trainable mask it was computed under. Masked-out entries
/// are exactly zero.
struct GradVector {
  std::vector<double> values;
  Mask mask;
};

enum class LossKind {
  kL1Sum,             // sum over samples of (1/2) * L1 distance
  kNegLogLikelihood,  // multinomial cross-entropy variant
};

namespace detail {

inline void check_batch(const CircuitSpec& spec,
                        const std::vector<Sample>& batch) {
  if (batch.empty()) throw ConfigError("loss: empty batch");
  const std::size_t n_ports = spec.active_ports().size();
  for (const Sample& s : batch) {
    if (s.currents.size() != static_cast<std::size_t>(spec.ps_count) ||
        s.probabilities.size() != n_ports) {
      throw ConfigError("loss: sample dimensions do not match the spec");
    }
  }
}

// Per-sample forward pass; optionally records the input pair of every unit
// so the reverse sweep can run without recomputation.
struct SampleEval {
  double loss = 0.0;
  std::vector<double> port_grad;  // dL/dp_v, only set when needed
};

inline double sample_loss_terms(LossKind kind,
                                const std::vector<double>& model,
                                const std::vector<double>& target,
                                std::vector<double>* dloss_dp) {
  double value = 0.0;
  if (dloss_dp) dloss_dp->assign(model.size(), 0.0);
  switch (kind) {
    case LossKind::kL1Sum:
      for (std::size_t v = 0; v < model.size(); ++v) {
        const double d = model[v] - target[v];
        value += 0.5 * std::abs(d);
        if (dloss_dp) {
          // subgradient 0 at exact zeros of the L1 terms
          (*dloss_dp)[v] = d > 0.0 ? 0.5 : (d < 0.0 ? -0.5 : 0.0);
        }
      }
      break;
    case LossKind::kNegLogLikelihood:
      for (std::size_t v = 0; v < model.size(); ++v) {
        if (target[v] > 0.0) {
          value -= target[v] * std::log(model[v]);
          if (dloss_dp) (*dloss_dp)[v] = -target[v] / model[v];
        }
      }
      break;
  }
  return value;
}

// Evaluates one sample's loss and accumulates its parameter gradient
// (reverse sweep through the full pipeline) into `acc` (flattened layout).
// Pass acc == nullptr for loss-only evaluation.
inline double sample_loss_and_grad(const CircuitSpec& spec,
                                   const Parameters& params,
                                   const ParamLayout& layout,
                                   const Sample& sample, const CVector& psi_in,
                                   LossKind kind, double* acc) {
  const std::vector<int> ports = spec.active_ports();
  const std::vector<double> phi =
      currents_to_phases(params.a, params.b, sample.currents);

  CVector psi = psi_in;
  CVector tape;
  if (acc) tape.reserve(2 * spec.bs_count);
  for (const Layer& layer : spec.layers) {
    for (const Unit& u : layer.units) {
      if (acc) {
        tape.push_back(psi[u.top_mode]);
        tape.push_back(psi[u.top_mode + 1]);
      }
      apply_unit(psi, u, params.theta[u.bs_index], params.alpha[u.bs_index],
                 u.has_shifter() ? std::optional<double>(phi[u.ps_index])
                                 : std::nullopt);
    }
  }

  // Measurement head: q -> eta weighting -> renormalization.
  std::vector<double> q(ports.size()), p(ports.size());
  double total = 0.0;
  for (std::size_t v = 0; v < ports.size(); ++v) {
    q[v] = std::norm(psi[ports[v]]);
    p[v] = params.eta[v] * q[v];
    total += p[v];
  }
  if (!(total > 0.0)) {
    throw NumericError("loss: degenerate distribution on active ports");
  }
  for (double& x : p) x /= total;

  std::vector<double> gp;
  const double value =
      sample_loss_terms(kind, p, sample.probabilities, acc ? &gp : nullptr);
  if (!acc) return value;

  // dL/dw through the renormalization, then eta and |psi|^2 nodes. The
  // cotangent convention is c = dL/dpsi with dL = 2 Re[sum c dpsi].
  double gdotp = 0.0;
  for (std::size_t v = 0; v < ports.size(); ++v) gdotp += gp[v] * p[v];
  CVector cot(spec.mode_count, Complex(0.0, 0.0));
  for (std::size_t v = 0; v < ports.size(); ++v) {
    const double gw = (gp[v] - gdotp) / total;
    acc[layout.offset_eta() + v] += q[v] * gw;
    const double gq = params.eta[v] * gw;
    cot[ports[v]] = gq * std::conj(psi[ports[v]]);
  }

  // Reverse sweep over the units.
  std::size_t tpos = tape.size();
  for (auto lit = spec.layers.rbegin(); lit != spec.layers.rend(); ++lit) {
    for (auto uit = lit->units.rbegin(); uit != lit->units.rend(); ++uit) {
      const Unit& u = *uit;
      tpos -= 2;
      const Complex s0 = tape[tpos];
      const Complex s1 = tape[tpos + 1];
      const double theta = params.theta[u.bs_index];
      const double alpha = params.alpha[u.bs_index];
      const double r = std::sqrt(alpha);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      Complex e(1.0, 0.0);
      if (u.has_shifter()) {
        e = Complex(std::cos(phi[u.ps_index]), std::sin(phi[u.ps_index]));
      }
      const Complex out0 = r * (c * s0 + s * s1);
      const Complex out1 = e * (r * (-s * s0 + c * s1));
      const Complex c0 = cot[u.top_mode];
      const Complex c1 = cot[u.top_mode + 1];

      const Complex dth0 = r * (-s * s0 + c * s1);
      const Complex dth1 = e * (r * (-c * s0 - s * s1));
      acc[layout.offset_theta() + u.bs_index] +=
          2.0 * (c0 * dth0 + c1 * dth1).real();
      acc[layout.offset_alpha() + u.bs_index] +=
          (c0 * out0 + c1 * out1).real() / alpha;
      if (u.has_shifter()) {
        const double dphi = -2.0 * (c1 * out1).imag();
        acc[layout.offset_a() + u.ps_index] +=
            dphi * sample.currents[u.ps_index] * sample.currents[u.ps_index];
        acc[layout.offset_b() + u.ps_index] += dphi;
      }
      // cotangent through the transposed unit matrix
      cot[u.top_mode] = r * (c * c0 - s * (e * c1));
      cot[u.top_mode + 1] = r * (s * c0 + c * (e * c1));
    }
  }
  return value;
}

}  // namespace detail

/// Training cost: sum over the batch of loss terms between the model
/// distribution at each sample's currents and the sample's target
/// distribution.
inline double loss(const CircuitSpec& spec, const Parameters& params,
                   const std::vector<Sample>& batch, const CVector& psi_in,
                   LossKind kind = LossKind::kL1Sum,
                   bool mean_reduction = false) {
  detail::check_batch(spec, batch);
  check_dimensions(spec, params);
  const ParamLayout layout(spec);
  double total = 0.0;
  for (const Sample& s : batch) {
    total += detail::sample_loss_and_grad(spec, params, layout, s, psi_in,
                                          kind, nullptr);
  }
  if (mean_reduction) total /= static_cast<double>(batch.size());
  return total;
}

/// Loss plus its exact gradient for the unmasked coordinates, by reverse
/// accumulation through the complex-valued pipeline. Per-sample
/// contributions are independent; with several threads they are computed in
/// fixed-size blocks and reduced in block order, so the result is
/// bit-identical for any thread count.
inline std::pair<double, GradVector> loss_and_grad(
    const CircuitSpec& spec, const Parameters& params,
    const std::vector<Sample>& batch, const CVector& psi_in,
    const Mask& mask = {}, LossKind kind = LossKind::kL1Sum,
    bool mean_reduction = false, int threads = 1) {
  detail::check_batch(spec, batch);
  check_dimensions(spec, params);
  const ParamLayout layout(spec);
  const int dim = layout.total();
  if (!mask.empty() && static_cast<int>(mask.size()) != dim) {
    throw ConfigError("loss_and_grad: mask length mismatch");
  }

  constexpr std::size_t kBlock = 32;
  const std::size_t n_blocks = (batch.size() + kBlock - 1) / kBlock;
  std::vector<double> block_loss(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grad(
      n_blocks, std::vector<double>(dim, 0.0));

  auto run_block = [&](std::size_t blk) {
    const std::size_t lo = blk * kBlock;
    const std::size_t hi = std::min(batch.size(), lo + kBlock);
    for (std::size_t i = lo; i < hi; ++i) {
      block_loss[blk] += detail::sample_loss_and_grad(
          spec, params, layout, batch[i], psi_in, kind,
          block_grad[blk].data());
    }
  };

  const int n_workers =
      std::max(1, std::min<int>(threads, static_cast<int>(n_blocks)));
  if (n_workers == 1) {
    for (std::size_t blk = 0; blk < n_blocks; ++blk) run_block(blk);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (std::size_t blk = next.fetch_add(1); blk < n_blocks;
               blk = next.fetch_add(1)) {
            run_block(blk);
          }
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failed) std::rethrow_exception(error);
  }

  GradVector grad;
  grad.values.assign(dim, 0.0);
  grad.mask = mask.empty() ? Mask(dim, 1) : mask;
  double total = 0.0;
  for (std::size_t blk = 0; blk < n_blocks; ++blk) {
    total += block_loss[blk];
    for (int k = 0; k < dim; ++k) grad.values[k] += block_grad[blk][k];
  }
  if (mean_reduction) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    total *= inv;
    for (double& g : grad.values) g *= inv;
  }
  for (int k = 0; k < dim; ++k) {
    if (!grad.mask[k]) grad.values[k] = 0.0;
  }
  return {total, std::move(grad)};
}

/// Central-difference oracle over the flattened parameters. Verification
/// only; the analytic path above is the one used for training.
inline GradVector finite_diff_grad(const CircuitSpec& spec,
                                   const Parameters& params,
                                   const std::vector<Sample>& batch,
                                   const CVector& psi_in, double step,
                                   LossKind kind = LossKind::kL1Sum,
                                   bool mean_reduction = false) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_grad: step must be > 0");
  const ParamLayout layout(spec);
  std::vector<double> flat = layout.flatten(params);
  GradVector grad;
  grad.values.assign(flat.size(), 0.0);
  grad.mask.assign(flat.size(), 1);
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double saved = flat[k];
    flat[k] = saved + step;
    const double up =
        loss(spec, layout.unflatten(flat), batch, psi_in, kind, mean_reduction);
    flat[k] = saved - step;
    const double down =
        loss(spec, layout.unflatten(flat), batch, psi_in, kind, mean_reduction);
    flat[k] = saved;
    grad.values[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace photocal
