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
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "photocal/forward.hpp"
#include "photocal/mesh.hpp"
#include "photocal/metrics.hpp"
#include "photocal/optim.hpp"
#include "photocal/util.hpp"

namespace photocal {

/// A contiguous run of mesh layers sharing the full mode space. Beam
/// splitter and phase shifter indices are kept as offsets into the parent
/// spec's parameter arrays via bs_base / ps_base.
struct MeshSection {
  int mode_count = 0;
  int first_layer = 0;  // 1-based layer index in the parent spec
  int bs_base = 0;
  int ps_base = 0;
  int bs_count = 0;
  int ps_count = 0;
  std::vector<Layer> layers;
};

/// Splits the mesh after `dynamics_depth` layers into a dynamics section and
/// a measurement section. The state leaving the dynamics section lives on
/// the 2*depth light-cone modes.
inline std::pair<MeshSection, MeshSection> split_mesh(const CircuitSpec& spec,
                                                      int dynamics_depth) {
  if (dynamics_depth < 1 || dynamics_depth >= spec.steps) {
    throw ConfigError("split_mesh: depth must satisfy 1 <= depth < steps");
  }
  auto make_section = [&spec](int lo, int hi) {  // layers lo..hi, 1-based
    MeshSection sec;
    sec.mode_count = spec.mode_count;
    sec.first_layer = lo;
    sec.bs_base = spec.bs_count;
    sec.ps_base = spec.ps_count;
    for (int t = lo; t <= hi; ++t) {
      for (const Unit& u : spec.layers[t - 1].units) {
        sec.bs_base = std::min(sec.bs_base, u.bs_index);
        if (u.has_shifter()) sec.ps_base = std::min(sec.ps_base, u.ps_index);
        ++sec.bs_count;
        if (u.has_shifter()) ++sec.ps_count;
      }
      sec.layers.push_back(spec.layers[t - 1]);
    }
    if (sec.ps_count == 0) sec.ps_base = 0;
    return sec;
  };
  return {make_section(1, dynamics_depth),
          make_section(dynamics_depth + 1, spec.steps)};
}

/// Modes reachable after `depth` layers from the localized input:
/// T - depth .. T + depth - 1.
inline std::vector<int> light_cone_modes(const CircuitSpec& spec, int depth) {
  if (depth < 1 || depth > spec.steps) {
    throw ConfigError("light_cone_modes: bad depth");
  }
  std::vector<int> modes;
  for (int m = spec.steps - depth; m < spec.steps + depth; ++m) {
    modes.push_back(m);
  }
  return modes;
}

/// Applies a section's layers to a full-width amplitude vector. Currents are
/// indexed locally (length = section ps_count).
inline CVector section_evolve(const MeshSection& sec, const Parameters& params,
                              const std::vector<double>& currents,
                              const CVector& psi_in) {
  if (currents.size() != static_cast<std::size_t>(sec.ps_count)) {
    throw ConfigError("section_evolve: current array length mismatch");
  }
  if (psi_in.size() != static_cast<std::size_t>(sec.mode_count)) {
    throw ConfigError("section_evolve: state dimension mismatch");
  }
  CVector psi = psi_in;
  for (const Layer& layer : sec.layers) {
    for (const Unit& u : layer.units) {
      std::optional<double> phi;
      if (u.has_shifter()) {
        const int local = u.ps_index - sec.ps_base;
        phi = params.a[u.ps_index] * currents[local] * currents[local] +
              params.b[u.ps_index];
      }
      apply_unit(psi, u, params.theta[u.bs_index], params.alpha[u.bs_index],
                 phi);
    }
  }
  return psi;
}

/// One tomography setting: the currents imposed on the measurement-section
/// shifters and the derived linear map from the post-dynamics state space to
/// the active output ports. Rows are effect vectors: predicted (unnormalized)
/// probabilities are diag(E rho E^dagger).
struct MeasurementSetting {
  std::vector<double> currents;
  Eigen::MatrixXcd effect;  // active ports x support modes
};

/// Builds the effect map of each setting by propagating the support-mode
/// basis states through the measurement section and weighting each output
/// row by sqrt(eta).
inline std::vector<MeasurementSetting> build_effects(
    const CircuitSpec& spec, const MeshSection& measurement,
    const Parameters& params,
    const std::vector<std::vector<double>>& settings) {
  check_dimensions(spec, params);
  if (settings.empty()) throw ConfigError("build_effects: no settings");
  const int depth = measurement.first_layer - 1;
  const std::vector<int> support = light_cone_modes(spec, depth);
  const std::vector<int> ports = spec.active_ports();
  std::vector<MeasurementSetting> out;
  out.reserve(settings.size());
  for (const auto& currents : settings) {
    MeasurementSetting ms;
    ms.currents = currents;
    ms.effect.resize(static_cast<Eigen::Index>(ports.size()),
                     static_cast<Eigen::Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) {
      CVector e(spec.mode_count, Complex(0.0, 0.0));
      e[support[j]] = Complex(1.0, 0.0);
      const CVector col = section_evolve(measurement, params, currents, e);
      for (std::size_t v = 0; v < ports.size(); ++v) {
        ms.effect(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j)) =
            std::sqrt(params.eta[v]) * col[ports[v]];
      }
    }
    out.push_back(std::move(ms));
  }
  return out;
}

/// Rank of the stacked real parameterization of all effects E_v^dagger E_v.
/// An informationally complete design reaches dim^2.
inline int design_rank(const std::vector<MeasurementSetting>& settings,
                       int dim) {
  const int d2 = dim * dim;
  Eigen::MatrixXd stacked(
      static_cast<Eigen::Index>(settings.size()) *
          (settings.empty() ? 0 : settings.front().effect.rows()),
      d2);
  Eigen::Index row = 0;
  for (const auto& ms : settings) {
    for (Eigen::Index v = 0; v < ms.effect.rows(); ++v) {
      const Eigen::VectorXcd e = ms.effect.row(v).adjoint();  // column vector
      const Eigen::MatrixXcd f = e * e.adjoint();
      Eigen::Index col = 0;
      for (int i = 0; i < dim; ++i) {
        stacked(row, col++) = f(i, i).real();
        for (int j = i + 1; j < dim; ++j) {
          stacked(row, col++) = 2.0 * f(i, j).real();
          stacked(row, col++) = -2.0 * f(i, j).imag();
        }
      }
      ++row;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
  qr.setThreshold(1e-9);
  return static_cast<int>(qr.rank());
}

/// Real parameterization of a lower-triangular complex matrix: dim real
/// diagonal entries first, then (re, im) pairs for the below-diagonal
/// entries in row-major order. rho = T T^dagger / Tr(T T^dagger) is PSD with
/// unit trace for every parameter vector with a nonzero matrix.
struct CholeskyParam {
  int dim = 0;
  std::vector<double> x;

  static CholeskyParam scaled_identity(int dim, double scale) {
    CholeskyParam p;
    p.dim = dim;
    p.x.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) p.x[i] = scale;
    return p;
  }

  Eigen::MatrixXcd lower() const {
    Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) t(i, i) = x[i];
    std::size_t pos = dim;
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < i; ++j) {
        t(i, j) = Complex(x[pos], x[pos + 1]);
        pos += 2;
      }
    }
    return t;
  }

  Eigen::MatrixXcd rho() const {
    const Eigen::MatrixXcd t = lower();
    Eigen::MatrixXcd r = t * t.adjoint();
    const double tr = r.trace().real();
    if (!(tr > 0.0)) {
      throw NumericError("CholeskyParam: zero-trace parameterization");
    }
    return r / tr;
  }
};

struct MleConfig {
  AdamConfig adam{};       // same defaults as the calibration optimizer
  double cutoff_rel = 1e-9;
  int cutoff_streak = 5;
  int max_iters = 5000;
  double init_scale = -1.0;  // < 0 -> 1/sqrt(dim)
  // Seeds the ascent from the PSD-projected least-squares inversion of the
  // measured data instead of the maximally mixed state. With an
  // informationally complete design and clean data this starts next to the
  // optimum; deficient designs fall back gracefully.
  bool linear_inversion_init = true;
};

struct MleResult {
  Eigen::MatrixXcd rho;
  std::vector<double> loglik;  // accepted iterations only
  int iterations = 0;
  int design_rank = 0;
  bool design_deficient = false;
};

namespace detail {

// Log-likelihood and (optionally) its gradient with respect to the free
// Cholesky entries. The per-setting model is p_v = q_v / sum(q) with
// q_v = |E_v T|^2 row norms; the scale of T cancels.
inline double mle_loglik(const std::vector<MeasurementSetting>& settings,
                         const std::vector<std::vector<double>>& measured,
                         const Eigen::MatrixXcd& t,
                         Eigen::MatrixXcd* grad_matrix) {
  const int dim = static_cast<int>(t.rows());
  if (grad_matrix) grad_matrix->setZero(dim, dim);
  double ll = 0.0;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const Eigen::MatrixXcd& e = settings[s].effect;
    const Eigen::MatrixXcd b = e * t;  // ports x dim
    const Eigen::Index n_ports = b.rows();
    Eigen::VectorXd q(n_ports);
    double total = 0.0;
    for (Eigen::Index v = 0; v < n_ports; ++v) {
      q(v) = b.row(v).squaredNorm();
      total += q(v);
    }
    if (!(total > 0.0)) {
      throw NumericError("mle: zero model weight for a setting");
    }
    const std::vector<double>& data = measured[s];
    double c_total = 0.0;
    for (Eigen::Index v = 0; v < n_ports; ++v) c_total += data[v];
    Eigen::VectorXd w(n_ports);
    for (Eigen::Index v = 0; v < n_ports; ++v) {
      const double p = q(v) / total;
      if (data[v] > 0.0) {
        if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
        ll += data[v] * std::log(p);
      }
      w(v) = (data[v] > 0.0 ? data[v] / q(v) : 0.0) - c_total / total;
    }
    if (grad_matrix) {
      // d ll / d conj(T) = E^dagger diag(w) (E T); free-entry gradient is
      // twice the matching real/imaginary component.
      grad_matrix->noalias() += e.adjoint() * w.asDiagonal() * b;
    }
  }
  return ll;
}

inline void pack_grad(const Eigen::MatrixXcd& g, std::vector<double>& out) {
  const int dim = static_cast<int>(g.rows());
  out.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) out[i] = 2.0 * g(i, i).real();
  std::size_t pos = dim;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) {
      out[pos] = 2.0 * g(i, j).real();
      out[pos + 1] = 2.0 * g(i, j).imag();
      pos += 2;
    }
  }
}

// Least-squares inversion of the renormalized measurement model: solves the
// homogeneous system Tr[F_sv rho] = t_s p_sv jointly over (rho, per-setting
// scales t), projects the result onto the PSD cone and factors it. Returns
// false when the factorization is unusable.
inline bool linear_inversion_start(const std::vector<MeasurementSetting>& settings,
                                   const std::vector<std::vector<double>>& measured,
                                   int dim, CholeskyParam* out) {
  const int d2 = dim * dim;
  const int n_scales = static_cast<int>(settings.size());
  Eigen::Index rows = 0;
  for (const auto& ms : settings) rows += ms.effect.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, d2 + n_scales);
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const Eigen::MatrixXcd& e = settings[s].effect;
    for (Eigen::Index v = 0; v < e.rows(); ++v) {
      const Eigen::VectorXcd ev = e.row(v).adjoint();
      const Eigen::MatrixXcd f = ev * ev.adjoint();
      Eigen::Index col = 0;
      for (int i = 0; i < dim; ++i) {
        a(row, col++) = f(i, i).real();
        for (int j = i + 1; j < dim; ++j) {
          a(row, col++) = 2.0 * f(i, j).real();
          a(row, col++) = -2.0 * f(i, j).imag();
        }
      }
      a(row, d2 + static_cast<Eigen::Index>(s)) = -measured[s][v];
      ++row;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::VectorXd z = svd.matrixV().col(d2 + n_scales - 1);
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  Eigen::Index col = 0;
  for (int i = 0; i < dim; ++i) {
    rho(i, i) = z(col++);
    for (int j = i + 1; j < dim; ++j) {
      rho(i, j) = Complex(z(col), -z(col + 1));
      rho(j, i) = std::conj(rho(i, j));
      col += 2;
    }
  }
  if (rho.trace().real() < 0.0) rho = -rho;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
  Eigen::VectorXd vals = es.eigenvalues();
  double total = 0.0;
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    vals(i) = std::max(vals(i), 0.0);
    total += vals(i);
  }
  if (!(total > 1e-12)) return false;
  vals /= total;
  const Eigen::MatrixXcd psd =
      es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().adjoint() +
      1e-10 * Eigen::MatrixXcd::Identity(dim, dim);
  Eigen::LLT<Eigen::MatrixXcd> llt(psd);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXcd t = llt.matrixL();
  out->dim = dim;
  out->x.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) out->x[i] = t(i, i).real();
  std::size_t pos = dim;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) {
      out->x[pos] = t(i, j).real();
      out->x[pos + 1] = t(i, j).imag();
      pos += 2;
    }
  }
  return true;
}

}  // namespace detail

/// Maximum-likelihood reconstruction with the Cholesky-form estimator
/// rho = T T^dagger / Tr(T T^dagger). Ascends the multinomial
/// log-likelihood with Adam; a proposed step that would lower the
/// log-likelihood is rejected and retried with a smaller rate, so the
/// likelihood over accepted iterations never decreases. Stops when the
/// relative change stays below cutoff_rel for cutoff_streak iterations.
inline MleResult mle_reconstruct(
    const std::vector<MeasurementSetting>& settings,
    const std::vector<std::vector<double>>& measured, int dim,
    const MleConfig& cfg = {}) {
  if (settings.empty()) throw ConfigError("mle_reconstruct: no settings");
  if (measured.size() != settings.size()) {
    throw ConfigError("mle_reconstruct: settings/data count mismatch");
  }
  for (std::size_t s = 0; s < settings.size(); ++s) {
    if (settings[s].effect.cols() != dim) {
      throw ConfigError("mle_reconstruct: effect dimension mismatch");
    }
    if (static_cast<Eigen::Index>(measured[s].size()) !=
        settings[s].effect.rows()) {
      throw ConfigError("mle_reconstruct: distribution length mismatch");
    }
  }

  MleResult result;
  result.design_rank = design_rank(settings, dim);
  result.design_deficient = result.design_rank < dim * dim;

  const double scale =
      cfg.init_scale > 0.0 ? cfg.init_scale : 1.0 / std::sqrt(double(dim));
  CholeskyParam param = CholeskyParam::scaled_identity(dim, scale);
  if (cfg.linear_inversion_init) {
    CholeskyParam warm;
    if (detail::linear_inversion_start(settings, measured, dim, &warm)) {
      param = warm;
    }
  }
  const std::size_t n_free = param.x.size();

  AdamState adam = AdamState::init(n_free, cfg.adam);
  GradVector grad;
  grad.mask.assign(n_free, 1);

  Eigen::MatrixXcd g(dim, dim);
  double ll = detail::mle_loglik(settings, measured, param.lower(), &g);
  if (!std::isfinite(ll)) {
    param = CholeskyParam::scaled_identity(dim, scale);
    ll = detail::mle_loglik(settings, measured, param.lower(), &g);
  }
  result.loglik.push_back(ll);

  // Scheduled rate decays once per accepted iteration; a rejected proposal
  // retries the same direction at half the rate (restoring the moments), so
  // accepted likelihoods never decrease and progress resumes at the
  // scheduled rate afterwards.
  double lr_sched = cfg.adam.lr0;
  double lr_try = lr_sched;
  int flat_streak = 0;
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    ++result.iterations;
    detail::pack_grad(g, grad.values);
    for (double& gv : grad.values) gv = -gv;  // Adam descends; we ascend ll
    const CholeskyParam saved = param;
    const AdamState saved_adam = adam;
    adam.lr = lr_try;
    adam_step(adam, param.x, grad, cfg.adam);

    Eigen::MatrixXcd g_next(dim, dim);
    double ll_next;
    try {
      ll_next = detail::mle_loglik(settings, measured, param.lower(), &g_next);
    } catch (const NumericError&) {
      ll_next = -std::numeric_limits<double>::infinity();
    }
    if (!(ll_next >= ll - 1e-12)) {
      param = saved;
      adam = saved_adam;
      lr_try *= 0.5;
      if (lr_try < 1e-16) break;
      continue;
    }
    const double rel =
        std::abs(ll_next - ll) / std::max(1.0, std::abs(ll_next));
    flat_streak = (rel < cfg.cutoff_rel) ? flat_streak + 1 : 0;
    ll = ll_next;
    g = g_next;
    result.loglik.push_back(ll);
    lr_sched *= cfg.adam.lr_decay;
    lr_try = lr_sched;
    if (flat_streak >= cfg.cutoff_streak) break;
  }

  result.rho = param.rho();
  return result;
}

/// Predicted renormalized distribution of one setting for a given state.
inline std::vector<double> predicted_distribution(
    const MeasurementSetting& setting, const Eigen::MatrixXcd& rho) {
  const Eigen::MatrixXcd m = setting.effect * rho * setting.effect.adjoint();
  std::vector<double> p(m.rows());
  double total = 0.0;
  for (Eigen::Index v = 0; v < m.rows(); ++v) {
    p[v] = std::max(0.0, m(v, v).real());
    total += p[v];
  }
  if (!(total > 0.0)) {
    throw NumericError("predicted_distribution: zero total weight");
  }
  for (double& x : p) x /= total;
  return p;
}

}  // namespace photocal
