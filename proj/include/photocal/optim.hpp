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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "photocal/forward.hpp"
#include "photocal/grad.hpp"
#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

struct AdamConfig {
  double lr0 = 0.01;
  double lr_decay = 0.99;  // multiplicative, applied once per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  long step = 0;
  double lr = 0.0;
  std::vector<double> m;
  std::vector<double> v;

  static AdamState init(std::size_t dim, const AdamConfig& cfg) {
    AdamState st;
    st.lr = cfg.lr0;
    st.m.assign(dim, 0.0);
    st.v.assign(dim, 0.0);
    return st;
  }
};

/// One bias-corrected Adam update on the unmasked coordinates. Masked
/// coordinates are untouched, moments included, so a frozen parameter is
/// bit-identical across a phase. lr_scale, when nonempty, multiplies the
/// step size per coordinate (used to train parameters whose natural units
/// differ, such as the phase-current coefficient).
inline void adam_step(AdamState& st, std::vector<double>& params,
                      const GradVector& grad, const AdamConfig& cfg,
                      const std::vector<double>& lr_scale = {}) {
  if (params.size() != grad.values.size() ||
      params.size() != grad.mask.size() || params.size() != st.m.size()) {
    throw ConfigError("adam_step: dimension mismatch");
  }
  if (!lr_scale.empty() && lr_scale.size() != params.size()) {
    throw ConfigError("adam_step: lr_scale dimension mismatch");
  }
  for (double g : grad.values) {
    if (!std::isfinite(g)) {
      throw NumericError("adam_step: non-finite gradient entry");
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!grad.mask[k]) continue;
    const double g = grad.values[k];
    st.m[k] = cfg.beta1 * st.m[k] + (1.0 - cfg.beta1) * g;
    st.v[k] = cfg.beta2 * st.v[k] + (1.0 - cfg.beta2) * g * g;
    const double mhat = st.m[k] / bc1;
    const double vhat = st.v[k] / bc2;
    const double scale = lr_scale.empty() ? 1.0 : lr_scale[k];
    params[k] -= st.lr * scale * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

/// True iff the last `streak` adjacent loss decreases L_{e-1} - L_e each lie
/// in [0, threshold).
inline bool cutoff_met(const std::vector<double>& history, double threshold,
                       int streak) {
  if (static_cast<int>(history.size()) < streak + 1) return false;
  const std::size_t n = history.size();
  for (int i = 0; i < streak; ++i) {
    const double drop = history[n - 2 - i] - history[n - 1 - i];
    if (!(drop >= 0.0 && drop < threshold)) return false;
  }
  return true;
}

// Parameter-group bits for the phase list.
enum : unsigned {
  kGroupA = 1u << 0,
  kGroupB = 1u << 1,
  kGroupTheta = 1u << 2,
  kGroupAlpha = 1u << 3,
  kGroupEta = 1u << 4,
  kGroupAll = kGroupA | kGroupB | kGroupTheta | kGroupAlpha | kGroupEta,
};

struct Phase {
  std::string name;
  unsigned groups = 0;
  int batch_size = -1;  // -1: TrainConfig's; 0: full batch; else minibatch
};

/// The nonsimultaneous update plan: eta stays trainable throughout, theta
/// and alpha are frozen at first, b and a alternate for `rounds` rounds,
/// then theta+alpha train, then everything fine-tunes jointly. The phase
/// offsets go first within each round: they start far from truth while the
/// quadratic coefficients start at their empirical value, and fitting a
/// against wrong offsets only corrupts it.
inline std::vector<Phase> default_phases(int rounds) {
  std::vector<Phase> phases;
  for (int r = 1; r <= rounds; ++r) {
    phases.push_back(
        {"round" + std::to_string(r) + "-b", kGroupB | kGroupEta, -1});
    phases.push_back(
        {"round" + std::to_string(r) + "-a", kGroupA | kGroupEta, -1});
  }
  // Once the phase offsets sit in the right basin the remaining landscape
  // is smooth; the tail phases run full batch so the polish is free of
  // sampling jitter and fully deterministic descent.
  phases.push_back({"theta-alpha", kGroupTheta | kGroupAlpha | kGroupEta, 0});
  phases.push_back({"joint", kGroupAll, 0});
  return phases;
}

struct ScheduleConfig {
  int alternation_rounds = 8;
  double cutoff_threshold = 1e-5;
  int cutoff_streak = 5;
  int max_epochs = 2000;  // per phase, safety bound
  // Each phase starts a fresh optimizer (moments and learning-rate
  // schedule); a single decaying schedule would leave later phases with no
  // step budget (sum lr0 * decay^e = 1 total movement per coordinate).
  bool fresh_optimizer_per_phase = true;
  std::vector<Phase> phases;  // empty -> default_phases(alternation_rounds)
};

struct TrainConfig {
  AdamConfig adam;
  LossKind loss_kind = LossKind::kL1Sum;
  bool mean_reduction = false;  // divide minibatch loss/grad by its size
  int threads = 1;              // used by full-batch evaluation only
  // Updates per epoch: each epoch is one shuffled pass over the training
  // set in minibatches of this size (0 = single full-batch step). The
  // default per-sample updates supply the stochasticity that carries the
  // phase offsets b across the glassy region around the ideal-chip start;
  // full-batch descent freezes into a local minimum there.
  int batch_size = 1;
  std::uint64_t shuffle_seed = 1;
  // The phase of shifter k responds to its coefficient a_k as I^2 (tens of
  // rad per unit a); training a in normalized-current units keeps one
  // global learning rate meaningful for both phase-law parameters.
  double current_normalization = 7.0;
};

struct PhaseRecord {
  std::string name;
  std::size_t start_epoch = 0;  // index into loss_history
  int epochs = 0;
  bool hit_max_epochs = false;
};

struct CalibrationResult {
  Parameters raw;
  Parameters canonical;
  std::vector<double> loss_history;  // one entry per epoch
  std::vector<PhaseRecord> phases;
  double final_loss = 0.0;
};

/// Gauge-fixed report copy: b wrapped to [-pi, pi), theta folded into
/// [0, pi/2] preserving the reflectivity sin^2(theta), alpha and eta
/// rescaled to geometric mean 1. All predicted distributions are unchanged.
inline Parameters canonicalize_parameters(const CircuitSpec& spec,
                                          const Parameters& params) {
  check_dimensions(spec, params);
  Parameters out = params;
  for (double& b : out.b) b = wrap_to_pi(b);
  for (double& t : out.theta) {
    t = std::asin(std::min(1.0, std::abs(std::sin(t))));
  }
  auto geo_fix = [](std::vector<double>& xs) {
    if (xs.empty()) return;
    double log_sum = 0.0;
    for (double x : xs) {
      if (!(x > 0.0)) {
        throw NumericError("canonicalize_parameters: nonpositive efficiency");
      }
      log_sum += std::log(x);
    }
    const double g = std::exp(log_sum / static_cast<double>(xs.size()));
    for (double& x : xs) x /= g;
  };
  geo_fix(out.alpha);
  geo_fix(out.eta);
  return out;
}

inline Mask mask_for_groups(const ParamLayout& layout, unsigned groups) {
  Mask mask(layout.total(), 0);
  for (int k = 0; k < layout.total(); ++k) {
    switch (layout.group_of(k)) {
      case ParamGroup::kA: mask[k] = (groups & kGroupA) ? 1 : 0; break;
      case ParamGroup::kB: mask[k] = (groups & kGroupB) ? 1 : 0; break;
      case ParamGroup::kTheta: mask[k] = (groups & kGroupTheta) ? 1 : 0; break;
      case ParamGroup::kAlpha: mask[k] = (groups & kGroupAlpha) ? 1 : 0; break;
      case ParamGroup::kEta: mask[k] = (groups & kGroupEta) ? 1 : 0; break;
    }
  }
  return mask;
}

/// Runs the full training schedule on the training set. Each epoch is one
/// shuffled pass over the samples; the recorded epoch loss is the running
/// sum of minibatch losses. A phase ends at the cut-off condition or at the
/// per-phase epoch bound. Fully deterministic for a given config.
inline CalibrationResult run_schedule(const CircuitSpec& spec,
                                      const std::vector<Sample>& train,
                                      const TrainConfig& train_cfg,
                                      const ScheduleConfig& sched,
                                      const Parameters& init_params,
                                      const CVector& psi_in) {
  if (train.empty()) throw ConfigError("run_schedule: empty training set");
  check_dimensions(spec, init_params);
  detail::check_batch(spec, train);
  const ParamLayout layout(spec);
  const int dim = layout.total();
  std::vector<double> flat = layout.flatten(init_params);
  Parameters work = init_params;

  std::vector<double> lr_scale(dim, 1.0);
  {
    const double imax = train_cfg.current_normalization;
    if (!(imax > 0.0)) {
      throw ConfigError("run_schedule: current_normalization must be > 0");
    }
    for (int k = layout.offset_a(); k < layout.offset_b(); ++k) {
      lr_scale[k] = 1.0 / (imax * imax);
    }
  }

  const std::vector<Phase> phases =
      sched.phases.empty() ? default_phases(sched.alternation_rounds)
                           : sched.phases;

  auto sync_work = [&] {
    std::copy(flat.begin(), flat.begin() + layout.n_ps, work.a.begin());
    std::copy(flat.begin() + layout.offset_b(),
              flat.begin() + layout.offset_theta(), work.b.begin());
    std::copy(flat.begin() + layout.offset_theta(),
              flat.begin() + layout.offset_alpha(), work.theta.begin());
    std::copy(flat.begin() + layout.offset_alpha(),
              flat.begin() + layout.offset_eta(), work.alpha.begin());
    std::copy(flat.begin() + layout.offset_eta(), flat.end(),
              work.eta.begin());
  };
  constexpr double kEfficiencyFloor = 1e-6;
  auto project_positive = [&] {
    // alpha and eta are physical efficiencies; keep them positive when
    // noise-dominated coordinates wander
    for (int k = layout.offset_alpha(); k < dim; ++k) {
      if (flat[k] < kEfficiencyFloor) flat[k] = kEfficiencyFloor;
    }
  };

  CalibrationResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t global_epoch = 0;

  AdamState adam = AdamState::init(flat.size(), train_cfg.adam);
  GradVector grad;
  grad.values.assign(dim, 0.0);

  for (const Phase& phase : phases) {
    if (sched.fresh_optimizer_per_phase) {
      adam = AdamState::init(flat.size(), train_cfg.adam);
    }
    grad.mask = mask_for_groups(layout, phase.groups);
    const int phase_batch =
        phase.batch_size < 0 ? train_cfg.batch_size : phase.batch_size;
    const std::size_t batch =
        phase_batch <= 0 ? train.size() : static_cast<std::size_t>(phase_batch);
    PhaseRecord record;
    record.name = phase.name;
    record.start_epoch = result.loss_history.size();
    std::vector<double> phase_history;
    for (int epoch = 0; epoch < sched.max_epochs; ++epoch) {
      Rng shuffle(derive_seed(train_cfg.shuffle_seed, global_epoch));
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuffle.next_u64() % i);
        std::swap(order[i - 1], order[j]);
      }
      double epoch_loss = 0.0;
      if (phase_batch <= 0) {
        // full batch: one update per epoch through the block-parallel
        // evaluation (bit-identical for any thread count)
        auto [value, full_grad] = loss_and_grad(
            spec, work, train, psi_in, grad.mask, train_cfg.loss_kind,
            train_cfg.mean_reduction, train_cfg.threads);
        epoch_loss = value;
        adam_step(adam, flat, full_grad, train_cfg.adam, lr_scale);
        project_positive();
        sync_work();
      } else {
        for (std::size_t lo = 0; lo < order.size(); lo += batch) {
          const std::size_t hi = std::min(order.size(), lo + batch);
          double mb_loss = 0.0;
          std::fill(grad.values.begin(), grad.values.end(), 0.0);
          for (std::size_t i = lo; i < hi; ++i) {
            mb_loss += detail::sample_loss_and_grad(spec, work, layout,
                                                    train[order[i]], psi_in,
                                                    train_cfg.loss_kind,
                                                    grad.values.data());
          }
          if (train_cfg.mean_reduction) {
            const double inv = 1.0 / static_cast<double>(hi - lo);
            mb_loss *= inv;
            for (double& g : grad.values) g *= inv;
          }
          for (int k = 0; k < dim; ++k) {
            if (!grad.mask[k]) grad.values[k] = 0.0;
          }
          epoch_loss += mb_loss;
          adam_step(adam, flat, grad, train_cfg.adam, lr_scale);
          project_positive();
          sync_work();
        }
      }
      adam.lr *= train_cfg.adam.lr_decay;
      ++global_epoch;
      if (!std::isfinite(epoch_loss)) {
        throw NumericError("run_schedule: non-finite loss in phase '" +
                           phase.name + "', epoch " + std::to_string(epoch));
      }
      phase_history.push_back(epoch_loss);
      result.loss_history.push_back(epoch_loss);
      ++record.epochs;
      if (cutoff_met(phase_history, sched.cutoff_threshold,
                     sched.cutoff_streak)) {
        break;
      }
      if (epoch + 1 == sched.max_epochs) record.hit_max_epochs = true;
    }
    result.phases.push_back(std::move(record));
  }

  result.raw = layout.unflatten(flat);
  result.canonical = canonicalize_parameters(spec, result.raw);
  result.final_loss =
      loss(spec, result.raw, train, psi_in, train_cfg.loss_kind, false);
  return result;
}

}  // namespace photocal
