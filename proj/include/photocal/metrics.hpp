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
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "photocal/data.hpp"
#include "photocal/forward.hpp"
#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

/// Hermitian, positive-semidefinite, trace-one complex matrix. Validation
/// tolerances admit near-PSD numerical inputs (clipped later where square
/// roots are taken).
class DensityMatrix {
 public:
  explicit DensityMatrix(Eigen::MatrixXcd m, double tol = 1e-10)
      : mat_(std::move(m)) {
    if (mat_.rows() != mat_.cols() || mat_.rows() == 0) {
      throw ConfigError("DensityMatrix: matrix must be square");
    }
    if ((mat_ - mat_.adjoint()).cwiseAbs().maxCoeff() > tol) {
      throw NumericError("DensityMatrix: not Hermitian within tolerance");
    }
    mat_ = 0.5 * (mat_ + mat_.adjoint().eval());
    if (std::abs(mat_.trace().real() - 1.0) > tol ||
        std::abs(mat_.trace().imag()) > tol) {
      throw NumericError("DensityMatrix: trace differs from one");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(mat_,
                                                       Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) {
      throw NumericError("DensityMatrix: negative eigenvalue beyond tolerance");
    }
  }

  /// rho = psi psi^dagger / |psi|^2 for a (possibly subnormalized) pure state.
  static DensityMatrix from_pure(const CVector& psi) {
    const auto d = static_cast<Eigen::Index>(psi.size());
    Eigen::VectorXcd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = psi[i];
    const double n2 = v.squaredNorm();
    if (!(n2 > 0.0)) throw NumericError("from_pure: zero state");
    Eigen::MatrixXcd rho = (v * v.adjoint()) / n2;
    return DensityMatrix(std::move(rho));
  }

  const Eigen::MatrixXcd& matrix() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

  /// Tr(rho^2), accumulated with compensated summation: for pure states the
  /// result sits at the double-precision floor and naive accumulation would
  /// dominate the reported purity error.
  double purity() const {
    NeumaierSum sum;
    for (Eigen::Index i = 0; i < mat_.rows(); ++i) {
      for (Eigen::Index j = 0; j < mat_.cols(); ++j) {
        sum.add(std::norm(mat_(i, j)));
      }
    }
    return sum.value();
  }

 private:
  Eigen::MatrixXcd mat_;
};

/// (1/2) * sum |p_v - q_v| over two distributions of equal length.
inline double l1_distance(const std::vector<double>& p,
                          const std::vector<double>& q) {
  if (p.size() != q.size()) throw ConfigError("l1_distance: length mismatch");
  double d = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) d += std::abs(p[v] - q[v]);
  return 0.5 * d;
}

namespace detail {

// Eigenvalues below the numerical-noise floor of a Hermitian
// eigendecomposition. Square roots amplify that noise (sqrt(1e-17) ~ 3e-9),
// so rank-deficient inputs need the junk clipped, not just negatives.
inline double eigen_clip(const Eigen::VectorXd& vals, Eigen::Index dim) {
  return std::max(1e-14, vals.cwiseAbs().maxCoeff() *
                             static_cast<double>(dim) * 2.3e-16);
}

// Hermitian square root with sub-noise eigenvalues clipped to zero.
inline Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  Eigen::VectorXd vals = es.eigenvalues();
  const double clip = eigen_clip(vals, m.rows());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    vals(i) = vals(i) > clip ? std::sqrt(vals(i)) : 0.0;
  }
  return es.eigenvectors() * vals.asDiagonal() *
         es.eigenvectors().adjoint();
}

}  // namespace detail

/// Uhlmann-type infidelity 1 - Tr sqrt(sqrt(rho_tar) rho sqrt(rho_tar)).
/// For pure states this reduces to 1 - |<psi_tar|psi>|.
inline double infidelity(const DensityMatrix& rho_tar,
                         const DensityMatrix& rho) {
  if (rho_tar.dim() != rho.dim()) {
    throw ConfigError("infidelity: dimension mismatch");
  }
  const Eigen::MatrixXcd root = detail::psd_sqrt(rho_tar.matrix());
  Eigen::MatrixXcd inner = root * rho.matrix() * root;
  inner = 0.5 * (inner + inner.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(inner,
                                                     Eigen::EigenvaluesOnly);
  const double clip = detail::eigen_clip(es.eigenvalues(), inner.rows());
  double fidelity = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double v = es.eigenvalues()(i);
    if (v > clip) fidelity += std::sqrt(v);
  }
  return 1.0 - fidelity;
}

/// |Tr rho1^2 - Tr rho2^2|.
inline double purity_error(const DensityMatrix& rho1,
                           const DensityMatrix& rho2) {
  if (rho1.dim() != rho2.dim()) {
    throw ConfigError("purity_error: dimension mismatch");
  }
  return std::abs(rho1.purity() - rho2.purity());
}

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
};

inline Histogram make_histogram(const std::vector<double>& values, int bins) {
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) return h;
  h.lo = *std::min_element(values.begin(), values.end());
  h.hi = *std::max_element(values.begin(), values.end());
  if (h.hi <= h.lo) h.hi = h.lo + 1e-300;
  for (double v : values) {
    int bin = static_cast<int>((v - h.lo) / (h.hi - h.lo) *
                               static_cast<double>(bins));
    bin = std::clamp(bin, 0, bins - 1);
    ++h.counts[bin];
  }
  return h;
}

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;
  double median = 0.0;
  double max = 0.0;
};

inline SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / n);
  std::sort(values.begin(), values.end());
  s.median = values[values.size() / 2];
  s.max = values.back();
  return s;
}

/// Per-sample evaluation of a fitted parameter set against a test set.
/// State-level metrics (infidelity, purity error of the normalized output
/// states) are filled in only when the generating parameters are known.
struct MetricReport {
  std::vector<double> l1;
  std::vector<double> infid;
  std::vector<double> purity_err;
  SummaryStats l1_stats, infid_stats, purity_stats;
  Histogram l1_hist, infid_hist, purity_hist;
  bool has_state_metrics = false;
};

/// Per-sample evaluation. When `phase_profile` is given (one angle per
/// mode), the estimate's output states are rotated by diag(e^{-i xi})
/// first: state metrics are then reported in the reference's gauge.
inline MetricReport evaluate(const CircuitSpec& spec,
                             const Parameters& params_hat,
                             const Parameters* params_tar,
                             const Dataset& test, const CVector& psi_in,
                             int bins = 30,
                             const std::vector<double>* phase_profile = nullptr) {
  if (test.samples.empty()) throw ConfigError("evaluate: empty test set");
  check_dimensions(spec, params_hat);
  if (params_tar) check_dimensions(spec, *params_tar);
  if (phase_profile &&
      phase_profile->size() != static_cast<std::size_t>(spec.mode_count)) {
    throw ConfigError("evaluate: phase profile length mismatch");
  }
  MetricReport report;
  report.has_state_metrics = params_tar != nullptr;
  for (const Sample& s : test.samples) {
    const std::vector<double> predicted =
        output_distribution(spec, params_hat, s.currents, psi_in);
    report.l1.push_back(l1_distance(predicted, s.probabilities));
    if (params_tar) {
      CVector hat = evolve(spec, params_hat, s.currents, psi_in);
      if (phase_profile) {
        for (int m = 0; m < spec.mode_count; ++m) {
          hat[m] *= std::polar(1.0, -(*phase_profile)[m]);
        }
      }
      const DensityMatrix rho_hat = DensityMatrix::from_pure(hat);
      const DensityMatrix rho_tar = DensityMatrix::from_pure(
          evolve(spec, *params_tar, s.currents, psi_in));
      report.infid.push_back(infidelity(rho_tar, rho_hat));
      report.purity_err.push_back(purity_error(rho_hat, rho_tar));
    }
  }
  report.l1_stats = summarize(report.l1);
  report.l1_hist = make_histogram(report.l1, bins);
  if (params_tar) {
    report.infid_stats = summarize(report.infid);
    report.infid_hist = make_histogram(report.infid, bins);
    report.purity_stats = summarize(report.purity_err);
    report.purity_hist = make_histogram(report.purity_err, bins);
  }
  return report;
}

inline nlohmann::json histogram_to_json(const Histogram& h) {
  return nlohmann::json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline nlohmann::json stats_to_json(const SummaryStats& s) {
  return nlohmann::json{{"mean", s.mean},
                        {"stddev", s.stddev},
                        {"median", s.median},
                        {"max", s.max}};
}

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j{{"format", "photocal-metrics v1"},
                   {"l1", r.l1},
                   {"l1_stats", stats_to_json(r.l1_stats)},
                   {"l1_histogram", histogram_to_json(r.l1_hist)}};
  if (r.has_state_metrics) {
    j["infidelity"] = r.infid;
    j["infidelity_stats"] = stats_to_json(r.infid_stats);
    j["infidelity_histogram"] = histogram_to_json(r.infid_hist);
    j["purity_error"] = r.purity_err;
    j["purity_error_stats"] = stats_to_json(r.purity_stats);
    j["purity_error_histogram"] = histogram_to_json(r.purity_hist);
  }
  return j;
}

}  // namespace photocal
