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

#include <catch2/catch_amalgamated.hpp>

#include "photocal/data.hpp"
#include "photocal/metrics.hpp"
#include "photocal/tomo.hpp"
#include "test_helpers.hpp"

using namespace photocal;
using photocal::testing::random_params;

namespace {

std::vector<std::vector<double>> random_settings(const MeshSection& sec,
                                                 int count, Rng& rng) {
  std::vector<std::vector<double>> settings(count);
  for (auto& s : settings) {
    s.resize(sec.ps_count);
    for (double& c : s) c = rng.uniform(0.0, 7.0);
  }
  return settings;
}

// Embeds a support-space state into the full mode space.
CVector embed(const CircuitSpec& spec, const std::vector<int>& support,
              const Eigen::VectorXcd& psi) {
  CVector full(spec.mode_count, Complex(0, 0));
  for (std::size_t j = 0; j < support.size(); ++j) full[support[j]] = psi(j);
  return full;
}

}  // namespace

TEST_CASE("mesh splitting") {
  const CircuitSpec spec = build_qw_mesh(12);
  SECTION("depth nine gives the 45/33 split") {
    const auto [dyn, meas] = split_mesh(spec, 9);
    REQUIRE(dyn.bs_count == 45);
    REQUIRE(meas.bs_count == 33);
    REQUIRE(dyn.ps_count == 45);   // layers 1..9 all carry shifters
    REQUIRE(meas.ps_count == 21);  // layers 10 and 11
    REQUIRE(dyn.bs_base == 0);
    REQUIRE(meas.bs_base == 45);
    REQUIRE(meas.ps_base == 45);
    REQUIRE(meas.first_layer == 10);
  }
  SECTION("depth T-1 leaves a single measurement layer") {
    const auto [dyn, meas] = split_mesh(spec, 11);
    REQUIRE(meas.layers.size() == 1);
    REQUIRE(meas.ps_count == 0);
  }
  SECTION("invalid depths are rejected") {
    REQUIRE_THROWS_AS(split_mesh(spec, 0), ConfigError);
    REQUIRE_THROWS_AS(split_mesh(spec, 12), ConfigError);
  }
  SECTION("sections compose back to the full network") {
    const CircuitSpec small = build_qw_mesh(5);
    const auto [dyn, meas] = split_mesh(small, 3);
    Rng rng(3);
    const Parameters params = random_params(small, rng);
    std::vector<double> currents(small.ps_count);
    for (double& c : currents) c = rng.uniform(0.0, 7.0);
    const CVector direct =
        evolve(small, params, currents, localized_input(small));
    std::vector<double> dyn_currents(currents.begin(),
                                     currents.begin() + dyn.ps_count);
    std::vector<double> meas_currents(currents.begin() + dyn.ps_count,
                                      currents.end());
    const CVector mid =
        section_evolve(dyn, params, dyn_currents, localized_input(small));
    const CVector composed = section_evolve(meas, params, meas_currents, mid);
    for (int m = 0; m < small.mode_count; ++m) {
      REQUIRE_THAT(std::abs(composed[m] - direct[m]),
                   Catch::Matchers::WithinAbs(0.0, 1e-14));
    }
  }
}

TEST_CASE("light cone modes") {
  const CircuitSpec spec = build_qw_mesh(12);
  const std::vector<int> modes = light_cone_modes(spec, 9);
  REQUIRE(modes.size() == 18);
  REQUIRE(modes.front() == 3);
  REQUIRE(modes.back() == 20);
}

TEST_CASE("effect maps") {
  const CircuitSpec spec = build_qw_mesh(12);
  Rng rng(21);
  const Parameters params = random_params(spec, rng);
  const auto [dyn, meas] = split_mesh(spec, 9);

  SECTION("fourteen settings give fourteen 20x18 maps") {
    const auto settings = random_settings(meas, 14, rng);
    const auto effects = build_effects(spec, meas, params, settings);
    REQUIRE(effects.size() == 14);
    for (const auto& e : effects) {
      REQUIRE(e.effect.rows() == 20);
      REQUIRE(e.effect.cols() == 18);
    }
  }
  SECTION("effect row norms are bounded by the efficiency budget") {
    const auto effects =
        build_effects(spec, meas, params, random_settings(meas, 3, rng));
    double alpha_budget = 1.0;
    for (const Layer& layer : meas.layers) {
      double worst = 0.0;
      for (const Unit& u : layer.units) {
        worst = std::max(worst, params.alpha[u.bs_index]);
      }
      alpha_budget *= worst;
    }
    const double eta_max =
        *std::max_element(params.eta.begin(), params.eta.end());
    for (const auto& e : effects) {
      for (Eigen::Index v = 0; v < e.effect.rows(); ++v) {
        REQUIRE(e.effect.row(v).squaredNorm() <=
                eta_max * alpha_budget + 1e-12);
      }
    }
  }
  SECTION("a straight-through section gives weighted projectors") {
    const CircuitSpec small = build_qw_mesh(4);
    const auto [dyn_s, meas_s] = split_mesh(small, 3);
    Parameters p = Parameters::ideal(small);
    for (double& t : p.theta) t = 0.0;  // every splitter passes straight
    Rng eta_rng(5);
    for (double& e : p.eta) e = eta_rng.uniform(0.8, 1.2);
    const std::vector<std::vector<double>> zero = {
        std::vector<double>(meas_s.ps_count, 0.0)};
    const auto effects = build_effects(small, meas_s, p, zero);
    const std::vector<int> support = light_cone_modes(small, 3);
    const std::vector<int> ports = small.active_ports();
    for (std::size_t v = 0; v < ports.size(); ++v) {
      for (std::size_t j = 0; j < support.size(); ++j) {
        const double expected =
            (support[j] == ports[v]) ? std::sqrt(p.eta[v]) : 0.0;
        REQUIRE_THAT(std::abs(effects[0].effect(v, j)),
                     Catch::Matchers::WithinAbs(expected, 1e-12));
      }
    }
  }
  SECTION("the 14-setting design at depth nine cannot reach full rank") {
    const auto effects =
        build_effects(spec, meas, params, random_settings(meas, 14, rng));
    const int rank = design_rank(effects, 18);
    REQUIRE(rank <= 14 * 20);
    REQUIRE(rank < 18 * 18);  // 280 rows can never span 324 dimensions
  }
}

TEST_CASE("cholesky parameterization") {
  SECTION("single nonzero diagonal entry is a basis projector") {
    CholeskyParam p = CholeskyParam::scaled_identity(3, 0.0);
    p.x[0] = 0.7;
    const Eigen::MatrixXcd rho = p.rho();
    REQUIRE(rho(0, 0) == Complex(1.0, 0.0));
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != 0 || j != 0) REQUIRE(rho(i, j) == Complex(0.0, 0.0));
      }
    }
  }
  SECTION("any nonzero parameter vector gives a valid density matrix") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
      CholeskyParam p;
      p.dim = 4;
      p.x.resize(16);
      for (double& x : p.x) x = rng.gaussian(1.0);
      const Eigen::MatrixXcd rho = p.rho();
      REQUIRE_NOTHROW(DensityMatrix(rho));
    }
  }
  SECTION("zero parameterization is rejected") {
    const CholeskyParam p = CholeskyParam::scaled_identity(3, 0.0);
    REQUIRE_THROWS_AS(p.rho(), NumericError);
  }
}

TEST_CASE("likelihood gradient matches finite differences") {
  Rng rng(404);
  const int dim = 3;
  const int n_ports = 5;
  std::vector<MeasurementSetting> settings(4);
  std::vector<std::vector<double>> data(4);
  for (auto& s : settings) {
    s.effect.resize(n_ports, dim);
    for (Eigen::Index v = 0; v < n_ports; ++v) {
      for (Eigen::Index j = 0; j < dim; ++j) {
        s.effect(v, j) = Complex(rng.gaussian(1.0), rng.gaussian(1.0));
      }
    }
  }
  for (auto& d : data) {
    d.resize(n_ports);
    double total = 0.0;
    for (double& x : d) {
      x = rng.uniform(0.01, 1.0);
      total += x;
    }
    for (double& x : d) x /= total;
  }
  CholeskyParam param = CholeskyParam::scaled_identity(dim, 0.6);
  for (std::size_t k = dim; k < param.x.size(); ++k) {
    param.x[k] = 0.1 * rng.gaussian(1.0);
  }
  Eigen::MatrixXcd g(dim, dim);
  detail::mle_loglik(settings, data, param.lower(), &g);
  std::vector<double> analytic;
  detail::pack_grad(g, analytic);
  const double h = 1e-6;
  for (std::size_t k = 0; k < param.x.size(); ++k) {
    CholeskyParam up = param, down = param;
    up.x[k] += h;
    down.x[k] -= h;
    const double fd = (detail::mle_loglik(settings, data, up.lower(), nullptr) -
                       detail::mle_loglik(settings, data, down.lower(),
                                          nullptr)) /
                      (2 * h);
    REQUIRE_THAT(analytic[k], Catch::Matchers::WithinAbs(fd, 1e-5));
  }
}

TEST_CASE("maximum-likelihood reconstruction") {
  SECTION("qubit from complete projective data") {
    // state (|0> + i|1>)/sqrt(2); measurements in the Z, X and Y bases
    Eigen::Vector2cd psi;
    psi << Complex(1 / std::sqrt(2.0), 0), Complex(0, 1 / std::sqrt(2.0));
    std::vector<Eigen::Matrix2cd> bases(3);
    bases[0] << 1, 0, 0, 1;  // Z rows: <0|, <1|
    bases[1] << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 1 / std::sqrt(2.0),
        -1 / std::sqrt(2.0);  // X rows
    bases[2] << 1 / std::sqrt(2.0), Complex(0, -1 / std::sqrt(2.0)),
        1 / std::sqrt(2.0), Complex(0, 1 / std::sqrt(2.0));  // Y rows
    std::vector<MeasurementSetting> settings;
    std::vector<std::vector<double>> data;
    for (const auto& basis : bases) {
      MeasurementSetting ms;
      ms.effect = basis;
      settings.push_back(ms);
      const Eigen::Vector2cd amps = basis * psi;
      data.push_back({std::norm(amps(0)), std::norm(amps(1))});
    }
    const MleResult result = mle_reconstruct(settings, data, 2);
    REQUIRE_FALSE(result.design_deficient);
    CVector truth{psi(0), psi(1)};
    const double inf = infidelity(DensityMatrix::from_pure(truth),
                                  DensityMatrix(result.rho));
    REQUIRE(inf < 1e-6);
  }
  SECTION("log-likelihood never decreases over accepted iterations") {
    Rng rng(17);
    const int dim = 4;
    std::vector<MeasurementSetting> settings(6);
    std::vector<std::vector<double>> data(6);
    for (auto& s : settings) {
      s.effect.resize(6, dim);
      for (Eigen::Index v = 0; v < 6; ++v) {
        for (Eigen::Index j = 0; j < dim; ++j) {
          s.effect(v, j) = Complex(rng.gaussian(1.0), rng.gaussian(1.0));
        }
      }
    }
    for (auto& d : data) {
      d.resize(6);
      double total = 0.0;
      for (double& x : d) {
        x = rng.uniform(0.0, 1.0);
        total += x;
      }
      for (double& x : d) x /= total;
    }
    const MleResult result = mle_reconstruct(settings, data, dim);
    for (std::size_t i = 1; i < result.loglik.size(); ++i) {
      REQUIRE(result.loglik[i] >= result.loglik[i - 1] - 1e-12);
    }
    REQUIRE_NOTHROW(DensityMatrix(result.rho));
  }
  SECTION("noiseless reconstruction from an informationally complete design") {
    Rng rng(2029);
    for (int dim : {4, 6}) {
      double worst = 0.0;
      for (int trial = 0; trial < 5; ++trial) {
        CVector psi_std(dim);
        double n2 = 0.0;
        for (auto& a : psi_std) {
          a = Complex(rng.gaussian(1.0), rng.gaussian(1.0));
          n2 += std::norm(a);
        }
        Eigen::VectorXcd psi(dim);
        for (int i = 0; i < dim; ++i) psi(i) = psi_std[i] / std::sqrt(n2);
        const Eigen::MatrixXcd rho_true = psi * psi.adjoint();
        std::vector<MeasurementSetting> settings(2 * dim);
        std::vector<std::vector<double>> data;
        for (auto& s : settings) {
          s.effect.resize(dim + 1, dim);
          for (Eigen::Index r = 0; r < s.effect.rows(); ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
              s.effect(r, c) =
                  0.4 * Complex(rng.gaussian(1.0), rng.gaussian(1.0));
            }
          }
          data.push_back(predicted_distribution(s, rho_true));
        }
        const MleResult result = mle_reconstruct(settings, data, dim);
        REQUIRE_FALSE(result.design_deficient);
        worst = std::max(worst, infidelity(DensityMatrix(rho_true),
                                           DensityMatrix(result.rho)));
      }
      INFO("dim=" << dim << " worst " << worst);
      REQUIRE(worst < 1e-5);
    }
  }
  SECTION("mesh sections at small depth are honestly flagged deficient") {
    // The depth-limited measurement section cannot span the operator space:
    // the reconstruction stays a valid state and the likelihood ascends, but
    // the result carries the deficiency flag.
    const CircuitSpec spec = build_qw_mesh(4);
    Rng rng(2030);
    const Parameters params = random_params(spec, rng);
    const auto [dyn, meas] = split_mesh(spec, 2);
    const std::vector<int> support = light_cone_modes(spec, 2);
    std::vector<double> dyn_currents(dyn.ps_count);
    for (double& c : dyn_currents) c = rng.uniform(0.0, 7.0);
    const CVector mid =
        section_evolve(dyn, params, dyn_currents, localized_input(spec));
    Eigen::VectorXcd psi(support.size());
    for (std::size_t j = 0; j < support.size(); ++j) psi(j) = mid[support[j]];
    psi.normalize();
    const auto effects =
        build_effects(spec, meas, params, random_settings(meas, 12, rng));
    std::vector<std::vector<double>> data;
    const Eigen::MatrixXcd rho_true = psi * psi.adjoint();
    for (const auto& e : effects) {
      data.push_back(predicted_distribution(e, rho_true));
    }
    const MleResult result =
        mle_reconstruct(effects, data, static_cast<int>(support.size()));
    REQUIRE(result.design_deficient);
    REQUIRE_NOTHROW(DensityMatrix(result.rho));
    for (std::size_t i = 1; i < result.loglik.size(); ++i) {
      REQUIRE(result.loglik[i] >= result.loglik[i - 1] - 1e-12);
    }
    // the measured functionals themselves are approximated to the
    // optimizer's terminal resolution
    for (std::size_t s = 0; s < effects.size(); ++s) {
      const std::vector<double> fit =
          predicted_distribution(effects[s], result.rho);
      REQUIRE(l1_distance(fit, data[s]) < 5e-2);
    }
  }
}
