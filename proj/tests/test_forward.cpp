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

#include "photocal/forward.hpp"
#include "test_helpers.hpp"

using namespace photocal;
using photocal::testing::dense_transfer_oracle;
using photocal::testing::random_params;
using photocal::testing::to_eigen;

TEST_CASE("currents_to_phases evaluates the quadratic law") {
  REQUIRE(currents_to_phases({0.12}, {0.0}, {0.0})[0] == 0.0);
  REQUIRE_THAT(currents_to_phases({0.12}, {0.5}, {5.0})[0],
               Catch::Matchers::WithinAbs(3.5, 1e-15));
  REQUIRE_THAT(currents_to_phases({0.12}, {-kPi}, {7.0})[0],
               Catch::Matchers::WithinAbs(5.88 - kPi, 1e-12));
  REQUIRE_THROWS_AS(currents_to_phases({0.1, 0.2}, {0.0}, {1.0}), ConfigError);
}

TEST_CASE("apply_unit on a single pair") {
  SECTION("identity at theta = 0") {
    CVector psi{Complex(0.3, 0.1), Complex(-0.2, 0.7)};
    const CVector before = psi;
    apply_unit(psi, Unit{0, 0, -1}, 0.0, 1.0, std::nullopt);
    REQUIRE(psi[0] == before[0]);
    REQUIRE(psi[1] == before[1]);
  }
  SECTION("full cross at theta = pi/2") {
    CVector psi{Complex(0.3, 0.1), Complex(-0.2, 0.7)};
    const CVector before = psi;
    apply_unit(psi, Unit{0, 0, -1}, kPi / 2.0, 1.0, std::nullopt);
    REQUIRE_THAT(std::abs(psi[0] - before[1]),
                 Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(std::abs(psi[1] + before[0]),
                 Catch::Matchers::WithinAbs(0.0, 1e-15));
  }
  SECTION("lossy splitter followed by a pi shifter, against a 2x2 oracle") {
    // Oracle: diag{1, e^{i pi}} * (sqrt(0.81) * rotation(pi/4)) applied to
    // the basis input on the upper arm.
    Eigen::Matrix2cd bs;
    const double r = std::sqrt(0.81);
    bs << r / std::sqrt(2.0), r / std::sqrt(2.0), -r / std::sqrt(2.0),
        r / std::sqrt(2.0);
    Eigen::Matrix2cd ps = Eigen::Matrix2cd::Identity();
    ps(1, 1) = std::polar(1.0, kPi);
    const Eigen::Vector2cd expected = ps * bs * Eigen::Vector2cd(1.0, 0.0);
    // frozen oracle values: (0.9/sqrt(2), +0.9/sqrt(2))
    REQUIRE_THAT(expected(0).real(),
                 Catch::Matchers::WithinAbs(0.63639610306789274, 1e-15));
    REQUIRE_THAT(expected(1).real(),
                 Catch::Matchers::WithinAbs(0.63639610306789274, 1e-15));

    CVector psi{Complex(1.0, 0.0), Complex(0.0, 0.0)};
    apply_unit(psi, Unit{0, 0, 0}, kPi / 4.0, 0.81, kPi);
    REQUIRE_THAT(std::abs(psi[0] - expected(0)),
                 Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(std::abs(psi[1] - expected(1)),
                 Catch::Matchers::WithinAbs(0.0, 1e-15));
  }
  SECTION("nonpositive alpha is rejected") {
    CVector psi{Complex(1.0, 0.0), Complex(0.0, 0.0)};
    REQUIRE_THROWS_AS(apply_unit(psi, Unit{0, 0, -1}, 0.1, 0.0, std::nullopt),
                      NumericError);
  }
}

TEST_CASE("evolve through small meshes") {
  SECTION("single balanced splitter from the lower input") {
    const CircuitSpec spec = build_qw_mesh(1);
    const Parameters params = Parameters::ideal(spec);
    const CVector out = evolve(spec, params, {}, localized_input(spec));
    REQUIRE_THAT(out[0].real(),
                 Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
    REQUIRE_THAT(out[1].real(),
                 Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
  }
  SECTION("diagonal network leaves probabilities untouched") {
    const CircuitSpec spec = build_qw_mesh(4);
    Rng rng(101);
    Parameters params = random_params(spec, rng);
    for (double& t : params.theta) t = 0.0;
    for (double& a : params.alpha) a = 1.0;
    std::vector<double> currents(spec.ps_count);
    for (double& c : currents) c = rng.uniform(0.0, 7.0);
    const CVector out = evolve(spec, params, currents, localized_input(spec));
    for (int m = 0; m < spec.mode_count; ++m) {
      const double expected = (m == spec.input_mode) ? 1.0 : 0.0;
      REQUIRE_THAT(std::norm(out[m]),
                   Catch::Matchers::WithinAbs(expected, 1e-15));
    }
  }
  SECTION("norm is preserved when every alpha is one") {
    const CircuitSpec spec = build_qw_mesh(5);
    Rng rng(77);
    Parameters params = random_params(spec, rng);
    for (double& a : params.alpha) a = 1.0;
    std::vector<double> currents(spec.ps_count);
    for (double& c : currents) c = rng.uniform(0.0, 7.0);
    const CVector out = evolve(spec, params, currents, localized_input(spec));
    double n2 = 0.0;
    for (const Complex& amp : out) n2 += std::norm(amp);
    REQUIRE_THAT(n2, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("per-unit application equals the dense matrix oracle") {
  for (int T = 1; T <= 4; ++T) {
    Rng rng(1000 + T);
    const CircuitSpec spec = build_qw_mesh(T);
    const Parameters params = random_params(spec, rng);
    std::vector<double> currents(spec.ps_count);
    for (double& c : currents) c = rng.uniform(0.0, 7.0);
    const Eigen::MatrixXcd oracle = dense_transfer_oracle(spec, params, currents);
    const Eigen::MatrixXcd impl = transfer_matrix(spec, params, currents);
    REQUIRE((oracle - impl).cwiseAbs().maxCoeff() < 1e-12);
    const CVector out = evolve(spec, params, currents, localized_input(spec));
    const Eigen::VectorXcd expected =
        oracle * to_eigen(localized_input(spec));
    REQUIRE((to_eigen(out) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("transfer unitarity at unit transfer efficiency") {
  const CircuitSpec spec = build_qw_mesh(4);
  Rng rng(4242);
  Parameters params = random_params(spec, rng);
  for (double& a : params.alpha) a = 1.0;
  std::vector<double> currents(spec.ps_count);
  for (double& c : currents) c = rng.uniform(0.0, 7.0);
  const Eigen::MatrixXcd m = transfer_matrix(spec, params, currents);
  const Eigen::MatrixXcd gram = m.adjoint() * m;
  REQUIRE((gram - Eigen::MatrixXcd::Identity(spec.mode_count, spec.mode_count))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("output distribution") {
  SECTION("balanced single splitter") {
    const CircuitSpec spec = build_qw_mesh(1);
    const Parameters params = Parameters::ideal(spec);
    const std::vector<double> p =
        output_distribution(spec, params, {}, localized_input(spec));
    REQUIRE_THAT(p[0], Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(p[1], Catch::Matchers::WithinAbs(0.5, 1e-15));
  }
  SECTION("two-step mesh against the dense oracle") {
    const CircuitSpec spec = build_qw_mesh(2);
    const Parameters params = Parameters::ideal(spec);
    const std::vector<double> currents(spec.ps_count, 0.0);
    const Eigen::VectorXcd psi =
        dense_transfer_oracle(spec, params, currents) *
        to_eigen(localized_input(spec));
    const std::vector<int> ports = spec.active_ports();
    double total = 0.0;
    for (int v : ports) total += std::norm(psi(v));
    const std::vector<double> p =
        output_distribution(spec, params, currents, localized_input(spec));
    for (std::size_t v = 0; v < ports.size(); ++v) {
      REQUIRE_THAT(p[v], Catch::Matchers::WithinAbs(
                             std::norm(psi(ports[v])) / total, 1e-14));
    }
  }
  SECTION("degenerate mask is an error") {
    CircuitSpec spec = build_qw_mesh(1);
    spec.port_mask.assign(spec.mode_count, 0);
    Parameters params = Parameters::ideal(spec);
    params.eta.clear();
    REQUIRE_THROWS_AS(
        output_distribution(spec, params, {}, localized_input(spec)),
        NumericError);
  }
}

TEST_CASE("forward model gauge and periodicity invariances") {
  const CircuitSpec spec = build_qw_mesh(4);
  Rng rng(31337);
  const Parameters params = random_params(spec, rng);
  std::vector<double> currents(spec.ps_count);
  for (double& c : currents) c = rng.uniform(0.0, 7.0);
  const CVector psi_in = localized_input(spec);
  const std::vector<double> base =
      output_distribution(spec, params, currents, psi_in);

  SECTION("probability simplex") {
    double total = 0.0;
    for (double p : base) {
      REQUIRE(p >= 0.0);
      REQUIRE(p <= 1.0);
      total += p;
    }
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("eta rescaling is a gauge direction") {
    Parameters scaled = params;
    for (double& e : scaled.eta) e *= 2.0;
    const std::vector<double> p =
        output_distribution(spec, scaled, currents, psi_in);
    for (std::size_t v = 0; v < p.size(); ++v) {
      REQUIRE_THAT(p[v], Catch::Matchers::WithinAbs(base[v], 1e-15));
    }
  }
  SECTION("alpha rescaling is a gauge direction") {
    Parameters scaled = params;
    for (double& a : scaled.alpha) a *= 1.7;
    const std::vector<double> p =
        output_distribution(spec, scaled, currents, psi_in);
    for (std::size_t v = 0; v < p.size(); ++v) {
      REQUIRE_THAT(p[v], Catch::Matchers::WithinAbs(base[v], 1e-15));
    }
  }
  SECTION("b is 2*pi periodic") {
    Parameters shifted = params;
    for (double& b : shifted.b) b += kTwoPi;
    const std::vector<double> p =
        output_distribution(spec, shifted, currents, psi_in);
    for (std::size_t v = 0; v < p.size(); ++v) {
      REQUIRE_THAT(p[v], Catch::Matchers::WithinAbs(base[v], 1e-15));
    }
  }
}
