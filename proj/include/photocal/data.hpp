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

#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "photocal/forward.hpp"
#include "photocal/mesh.hpp"
#include "photocal/util.hpp"

namespace photocal {

/// One measurement record: the currents applied to every phase shifter and
/// the normalized probability distribution observed on the active ports.
struct Sample {
  std::vector<double> currents;       // mA, one per phase shifter
  std::vector<double> probabilities;  // one per active port, sums to 1

  bool operator==(const Sample&) const = default;
};

struct DatasetMeta {
  std::string fingerprint;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  double current_min = 0.0;
  double current_max = 7.0;
  std::string provenance = "synthetic";  // or "external"
  bool clamped = false;  // negative noisy entries clamped at zero
  int regenerated = 0;   // samples whose noise had to be redrawn

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

/// Widths of the random intervals around the ideal hardware values used
/// when sampling synthetic target parameters.
struct TargetConfig {
  double a_value = 0.12;
  double delta_theta = 0.05;  // sin^2 theta ~ U[0.5 - d, 0.5 + d]
  double delta_alpha = 0.1;   // alpha ~ U[1 - d, 1]
  double delta_eta = 0.1;     // eta ~ U[1 - d, 1 + d]
};

/// Draws a random "true chip": a fixed at its empirical value, b uniform on
/// [-pi, pi), reflectivities near 0.5, efficiencies near 1.
inline Parameters sample_target_params(const CircuitSpec& spec, Rng& rng,
                                       const TargetConfig& cfg = {}) {
  Parameters p;
  p.a.assign(spec.ps_count, cfg.a_value);
  p.b.resize(spec.ps_count);
  for (double& b : p.b) b = rng.uniform(-kPi, kPi);
  p.theta.resize(spec.bs_count);
  for (double& t : p.theta) {
    const double r = rng.uniform(0.5 - cfg.delta_theta, 0.5 + cfg.delta_theta);
    t = std::asin(std::sqrt(r));
  }
  p.alpha.resize(spec.bs_count);
  for (double& a : p.alpha) a = rng.uniform(1.0 - cfg.delta_alpha, 1.0);
  p.eta.resize(spec.active_ports().size());
  for (double& e : p.eta) {
    e = rng.uniform(1.0 - cfg.delta_eta, 1.0 + cfg.delta_eta);
  }
  return p;
}

/// Synthesizes n samples from a known chip: currents uniform over the
/// hardware range per shifter, model distribution from the forward pipeline,
/// then additive zero-mean gaussian noise, renormalized to unit sum. By
/// default negative entries are kept (the noise stays zero-mean, so fits
/// against these targets are unbiased); clamp_negative = true instead clamps
/// at zero before renormalizing, which biases ports whose probability is
/// comparable to sigma. Each sample draws from its own derived stream, so
/// output is a pure function of (spec, params, n, sigma, range, seed) and
/// independent of threading.
inline Dataset generate_synthetic_dataset(const CircuitSpec& spec,
                                          const Parameters& target_params,
                                          int n, double noise_sigma,
                                          double current_min,
                                          double current_max,
                                          std::uint64_t seed,
                                          bool clamp_negative = false) {
  if (n < 1) throw ConfigError("generate_synthetic_dataset: n must be >= 1");
  if (noise_sigma < 0.0) {
    throw ConfigError("generate_synthetic_dataset: negative noise sigma");
  }
  check_dimensions(spec, target_params);
  Dataset ds;
  ds.meta.fingerprint = spec_fingerprint(spec);
  ds.meta.seed = seed;
  ds.meta.noise_sigma = noise_sigma;
  ds.meta.current_min = current_min;
  ds.meta.current_max = current_max;
  ds.meta.provenance = "synthetic";
  ds.meta.clamped = clamp_negative;
  const CVector psi_in = localized_input(spec);
  ds.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Sample& s = ds.samples[i];
    s.currents.resize(spec.ps_count);
    for (double& cur : s.currents) cur = rng.uniform(current_min, current_max);
    const std::vector<double> clean =
        output_distribution(spec, target_params, s.currents, psi_in);
    if (noise_sigma == 0.0) {
      s.probabilities = clean;
      continue;
    }
    s.probabilities.resize(clean.size());
    for (int attempt = 0;; ++attempt) {
      double total = 0.0;
      for (std::size_t v = 0; v < clean.size(); ++v) {
        double p = clean[v] + rng.gaussian(noise_sigma);
        if (clamp_negative && p < 0.0) p = 0.0;
        s.probabilities[v] = p;
        total += p;
      }
      if (total > 0.5) {  // a reasonable mass survived the noise
        for (double& p : s.probabilities) p /= total;
        break;
      }
      ++ds.meta.regenerated;
      if (attempt > 1000) {
        throw NumericError(
            "generate_synthetic_dataset: cannot draw a usable distribution");
      }
    }
  }
  return ds;
}

/// Deterministic split by seeded shuffle: sizes (floor(n*ratio), rest),
/// disjoint, union equal to the input.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                                 double ratio,
                                                 std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split_dataset: ratio must lie in (0, 1)");
  }
  const std::size_t n = ds.samples.size();
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * ratio));
  if (n_train == 0 || n_train == n) {
    throw ConfigError("split_dataset: a side would be empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x73706c6974ULL));  // "split" stream tag
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  Dataset train, test;
  train.meta = ds.meta;
  test.meta = ds.meta;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).samples.push_back(ds.samples[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

inline nlohmann::json meta_to_json(const DatasetMeta& m) {
  return nlohmann::json{{"fingerprint", m.fingerprint},
                        {"seed", m.seed},
                        {"noise_sigma", m.noise_sigma},
                        {"current_min", m.current_min},
                        {"current_max", m.current_max},
                        {"provenance", m.provenance},
                        {"clamped", m.clamped},
                        {"regenerated", m.regenerated}};
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
  DatasetMeta m;
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.noise_sigma = j.at("noise_sigma").get<double>();
  m.current_min = j.at("current_min").get<double>();
  m.current_max = j.at("current_max").get<double>();
  m.provenance = j.at("provenance").get<std::string>();
  m.clamped = j.value("clamped", false);
  m.regenerated = j.at("regenerated").get<int>();
  return m;
}

/// Line-delimited format: one header record with the metadata and sample
/// count, then one sample per line as "currents | probabilities", numbers in
/// round-trip-exact decimal form.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset: cannot open '" + path + "'");
  nlohmann::json header = meta_to_json(ds.meta);
  header["n"] = ds.samples.size();
  out << "photocal-dataset v1 " << header.dump() << "\n";
  for (const Sample& s : ds.samples) {
    bool first = true;
    for (double c : s.currents) {
      if (!first) out << ' ';
      out << format_double(c);
      first = false;
    }
    out << " |";
    for (double p : s.probabilities) out << ' ' << format_double(p);
    out << "\n";
  }
  if (!out) throw IoError("save_dataset: write failure on '" + path + "'");
}

inline Dataset load_dataset(const std::string& path,
                            const std::string& expected_fingerprint = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("load_dataset: empty file '" + path + "'");
  }
  const std::string magic = "photocal-dataset v1 ";
  if (line.rfind(magic, 0) != 0) {
    throw IoError("load_dataset: missing 'photocal-dataset v1' header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line.substr(magic.size()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("load_dataset: bad header: ") + e.what());
  }
  Dataset ds;
  ds.meta = meta_from_json(header);
  const auto n = header.at("n").get<std::size_t>();
  if (!expected_fingerprint.empty() &&
      ds.meta.fingerprint != expected_fingerprint) {
    throw IoError("load_dataset: spec fingerprint mismatch (file has '" +
                  ds.meta.fingerprint + "')");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sample s;
    std::string tok;
    bool past_separator = false;
    while (ls >> tok) {
      if (tok == "|") {
        if (past_separator) {
          throw IoError("load_dataset: line " + std::to_string(line_no) +
                        ": duplicate separator");
        }
        past_separator = true;
        continue;
      }
      double v;
      try {
        v = parse_double(tok);
      } catch (const IoError&) {
        throw IoError("load_dataset: line " + std::to_string(line_no) +
                      ": malformed number '" + tok + "'");
      }
      (past_separator ? s.probabilities : s.currents).push_back(v);
    }
    if (!past_separator || s.probabilities.empty() || s.currents.empty()) {
      throw IoError("load_dataset: line " + std::to_string(line_no) +
                    ": malformed record");
    }
    if (!ds.samples.empty() &&
        (s.currents.size() != ds.samples.front().currents.size() ||
         s.probabilities.size() != ds.samples.front().probabilities.size())) {
      throw IoError("load_dataset: line " + std::to_string(line_no) +
                    ": inconsistent record length");
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != n) {
    throw IoError("load_dataset: truncated file, last good line " +
                  std::to_string(line_no) + " (" +
                  std::to_string(ds.samples.size()) + " of " +
                  std::to_string(n) + " samples)");
  }
  return ds;
}

/// Parameter files: versioned text, one labelled line per array.
inline void save_parameters(const Parameters& p, const std::string& path,
                            const std::string& fingerprint = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("save_parameters: cannot open '" + path + "'");
  out << "photocal-params v1\n";
  if (!fingerprint.empty()) out << "fingerprint " << fingerprint << "\n";
  auto dump = [&out](const char* name, const std::vector<double>& xs) {
    out << name;
    for (double x : xs) out << ' ' << format_double(x);
    out << "\n";
  };
  dump("a", p.a);
  dump("b", p.b);
  dump("theta", p.theta);
  dump("alpha", p.alpha);
  dump("eta", p.eta);
  if (!out) throw IoError("save_parameters: write failure on '" + path + "'");
}

inline Parameters load_parameters(const std::string& path,
                                  std::string* fingerprint = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("load_parameters: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "photocal-params v1") {
    throw IoError("load_parameters: missing 'photocal-params v1' header");
  }
  Parameters p;
  bool seen[5] = {false, false, false, false, false};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "fingerprint") {
      std::string fp;
      ls >> fp;
      if (fingerprint) *fingerprint = fp;
      continue;
    }
    std::vector<double>* dst = nullptr;
    int slot = -1;
    if (key == "a") dst = &p.a, slot = 0;
    else if (key == "b") dst = &p.b, slot = 1;
    else if (key == "theta") dst = &p.theta, slot = 2;
    else if (key == "alpha") dst = &p.alpha, slot = 3;
    else if (key == "eta") dst = &p.eta, slot = 4;
    else throw IoError("load_parameters: unknown key '" + key + "'");
    if (seen[slot]) {
      throw IoError("load_parameters: duplicate key '" + key + "'");
    }
    seen[slot] = true;
    std::string tok;
    while (ls >> tok) dst->push_back(parse_double(tok));
  }
  for (bool s : seen) {
    if (!s) throw IoError("load_parameters: missing parameter array");
  }
  return p;
}

}  // namespace photocal
