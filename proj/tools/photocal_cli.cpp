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

// Command-line front end: reproducible dataset generation, calibration,
// validation, walk comparison and tomography runs. Every run writes a
// config echo sufficient to reproduce itself; no environment variables are
// consulted and no timestamps enter the artifacts, so identical invocations
// produce identical files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "photocal/data.hpp"
#include "photocal/forward.hpp"
#include "photocal/grad.hpp"
#include "photocal/mesh.hpp"
#include "photocal/metrics.hpp"
#include "photocal/optim.hpp"
#include "photocal/qw.hpp"
#include "photocal/recovery.hpp"
#include "photocal/tomo.hpp"
#include "photocal/util.hpp"

namespace {

using nlohmann::json;
using namespace photocal;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct GlobalOptions {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
};

std::string out_path(const GlobalOptions& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return (std::filesystem::path(g.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failure on '" + path + "'");
}

void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json params_to_json(const Parameters& p) {
  return json{{"a", p.a},
              {"b", p.b},
              {"theta", p.theta},
              {"alpha", p.alpha},
              {"eta", p.eta}};
}

Parameters params_from_json(const json& j) {
  Parameters p;
  p.a = j.at("a").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  p.theta = j.at("theta").get<std::vector<double>>();
  p.alpha = j.at("alpha").get<std::vector<double>>();
  p.eta = j.at("eta").get<std::vector<double>>();
  return p;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in '" + path + "': " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  int steps = 12;
  int n = 500;
  double noise = 0.01;
  double current_min = 0.0;
  double current_max = 7.0;
  bool clamp = false;  // clamp negative noisy entries at zero
  std::string params_path;  // load target parameters instead of sampling
  std::string prefix = "";
};

int cmd_generate(const GlobalOptions& g, const GenerateOptions& o) {
  const CircuitSpec spec = build_qw_mesh(o.steps);
  Parameters truth;
  std::string provenance;
  if (o.params_path.empty()) {
    Rng rng(g.seed);
    truth = sample_target_params(spec, rng);
    provenance = "sampled";
  } else {
    truth = load_parameters(o.params_path);
    check_dimensions(spec, truth);
    provenance = o.params_path;
  }
  Dataset ds = generate_synthetic_dataset(spec, truth, o.n, o.noise,
                                          o.current_min, o.current_max,
                                          g.seed, o.clamp);
  const std::string ds_path = out_path(g, o.prefix + "dataset.txt");
  save_dataset(ds, ds_path);
  const std::string truth_path = out_path(g, o.prefix + "truth_params.txt");
  save_parameters(truth, truth_path, spec_fingerprint(spec));

  json echo{{"format", "photocal-run v1"},
            {"command", "generate"},
            {"seed", g.seed},
            {"threads", g.threads},
            {"out_dir", g.out_dir},
            {"steps", o.steps},
            {"n", o.n},
            {"noise", o.noise},
            {"current_min", o.current_min},
            {"current_max", o.current_max},
            {"clamp", o.clamp},
            {"target_params", provenance},
            {"fingerprint", spec_fingerprint(spec)},
            {"regenerated", ds.meta.regenerated}};
  write_json(out_path(g, o.prefix + "generate_config.json"), echo);
  std::cout << "wrote " << ds_path << " (" << ds.samples.size()
            << " samples) and " << truth_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOptions {
  int steps = 12;
  std::string data_path;
  std::string truth_path;
  int rounds = 8;
  int max_epochs = 2000;
  double lr = 0.01;
  double lr_decay = 0.99;
  int batch = 1;
  double cutoff = 1e-5;
  int streak = 5;
  std::string loss_kind = "l1";
  std::string prefix = "";
};

json schedule_to_json(const CalibrationResult& r) {
  json phases = json::array();
  for (const PhaseRecord& ph : r.phases) {
    phases.push_back({{"name", ph.name},
                      {"start_epoch", ph.start_epoch},
                      {"epochs", ph.epochs},
                      {"hit_max_epochs", ph.hit_max_epochs}});
  }
  return phases;
}

int cmd_calibrate(const GlobalOptions& g, const CalibrateOptions& o) {
  const CircuitSpec spec = build_qw_mesh(o.steps);
  const Dataset train = load_dataset(o.data_path, spec_fingerprint(spec));

  TrainConfig tc;
  tc.adam.lr0 = o.lr;
  tc.adam.lr_decay = o.lr_decay;
  tc.loss_kind = o.loss_kind == "nll" ? LossKind::kNegLogLikelihood
                                      : LossKind::kL1Sum;
  tc.threads = g.threads;
  tc.batch_size = o.batch;
  tc.shuffle_seed = g.seed;
  ScheduleConfig sc;
  sc.alternation_rounds = o.rounds;
  sc.cutoff_threshold = o.cutoff;
  sc.cutoff_streak = o.streak;
  sc.max_epochs = o.max_epochs;

  const CVector psi_in = localized_input(spec);
  const CalibrationResult result = run_schedule(
      spec, train.samples, tc, sc, Parameters::ideal(spec), psi_in);

  json echo{{"format", "photocal-run v1"},
            {"command", "calibrate"},
            {"seed", g.seed},
            {"threads", g.threads},
            {"out_dir", g.out_dir},
            {"steps", o.steps},
            {"data", o.data_path},
            {"truth", o.truth_path},
            {"rounds", o.rounds},
            {"max_epochs", o.max_epochs},
            {"lr", o.lr},
            {"lr_decay", o.lr_decay},
            {"batch", o.batch},
            {"cutoff", o.cutoff},
            {"streak", o.streak},
            {"loss", o.loss_kind}};
  json report{{"format", "photocal-calibration v1"},
              {"config", echo},
              {"fingerprint", spec_fingerprint(spec)},
              {"final_loss", result.final_loss},
              {"final_loss_per_sample",
               result.final_loss / static_cast<double>(train.samples.size())},
              {"phases", schedule_to_json(result)},
              {"loss_history", result.loss_history},
              {"raw_params", params_to_json(result.raw)},
              {"canonical_params", params_to_json(result.canonical)}};
  const std::string path = out_path(g, o.prefix + "calibration.json");
  write_json(path, report);
  write_json(out_path(g, o.prefix + "calibrate_config.json"), echo);
  std::cout << "calibration finished: train loss/sample = "
            << result.final_loss / static_cast<double>(train.samples.size())
            << ", epochs = " << result.loss_history.size() << "\n";

  if (!o.truth_path.empty()) {
    const Parameters truth = load_parameters(o.truth_path);
    check_dimensions(spec, truth);
    RecoveryAnalysis analysis(spec, truth);
    const RecoveryReport rec =
        compare_to_truth(spec, result.raw, truth, analysis);
    std::ostringstream table;
    table << "component\tindex\traw_error\taligned_error\tweak\n";
    for (std::size_t k = 0; k < rec.b_error_raw.size(); ++k) {
      table << "a\t" << k << '\t' << format_double(rec.a_error[k]) << "\t-\t-\n";
    }
    for (std::size_t k = 0; k < rec.b_error_raw.size(); ++k) {
      table << "b\t" << k << '\t' << format_double(rec.b_error_raw[k]) << '\t'
            << format_double(rec.b_error_aligned[k]) << '\t'
            << int(rec.b_weak[k]) << "\n";
    }
    for (std::size_t k = 0; k < rec.s2theta_error_raw.size(); ++k) {
      table << "sin2theta\t" << k << '\t'
            << format_double(rec.s2theta_error_raw[k]) << '\t'
            << format_double(rec.s2theta_error_aligned[k]) << '\t'
            << int(rec.theta_weak[k]) << "\n";
    }
    write_text(out_path(g, o.prefix + "recovery.tsv"), table.str());
    json recovery{{"format", "photocal-recovery v1"},
                  {"null_dimension", rec.null_dimension},
                  {"a_error", rec.a_error},
                  {"b_error_raw", rec.b_error_raw},
                  {"b_error_aligned", rec.b_error_aligned},
                  {"s2theta_error_raw", rec.s2theta_error_raw},
                  {"s2theta_error_aligned", rec.s2theta_error_aligned}};
    write_json(out_path(g, o.prefix + "recovery.json"), recovery);
    std::cout << "recovery table written (gauge null dimension "
              << rec.null_dimension << ")\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOptions {
  int steps = 12;
  std::string data_path;
  std::string calib_path;
  std::string truth_path;
  double threshold = 0.05;
  int bins = 30;
  std::string prefix = "";
};

int cmd_validate(const GlobalOptions& g, const ValidateOptions& o) {
  const CircuitSpec spec = build_qw_mesh(o.steps);
  const Dataset test = load_dataset(o.data_path, spec_fingerprint(spec));
  const json calib = load_json(o.calib_path);
  if (calib.value("fingerprint", "") != spec_fingerprint(spec)) {
    throw IoError("validate: calibration fingerprint mismatch");
  }
  const Parameters hat = params_from_json(calib.at("raw_params"));
  std::optional<Parameters> truth;
  if (!o.truth_path.empty()) {
    truth = load_parameters(o.truth_path);
    check_dimensions(spec, *truth);
  }
  const CVector psi_in = localized_input(spec);
  const MetricReport report = evaluate(spec, hat, truth ? &*truth : nullptr,
                                       test, psi_in, o.bins);
  std::size_t below = 0;
  for (double v : report.l1) {
    if (v < o.threshold) ++below;
  }
  const double below_frac =
      static_cast<double>(below) / static_cast<double>(report.l1.size());
  json j = report_to_json(report);
  j["threshold"] = o.threshold;
  j["fraction_below_threshold"] = below_frac;
  j["config"] = json{{"format", "photocal-run v1"},
                     {"command", "validate"},
                     {"seed", g.seed},
                     {"threads", g.threads},
                     {"out_dir", g.out_dir},
                     {"steps", o.steps},
                     {"data", o.data_path},
                     {"calibration", o.calib_path},
                     {"truth", o.truth_path},
                     {"threshold", o.threshold},
                     {"bins", o.bins}};
  write_json(out_path(g, o.prefix + "metrics.json"), j);
  std::cout << "test L1: mean " << report.l1_stats.mean << " +- "
            << report.l1_stats.stddev << ", median " << report.l1_stats.median
            << "; " << 100.0 * below_frac << "% of samples below "
            << o.threshold << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// qw

struct QwOptions {
  int steps = 12;
  std::string calib_path;
  std::string phases_path;  // optional arbitrary phase targets
  double max_current = 7.0;
  std::string prefix = "";
};

int cmd_qw(const GlobalOptions& g, const QwOptions& o) {
  const CircuitSpec spec = build_qw_mesh(o.steps);
  Parameters params = Parameters::ideal(spec);
  if (!o.calib_path.empty()) {
    const json calib = load_json(o.calib_path);
    if (calib.value("fingerprint", "") != spec_fingerprint(spec)) {
      throw IoError("qw: calibration fingerprint mismatch");
    }
    params = params_from_json(calib.at("raw_params"));
  }
  std::vector<double> targets = hadamard_phase_targets(spec);
  if (!o.phases_path.empty()) {
    std::ifstream in(o.phases_path);
    if (!in) throw IoError("qw: cannot open '" + o.phases_path + "'");
    targets.clear();
    double v;
    while (in >> v) targets.push_back(v);
    if (targets.size() != static_cast<std::size_t>(spec.ps_count)) {
      throw IoError("qw: phase file must hold one value per shifter");
    }
  }
  const std::vector<double> currents =
      currents_for_phases(spec, params, targets, o.max_current);

  // model prediction: chip-internal distribution under the fitted hardware
  const CVector psi =
      evolve(spec, params, currents, localized_input(spec));
  std::vector<double> model(spec.mode_count);
  double total = 0.0;
  for (int m = 0; m < spec.mode_count; ++m) {
    model[m] = std::norm(psi[m]);
    total += model[m];
  }
  for (double& p : model) p /= total;
  const std::vector<double> reference =
      hadamard_reference_distribution(o.steps);
  const double distance = l1_distance(model, reference);

  write_text(out_path(g, o.prefix + "qw_distribution.tsv"),
             distribution_export(reference, model));
  json j{{"format", "photocal-qw v1"},
         {"config", json{{"command", "qw"},
                         {"seed", g.seed},
                         {"threads", g.threads},
                         {"out_dir", g.out_dir},
                         {"steps", o.steps},
                         {"calibration", o.calib_path},
                         {"phases", o.phases_path},
                         {"max_current", o.max_current}}},
         {"currents", currents},
         {"l1_distance_to_reference", distance}};
  write_json(out_path(g, o.prefix + "qw_report.json"), j);
  std::cout << "walk distance between model and ideal reference: " << distance
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// tomo

struct TomoOptions {
  int steps = 12;
  int depth = 9;
  int settings_count = 14;
  int n_dynamics = 20;
  std::string params_path;   // chip parameters (default: sampled target)
  std::string settings_path;
  std::string measured_path;  // reconstruct from these distributions instead
  std::string reference_path;  // optional reference state for metrics
  bool strict = false;
  std::string prefix = "";
};

Eigen::MatrixXcd state_from_json(const json& j) {
  const auto re = j.at("rho_real").get<std::vector<std::vector<double>>>();
  const auto im = j.at("rho_imag").get<std::vector<std::vector<double>>>();
  const auto d = static_cast<Eigen::Index>(re.size());
  Eigen::MatrixXcd rho(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      rho(i, k) = Complex(re[i][k], im[i][k]);
    }
  }
  return rho;
}

json state_to_json(const Eigen::MatrixXcd& rho) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    json rrow = json::array(), irow = json::array();
    for (Eigen::Index k = 0; k < rho.cols(); ++k) {
      rrow.push_back(rho(i, k).real());
      irow.push_back(rho(i, k).imag());
    }
    re.push_back(rrow);
    im.push_back(irow);
  }
  return json{{"rho_real", re}, {"rho_imag", im}};
}

int cmd_tomo(const GlobalOptions& g, const TomoOptions& o) {
  const CircuitSpec spec = build_qw_mesh(o.steps);
  Rng rng(g.seed);
  Parameters params;
  if (o.params_path.empty()) {
    params = sample_target_params(spec, rng);
  } else {
    params = load_parameters(o.params_path);
    check_dimensions(spec, params);
  }
  const auto [dynamics, measurement] = split_mesh(spec, o.depth);
  const std::vector<int> support = light_cone_modes(spec, o.depth);
  const int dim = static_cast<int>(support.size());

  std::vector<std::vector<double>> settings(o.settings_count);
  if (o.settings_path.empty()) {
    for (auto& s : settings) {
      s.resize(measurement.ps_count);
      for (double& c : s) c = rng.uniform(0.0, 7.0);
    }
  } else {
    std::ifstream in(o.settings_path);
    if (!in) throw IoError("tomo: cannot open '" + o.settings_path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "photocal-settings v1") {
      throw IoError("tomo: missing 'photocal-settings v1' header");
    }
    settings.clear();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::vector<double> s;
      double v;
      while (ls >> v) s.push_back(v);
      if (s.size() != static_cast<std::size_t>(measurement.ps_count)) {
        throw IoError("tomo: setting line needs one current per "
                      "measurement-section shifter");
      }
      settings.push_back(std::move(s));
    }
    if (settings.empty()) throw IoError("tomo: empty settings file");
  }

  const auto effects = build_effects(spec, measurement, params, settings);
  const int rank = design_rank(effects, dim);
  const bool deficient = rank < dim * dim;
  if (deficient) {
    std::cerr << "warning: measurement design spans " << rank << " of "
              << dim * dim << " operator dimensions\n";
    if (o.strict) {
      throw ConfigError("tomo: deficient measurement design (--strict)");
    }
  }

  if (!o.measured_path.empty()) {
    // reconstruct one state from supplied measured distributions
    std::ifstream in(o.measured_path);
    if (!in) throw IoError("tomo: cannot open '" + o.measured_path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "photocal-distributions v1") {
      throw IoError("tomo: missing 'photocal-distributions v1' header");
    }
    std::vector<std::vector<double>> measured;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      measured.push_back(std::move(row));
    }
    if (measured.size() != effects.size()) {
      throw IoError("tomo: need one distribution per setting");
    }
    for (const auto& row : measured) {
      if (row.size() != static_cast<std::size_t>(spec.active_port_count())) {
        throw IoError("tomo: distribution length must match the active ports");
      }
    }
    const MleResult mle = mle_reconstruct(effects, measured, dim);
    json j{{"format", "photocal-tomo v1"},
           {"config", json{{"command", "tomo"},
                           {"seed", g.seed},
                           {"threads", g.threads},
                           {"out_dir", g.out_dir},
                           {"steps", o.steps},
                           {"depth", o.depth},
                           {"params", o.params_path},
                           {"settings_file", o.settings_path},
                           {"measured", o.measured_path},
                           {"reference", o.reference_path},
                           {"strict", o.strict}}},
           {"state_dimension", dim},
           {"design_rank", rank},
           {"design_deficient", deficient},
           {"iterations", mle.iterations},
           {"loglik_final", mle.loglik.back()},
           {"state", state_to_json(mle.rho)}};
    if (!o.reference_path.empty()) {
      const DensityMatrix reference(state_from_json(load_json(o.reference_path)));
      const DensityMatrix fit(mle.rho);
      j["infidelity"] = infidelity(reference, fit);
      j["purity_error"] = purity_error(fit, reference);
    }
    write_json(out_path(g, o.prefix + "tomo_report.json"), j);
    std::cout << "reconstructed one state from " << measured.size()
              << " measured distributions (design rank " << rank << "/"
              << dim * dim << ")\n";
    return kExitOk;
  }

  // synthetic mode: also write the settings and the first dynamics' data
  // so a reconstruction can be replayed through --settings/--measured
  {
    std::ostringstream s;
    s << "photocal-settings v1\n";
    for (const auto& setting : settings) {
      bool first = true;
      for (double c : setting) {
        if (!first) s << ' ';
        s << format_double(c);
        first = false;
      }
      s << "\n";
    }
    write_text(out_path(g, o.prefix + "settings.txt"), s.str());
  }

  const CVector psi_in = localized_input(spec);
  json runs = json::array();
  double infid_sum = 0.0;
  double purity_sum = 0.0;
  for (int t = 0; t < o.n_dynamics; ++t) {
    Rng drng(derive_seed(g.seed, 1000 + static_cast<std::uint64_t>(t)));
    std::vector<double> dyn_currents(dynamics.ps_count);
    for (double& c : dyn_currents) c = drng.uniform(0.0, 7.0);
    const CVector mid = section_evolve(dynamics, params, dyn_currents, psi_in);
    Eigen::VectorXcd psi(dim);
    for (int j = 0; j < dim; ++j) psi(j) = mid[support[j]];
    psi.normalize();
    const Eigen::MatrixXcd rho_true = psi * psi.adjoint();
    std::vector<std::vector<double>> data;
    for (const auto& e : effects) {
      data.push_back(predicted_distribution(e, rho_true));
    }
    if (t == 0) {
      std::ostringstream s;
      s << "photocal-distributions v1\n";
      for (const auto& row : data) {
        bool first = true;
        for (double p : row) {
          if (!first) s << ' ';
          s << format_double(p);
          first = false;
        }
        s << "\n";
      }
      write_text(out_path(g, o.prefix + "measured_distributions.txt"), s.str());
      write_json(out_path(g, o.prefix + "reference_state.json"),
                 state_to_json(rho_true));
    }
    const MleResult mle = mle_reconstruct(effects, data, dim);
    const DensityMatrix truth_dm(rho_true);
    const DensityMatrix fit_dm(mle.rho);
    const double infid = infidelity(truth_dm, fit_dm);
    const double pur = purity_error(fit_dm, truth_dm);
    infid_sum += infid;
    purity_sum += pur;
    json run{{"iterations", mle.iterations},
             {"loglik_final", mle.loglik.back()},
             {"infidelity", infid},
             {"purity_error", pur}};
    if (t == 0) run["state"] = state_to_json(mle.rho);
    runs.push_back(std::move(run));
  }
  json j{{"format", "photocal-tomo v1"},
         {"config", json{{"command", "tomo"},
                         {"seed", g.seed},
                         {"threads", g.threads},
                         {"out_dir", g.out_dir},
                         {"steps", o.steps},
                         {"depth", o.depth},
                         {"settings_count", static_cast<int>(settings.size())},
                         {"n_dynamics", o.n_dynamics},
                         {"params", o.params_path},
                         {"settings_file", o.settings_path},
                         {"strict", o.strict}}},
         {"state_dimension", dim},
         {"design_rank", rank},
         {"design_deficient", deficient},
         {"settings", settings},
         {"mean_infidelity", infid_sum / o.n_dynamics},
         {"mean_purity_error", purity_sum / o.n_dynamics},
         {"runs", runs}};
  write_json(out_path(g, o.prefix + "tomo_report.json"), j);
  std::cout << "tomography over " << o.n_dynamics
            << " dynamics: mean infidelity " << infid_sum / o.n_dynamics
            << ", design rank " << rank << "/" << dim * dim << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photonic mesh calibration toolkit"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for evaluation")
      ->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "output directory")
      ->capture_default_str();

  GenerateOptions gen;
  CLI::App* c_gen = app.add_subcommand("generate", "synthesize a dataset");
  c_gen->add_option("--steps", gen.steps)->capture_default_str();
  c_gen->add_option("--n", gen.n)->capture_default_str();
  c_gen->add_option("--noise", gen.noise)->capture_default_str();
  c_gen->add_option("--current-min", gen.current_min)->capture_default_str();
  c_gen->add_option("--current-max", gen.current_max)->capture_default_str();
  c_gen->add_flag("--clamp", gen.clamp,
                  "clamp negative noisy entries at zero");
  c_gen->add_option("--params", gen.params_path,
                    "use these target parameters instead of sampling");
  c_gen->add_option("--prefix", gen.prefix, "artifact filename prefix");

  CalibrateOptions cal;
  CLI::App* c_cal = app.add_subcommand("calibrate", "fit chip parameters");
  c_cal->add_option("--steps", cal.steps)->capture_default_str();
  c_cal->add_option("--data", cal.data_path, "training dataset")->required();
  c_cal->add_option("--truth", cal.truth_path,
                    "known target parameters for a recovery report");
  c_cal->add_option("--rounds", cal.rounds)->capture_default_str();
  c_cal->add_option("--max-epochs", cal.max_epochs)->capture_default_str();
  c_cal->add_option("--lr", cal.lr)->capture_default_str();
  c_cal->add_option("--lr-decay", cal.lr_decay)->capture_default_str();
  c_cal->add_option("--batch", cal.batch)->capture_default_str();
  c_cal->add_option("--cutoff", cal.cutoff)->capture_default_str();
  c_cal->add_option("--streak", cal.streak)->capture_default_str();
  c_cal->add_option("--loss", cal.loss_kind, "l1 or nll")
      ->check(CLI::IsMember({"l1", "nll"}))
      ->capture_default_str();
  c_cal->add_option("--prefix", cal.prefix);

  ValidateOptions val;
  CLI::App* c_val = app.add_subcommand("validate", "score a calibration");
  c_val->add_option("--steps", val.steps)->capture_default_str();
  c_val->add_option("--data", val.data_path, "test dataset")->required();
  c_val->add_option("--calib", val.calib_path, "calibration report")
      ->required();
  c_val->add_option("--truth", val.truth_path);
  c_val->add_option("--threshold", val.threshold)->capture_default_str();
  c_val->add_option("--bins", val.bins)->capture_default_str();
  c_val->add_option("--prefix", val.prefix);

  QwOptions qw;
  CLI::App* c_qw = app.add_subcommand("qw", "balanced-walk comparison");
  c_qw->add_option("--steps", qw.steps)->capture_default_str();
  c_qw->add_option("--calib", qw.calib_path, "calibration report");
  c_qw->add_option("--phases", qw.phases_path,
                   "file with one target phase per shifter");
  c_qw->add_option("--max-current", qw.max_current)->capture_default_str();
  c_qw->add_option("--prefix", qw.prefix);

  TomoOptions tomo;
  CLI::App* c_tomo = app.add_subcommand("tomo", "synthetic state tomography");
  c_tomo->add_option("--steps", tomo.steps)->capture_default_str();
  c_tomo->add_option("--depth", tomo.depth)->capture_default_str();
  c_tomo->add_option("--settings-count", tomo.settings_count)
      ->capture_default_str();
  c_tomo->add_option("--n-dynamics", tomo.n_dynamics)->capture_default_str();
  c_tomo->add_option("--params", tomo.params_path, "chip parameter file");
  c_tomo->add_option("--settings", tomo.settings_path,
                     "measurement settings file");
  c_tomo->add_option("--measured", tomo.measured_path,
                     "measured distributions (one line per setting)");
  c_tomo->add_option("--reference", tomo.reference_path,
                     "reference state JSON for infidelity/purity");
  c_tomo->add_flag("--strict", tomo.strict,
                   "treat a deficient design as an error");
  c_tomo->add_option("--prefix", tomo.prefix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_gen->parsed()) return cmd_generate(g, gen);
    if (c_cal->parsed()) return cmd_calibrate(g, cal);
    if (c_val->parsed()) return cmd_validate(g, val);
    if (c_qw->parsed()) return cmd_qw(g, qw);
    if (c_tomo->parsed()) return cmd_tomo(g, tomo);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
