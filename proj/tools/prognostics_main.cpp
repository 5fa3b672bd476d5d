// Command-line front end for the prognostics pipeline: fleet generation,
// health calibration, network training, evaluation, comparison studies, and
// run reporting, all driven by one JSON config plus override flags.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "phm/errors.hpp"
#include "phm/pipeline.hpp"

namespace {

using phm::pipeline::ExperimentConfig;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<int> units;
  std::string variant;
  std::string arch;
  std::optional<double> snr_db;
  std::optional<double> alpha_bias;
  bool surrogate = false;
  std::string out_dir;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path,
                  "JSON experiment config; omitted keys keep their defaults");
  cmd->add_option("--seed", ov.seed, "Master seed steering every stage");
  cmd->add_option("--units", ov.units,
                  "Restrict the development fleet to these unit ids")
      ->delimiter(',');
  cmd->add_option("--variant", ov.variant,
                  "Feature variant: data_driven, plus_xs_hat, plus_xv_hat, "
                  "or full_hybrid");
  cmd->add_option("--arch", ov.arch, "Network architecture: fnn or cnn");
  cmd->add_option("--snr-db", ov.snr_db,
                  "Inject white noise into the calibrated health parameters "
                  "at this signal-to-noise ratio (dB)");
  cmd->add_option("--alpha-bias", ov.alpha_bias,
                  "Blend the calibrated health parameters toward their "
                  "initial value by this factor");
  cmd->add_flag("--surrogate", ov.surrogate,
                "Calibrate the test split through the fitted response "
                "surrogate instead of the exact model");
  cmd->add_option("--out", ov.out_dir, "Run output directory");
}

ExperimentConfig resolve_config(const Overrides& ov) {
  ExperimentConfig cfg = ov.config_path.empty()
                             ? ExperimentConfig::defaults()
                             : phm::pipeline::load_experiment_config(
                                   ov.config_path);
  if (ov.seed) cfg.master_seed = *ov.seed;
  if (!ov.variant.empty()) {
    cfg.variant = phm::features::variant_from_string(ov.variant);
  }
  if (!ov.arch.empty()) {
    cfg.arch = phm::pipeline::architecture_from_string(ov.arch);
  }
  if (ov.snr_db) cfg.perturbation.snr_db = *ov.snr_db;
  if (ov.alpha_bias) cfg.perturbation.alpha_bias = *ov.alpha_bias;
  if (ov.surrogate) cfg.use_surrogate = true;
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (!ov.units.empty()) phm::pipeline::restrict_dev_units(cfg, ov.units);
  return cfg;
}

void print_stage(const phm::pipeline::StageRecord& r) {
  std::cout << r.name << (r.skipped ? " [cached]" : "") << " ("
            << r.seconds << " s)";
  for (const auto& [k, v] : r.summary) std::cout << "  " << k << "=" << v;
  std::cout << '\n';
}

int error_exit_code(const std::string& type) {
  if (type == "ConfigError") return 2;
  if (type == "DomainError") return 3;
  if (type == "ModelRangeError") return 4;
  if (type == "NumericError") return 5;
  if (type == "IoError") return 6;
  return 1;
}

int report_error(const std::string& type, const std::string& message) {
  nlohmann::json j;
  j["error"] = {{"type", type}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return error_exit_code(type);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Turbofan prognostics pipeline: synthetic fleet data, health-parameter "
      "calibration, remaining-life prediction, and comparison studies"};
  app.require_subcommand(1);

  Overrides ov;
  std::string split = "both";
  std::string study;
  std::string report_dir;

  CLI::App* generate =
      app.add_subcommand("generate", "Simulate the run-to-failure fleet");
  add_common_flags(generate, ov);

  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "Estimate health parameters along each unit's history");
  add_common_flags(calibrate, ov);
  calibrate->add_option("--split", split, "dev, test, or both")
      ->check(CLI::IsMember({"dev", "test", "both"}));

  CLI::App* train = app.add_subcommand(
      "train", "Fit remaining-life networks on the development split");
  add_common_flags(train, ov);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score the trained networks on the test split");
  add_common_flags(evaluate, ov);

  CLI::App* run = app.add_subcommand(
      "run", "Full pipeline: generate, calibrate dev, train, calibrate test, "
             "evaluate");
  add_common_flags(run, ov);

  CLI::App* ablate =
      app.add_subcommand("ablate", "Run one comparison study");
  add_common_flags(ablate, ov);
  ablate
      ->add_option("--study", study,
                   "dataset_size, feature_set, or calibration_quality")
      ->required();

  CLI::App* report = app.add_subcommand(
      "report", "Collect manifest, evaluation, and study results into one "
                "summary");
  report->add_option("--out", report_dir, "Run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const nlohmann::json j = phm::pipeline::cmd_report(report_dir);
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    const ExperimentConfig cfg = resolve_config(ov);
    if (generate->parsed()) {
      print_stage(phm::pipeline::cmd_generate(cfg));
    } else if (calibrate->parsed()) {
      if (split == "dev" || split == "both") {
        print_stage(phm::pipeline::cmd_calibrate(cfg, "dev"));
      }
      if (split == "test" || split == "both") {
        print_stage(phm::pipeline::cmd_calibrate(cfg, "test"));
      }
    } else if (train->parsed()) {
      print_stage(phm::pipeline::cmd_train(cfg));
    } else if (evaluate->parsed()) {
      print_stage(phm::pipeline::cmd_evaluate(cfg));
    } else if (run->parsed()) {
      const phm::pipeline::RunManifest m = phm::pipeline::run_experiment(cfg);
      const std::size_t n = m.stage_log.size();
      for (std::size_t i = n >= 5 ? n - 5 : 0; i < n; ++i) {
        const auto it = m.stages.find(m.stage_log[i]);
        if (it != m.stages.end()) print_stage(it->second);
      }
      std::cout << "run complete under " << cfg.out_dir << '\n';
    } else if (ablate->parsed()) {
      const nlohmann::json j = phm::pipeline::cmd_ablate(
          cfg, phm::pipeline::ablation_from_string(study));
      std::cout << j.dump(2) << '\n';
    }
    return 0;
  } catch (const phm::ConfigError& e) {
    return report_error("ConfigError", e.what());
  } catch (const phm::DomainError& e) {
    return report_error("DomainError", e.what());
  } catch (const phm::ModelRangeError& e) {
    return report_error("ModelRangeError", e.what());
  } catch (const phm::NumericError& e) {
    return report_error("NumericError", e.what());
  } catch (const phm::IoError& e) {
    return report_error("IoError", e.what());
  } catch (const std::exception& e) {
    return report_error("Error", e.what());
  }
}
