#pragma once

// End-to-end experiment runner: synthetic fleet generation, per-unit health
// calibration, prognostic network training per feature variant and
// architecture, evaluation, and the three comparison studies. Every stage is
// seeded, file-driven under one output directory, recorded in a manifest with
// content hashes, and resumable: a stage whose inputs are unchanged and whose
// outputs are intact is skipped.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "phm/features.hpp"
#include "phm/fleet.hpp"
#include "phm/nn.hpp"
#include "phm/ukf.hpp"

namespace phm::pipeline {

enum class Architecture { Fnn, Cnn };
std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& s);

enum class AblationStudy { None, DatasetSize, FeatureSet, CalibrationQuality };
std::string to_string(AblationStudy study);
AblationStudy ablation_from_string(const std::string& s);

// Degradations applied to the calibrated health-parameter series right before
// feature assembly (stored traces stay clean). snr_db defaults to the
// no-noise sentinel; alpha_bias 0 is the identity.
struct PerturbationConfig {
  double snr_db = calib::kNoNoiseSnrDb;
  double alpha_bias = 0.0;

  bool active() const;
  void validate() const;
};

struct ExperimentConfig {
  fleet::FleetConfig fleet;            // master_seed overridden by the
                                       // experiment seed below
  calib::CalibrationConfig calibration;
  features::FeatureVariant variant = features::FeatureVariant::FullHybrid;
  Architecture arch = Architecture::Fnn;
  nn::TrainConfig train;               // seed field ignored; per-run seeds are
                                       // derived from master_seed
  int n_tw = 50;                       // window length for the conv net
  int window_stride = 1;
  double val_fraction = 0.1;
  int n_seeds = 5;
  std::uint64_t master_seed = 42;
  AblationStudy ablation = AblationStudy::None;
  PerturbationConfig perturbation;
  bool use_surrogate = false;          // test-split calibration through the
                                       // fitted response surrogate
  bool perfect_calibration = false;    // traces from ground-truth health
                                       // parameters and noise-free responses
  bool feature_set_use_ukf = false;    // feature-set study on filter outputs
                                       // instead of perfect calibration
  double horizon_threshold = 5.0;
  std::string out_dir = "runs/experiment";

  static ExperimentConfig defaults();
  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const std::string& path,
                            const ExperimentConfig& cfg);

// Restricts the development fleet to the listed unit ids (test units are
// kept); unknown ids are an error.
void restrict_dev_units(ExperimentConfig& cfg, const std::vector<int>& ids);

// Content hashing for manifests and resume checks.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

struct ArtifactRecord {
  std::string path;  // relative to out_dir
  std::string sha256;
};

struct StageRecord {
  std::string name;
  std::string input_key;  // hash of the stage's config slice + input hashes
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  double seconds = 0.0;
  bool skipped = false;  // most recent invocation was a resume no-op
  std::map<std::string, double> summary;
};

struct RunManifest {
  std::uint64_t master_seed = 0;
  nlohmann::json config;
  std::vector<std::string> stage_log;  // chronological stage invocations
  std::map<std::string, StageRecord> stages;
};

RunManifest load_manifest(const std::string& out_dir);  // fresh when absent
void save_manifest(const std::string& out_dir, const RunManifest& manifest);

// Individual stages. Each loads/extends the manifest under cfg.out_dir and
// returns its stage record. Split is "dev" or "test" for calibration.
StageRecord cmd_generate(const ExperimentConfig& cfg);
StageRecord cmd_calibrate(const ExperimentConfig& cfg,
                          const std::string& split);
StageRecord cmd_train(const ExperimentConfig& cfg);
StageRecord cmd_evaluate(const ExperimentConfig& cfg);

// Full pipeline in the fixed order: generate, calibrate the development
// split, train, calibrate the test split, evaluate. The manifest's stage log
// records the order.
RunManifest run_experiment(const ExperimentConfig& cfg);

// Comparison studies. Sub-runs live under <out_dir>/ablation/<study>/ and
// reuse the parent's generated data and traces whenever the input keys
// match. The returned report is also written to
// <out_dir>/ablation/<study>.json.
nlohmann::json cmd_ablate(const ExperimentConfig& cfg, AblationStudy study);

// Collects the run's manifest and evaluation summaries (plus any study
// reports) into <out_dir>/report/summary.json and returns it.
nlohmann::json cmd_report(const std::string& out_dir);

// Calibrated traces for one split with the configured perturbation applied to
// the health-parameter series; exposed for tests and the feature studies.
std::vector<calib::CalibratedTrace> load_split_traces(
    const ExperimentConfig& cfg, const std::string& split,
    const std::vector<fleet::UnitRecord>& units);

// Ground-truth trace: per-cycle true health parameters with noise-free model
// responses evaluated at them.
calib::CalibratedTrace perfect_trace(const fleet::UnitRecord& unit);

}  // namespace phm::pipeline
