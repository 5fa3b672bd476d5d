#include "phm/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "phm/engine_model.hpp"
#include "phm/errors.hpp"
#include "phm/evaluation.hpp"
#include "phm/random.hpp"
#include "phm/surrogate.hpp"

#include "phm/io/hash.hpp"

namespace phm::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const void* data, std::size_t len) {
  return io::sha256_hex(data, len);
}

std::string sha256_hex(const std::string& bytes) {
  return io::sha256_hex(bytes);
}

std::string sha256_file(const std::string& path) {
  return io::sha256_file(path);
}

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------
std::string to_string(Architecture arch) {
  return arch == Architecture::Fnn ? "fnn" : "cnn";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "fnn") return Architecture::Fnn;
  if (s == "cnn") return Architecture::Cnn;
  throw ConfigError("unknown architecture '" + s + "' (use fnn or cnn)");
}

std::string to_string(AblationStudy study) {
  switch (study) {
    case AblationStudy::None: return "none";
    case AblationStudy::DatasetSize: return "dataset_size";
    case AblationStudy::FeatureSet: return "feature_set";
    case AblationStudy::CalibrationQuality: return "calibration_quality";
  }
  throw ConfigError("unknown study value");
}

AblationStudy ablation_from_string(const std::string& s) {
  if (s == "none") return AblationStudy::None;
  if (s == "dataset_size") return AblationStudy::DatasetSize;
  if (s == "feature_set") return AblationStudy::FeatureSet;
  if (s == "calibration_quality") return AblationStudy::CalibrationQuality;
  throw ConfigError("unknown study '" + s +
                    "' (use dataset_size, feature_set, or calibration_quality)");
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------
bool PerturbationConfig::active() const {
  return std::isfinite(snr_db) || alpha_bias != 0.0;
}

void PerturbationConfig::validate() const {
  if (std::isnan(snr_db)) throw ConfigError("snr_db must not be NaN");
  if (std::isfinite(snr_db) && snr_db <= 0.0) {
    throw ConfigError("snr_db must be positive (or the no-noise sentinel)");
  }
  if (!std::isfinite(alpha_bias)) {
    throw ConfigError("alpha_bias must be finite");
  }
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.fleet = fleet::FleetConfig::defaults();
  return cfg;
}

void ExperimentConfig::validate() const {
  fleet.validate();
  calibration.validate();
  nn::TrainConfig tc = train;
  tc.seed = 1;  // the stored seed is unused; keep validation on the rest
  tc.validate();
  if (n_tw < 1) throw ConfigError("n_tw must be at least 1");
  if (window_stride < 1) throw ConfigError("window_stride must be at least 1");
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) {
    throw ConfigError("val_fraction must lie in (0, 0.5)");
  }
  if (n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
  if (!(horizon_threshold >= 0.0)) {
    throw ConfigError("horizon_threshold must be non-negative");
  }
  perturbation.validate();
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

namespace {

json eigen_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json eigen_to_json(const Eigen::Vector3d& v) {
  return json::array({v[0], v[1], v[2]});
}

Eigen::VectorXd eigen_from_json(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

Eigen::Vector3d vec3_from_json(const json& a) {
  if (a.size() != 3) throw ConfigError("expected a 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

json fleet_to_json(const fleet::FleetConfig& f) {
  json j;
  j["master_seed"] = f.master_seed;
  j["samples_per_cycle"] = f.samples_per_cycle;
  j["sensor_noise_sigma"] = f.sensor_noise_sigma;
  j["max_cycles"] = f.max_cycles;
  j["initial_spread"] = f.initial_spread;
  j["normal_rate_min"] = f.normal_rate_min;
  j["normal_rate_max"] = f.normal_rate_max;
  j["abnormal_rate_min"] = f.abnormal_rate_min;
  j["abnormal_rate_max"] = f.abnormal_rate_max;
  j["transition_smoothness"] = f.transition_smoothness;
  j["ts_min"] = f.ts_min;
  j["ts_max"] = f.ts_max;
  json units = json::array();
  for (const auto& u : f.units) {
    units.push_back({{"unit_id", u.unit_id},
                     {"route", fleet::to_string(u.route)},
                     {"mode", fleet::to_string(u.mode)},
                     {"dev", u.dev}});
  }
  j["units"] = units;
  return j;
}

fleet::FleetConfig fleet_from_json(const json& j, fleet::FleetConfig base) {
  base.master_seed = j.value("master_seed", base.master_seed);
  base.samples_per_cycle = j.value("samples_per_cycle", base.samples_per_cycle);
  base.sensor_noise_sigma =
      j.value("sensor_noise_sigma", base.sensor_noise_sigma);
  base.max_cycles = j.value("max_cycles", base.max_cycles);
  base.initial_spread = j.value("initial_spread", base.initial_spread);
  base.normal_rate_min = j.value("normal_rate_min", base.normal_rate_min);
  base.normal_rate_max = j.value("normal_rate_max", base.normal_rate_max);
  base.abnormal_rate_min = j.value("abnormal_rate_min", base.abnormal_rate_min);
  base.abnormal_rate_max = j.value("abnormal_rate_max", base.abnormal_rate_max);
  base.transition_smoothness =
      j.value("transition_smoothness", base.transition_smoothness);
  base.ts_min = j.value("ts_min", base.ts_min);
  base.ts_max = j.value("ts_max", base.ts_max);
  if (j.contains("units")) {
    base.units.clear();
    for (const auto& u : j.at("units")) {
      fleet::UnitSpec spec;
      spec.unit_id = u.at("unit_id").get<int>();
      spec.route = fleet::route_from_string(u.at("route").get<std::string>());
      spec.mode = fleet::mode_from_string(u.at("mode").get<std::string>());
      spec.dev = u.at("dev").get<bool>();
      base.units.push_back(spec);
    }
  }
  return base;
}

json calib_to_json(const calib::CalibrationConfig& c) {
  json j;
  j["q_diag"] = eigen_to_json(Eigen::Vector3d(c.ukf.q_diag));
  j["r_diag"] = eigen_to_json(c.ukf.r_diag);
  j["alpha_sp"] = c.ukf.alpha_sp;
  j["beta_sp"] = c.ukf.beta_sp;
  j["kappa_sp"] = c.ukf.kappa_sp;
  j["theta0"] = eigen_to_json(Eigen::Vector3d(c.ukf.theta0));
  j["p0_diag"] = eigen_to_json(Eigen::Vector3d(c.ukf.p0_diag));
  j["reference_samples_per_cycle"] = c.reference_samples_per_cycle;
  j["burn_in_cycles"] = c.burn_in_cycles;
  return j;
}

calib::CalibrationConfig calib_from_json(const json& j,
                                         calib::CalibrationConfig base) {
  if (j.contains("q_diag")) base.ukf.q_diag = vec3_from_json(j.at("q_diag"));
  if (j.contains("r_diag")) base.ukf.r_diag = eigen_from_json(j.at("r_diag"));
  base.ukf.alpha_sp = j.value("alpha_sp", base.ukf.alpha_sp);
  base.ukf.beta_sp = j.value("beta_sp", base.ukf.beta_sp);
  base.ukf.kappa_sp = j.value("kappa_sp", base.ukf.kappa_sp);
  if (j.contains("theta0")) base.ukf.theta0 = vec3_from_json(j.at("theta0"));
  if (j.contains("p0_diag")) base.ukf.p0_diag = vec3_from_json(j.at("p0_diag"));
  base.reference_samples_per_cycle =
      j.value("reference_samples_per_cycle", base.reference_samples_per_cycle);
  base.burn_in_cycles = j.value("burn_in_cycles", base.burn_in_cycles);
  return base;
}

json train_to_json(const nn::TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"lr", t.lr},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience}};
}

nn::TrainConfig train_from_json(const json& j, nn::TrainConfig base) {
  base.batch_size = j.value("batch_size", base.batch_size);
  base.lr = j.value("lr", base.lr);
  base.max_epochs = j.value("max_epochs", base.max_epochs);
  base.patience = j.value("patience", base.patience);
  return base;
}

json perturbation_to_json(const PerturbationConfig& p) {
  json j;
  if (std::isfinite(p.snr_db)) {
    j["snr_db"] = p.snr_db;
  } else {
    j["snr_db"] = nullptr;  // no-noise sentinel
  }
  j["alpha_bias"] = p.alpha_bias;
  return j;
}

PerturbationConfig perturbation_from_json(const json& j,
                                          PerturbationConfig base) {
  if (j.contains("snr_db")) {
    base.snr_db = j.at("snr_db").is_null() ? calib::kNoNoiseSnrDb
                                           : j.at("snr_db").get<double>();
  }
  base.alpha_bias = j.value("alpha_bias", base.alpha_bias);
  return base;
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["master_seed"] = cfg.master_seed;
  j["out_dir"] = cfg.out_dir;
  j["variant"] = features::to_string(cfg.variant);
  j["arch"] = to_string(cfg.arch);
  j["n_tw"] = cfg.n_tw;
  j["window_stride"] = cfg.window_stride;
  j["val_fraction"] = cfg.val_fraction;
  j["n_seeds"] = cfg.n_seeds;
  j["ablation"] = to_string(cfg.ablation);
  j["perturbation"] = perturbation_to_json(cfg.perturbation);
  j["use_surrogate"] = cfg.use_surrogate;
  j["perfect_calibration"] = cfg.perfect_calibration;
  j["feature_set_use_ukf"] = cfg.feature_set_use_ukf;
  j["horizon_threshold"] = cfg.horizon_threshold;
  j["fleet"] = fleet_to_json(cfg.fleet);
  j["calibration"] = calib_to_json(cfg.calibration);
  j["train"] = train_to_json(cfg.train);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  try {
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("variant")) {
      cfg.variant =
          features::variant_from_string(j.at("variant").get<std::string>());
    }
    if (j.contains("arch")) {
      cfg.arch = architecture_from_string(j.at("arch").get<std::string>());
    }
    cfg.n_tw = j.value("n_tw", cfg.n_tw);
    cfg.window_stride = j.value("window_stride", cfg.window_stride);
    cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
    cfg.n_seeds = j.value("n_seeds", cfg.n_seeds);
    if (j.contains("ablation")) {
      cfg.ablation =
          ablation_from_string(j.at("ablation").get<std::string>());
    }
    if (j.contains("perturbation")) {
      cfg.perturbation =
          perturbation_from_json(j.at("perturbation"), cfg.perturbation);
    }
    cfg.use_surrogate = j.value("use_surrogate", cfg.use_surrogate);
    cfg.perfect_calibration =
        j.value("perfect_calibration", cfg.perfect_calibration);
    cfg.feature_set_use_ukf =
        j.value("feature_set_use_ukf", cfg.feature_set_use_ukf);
    cfg.horizon_threshold = j.value("horizon_threshold", cfg.horizon_threshold);
    if (j.contains("fleet")) cfg.fleet = fleet_from_json(j.at("fleet"), cfg.fleet);
    if (j.contains("calibration")) {
      cfg.calibration = calib_from_json(j.at("calibration"), cfg.calibration);
    }
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"), cfg.train);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_experiment_config(const std::string& path,
                            const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config file: " + path);
  out << config_to_json(cfg).dump(2) << '\n';
}

void restrict_dev_units(ExperimentConfig& cfg, const std::vector<int>& ids) {
  if (ids.empty()) throw ConfigError("unit subset must not be empty");
  const auto specs = cfg.fleet.resolved_units();
  std::vector<fleet::UnitSpec> kept;
  for (const auto& s : specs) {
    if (!s.dev) kept.push_back(s);
  }
  for (int id : ids) {
    const auto it = std::find_if(specs.begin(), specs.end(),
                                 [&](const fleet::UnitSpec& s) {
                                   return s.dev && s.unit_id == id;
                                 });
    if (it == specs.end()) {
      throw ConfigError("unit " + std::to_string(id) +
                        " is not a development unit of the configured fleet");
    }
    kept.push_back(*it);
  }
  std::sort(kept.begin(), kept.end(),
            [](const fleet::UnitSpec& a, const fleet::UnitSpec& b) {
              return a.unit_id < b.unit_id;
            });
  cfg.fleet.units = std::move(kept);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------
namespace {

json stage_to_json(const StageRecord& r) {
  json j;
  j["name"] = r.name;
  j["input_key"] = r.input_key;
  json ins = json::array();
  for (const auto& a : r.inputs) ins.push_back({{"path", a.path}, {"sha256", a.sha256}});
  json outs = json::array();
  for (const auto& a : r.outputs) outs.push_back({{"path", a.path}, {"sha256", a.sha256}});
  j["inputs"] = ins;
  j["outputs"] = outs;
  j["seconds"] = r.seconds;
  j["skipped"] = r.skipped;
  j["summary"] = r.summary;
  return j;
}

StageRecord stage_from_json(const json& j) {
  StageRecord r;
  r.name = j.at("name").get<std::string>();
  r.input_key = j.at("input_key").get<std::string>();
  for (const auto& a : j.at("inputs")) {
    r.inputs.push_back({a.at("path").get<std::string>(),
                        a.at("sha256").get<std::string>()});
  }
  for (const auto& a : j.at("outputs")) {
    r.outputs.push_back({a.at("path").get<std::string>(),
                         a.at("sha256").get<std::string>()});
  }
  r.seconds = j.value("seconds", 0.0);
  r.skipped = j.value("skipped", false);
  if (j.contains("summary")) {
    r.summary = j.at("summary").get<std::map<std::string, double>>();
  }
  return r;
}

std::string manifest_path(const std::string& out_dir) {
  return (fs::path(out_dir) / "manifest.json").string();
}

}  // namespace

RunManifest load_manifest(const std::string& out_dir) {
  RunManifest m;
  const std::string path = manifest_path(out_dir);
  std::ifstream in(path);
  if (!in) return m;
  json j;
  try {
    in >> j;
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    m.config = j.value("config", json::object());
    m.stage_log = j.value("stage_log", std::vector<std::string>{});
    if (j.contains("stages")) {
      for (const auto& [name, sj] : j.at("stages").items()) {
        m.stages[name] = stage_from_json(sj);
      }
    }
  } catch (const json::exception& e) {
    throw IoError("manifest " + path + " is corrupt: " + e.what());
  }
  return m;
}

void save_manifest(const std::string& out_dir, const RunManifest& m) {
  json j;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config;
  j["stage_log"] = m.stage_log;
  json stages = json::object();
  for (const auto& [name, r] : m.stages) stages[name] = stage_to_json(r);
  j["stages"] = stages;
  std::ofstream out(manifest_path(out_dir), std::ios::trunc);
  if (!out) throw IoError("cannot write manifest under " + out_dir);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Stage framework
// ---------------------------------------------------------------------------
namespace {

// One master seed steers every stage; the fleet seed is slaved to it so a
// single number controls the whole run.
ExperimentConfig effective(const ExperimentConfig& cfg) {
  ExperimentConfig e = cfg;
  e.fleet.master_seed = e.master_seed;
  return e;
}

std::string join(const std::string& out_dir, const std::string& rel) {
  return (fs::path(out_dir) / rel).string();
}

ArtifactRecord hash_artifact(const std::string& out_dir,
                             const std::string& rel) {
  return {rel, sha256_file(join(out_dir, rel))};
}

std::string make_input_key(const json& slice,
                           const std::vector<ArtifactRecord>& inputs) {
  std::string blob = slice.dump();
  for (const auto& a : inputs) blob += '|' + a.path + ':' + a.sha256;
  return sha256_hex(blob);
}

bool outputs_intact(const std::string& out_dir, const StageRecord& r) {
  for (const auto& a : r.outputs) {
    const std::string p = join(out_dir, a.path);
    if (!fs::exists(p)) return false;
    if (sha256_file(p) != a.sha256) return false;
  }
  return !r.outputs.empty();
}

// Returns the cached record when the stage can be skipped, nullopt otherwise.
std::optional<StageRecord> resume_stage(RunManifest& m,
                                        const std::string& out_dir,
                                        const std::string& name,
                                        const std::string& input_key) {
  auto it = m.stages.find(name);
  if (it == m.stages.end()) return std::nullopt;
  if (it->second.input_key != input_key) return std::nullopt;
  if (!outputs_intact(out_dir, it->second)) return std::nullopt;
  it->second.skipped = true;
  m.stage_log.push_back(name);
  save_manifest(out_dir, m);
  return it->second;
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

StageRecord finish_stage(RunManifest& m, const std::string& out_dir,
                         StageRecord r, const StageTimer& timer) {
  r.seconds = timer.seconds();
  r.skipped = false;
  m.stages[r.name] = r;
  m.stage_log.push_back(r.name);
  save_manifest(out_dir, m);
  return r;
}

RunManifest open_run(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  RunManifest m = load_manifest(cfg.out_dir);
  m.master_seed = cfg.master_seed;
  m.config = config_to_json(cfg);
  save_experiment_config(join(cfg.out_dir, "config.json"), cfg);
  return m;
}

// --- artifact path conventions ---
std::string data_csv(const std::string& split) { return "data/" + split + ".csv"; }
const char* kFleetJson = "data/fleet.json";
const char* kNormalizerJson = "features/normalizer.json";

std::string trace_rel(const std::string& split, int unit_id) {
  return "calib/" + split + "_unit_" + std::to_string(unit_id) + ".csv";
}

std::string model_rel(int seed_index) {
  return "models/seed" + std::to_string(seed_index) + ".net";
}

std::string train_log_rel(int seed_index) {
  return "models/seed" + std::to_string(seed_index) + "_log.csv";
}

std::string report_rel(int seed_index) {
  return "eval/report_seed" + std::to_string(seed_index) + ".json";
}

std::string cycles_rel(int seed_index) {
  return "eval/cycles_seed" + std::to_string(seed_index) + ".csv";
}

std::vector<fleet::UnitRecord> read_units(const ExperimentConfig& cfg,
                                          const std::string& split) {
  const std::string path = join(cfg.out_dir, data_csv(split));
  if (!fs::exists(path)) {
    throw ConfigError("missing dataset file " + path +
                      "; run the generate stage first");
  }
  return fleet::read_dataset_csv(path);
}

json read_fleet_json(const ExperimentConfig& cfg) {
  const std::string path = join(cfg.out_dir, kFleetJson);
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("missing fleet manifest " + path +
                      "; run the generate stage first");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("fleet manifest " + path + " is corrupt: " + e.what());
  }
  return j;
}

std::vector<int> split_unit_ids(const json& fleet_json,
                                const std::string& split) {
  std::vector<int> ids;
  for (const auto& u : fleet_json.at("units")) {
    if (u.at("split").get<std::string>() == split) {
      ids.push_back(u.at("unit_id").get<int>());
    }
  }
  return ids;
}

bool variant_needs_traces(features::FeatureVariant v) {
  return v != features::FeatureVariant::DataDriven;
}

struct Stats {
  double mean = 0.0;
  double stdev = 0.0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

json stats_to_json(const std::vector<double>& per_seed) {
  const Stats s = mean_std(per_seed);
  return {{"mean", s.mean}, {"std", s.stdev}, {"per_seed", per_seed}};
}

}  // namespace

calib::CalibratedTrace perfect_trace(const fleet::UnitRecord& unit) {
  calib::CalibratedTrace t;
  t.unit_id = unit.unit_id;
  t.burn_in_samples = 0;
  for (std::size_t c = 0; c < unit.cycles.size(); ++c) {
    const auto& cyc = unit.cycles[c];
    const engine::HealthState& theta = unit.theta[c];
    for (std::size_t s = 0; s < cyc.samples.size(); ++s) {
      const auto out = engine::evaluate_model(cyc.samples[s].w, theta);
      t.cycle.push_back(cyc.cycle_index);
      t.sample.push_back(static_cast<int>(s));
      t.theta_hat.push_back(theta);
      t.xhat_s.push_back(out.sensors);
      t.xhat_v.push_back(out.virtuals);
      t.innovation_norm.push_back(0.0);
      t.theta_std.push_back({0.0, 0.0, 0.0});
      t.clamped.push_back(0);
    }
  }
  return t;
}

std::vector<calib::CalibratedTrace> load_split_traces(
    const ExperimentConfig& raw_cfg, const std::string& split,
    const std::vector<fleet::UnitRecord>& units) {
  const ExperimentConfig cfg = effective(raw_cfg);
  std::vector<calib::CalibratedTrace> traces;
  traces.reserve(units.size());
  for (const auto& unit : units) {
    const std::string rel = trace_rel(split, unit.unit_id);
    const std::string path = join(cfg.out_dir, rel);
    if (!fs::exists(path)) {
      throw ConfigError("missing calibrated trace " + path +
                        "; run the calibrate stage first");
    }
    calib::CalibratedTrace t = calib::read_trace_csv(path);
    if (cfg.perturbation.active()) {
      auto series = calib::inject_bias(t.theta_hat, cfg.perturbation.alpha_bias);
      series = calib::inject_noise(
          series, cfg.perturbation.snr_db,
          derive_seed(cfg.master_seed,
                      {seed_tag::kPerturb,
                       static_cast<std::uint64_t>(unit.unit_id)}));
      t.theta_hat = std::move(series);
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Stage: generate
// ---------------------------------------------------------------------------
StageRecord cmd_generate(const ExperimentConfig& raw_cfg) {
  const ExperimentConfig cfg = effective(raw_cfg);
  cfg.validate();
  RunManifest manifest = open_run(cfg);

  json slice;
  slice["stage"] = "generate";
  slice["fleet"] = fleet_to_json(cfg.fleet);
  const std::string key = make_input_key(slice, {});
  if (auto cached = resume_stage(manifest, cfg.out_dir, "generate", key)) {
    return *cached;
  }

  StageTimer timer;
  fs::create_directories(join(cfg.out_dir, "data"));
  const fleet::Fleet f = fleet::build_fleet(cfg.fleet);

  fleet::write_dataset_csv(join(cfg.out_dir, data_csv("dev")), f.dev);
  fleet::write_dataset_csv(join(cfg.out_dir, data_csv("test")), f.test);

  json fj;
  fj["config"] = fleet_to_json(cfg.fleet);
  json units = json::array();
  auto push_units = [&](const std::vector<fleet::UnitRecord>& us,
                        const std::string& split) {
    for (const auto& u : us) {
      units.push_back({{"unit_id", u.unit_id},
                       {"split", split},
                       {"route", fleet::to_string(u.route)},
                       {"mode", fleet::to_string(u.mode)},
                       {"seed", u.seed},
                       {"t_s", u.t_s},
                       {"t_eol", u.t_eol},
                       {"resamples", u.resamples},
                       {"cycles", u.cycles.size()},
                       {"samples", u.sample_count()}});
    }
  };
  push_units(f.dev, "dev");
  push_units(f.test, "test");
  fj["units"] = units;
  {
    std::ofstream out(join(cfg.out_dir, kFleetJson), std::ios::trunc);
    if (!out) throw IoError("cannot write fleet manifest");
    out << fj.dump(2) << '\n';
  }

  StageRecord r;
  r.name = "generate";
  r.input_key = key;
  r.outputs.push_back(hash_artifact(cfg.out_dir, data_csv("dev")));
  r.outputs.push_back(hash_artifact(cfg.out_dir, data_csv("test")));
  r.outputs.push_back(hash_artifact(cfg.out_dir, kFleetJson));
  r.summary["dev_units"] = static_cast<double>(f.dev.size());
  r.summary["test_units"] = static_cast<double>(f.test.size());
  double dev_samples = 0.0, test_samples = 0.0;
  for (const auto& u : f.dev) dev_samples += static_cast<double>(u.sample_count());
  for (const auto& u : f.test) test_samples += static_cast<double>(u.sample_count());
  r.summary["dev_samples"] = dev_samples;
  r.summary["test_samples"] = test_samples;
  return finish_stage(manifest, cfg.out_dir, std::move(r), timer);
}

// ---------------------------------------------------------------------------
// Stage: calibrate
// ---------------------------------------------------------------------------
StageRecord cmd_calibrate(const ExperimentConfig& raw_cfg,
                          const std::string& split) {
  const ExperimentConfig cfg = effective(raw_cfg);
  cfg.validate();
  if (split != "dev" && split != "test") {
    throw ConfigError("split must be 'dev' or 'test', got '" + split + "'");
  }
  const bool surrogate = cfg.use_surrogate && !cfg.perfect_calibration;
  if (surrogate && split == "dev") {
    throw ConfigError(
        "surrogate calibration applies to the test split only; the "
        "development split supplies the tuples the surrogate is fitted on");
  }
  RunManifest manifest = open_run(cfg);
  const std::string stage_name = "calibrate:" + split;

  std::vector<ArtifactRecord> inputs;
  inputs.push_back(hash_artifact(cfg.out_dir, data_csv(split)));
  json fleet_json = read_fleet_json(cfg);
  if (surrogate) {
    inputs.push_back(hash_artifact(cfg.out_dir, data_csv("dev")));
    for (int id : split_unit_ids(fleet_json, "dev")) {
      inputs.push_back(hash_artifact(cfg.out_dir, trace_rel("dev", id)));
    }
  }
  json slice;
  slice["stage"] = stage_name;
  slice["calibration"] = calib_to_json(cfg.calibration);
  slice["perfect_calibration"] = cfg.perfect_calibration;
  slice["use_surrogate"] = surrogate;
  slice["master_seed"] = cfg.master_seed;
  const std::string key = make_input_key(slice, inputs);
  if (auto cached = resume_stage(manifest, cfg.out_dir, stage_name, key)) {
    return *cached;
  }

  StageTimer timer;
  fs::create_directories(join(cfg.out_dir, "calib"));
  const auto units = read_units(cfg, split);

  calib::MeasurementModel exact = calib::exact_measurement_model();
  std::optional<surrogate::SurrogateModel> surrogate_model;
  if (surrogate) {
    const auto dev_units = read_units(cfg, "dev");
    std::vector<surrogate::FitStream> streams;
    for (const auto& u : dev_units) {
      const std::string p = join(cfg.out_dir, trace_rel("dev", u.unit_id));
      streams.push_back(
          surrogate::stream_from_trace(u, calib::read_trace_csv(p)));
    }
    auto scfg = surrogate::SurrogateTrainConfig::defaults();
    scfg.seed = derive_seed(cfg.master_seed, {seed_tag::kSurrogate});
    surrogate_model = surrogate::fit_surrogate(streams, scfg);
  }

  StageRecord r;
  r.name = stage_name;
  r.input_key = key;
  r.inputs = inputs;

  double rmse_acc[3] = {0.0, 0.0, 0.0};
  double clamped = 0.0, total = 0.0;
  for (const auto& unit : units) {
    calib::CalibratedTrace trace;
    if (cfg.perfect_calibration) {
      trace = perfect_trace(unit);
    } else {
      // A recurrent surrogate closure carries per-trajectory state; a fresh
      // one is required for every unit.
      const calib::MeasurementModel model =
          surrogate_model ? surrogate_model->recurrent_model() : exact;
      trace = calib::calibrate_trajectory(unit, model, cfg.calibration);
    }
    const std::string rel = trace_rel(split, unit.unit_id);
    calib::write_trace_csv(join(cfg.out_dir, rel), trace);
    r.outputs.push_back(hash_artifact(cfg.out_dir, rel));

    // Post-burn-in recovery quality against the stored ground truth.
    double acc[3] = {0.0, 0.0, 0.0};
    std::size_t n = 0;
    for (std::size_t i = trace.burn_in_samples; i < trace.size(); ++i) {
      const auto est = trace.theta_hat[i].as_array();
      const auto tru =
          unit.theta[static_cast<std::size_t>(trace.cycle[i] - 1)].as_array();
      for (int k = 0; k < 3; ++k) {
        const double d = est[static_cast<std::size_t>(k)] -
                         tru[static_cast<std::size_t>(k)];
        acc[k] += d * d;
      }
      ++n;
    }
    if (n > 0) {
      for (int k = 0; k < 3; ++k) {
        rmse_acc[k] += std::sqrt(acc[k] / static_cast<double>(n));
      }
    }
    clamped += static_cast<double>(trace.clamp_count());
    total += static_cast<double>(trace.size());
  }
  const double nu = static_cast<double>(units.size());
  r.summary["units"] = nu;
  r.summary["theta_rmse_hpt_eff"] = nu > 0 ? rmse_acc[0] / nu : 0.0;
  r.summary["theta_rmse_lpt_eff"] = nu > 0 ? rmse_acc[1] / nu : 0.0;
  r.summary["theta_rmse_lpt_flow"] = nu > 0 ? rmse_acc[2] / nu : 0.0;
  r.summary["clamped_fraction"] = total > 0.0 ? clamped / total : 0.0;
  return finish_stage(manifest, cfg.out_dir, std::move(r), timer);
}

// ---------------------------------------------------------------------------
// Stage: train
// ---------------------------------------------------------------------------
namespace {

void write_normalizer_json(const std::string& path,
                           const features::NormalizerParams& p,
                           features::FeatureVariant variant) {
  json j;
  j["variant"] = features::to_string(variant);
  j["columns"] = features::variant_column_names(variant);
  j["provenance"] = p.provenance;
  j["lo"] = eigen_to_json(p.lo);
  j["hi"] = eigen_to_json(p.hi);
  j["degenerate"] = p.degenerate;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write normalizer file: " + path);
  out << j.dump(2) << '\n';
}

features::NormalizerParams read_normalizer_json(
    const std::string& path, features::FeatureVariant expect_variant) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("missing normalizer file " + path +
                      "; run the train stage first");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("normalizer file " + path + " is corrupt: " + e.what());
  }
  try {
    if (j.at("variant").get<std::string>() !=
        features::to_string(expect_variant)) {
      throw ConfigError("normalizer at " + path + " was fitted for variant " +
                        j.at("variant").get<std::string>() +
                        ", not the configured " +
                        features::to_string(expect_variant));
    }
    features::NormalizerParams p;
    p.provenance = j.at("provenance").get<std::string>();
    p.lo = eigen_from_json(j.at("lo"));
    p.hi = eigen_from_json(j.at("hi"));
    p.degenerate = j.at("degenerate").get<std::vector<std::uint8_t>>();
    return p;
  } catch (const json::exception& e) {
    throw IoError("normalizer file " + path + " is missing fields: " + e.what());
  }
}

// Assembled + normalized matrix for one split, honoring the variant's trace
// needs and the configured perturbation.
features::EnhancedFeatureMatrix assemble_split(
    const ExperimentConfig& cfg, const std::string& split,
    const features::NormalizerParams* normalizer,
    features::NormalizerParams* fitted_out) {
  const auto units = read_units(cfg, split);
  std::vector<calib::CalibratedTrace> traces;
  if (variant_needs_traces(cfg.variant)) {
    traces = load_split_traces(cfg, split, units);
  }
  auto m = features::assemble_fleet(units, traces, cfg.variant);
  features::NormalizerParams p;
  if (normalizer != nullptr) {
    p = *normalizer;
  } else {
    p = features::fit_normalizer(m.values, split);
  }
  if (fitted_out != nullptr) *fitted_out = p;
  return features::normalized(m, p);
}

struct TrainData {
  nn::Dataset train;
  nn::Dataset val;
  int feature_count = 0;
};

TrainData build_datasets(const ExperimentConfig& cfg,
                         const features::EnhancedFeatureMatrix& norm) {
  TrainData d;
  d.feature_count = static_cast<int>(norm.values.cols());
  if (cfg.arch == Architecture::Fnn) {
    const auto split = features::split_validation(norm.unit, cfg.val_fraction,
                                                  cfg.master_seed);
    d.train = features::gather_dense(norm, split.train);
    d.val = features::gather_dense(norm, split.val);
  } else {
    const auto windows =
        features::sliding_windows(norm, cfg.n_tw, cfg.window_stride);
    if (windows.size() == 0) {
      throw ConfigError("no training windows: every unit is shorter than " +
                        std::to_string(cfg.n_tw) + " samples");
    }
    const auto split = features::split_validation(windows.unit,
                                                  cfg.val_fraction,
                                                  cfg.master_seed);
    d.train = features::gather_windows(windows, split.train);
    d.val = features::gather_windows(windows, split.val);
  }
  return d;
}

nn::Network build_architecture(const ExperimentConfig& cfg, int features_count) {
  if (cfg.arch == Architecture::Fnn) return nn::build_fnn(features_count);
  return nn::build_cnn(features_count, cfg.n_tw);
}

}  // namespace

StageRecord cmd_train(const ExperimentConfig& raw_cfg) {
  const ExperimentConfig cfg = effective(raw_cfg);
  cfg.validate();
  RunManifest manifest = open_run(cfg);

  json fleet_json = read_fleet_json(cfg);
  std::vector<ArtifactRecord> inputs;
  inputs.push_back(hash_artifact(cfg.out_dir, data_csv("dev")));
  if (variant_needs_traces(cfg.variant)) {
    for (int id : split_unit_ids(fleet_json, "dev")) {
      inputs.push_back(hash_artifact(cfg.out_dir, trace_rel("dev", id)));
    }
  }
  json slice;
  slice["stage"] = "train";
  slice["variant"] = features::to_string(cfg.variant);
  slice["arch"] = to_string(cfg.arch);
  slice["train"] = train_to_json(cfg.train);
  slice["n_tw"] = cfg.n_tw;
  slice["window_stride"] = cfg.window_stride;
  slice["val_fraction"] = cfg.val_fraction;
  slice["n_seeds"] = cfg.n_seeds;
  slice["master_seed"] = cfg.master_seed;
  slice["perturbation"] = perturbation_to_json(cfg.perturbation);
  const std::string key = make_input_key(slice, inputs);
  if (auto cached = resume_stage(manifest, cfg.out_dir, "train", key)) {
    return *cached;
  }

  StageTimer timer;
  fs::create_directories(join(cfg.out_dir, "features"));
  fs::create_directories(join(cfg.out_dir, "models"));

  features::NormalizerParams normalizer;
  const auto norm = assemble_split(cfg, "dev", nullptr, &normalizer);
  normalizer.provenance = "dev";
  write_normalizer_json(join(cfg.out_dir, kNormalizerJson), normalizer,
                        cfg.variant);
  const TrainData data = build_datasets(cfg, norm);

  StageRecord r;
  r.name = "train";
  r.input_key = key;
  r.inputs = inputs;
  r.outputs.push_back(hash_artifact(cfg.out_dir, kNormalizerJson));

  std::vector<double> best_rmse;
  for (int k = 0; k < cfg.n_seeds; ++k) {
    nn::Network net = build_architecture(cfg, data.feature_count);
    nn::xavier_init(net, derive_seed(cfg.master_seed,
                                     {seed_tag::kInit,
                                      static_cast<std::uint64_t>(k)}));
    nn::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.master_seed,
                          {seed_tag::kTraining, static_cast<std::uint64_t>(k)});
    const nn::TrainLog log = nn::train(net, data.train, data.val, tc);
    const double best =
        log.val_rmse[static_cast<std::size_t>(log.best_epoch - 1)];
    best_rmse.push_back(best);

    json meta;
    meta["variant"] = features::to_string(cfg.variant);
    meta["arch"] = to_string(cfg.arch);
    meta["seed_index"] = k;
    meta["train_seed"] = tc.seed;
    meta["n_tw"] = cfg.n_tw;
    nn::save_network(join(cfg.out_dir, model_rel(k)), net, meta.dump());
    nn::write_train_log_csv(join(cfg.out_dir, train_log_rel(k)), log);
    r.outputs.push_back(hash_artifact(cfg.out_dir, model_rel(k)));
    r.outputs.push_back(hash_artifact(cfg.out_dir, train_log_rel(k)));
  }

  const Stats s = mean_std(best_rmse);
  r.summary["val_rmse_mean"] = s.mean;
  r.summary["val_rmse_std"] = s.stdev;
  r.summary["train_rows"] = static_cast<double>(data.train.y.size());
  r.summary["val_rows"] = static_cast<double>(data.val.y.size());
  return finish_stage(manifest, cfg.out_dir, std::move(r), timer);
}

// ---------------------------------------------------------------------------
// Stage: evaluate
// ---------------------------------------------------------------------------
StageRecord cmd_evaluate(const ExperimentConfig& raw_cfg) {
  const ExperimentConfig cfg = effective(raw_cfg);
  cfg.validate();
  RunManifest manifest = open_run(cfg);

  json fleet_json = read_fleet_json(cfg);
  std::vector<ArtifactRecord> inputs;
  inputs.push_back(hash_artifact(cfg.out_dir, data_csv("test")));
  if (variant_needs_traces(cfg.variant)) {
    for (int id : split_unit_ids(fleet_json, "test")) {
      const std::string rel = trace_rel("test", id);
      if (!fs::exists(join(cfg.out_dir, rel))) {
        throw ConfigError("missing calibrated trace " + rel +
                          "; run the calibrate stage on the test split first");
      }
      inputs.push_back(hash_artifact(cfg.out_dir, rel));
    }
  }
  if (!fs::exists(join(cfg.out_dir, kNormalizerJson))) {
    throw ConfigError("missing " + std::string(kNormalizerJson) +
                      "; run the train stage first");
  }
  inputs.push_back(hash_artifact(cfg.out_dir, kNormalizerJson));
  for (int k = 0; k < cfg.n_seeds; ++k) {
    if (!fs::exists(join(cfg.out_dir, model_rel(k)))) {
      throw ConfigError("missing model " + model_rel(k) +
                        "; run the train stage first");
    }
    inputs.push_back(hash_artifact(cfg.out_dir, model_rel(k)));
  }
  json slice;
  slice["stage"] = "evaluate";
  slice["variant"] = features::to_string(cfg.variant);
  slice["arch"] = to_string(cfg.arch);
  slice["n_tw"] = cfg.n_tw;
  slice["window_stride"] = cfg.window_stride;
  slice["n_seeds"] = cfg.n_seeds;
  slice["horizon_threshold"] = cfg.horizon_threshold;
  slice["master_seed"] = cfg.master_seed;
  slice["perturbation"] = perturbation_to_json(cfg.perturbation);
  const std::string key = make_input_key(slice, inputs);
  if (auto cached = resume_stage(manifest, cfg.out_dir, "evaluate", key)) {
    return *cached;
  }

  StageTimer timer;
  fs::create_directories(join(cfg.out_dir, "eval"));

  const features::NormalizerParams normalizer = read_normalizer_json(
      join(cfg.out_dir, kNormalizerJson), cfg.variant);
  const auto norm = assemble_split(cfg, "test", &normalizer, nullptr);

  std::map<int, int> t_eol;
  for (const auto& u : fleet_json.at("units")) {
    t_eol[u.at("unit_id").get<int>()] = u.at("t_eol").get<int>();
  }

  StageRecord r;
  r.name = "evaluate";
  r.input_key = key;
  r.inputs = inputs;

  std::vector<double> rmses, scores, scaled, horizons;
  std::map<int, std::vector<double>> unit_horizons;
  for (int k = 0; k < cfg.n_seeds; ++k) {
    const nn::Network net = nn::load_network(join(cfg.out_dir, model_rel(k)));

    eval::PredictionSet pred;
    if (cfg.arch == Architecture::Fnn) {
      const Eigen::VectorXd yhat = nn::predict(net, norm.values.transpose());
      pred.y_hat.assign(yhat.data(), yhat.data() + yhat.size());
      pred.y.assign(norm.rul.data(), norm.rul.data() + norm.rul.size());
      pred.unit = norm.unit;
      pred.cycle = norm.cycle;
    } else {
      const auto windows =
          features::sliding_windows(norm, cfg.n_tw, cfg.window_stride);
      if (windows.size() == 0) {
        throw ConfigError("no evaluation windows: every test unit is shorter "
                          "than " + std::to_string(cfg.n_tw) + " samples");
      }
      std::vector<Eigen::Index> all(windows.size());
      std::iota(all.begin(), all.end(), Eigen::Index{0});
      const nn::Dataset ds = features::gather_windows(windows, all);
      const Eigen::VectorXd yhat = nn::predict(net, ds.x);
      pred.y_hat.assign(yhat.data(), yhat.data() + yhat.size());
      pred.y.assign(windows.rul.data(),
                    windows.rul.data() + windows.rul.size());
      pred.unit = windows.unit;
      pred.cycle = windows.cycle;
    }

    const eval::PrognosticReport rep = [&] {
      eval::PrognosticReport rp =
          eval::evaluate_predictions(pred, t_eol, cfg.horizon_threshold);
      rp.metadata["variant"] = features::to_string(cfg.variant);
      rp.metadata["arch"] = to_string(cfg.arch);
      rp.metadata["seed_index"] = std::to_string(k);
      return rp;
    }();
    eval::write_report_json(join(cfg.out_dir, report_rel(k)), rep);
    eval::write_cycle_csv(join(cfg.out_dir, cycles_rel(k)), rep);
    r.outputs.push_back(hash_artifact(cfg.out_dir, report_rel(k)));
    r.outputs.push_back(hash_artifact(cfg.out_dir, cycles_rel(k)));

    rmses.push_back(rep.rmse_value);
    scores.push_back(rep.s_score);
    scaled.push_back(rep.s_score_scaled);
    horizons.push_back(rep.fleet_average_horizon);
    for (const auto& h : rep.horizons) {
      unit_horizons[h.unit_id].push_back(h.horizon);
    }
  }

  json agg;
  agg["variant"] = features::to_string(cfg.variant);
  agg["arch"] = to_string(cfg.arch);
  agg["n_seeds"] = cfg.n_seeds;
  agg["horizon_threshold"] = cfg.horizon_threshold;
  agg["rmse"] = stats_to_json(rmses);
  agg["s_score"] = stats_to_json(scores);
  agg["s_score_scaled"] = stats_to_json(scaled);
  agg["fleet_average_horizon"] = stats_to_json(horizons);
  json per_unit = json::object();
  for (const auto& [uid, hs] : unit_horizons) {
    per_unit[std::to_string(uid)] = stats_to_json(hs);
  }
  agg["per_unit_horizon"] = per_unit;
  {
    std::ofstream out(join(cfg.out_dir, "eval/aggregate.json"),
                      std::ios::trunc);
    if (!out) throw IoError("cannot write evaluation aggregate");
    out << agg.dump(2) << '\n';
  }
  r.outputs.push_back(hash_artifact(cfg.out_dir, "eval/aggregate.json"));

  r.summary["rmse_mean"] = mean_std(rmses).mean;
  r.summary["rmse_std"] = mean_std(rmses).stdev;
  r.summary["s_score_mean"] = mean_std(scores).mean;
  r.summary["fleet_horizon_mean"] = mean_std(horizons).mean;
  return finish_stage(manifest, cfg.out_dir, std::move(r), timer);
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------
RunManifest run_experiment(const ExperimentConfig& raw_cfg) {
  const ExperimentConfig cfg = effective(raw_cfg);
  cfg.validate();
  // Fixed stage order: the test split is calibrated only after training, and
  // predictions come last.
  cmd_generate(cfg);
  cmd_calibrate(cfg, "dev");
  cmd_train(cfg);
  cmd_calibrate(cfg, "test");
  cmd_evaluate(cfg);
  return load_manifest(cfg.out_dir);
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------
namespace {

// Copies the parent run's generated data and calibrated traces into a
// sub-run directory together with their manifest records, so the sub-run's
// resume check can skip identical work. Mismatched configs simply recompute.
void seed_subrun(const std::string& parent_dir, const std::string& sub_dir) {
  const RunManifest parent = load_manifest(parent_dir);
  RunManifest sub = load_manifest(sub_dir);
  fs::create_directories(sub_dir);
  bool copied = false;
  for (const char* stage : {"generate", "calibrate:dev", "calibrate:test"}) {
    const auto it = parent.stages.find(stage);
    if (it == parent.stages.end()) continue;
    if (!outputs_intact(parent_dir, it->second)) continue;
    for (const auto& a : it->second.outputs) {
      const fs::path src = fs::path(parent_dir) / a.path;
      const fs::path dst = fs::path(sub_dir) / a.path;
      fs::create_directories(dst.parent_path());
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    }
    StageRecord rec = it->second;
    rec.skipped = true;
    sub.stages[stage] = rec;
    copied = true;
  }
  if (copied) save_manifest(sub_dir, sub);
}

ExperimentConfig subrun_config(const ExperimentConfig& base,
                               AblationStudy study, const std::string& label) {
  ExperimentConfig cfg = base;
  cfg.ablation = AblationStudy::None;
  cfg.out_dir = (fs::path(base.out_dir) / "ablation" / to_string(study) /
                 label)
                    .string();
  return cfg;
}

json read_aggregate(const std::string& out_dir) {
  const std::string path = (fs::path(out_dir) / "eval/aggregate.json").string();
  std::ifstream in(path);
  if (!in) throw IoError("missing evaluation aggregate: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("evaluation aggregate " + path + " is corrupt: " + e.what());
  }
  return j;
}

json run_cell(const ExperimentConfig& base, AblationStudy study,
              const std::string& label,
              const std::function<void(ExperimentConfig&)>& tweak) {
  ExperimentConfig cfg = subrun_config(base, study, label);
  tweak(cfg);
  seed_subrun(base.out_dir, cfg.out_dir);
  run_experiment(cfg);
  json agg = read_aggregate(cfg.out_dir);
  agg["label"] = label;
  return agg;
}

void write_study_json(const ExperimentConfig& base, AblationStudy study,
                      const json& report) {
  const fs::path dir = fs::path(base.out_dir) / "ablation";
  fs::create_directories(dir);
  std::ofstream out(dir / (to_string(study) + ".json"), std::ios::trunc);
  if (!out) throw IoError("cannot write study report");
  out << report.dump(2) << '\n';
}

double agg_rmse_mean(const json& agg) {
  return agg.at("rmse").at("mean").get<double>();
}

}  // namespace

json cmd_ablate(const ExperimentConfig& raw_cfg, AblationStudy study) {
  const ExperimentConfig base = effective(raw_cfg);
  base.validate();
  if (study == AblationStudy::None) {
    throw ConfigError("no study selected; choose dataset_size, feature_set, "
                      "or calibration_quality");
  }
  json report;
  report["study"] = to_string(study);
  report["master_seed"] = base.master_seed;

  if (study == AblationStudy::DatasetSize) {
    // Full fleet vs. the three complex-failure development units, for both
    // the plain data-driven variant and the full physics-augmented one.
    const std::vector<int> reduced_ids = {16, 18, 20};
    struct Cell {
      const char* label;
      features::FeatureVariant variant;
      bool reduced;
    };
    const std::vector<Cell> cells = {
        {"data_driven_full", features::FeatureVariant::DataDriven, false},
        {"data_driven_reduced", features::FeatureVariant::DataDriven, true},
        {"full_hybrid_full", features::FeatureVariant::FullHybrid, false},
        {"full_hybrid_reduced", features::FeatureVariant::FullHybrid, true}};
    std::map<std::string, json> aggs;
    for (const auto& cell : cells) {
      aggs[cell.label] = run_cell(
          base, study, cell.label, [&](ExperimentConfig& cfg) {
            cfg.variant = cell.variant;
            cfg.perturbation = PerturbationConfig{};
            if (cell.reduced) restrict_dev_units(cfg, reduced_ids);
          });
    }
    json rows = json::array();
    double dd_delta = 0.0, fh_delta = 0.0;
    for (const char* approach : {"data_driven", "full_hybrid"}) {
      const double full =
          agg_rmse_mean(aggs[std::string(approach) + "_full"]);
      const double reduced =
          agg_rmse_mean(aggs[std::string(approach) + "_reduced"]);
      const double delta_pct =
          full > 0.0 ? (reduced - full) / full * 100.0 : 0.0;
      if (std::string(approach) == "data_driven") dd_delta = delta_pct;
      else fh_delta = delta_pct;
      rows.push_back({{"approach", approach},
                      {"rmse_full", full},
                      {"rmse_reduced", reduced},
                      {"rel_delta_rmse_pct", delta_pct}});
    }
    report["rows"] = rows;
    report["data_driven_delta_pct"] = dd_delta;
    report["full_hybrid_delta_pct"] = fh_delta;
    report["degradation_ratio"] =
        fh_delta != 0.0 ? dd_delta / fh_delta
                        : std::numeric_limits<double>::infinity();
    for (const auto& [label, agg] : aggs) report["cells"][label] = agg;
  } else if (study == AblationStudy::FeatureSet) {
    // All four feature variants under perfect calibration (ground-truth
    // health parameters and responses) unless configured to reuse the
    // filter's outputs.
    const bool perfect = !base.feature_set_use_ukf;
    json rows = json::array();
    std::string fh_dir;
    for (features::FeatureVariant v :
         {features::FeatureVariant::DataDriven,
          features::FeatureVariant::PlusXsHat,
          features::FeatureVariant::PlusXvHat,
          features::FeatureVariant::FullHybrid}) {
      const std::string label = features::to_string(v);
      json agg = run_cell(base, study, label, [&](ExperimentConfig& cfg) {
        cfg.variant = v;
        cfg.perfect_calibration = perfect;
        cfg.perturbation = PerturbationConfig{};
      });
      if (v == features::FeatureVariant::FullHybrid) {
        fh_dir = subrun_config(base, study, label).out_dir;
      }
      rows.push_back({{"variant", label},
                      {"rmse_mean", agg.at("rmse").at("mean")},
                      {"rmse_std", agg.at("rmse").at("std")},
                      {"s_score_mean", agg.at("s_score").at("mean")},
                      {"fleet_horizon_mean",
                       agg.at("fleet_average_horizon").at("mean")}});
    }
    report["perfect_calibration"] = perfect;
    report["rows"] = rows;

    // Information ranking of the enriched features against the target on the
    // development split of the full-variant sub-run.
    ExperimentConfig fh_cfg = subrun_config(base, study, "full_hybrid");
    fh_cfg.variant = features::FeatureVariant::FullHybrid;
    fh_cfg.perfect_calibration = perfect;
    fh_cfg.perturbation = PerturbationConfig{};
    const auto units = read_units(fh_cfg, "dev");
    const auto traces = load_split_traces(fh_cfg, "dev", units);
    const auto m = features::assemble_fleet(units, traces, fh_cfg.variant);
    Eigen::VectorXd y(m.rul.size());
    y = m.rul;
    const auto ranking = eval::mutual_information_ranking(
        m.values, y, m.column_names, 32);
    json rank_json = json::array();
    for (const auto& e : ranking) {
      rank_json.push_back({{"feature", e.name}, {"nmi", e.nmi}});
    }
    report["mi_ranking"] = rank_json;
    json top9 = json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(9, ranking.size()); ++i) {
      top9.push_back({{"feature", ranking[i].name}, {"nmi", ranking[i].nmi}});
    }
    report["mi_top9"] = top9;
  } else {  // CalibrationQuality
    json clean_agg = run_cell(base, study, "clean",
                              [&](ExperimentConfig& cfg) {
                                cfg.variant =
                                    features::FeatureVariant::FullHybrid;
                                cfg.perturbation = PerturbationConfig{};
                              });
    json dd_agg = run_cell(base, study, "data_driven",
                           [&](ExperimentConfig& cfg) {
                             cfg.variant =
                                 features::FeatureVariant::DataDriven;
                             cfg.perturbation = PerturbationConfig{};
                           });
    const double clean_rmse = agg_rmse_mean(clean_agg);
    const double dd_rmse = agg_rmse_mean(dd_agg);

    struct Pert {
      const char* label;
      double snr_db;
      double alpha;
    };
    const std::vector<Pert> perts = {
        {"bias_plus_0.5", calib::kNoNoiseSnrDb, 0.5},
        {"bias_minus_0.5", calib::kNoNoiseSnrDb, -0.5},
        {"snr_20db", 20.0, 0.0},
        {"snr_15db", 15.0, 0.0}};
    json rows = json::array();
    for (const auto& p : perts) {
      json agg = run_cell(base, study, p.label, [&](ExperimentConfig& cfg) {
        cfg.variant = features::FeatureVariant::FullHybrid;
        cfg.perturbation.snr_db = p.snr_db;
        cfg.perturbation.alpha_bias = p.alpha;
      });
      const double rmse = agg_rmse_mean(agg);
      rows.push_back(
          {{"label", p.label},
           {"snr_db", std::isfinite(p.snr_db) ? json(p.snr_db) : json(nullptr)},
           {"alpha_bias", p.alpha},
           {"rmse_mean", rmse},
           {"rel_degradation_pct",
            clean_rmse > 0.0 ? (rmse - clean_rmse) / clean_rmse * 100.0 : 0.0},
           {"below_data_driven", rmse < dd_rmse}});
    }
    report["clean_rmse"] = clean_rmse;
    report["data_driven_rmse"] = dd_rmse;
    report["rows"] = rows;
  }

  write_study_json(base, study, report);
  return report;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------
json cmd_report(const std::string& out_dir) {
  if (!fs::exists(manifest_path(out_dir))) {
    throw ConfigError("no run found under " + out_dir);
  }
  const RunManifest m = load_manifest(out_dir);
  json j;
  j["out_dir"] = out_dir;
  j["master_seed"] = m.master_seed;
  j["config"] = m.config;
  j["stage_log"] = m.stage_log;
  json stages = json::object();
  for (const auto& [name, r] : m.stages) {
    stages[name] = {{"seconds", r.seconds},
                    {"skipped", r.skipped},
                    {"summary", r.summary},
                    {"outputs", r.outputs.size()}};
  }
  j["stages"] = stages;
  const fs::path agg_path = fs::path(out_dir) / "eval/aggregate.json";
  if (fs::exists(agg_path)) j["evaluation"] = read_aggregate(out_dir);
  json studies = json::object();
  for (AblationStudy s : {AblationStudy::DatasetSize, AblationStudy::FeatureSet,
                          AblationStudy::CalibrationQuality}) {
    const fs::path p =
        fs::path(out_dir) / "ablation" / (to_string(s) + ".json");
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    json sj;
    try {
      in >> sj;
    } catch (const json::exception& e) {
      throw IoError("study report " + p.string() + " is corrupt: " + e.what());
    }
    studies[to_string(s)] = sj;
  }
  j["studies"] = studies;

  fs::create_directories(fs::path(out_dir) / "report");
  std::ofstream out(fs::path(out_dir) / "report/summary.json",
                    std::ios::trunc);
  if (!out) throw IoError("cannot write report summary");
  out << j.dump(2) << '\n';
  return j;
}

}  // namespace phm::pipeline
