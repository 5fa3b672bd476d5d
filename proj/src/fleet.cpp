#include "phm/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <set>
#include <sstream>
#include <utility>

#include "phm/errors.hpp"
#include "phm/io/csv.hpp"
#include "phm/random.hpp"

namespace phm::fleet {

namespace {

constexpr int kMinSamplesPerCycle = 30;
constexpr int kMaxDegradationDraws = 20;

// Fraction of each flight spent per phase. Short routes keep 60% of the long
// cruise share and spend the difference on climb and descent.
constexpr double kLongClimbFrac = 0.25;
constexpr double kLongCruiseFrac = 0.55;
constexpr double kShortClimbFrac = 0.42;
constexpr double kShortCruiseFrac = 0.33;

// Cruise anchor draw boxes.
constexpr double kLongCruiseAltMin = 28000.0, kLongCruiseAltMax = 38000.0;
constexpr double kShortCruiseAltMin = 12000.0, kShortCruiseAltMax = 24000.0;
constexpr double kLongCruiseMachMin = 0.70, kLongCruiseMachMax = 0.85;
constexpr double kShortCruiseMachMin = 0.55, kShortCruiseMachMax = 0.70;
constexpr double kLongCruiseTraMin = 60.0, kLongCruiseTraMax = 80.0;
constexpr double kShortCruiseTraMin = 45.0, kShortCruiseTraMax = 65.0;

// Terminal-area anchors shared by both route classes.
constexpr double kEndpointAltMin = 1500.0, kEndpointAltMax = 3500.0;
constexpr double kEndpointMachMin = 0.25, kEndpointMachMax = 0.35;
constexpr double kClimbTraMin = 86.0, kClimbTraMax = 94.0;
constexpr double kDescentTraMin = 28.0, kDescentTraMax = 40.0;

// First-order autoregressive cruise wander, unit stationary variance.
constexpr double kWanderPhi = 0.8;
constexpr double kWanderAltAmp = 120.0;  // ft
constexpr double kWanderMachAmp = 0.004;
constexpr double kWanderTraAmp = 0.8;

double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

double lerp(double a, double b, double u) { return a + (b - a) * u; }

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

}  // namespace

std::string to_string(RouteClass route) {
  return route == RouteClass::Long ? "long" : "short";
}

std::string to_string(FailureMode mode) {
  return mode == FailureMode::Hpt ? "hpt" : "hpt_lpt";
}

RouteClass route_from_string(const std::string& s) {
  if (s == "long") return RouteClass::Long;
  if (s == "short") return RouteClass::Short;
  throw ConfigError("unknown route class: " + s);
}

FailureMode mode_from_string(const std::string& s) {
  if (s == "hpt") return FailureMode::Hpt;
  if (s == "hpt_lpt") return FailureMode::HptPlusLpt;
  throw ConfigError("unknown failure mode: " + s);
}

double health_index(const engine::HealthState& theta) {
  const auto a = theta.as_array();
  double worst = 0.0;
  for (double m : a) worst = std::max(worst, std::abs(m));
  return 1.0 - worst / kFailureMagnitude;
}

void DegradationConfig::validate() const {
  if (!(initial_spread >= 0.0 && initial_spread < 1.0)) {
    throw ConfigError("initial_spread must lie in [0, 1)");
  }
  auto check_range = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0 && hi >= lo)) {
      std::ostringstream msg;
      msg << what << " range invalid: [" << lo << ", " << hi << "]";
      throw ConfigError(msg.str());
    }
  };
  check_range(normal_rate_min, normal_rate_max, "normal rate");
  check_range(abnormal_rate_min, abnormal_rate_max, "abnormal rate");
  if (!(abnormal_rate_min > normal_rate_max)) {
    throw ConfigError("abnormal rates must exceed normal rates");
  }
  if (!(transition_smoothness > 0.0)) {
    throw ConfigError("transition_smoothness must be positive");
  }
  if (!(ts_min >= 1.0 && ts_max >= ts_min)) {
    throw ConfigError("transition onset range invalid");
  }
}

DegradationTrajectory gen_degradation_trajectory(std::uint64_t seed,
                                                 const DegradationConfig& cfg,
                                                 int max_cycles) {
  cfg.validate();
  if (max_cycles < 2) throw ConfigError("max_cycles must be at least 2");

  auto rng = make_engine(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const double hi0 = 1.0 - cfg.initial_spread * u01(rng);
  const double ts = uniform(cfg.ts_min, cfg.ts_max);

  // Component order matches HealthState: HPT efficiency, LPT efficiency,
  // LPT flow. Single-mode trajectories touch only the first slot.
  const int n_active = cfg.mode == FailureMode::Hpt ? 1 : 3;
  std::array<double, 3> rate_normal{}, rate_abnormal{}, share{};
  double share_max = 0.0;
  for (int i = 0; i < n_active; ++i) {
    rate_normal[static_cast<std::size_t>(i)] =
        uniform(cfg.normal_rate_min, cfg.normal_rate_max);
    rate_abnormal[static_cast<std::size_t>(i)] =
        uniform(cfg.abnormal_rate_min, cfg.abnormal_rate_max);
    share[static_cast<std::size_t>(i)] = uniform(0.4, 1.0);
    share_max = std::max(share_max, share[static_cast<std::size_t>(i)]);
  }
  // Scale shares so the worst component starts exactly at the drawn initial
  // health index.
  for (int i = 0; i < n_active; ++i) share[static_cast<std::size_t>(i)] /= share_max;

  const double blend_scale = cfg.transition_smoothness / 4.0;

  std::array<double, 3> magnitude{};
  for (int i = 0; i < n_active; ++i) {
    magnitude[static_cast<std::size_t>(i)] =
        share[static_cast<std::size_t>(i)] * kFailureMagnitude * (1.0 - hi0);
  }

  DegradationTrajectory traj;
  auto push_state = [&]() {
    traj.theta.push_back(engine::HealthState{
        -magnitude[0], -magnitude[1], -magnitude[2]});
  };
  push_state();
  if (health_index(traj.theta.back()) <= 0.0) {
    throw NumericError("degraded past failure at the first cycle");
  }

  for (int c = 2; c <= max_cycles; ++c) {
    const double w = logistic((static_cast<double>(c) - ts) / blend_scale);
    for (int i = 0; i < n_active; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double rate = rate_normal[k] + (rate_abnormal[k] - rate_normal[k]) * w;
      magnitude[k] += kFailureMagnitude * rate;
    }
    push_state();
    if (health_index(traj.theta.back()) <= 0.0) {
      traj.t_eol = c;
      traj.t_s = static_cast<int>(
          clamp(std::round(ts), 1.0, static_cast<double>(c)));
      return traj;
    }
  }
  std::ostringstream msg;
  msg << "no failure within " << max_cycles << " cycles (seed " << seed << ")";
  throw NumericError(msg.str());
}

PhaseCounts profile_phase_counts(RouteClass route, int n_samples) {
  if (n_samples < kMinSamplesPerCycle) {
    std::ostringstream msg;
    msg << "profile needs at least " << kMinSamplesPerCycle << " samples, got "
        << n_samples;
    throw ConfigError(msg.str());
  }
  const double climb_frac =
      route == RouteClass::Long ? kLongClimbFrac : kShortClimbFrac;
  const double cruise_frac =
      route == RouteClass::Long ? kLongCruiseFrac : kShortCruiseFrac;
  PhaseCounts counts;
  counts.climb = static_cast<int>(std::lround(climb_frac * n_samples));
  counts.cruise = static_cast<int>(std::lround(cruise_frac * n_samples));
  counts.descent = n_samples - counts.climb - counts.cruise;
  return counts;
}

std::vector<engine::OperatingPoint> gen_flight_profile(std::uint64_t seed,
                                                       RouteClass route,
                                                       int n_samples) {
  const PhaseCounts counts = profile_phase_counts(route, n_samples);
  auto rng = make_engine(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  const bool is_long = route == RouteClass::Long;
  const double cruise_alt = is_long ? uniform(kLongCruiseAltMin, kLongCruiseAltMax)
                                    : uniform(kShortCruiseAltMin, kShortCruiseAltMax);
  const double cruise_mach = is_long
                                 ? uniform(kLongCruiseMachMin, kLongCruiseMachMax)
                                 : uniform(kShortCruiseMachMin, kShortCruiseMachMax);
  const double cruise_tra = is_long ? uniform(kLongCruiseTraMin, kLongCruiseTraMax)
                                    : uniform(kShortCruiseTraMin, kShortCruiseTraMax);
  const double start_alt = uniform(kEndpointAltMin, kEndpointAltMax);
  const double end_alt = uniform(kEndpointAltMin, kEndpointAltMax);
  const double start_mach = uniform(kEndpointMachMin, kEndpointMachMax);
  const double end_mach = uniform(kEndpointMachMin, kEndpointMachMax);
  const double climb_tra = uniform(kClimbTraMin, kClimbTraMax);
  const double descent_tra = uniform(kDescentTraMin, kDescentTraMax);

  std::vector<engine::OperatingPoint> profile;
  profile.reserve(static_cast<std::size_t>(n_samples));
  auto push = [&](double alt, double mach, double tra) {
    profile.push_back(engine::OperatingPoint::at(
        clamp(alt, 0.0, 44000.0), clamp(mach, 0.0, 0.88), clamp(tra, 5.0, 98.0)));
  };

  for (int k = 0; k < counts.climb; ++k) {
    const double u = smoothstep((k + 1.0) / (counts.climb + 1.0));
    push(lerp(start_alt, cruise_alt, u), lerp(start_mach, cruise_mach, u),
         lerp(climb_tra, cruise_tra, u));
  }

  double wander_alt = gauss(rng);
  double wander_mach = gauss(rng);
  double wander_tra = gauss(rng);
  const double innov = std::sqrt(1.0 - kWanderPhi * kWanderPhi);
  for (int k = 0; k < counts.cruise; ++k) {
    if (k > 0) {
      wander_alt = kWanderPhi * wander_alt + innov * gauss(rng);
      wander_mach = kWanderPhi * wander_mach + innov * gauss(rng);
      wander_tra = kWanderPhi * wander_tra + innov * gauss(rng);
    }
    push(cruise_alt + kWanderAltAmp * wander_alt,
         cruise_mach + kWanderMachAmp * wander_mach,
         cruise_tra + kWanderTraAmp * wander_tra);
  }

  for (int k = 0; k < counts.descent; ++k) {
    const double u = smoothstep((k + 1.0) / (counts.descent + 1.0));
    push(lerp(cruise_alt, end_alt, u), lerp(cruise_mach, end_mach, u),
         lerp(cruise_tra, descent_tra, u));
  }
  return profile;
}

std::size_t UnitRecord::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : cycles) n += c.samples.size();
  return n;
}

UnitRecord simulate_unit(std::uint64_t seed, int unit_id, RouteClass route,
                         const DegradationConfig& deg, int samples_per_cycle,
                         double sensor_noise_sigma, int max_cycles) {
  deg.validate();
  if (samples_per_cycle < kMinSamplesPerCycle) {
    throw ConfigError("samples_per_cycle below the per-flight minimum");
  }
  if (!(sensor_noise_sigma >= 0.0) || !std::isfinite(sensor_noise_sigma)) {
    throw ConfigError("sensor_noise_sigma must be finite and non-negative");
  }

  UnitRecord unit;
  unit.unit_id = unit_id;
  unit.route = route;
  unit.mode = deg.mode;
  unit.seed = seed;

  DegradationTrajectory traj;
  bool have_traj = false;
  for (int attempt = 0; attempt < kMaxDegradationDraws; ++attempt) {
    try {
      traj = gen_degradation_trajectory(
          derive_seed(seed, {seed_tag::kDegradation,
                             static_cast<std::uint64_t>(attempt)}),
          deg, max_cycles);
      unit.resamples = attempt;
      have_traj = true;
      break;
    } catch (const NumericError&) {
      continue;
    }
  }
  if (!have_traj) {
    std::ostringstream msg;
    msg << "unit " << unit_id << ": no degradation draw reached failure in "
        << kMaxDegradationDraws << " attempts";
    throw NumericError(msg.str());
  }

  unit.t_s = traj.t_s;
  unit.t_eol = traj.t_eol;
  unit.theta = std::move(traj.theta);
  unit.cycles.reserve(static_cast<std::size_t>(unit.t_eol));

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int c = 1; c <= unit.t_eol; ++c) {
    const auto cu = static_cast<std::uint64_t>(c);
    auto profile = gen_flight_profile(
        derive_seed(seed, {seed_tag::kProfile, cu}), route, samples_per_cycle);
    auto noise_rng =
        make_engine(derive_seed(seed, {seed_tag::kSensorNoise, cu}));

    FlightCycle cycle;
    cycle.cycle_index = c;
    cycle.rul_label = unit.t_eol - c;
    cycle.samples.reserve(profile.size());
    const engine::HealthState& theta = unit.theta[static_cast<std::size_t>(c - 1)];
    for (const auto& w : profile) {
      const engine::ModelOutput out = engine::evaluate_model(w, theta);
      Sample s;
      s.w = w;
      s.virtuals = out.virtuals;
      for (int i = 0; i < engine::kNumSensors; ++i) {
        s.sensors[i] =
            out.sensors[i] * (1.0 + sensor_noise_sigma * gauss(noise_rng));
      }
      cycle.samples.push_back(s);
    }
    unit.cycles.push_back(std::move(cycle));
  }
  return unit;
}

FleetConfig FleetConfig::defaults() { return FleetConfig{}; }

std::vector<UnitSpec> FleetConfig::resolved_units() const {
  if (!units.empty()) return units;
  return {
      {2, RouteClass::Long, FailureMode::Hpt, true},
      {5, RouteClass::Long, FailureMode::Hpt, true},
      {10, RouteClass::Long, FailureMode::Hpt, true},
      {16, RouteClass::Long, FailureMode::HptPlusLpt, true},
      {18, RouteClass::Long, FailureMode::HptPlusLpt, true},
      {20, RouteClass::Long, FailureMode::HptPlusLpt, true},
      {11, RouteClass::Long, FailureMode::HptPlusLpt, false},
      {14, RouteClass::Short, FailureMode::HptPlusLpt, false},
      {15, RouteClass::Short, FailureMode::HptPlusLpt, false},
  };
}

DegradationConfig FleetConfig::degradation_for(FailureMode mode) const {
  DegradationConfig deg;
  deg.mode = mode;
  deg.initial_spread = initial_spread;
  deg.normal_rate_min = normal_rate_min;
  deg.normal_rate_max = normal_rate_max;
  deg.abnormal_rate_min = abnormal_rate_min;
  deg.abnormal_rate_max = abnormal_rate_max;
  deg.transition_smoothness = transition_smoothness;
  deg.ts_min = ts_min;
  deg.ts_max = ts_max;
  return deg;
}

void FleetConfig::validate() const {
  degradation_for(FailureMode::Hpt).validate();
  if (samples_per_cycle < kMinSamplesPerCycle) {
    throw ConfigError("samples_per_cycle below the per-flight minimum");
  }
  if (!(sensor_noise_sigma >= 0.0)) {
    throw ConfigError("sensor_noise_sigma must be non-negative");
  }
  if (max_cycles < 2) throw ConfigError("max_cycles must be at least 2");
  const auto specs = resolved_units();
  std::set<int> ids;
  bool any_dev = false, any_test = false;
  for (const auto& u : specs) {
    if (u.unit_id <= 0) throw ConfigError("unit ids must be positive");
    if (!ids.insert(u.unit_id).second) {
      throw ConfigError("duplicate unit id " + std::to_string(u.unit_id));
    }
    (u.dev ? any_dev : any_test) = true;
  }
  if (!any_dev || !any_test) {
    throw ConfigError("fleet needs at least one development and one test unit");
  }
}

Fleet build_fleet(const FleetConfig& cfg) {
  cfg.validate();
  Fleet fleet;
  for (const auto& spec : cfg.resolved_units()) {
    const std::uint64_t unit_seed = derive_seed(
        cfg.master_seed,
        {seed_tag::kUnit, static_cast<std::uint64_t>(spec.unit_id)});
    UnitRecord unit = simulate_unit(unit_seed, spec.unit_id, spec.route,
                                    cfg.degradation_for(spec.mode),
                                    cfg.samples_per_cycle,
                                    cfg.sensor_noise_sigma, cfg.max_cycles);
    (spec.dev ? fleet.dev : fleet.test).push_back(std::move(unit));
  }
  return fleet;
}

const std::vector<std::string> kDatasetColumns = [] {
  std::vector<std::string> cols = {"unit", "cycle", "sample",
                                   "alt",  "mach",  "tra",   "t2"};
  for (const char* name : engine::kSensorNames) cols.emplace_back(name);
  cols.emplace_back("hpt_eff_mod");
  cols.emplace_back("lpt_eff_mod");
  cols.emplace_back("lpt_flow_mod");
  cols.emplace_back("rul");
  return cols;
}();

void write_dataset_csv(const std::string& path,
                       const std::vector<UnitRecord>& units) {
  io::CsvTable table;
  table.columns = kDatasetColumns;
  std::size_t n_rows = 0;
  for (const auto& u : units) n_rows += u.sample_count();
  table.rows.reserve(n_rows);

  for (const auto& u : units) {
    for (const auto& cycle : u.cycles) {
      const engine::HealthState& theta =
          u.theta[static_cast<std::size_t>(cycle.cycle_index - 1)];
      int sample_idx = 0;
      for (const auto& s : cycle.samples) {
        std::vector<double> row;
        row.reserve(table.columns.size());
        row.push_back(static_cast<double>(u.unit_id));
        row.push_back(static_cast<double>(cycle.cycle_index));
        row.push_back(static_cast<double>(sample_idx++));
        row.push_back(s.w.alt);
        row.push_back(s.w.mach);
        row.push_back(s.w.tra);
        row.push_back(s.w.t2);
        for (int i = 0; i < engine::kNumSensors; ++i) row.push_back(s.sensors[i]);
        row.push_back(theta.hpt_eff_mod);
        row.push_back(theta.lpt_eff_mod);
        row.push_back(theta.lpt_flow_mod);
        row.push_back(static_cast<double>(cycle.rul_label));
        table.rows.push_back(std::move(row));
      }
    }
  }
  io::write_csv(path, table);
}

std::vector<UnitRecord> read_dataset_csv(const std::string& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.columns != kDatasetColumns) {
    throw IoError("dataset column layout mismatch in " + path);
  }
  const std::size_t c_unit = 0, c_cycle = 1, c_alt = 3, c_mach = 4, c_tra = 5,
                    c_t2 = 6, c_sensor0 = 7;
  const std::size_t c_theta0 = c_sensor0 + engine::kNumSensors;
  const std::size_t c_rul = c_theta0 + 3;

  std::vector<UnitRecord> units;
  for (const auto& row : table.rows) {
    const int unit_id = static_cast<int>(row[c_unit]);
    const int cycle_index = static_cast<int>(row[c_cycle]);
    if (units.empty() || units.back().unit_id != unit_id) {
      units.emplace_back();
      units.back().unit_id = unit_id;
    }
    UnitRecord& unit = units.back();
    if (unit.cycles.empty() ||
        unit.cycles.back().cycle_index != cycle_index) {
      if (cycle_index != static_cast<int>(unit.cycles.size()) + 1) {
        throw IoError("non-contiguous cycle index for unit " +
                      std::to_string(unit_id) + " in " + path);
      }
      unit.cycles.emplace_back();
      unit.cycles.back().cycle_index = cycle_index;
      unit.cycles.back().rul_label = static_cast<int>(row[c_rul]);
      unit.theta.push_back(engine::HealthState{
          row[c_theta0], row[c_theta0 + 1], row[c_theta0 + 2]});
    }
    Sample s;
    s.w.alt = row[c_alt];
    s.w.mach = row[c_mach];
    s.w.tra = row[c_tra];
    s.w.t2 = row[c_t2];
    for (int i = 0; i < engine::kNumSensors; ++i) {
      s.sensors[i] = row[c_sensor0 + static_cast<std::size_t>(i)];
    }
    s.virtuals = engine::evaluate_model(s.w, unit.theta.back()).virtuals;
    unit.cycles.back().samples.push_back(s);
  }
  for (auto& unit : units) {
    unit.t_eol = static_cast<int>(unit.cycles.size());
    for (auto& cycle : unit.cycles) {
      if (cycle.rul_label != unit.t_eol - cycle.cycle_index) {
        throw IoError("label arithmetic broken for unit " +
                      std::to_string(unit.unit_id) + " in " + path);
      }
    }
  }
  return units;
}

}  // namespace phm::fleet
