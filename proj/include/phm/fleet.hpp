#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phm/engine_model.hpp"

namespace phm::fleet {

enum class RouteClass { Long, Short };
enum class FailureMode { Hpt, HptPlusLpt };

std::string to_string(RouteClass route);
std::string to_string(FailureMode mode);
RouteClass route_from_string(const std::string& s);
FailureMode mode_from_string(const std::string& s);

// A modifier magnitude of 0.15 on the worst component defines failure.
inline constexpr double kFailureMagnitude = 0.15;

// Health index in [0, 1]: 1 pristine, <= 0 failed.
double health_index(const engine::HealthState& theta);

struct DegradationConfig {
  FailureMode mode = FailureMode::Hpt;
  double initial_spread = 0.10;
  double normal_rate_min = 0.001;
  double normal_rate_max = 0.003;
  double abnormal_rate_min = 0.008;
  double abnormal_rate_max = 0.02;
  double transition_smoothness = 5.0;  // cycles, 10..90% width of the blend
  double ts_min = 15.0;                // transition onset draw, cycles
  double ts_max = 25.0;
  void validate() const;  // throws ConfigError
};

// Per-cycle health states from first flight (index 0 = cycle 1) through the
// end-of-life cycle where the health index first reaches zero.
struct DegradationTrajectory {
  std::vector<engine::HealthState> theta;
  int t_s = 0;    // nearest cycle to the drawn transition onset
  int t_eol = 0;  // == theta.size()
};

// Throws NumericError when the trajectory fails to reach failure within
// max_cycles; callers resample with a fresh derived seed.
DegradationTrajectory gen_degradation_trajectory(std::uint64_t seed,
                                                 const DegradationConfig& cfg,
                                                 int max_cycles);

struct PhaseCounts {
  int climb = 0;
  int cruise = 0;
  int descent = 0;
};
// Sample budget per flight phase; short routes trade cruise samples for the
// transient phases.
PhaseCounts profile_phase_counts(RouteClass route, int n_samples);

// One flight: climb to a drawn cruise condition, cruise, descend. Requires
// n_samples >= 30 so every phase keeps a usable sample count.
std::vector<engine::OperatingPoint> gen_flight_profile(std::uint64_t seed,
                                                       RouteClass route,
                                                       int n_samples);

struct Sample {
  engine::OperatingPoint w;
  engine::SensorFrame sensors;    // physics output plus multiplicative noise
  engine::VirtualFrame virtuals;  // noise-free
};

struct FlightCycle {
  int cycle_index = 0;  // 1-based
  int rul_label = 0;    // t_eol - cycle_index
  std::vector<Sample> samples;
};

struct UnitRecord {
  int unit_id = 0;
  RouteClass route = RouteClass::Long;
  FailureMode mode = FailureMode::Hpt;
  std::uint64_t seed = 0;
  int t_s = 0;
  int t_eol = 0;
  int resamples = 0;  // degradation draws discarded before one hit failure
  std::vector<engine::HealthState> theta;  // per cycle, aligned with cycles
  std::vector<FlightCycle> cycles;

  std::size_t sample_count() const;
};

UnitRecord simulate_unit(std::uint64_t seed, int unit_id, RouteClass route,
                         const DegradationConfig& deg, int samples_per_cycle,
                         double sensor_noise_sigma, int max_cycles);

struct UnitSpec {
  int unit_id = 0;
  RouteClass route = RouteClass::Long;
  FailureMode mode = FailureMode::Hpt;
  bool dev = true;
};

struct FleetConfig {
  std::uint64_t master_seed = 42;
  int samples_per_cycle = 200;
  double sensor_noise_sigma = 0.004;
  int max_cycles = 250;
  double initial_spread = 0.10;
  double normal_rate_min = 0.001;
  double normal_rate_max = 0.003;
  double abnormal_rate_min = 0.008;
  double abnormal_rate_max = 0.02;
  double transition_smoothness = 5.0;
  double ts_min = 15.0;
  double ts_max = 25.0;
  std::vector<UnitSpec> units;  // empty selects the default nine-unit fleet

  static FleetConfig defaults();
  std::vector<UnitSpec> resolved_units() const;
  DegradationConfig degradation_for(FailureMode mode) const;
  void validate() const;
};

struct Fleet {
  std::vector<UnitRecord> dev;
  std::vector<UnitRecord> test;
};

Fleet build_fleet(const FleetConfig& cfg);

// Flat per-sample table with the pinned column set; byte-stable for a fixed
// fleet so reruns hash identically.
void write_dataset_csv(const std::string& path,
                       const std::vector<UnitRecord>& units);

// Rebuilds units from the flat table. Virtual sensors are recomputed from the
// stored operating points and health states; t_s/route/mode/seed live in the
// fleet manifest, not the CSV, and are left defaulted here.
std::vector<UnitRecord> read_dataset_csv(const std::string& path);

extern const std::vector<std::string> kDatasetColumns;

}  // namespace phm::fleet
