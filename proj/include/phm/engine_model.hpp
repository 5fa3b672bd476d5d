#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace phm::engine {

// US customary units throughout: altitude ft, temperature degR, pressure psia,
// flow lbm/s, spool speed rpm. Stall margins are percent.

struct Ambient {
  double t_amb;  // degR
  double p_amb;  // psia
};

// Static atmosphere with a linear-lapse troposphere up to 36089 ft and an
// isothermal exponential layer above. Valid for 0..45000 ft.
Ambient isa_ambient(double alt_ft);

struct RamConditions {
  double t2;  // total temperature at the fan face, degR
  double p2;  // total pressure at the fan face, psia
};

// Compressible ram recovery: t2 = t_amb*(1 + 0.2*M^2), p2 = p_amb*(...)^3.5.
RamConditions ram_conditions(const Ambient& amb, double mach);

// Flight condition plus throttle. t2 is redundant with (alt, mach) and is
// carried so downstream consumers never recompute it inconsistently.
struct OperatingPoint {
  double alt = 0.0;   // ft, [0, 45000]
  double mach = 0.0;  // [0, 0.9]
  double tra = 0.0;   // throttle-resolver angle, percent [0, 100]
  double t2 = 0.0;    // degR, must satisfy the ram relation

  static OperatingPoint at(double alt, double mach, double tra);
  static OperatingPoint cruise_reference();
  void validate() const;  // throws DomainError
};

// Health-parameter vector theta. Modifiers are fractional deltas on component
// maps: 0 is pristine, negative is degraded.
struct HealthState {
  double hpt_eff_mod = 0.0;
  double lpt_eff_mod = 0.0;
  double lpt_flow_mod = 0.0;

  static constexpr double kMinMod = -0.2;
  static constexpr double kMaxMod = 0.0;

  std::array<double, 3> as_array() const {
    return {hpt_eff_mod, lpt_eff_mod, lpt_flow_mod};
  }
  static HealthState from_array(const std::array<double, 3>& a) {
    return {a[0], a[1], a[2]};
  }
  // margin widens the accepted box symmetrically; the unscented calibrator
  // evaluates sigma points slightly outside [kMinMod, 0].
  void validate(double margin = 0.0) const;
};

inline HealthState reference_health() { return {}; }

inline constexpr int kNumSensors = 16;
inline constexpr int kNumVirtual = 11;

enum Sensor : int {
  kWf, kNf, kNc, kT24, kT30, kT40, kT48, kT50,
  kP15, kP2, kP21, kP24, kPs30, kP30, kP40, kP50,
};

enum Virtual : int {
  kP45, kW21, kW22, kW25, kW31, kW32, kW48, kW50,
  kSmFan, kSmLPC, kSmHPC,
};

extern const std::array<const char*, kNumSensors> kSensorNames;
extern const std::array<const char*, kNumVirtual> kVirtualNames;

struct SensorFrame {
  std::array<double, kNumSensors> v{};
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
};

struct VirtualFrame {
  std::array<double, kNumVirtual> v{};
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
};

struct ModelOutput {
  SensorFrame sensors;
  VirtualFrame virtuals;
};

// Steady-state gas-path solve at one operating point and health state.
// Deterministic, no internal state. Throws DomainError on invalid inputs and
// ModelRangeError if an intermediate quantity leaves its physical range.
ModelOutput evaluate_model(const OperatingPoint& w, const HealthState& theta,
                           double health_box_margin = 0.0);

}  // namespace phm::engine
