#include "phm/engine_model.hpp"

#include <cmath>
#include <sstream>

#include "phm/errors.hpp"

namespace phm::engine {

namespace {

// Atmosphere
constexpr double kTSeaLevel = 518.67;    // degR
constexpr double kPSeaLevel = 14.696;    // psia
constexpr double kLapse = 0.0035662;     // degR per ft
constexpr double kTropopause = 36089.0;  // ft
constexpr double kPressureExp = 5.2559;
constexpr double kScaleHeight = 20806.0;  // ft, isothermal layer
constexpr double kAltMax = 45000.0;

// Gas properties
constexpr double kGammaCold = 1.4;
constexpr double kGammaHot = 1.33;
constexpr double kExpCold = (kGammaCold - 1.0) / kGammaCold;
constexpr double kExpHot = (kGammaHot - 1.0) / kGammaHot;

// Component maps. Pressure-ratio schedules are affine in the normalized
// throttle s = 0.3 + 0.7*tra/100, spanning idle to full power.
constexpr double kFanPrGain = 0.6;
constexpr double kLpcPrGain = 1.2;
constexpr double kHpcPrGain = 8.0;
constexpr double kEtaFan = 0.89;
constexpr double kEtaLpc = 0.88;
constexpr double kEtaHpc = 0.87;
constexpr double kEtaHpt = 0.90;
constexpr double kEtaLpt = 0.91;

// Burner schedule and fuel properties
constexpr double kBurnDt0 = 800.0;   // degR at s = 0... plus gain below
constexpr double kBurnDtGain = 1100.0;
constexpr double kCpHot = 0.27;      // BTU/(lbm degR)
constexpr double kFuelLhv = 18500.0; // BTU/lbm

// Turbine expansion ratios (fixed; no work balance in this surrogate)
constexpr double kPiHpt = 3.2;
constexpr double kPiLpt = 4.5;

// Flow-capacity coupling of the LPT modifier into the pressure chain. A
// reduced swallowing capacity backs up the HPT exit (larger P45) and steepens
// the LPT expansion (smaller P50).
constexpr double kFlowModToHptPi = 0.4;
constexpr double kFlowModToLptPi = 1.0;

// Flow scaling
constexpr double kWRef = 800.0;  // lbm/s corrected at sea-level static
constexpr double kBypassRatio = 5.0;
constexpr double kBleedKeep = 0.98;      // LPC exit to HPC inlet
constexpr double kCoolantHp = 0.03;      // HPT coolant fraction of W25
constexpr double kCoolantLp = 0.02;
constexpr double kDuctLoss = 0.985;      // bypass duct
constexpr double kBurnerPLoss = 0.96;
constexpr double kStaticFrac = 0.92;     // Ps30 / P30

// Spool-speed schedule, rpm at standard day
constexpr double kNfBase = 2000.0;
constexpr double kNfGain = 2200.0;
constexpr double kNcBase = 6000.0;
constexpr double kNcGain = 3600.0;
constexpr double kNcHealthGain = 0.05;

// Stall-margin choke lines sit 15% above the full-power pressure ratio of
// each compressor. Degradation moves the operating line toward the choke
// line through the health factors below.
constexpr double kChokeMargin = 1.15;

double throttle_s(double tra) { return 0.3 + 0.7 * tra / 100.0; }

double fan_pr(double s) { return 1.0 + kFanPrGain * s; }
double lpc_pr(double s) { return 1.0 + kLpcPrGain * s; }
double hpc_pr(double s) { return 1.0 + kHpcPrGain * s; }

// Total temperature after a compressor stage: isentropic rise over efficiency.
double compressor_exit_t(double t_in, double pr, double eta) {
  return t_in * (1.0 + (std::pow(pr, kExpCold) - 1.0) / eta);
}

[[noreturn]] void range_fail(const std::string& what) {
  throw ModelRangeError("gas-path range violation: " + what);
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) range_fail(what);
}

}  // namespace

const std::array<const char*, kNumSensors> kSensorNames = {
    "Wf", "Nf", "Nc", "T24", "T30", "T40", "T48", "T50",
    "P15", "P2", "P21", "P24", "Ps30", "P30", "P40", "P50"};

const std::array<const char*, kNumVirtual> kVirtualNames = {
    "P45", "W21", "W22", "W25", "W31", "W32", "W48", "W50",
    "SmFan", "SmLPC", "SmHPC"};

Ambient isa_ambient(double alt_ft) {
  if (!std::isfinite(alt_ft) || alt_ft < 0.0 || alt_ft > kAltMax) {
    std::ostringstream msg;
    msg << "altitude out of range [0, " << kAltMax << "]: " << alt_ft;
    throw DomainError(msg.str());
  }
  if (alt_ft <= kTropopause) {
    double t = kTSeaLevel - kLapse * alt_ft;
    double p = kPSeaLevel * std::pow(t / kTSeaLevel, kPressureExp);
    return {t, p};
  }
  double t_trop = kTSeaLevel - kLapse * kTropopause;
  double p_trop = kPSeaLevel * std::pow(t_trop / kTSeaLevel, kPressureExp);
  return {t_trop, p_trop * std::exp(-(alt_ft - kTropopause) / kScaleHeight)};
}

RamConditions ram_conditions(const Ambient& amb, double mach) {
  if (!std::isfinite(mach) || mach < 0.0 || mach > 0.9)
    throw DomainError("mach out of range [0, 0.9]");
  check_positive(amb.t_amb, "ambient temperature");
  check_positive(amb.p_amb, "ambient pressure");
  double r = 1.0 + 0.2 * mach * mach;
  return {amb.t_amb * r, amb.p_amb * std::pow(r, 3.5)};
}

OperatingPoint OperatingPoint::at(double alt, double mach, double tra) {
  OperatingPoint w;
  w.alt = alt;
  w.mach = mach;
  w.tra = tra;
  w.t2 = ram_conditions(isa_ambient(alt), mach).t2;
  w.validate();
  return w;
}

OperatingPoint OperatingPoint::cruise_reference() {
  return OperatingPoint::at(35000.0, 0.78, 80.0);
}

void OperatingPoint::validate() const {
  if (!std::isfinite(alt) || alt < 0.0 || alt > kAltMax)
    throw DomainError("operating point: altitude out of range");
  if (!std::isfinite(mach) || mach < 0.0 || mach > 0.9)
    throw DomainError("operating point: mach out of range");
  if (!std::isfinite(tra) || tra < 0.0 || tra > 100.0)
    throw DomainError("operating point: throttle out of range");
  double expect = ram_conditions(isa_ambient(alt), mach).t2;
  if (!(t2 > 0.0) || std::abs(t2 - expect) > 1e-9 * expect)
    throw DomainError("operating point: t2 inconsistent with ram relation");
}

void HealthState::validate(double margin) const {
  for (double m : as_array()) {
    if (!std::isfinite(m) || m < kMinMod - margin || m > kMaxMod + margin)
      throw DomainError("health modifier outside valid box");
  }
}

ModelOutput evaluate_model(const OperatingPoint& w, const HealthState& theta,
                           double health_box_margin) {
  w.validate();
  theta.validate(health_box_margin);

  const double s = throttle_s(w.tra);
  const RamConditions ram = ram_conditions(isa_ambient(w.alt), w.mach);
  const double t2 = ram.t2;
  const double p2 = ram.p2;

  // Compression chain
  const double pr_fan = fan_pr(s);
  const double pr_lpc = lpc_pr(s);
  const double pr_hpc = hpc_pr(s);
  const double t21 = compressor_exit_t(t2, pr_fan, kEtaFan);
  const double t24 = compressor_exit_t(t21, pr_lpc, kEtaLpc);
  const double t30 = compressor_exit_t(t24, pr_hpc, kEtaHpc);
  const double p21 = p2 * pr_fan;
  const double p15 = kDuctLoss * p21;
  const double p24 = p21 * pr_lpc;
  const double p30 = p24 * pr_hpc;
  const double ps30 = kStaticFrac * p30;
  const double p40 = kBurnerPLoss * p30;

  // Burner
  const double dt_burn = kBurnDt0 + kBurnDtGain * s;
  const double t40 = t30 + dt_burn;
  check_positive(t40, "burner exit temperature");

  // Turbines. Temperature drops use the fixed design expansion ratios; the
  // efficiency modifiers shrink the extracted enthalpy, which is what pushes
  // T48/T50 up as the hot section wears.
  const double eta_hpt = kEtaHpt * (1.0 + theta.hpt_eff_mod);
  const double eta_lpt = kEtaLpt * (1.0 + theta.lpt_eff_mod);
  if (!(eta_hpt > 0.0) || !(eta_lpt > 0.0)) range_fail("turbine efficiency");
  const double drop_hpt = eta_hpt * (1.0 - std::pow(kPiHpt, -kExpHot));
  const double drop_lpt = eta_lpt * (1.0 - std::pow(kPiLpt, -kExpHot));
  if (drop_hpt >= 1.0 || drop_lpt >= 1.0) range_fail("turbine temperature ratio");
  const double t48 = t40 * (1.0 - drop_hpt);
  const double t50 = t48 * (1.0 - drop_lpt);
  check_positive(t48, "HPT exit temperature");
  check_positive(t50, "LPT exit temperature");

  const double pi_hpt = kPiHpt * (1.0 + kFlowModToHptPi * theta.lpt_flow_mod);
  const double pi_lpt = kPiLpt * (1.0 - kFlowModToLptPi * theta.lpt_flow_mod);
  if (pi_hpt <= 1.0 || pi_lpt <= 1.0) range_fail("turbine expansion ratio");
  const double p45 = p40 / pi_hpt;
  const double p50 = p45 / pi_lpt;

  // Flows, corrected to the fan face
  const double w21 =
      kWRef * (p2 / kPSeaLevel) * std::sqrt(kTSeaLevel / t2);
  const double w22 = w21 / (1.0 + kBypassRatio);
  const double w25 = kBleedKeep * w22;
  const double w31 = kCoolantHp * w25;
  const double w32 = kCoolantLp * w25;
  const double w_comb = w25 - w31 - w32;
  const double wf = w_comb * kCpHot * dt_burn / kFuelLhv;
  const double w48 = 0.97 * w25 + wf;
  const double w50 = w48 * (1.0 + theta.lpt_flow_mod);
  check_positive(w50, "LPT exit flow");

  // Spool speeds with a ram-temperature correction; the core spool sags very
  // slightly as HPT efficiency erodes.
  const double speed_corr = std::sqrt(t2 / kTSeaLevel);
  const double nf = (kNfBase + kNfGain * s) * speed_corr;
  const double nc = (kNcBase + kNcGain * s) * speed_corr *
                    (1.0 + kNcHealthGain * theta.hpt_eff_mod);

  // Stall margins: distance from the health-shifted operating line to the
  // fixed choke line, in percent.
  const double f_fan = 1.0 - (0.10 * theta.hpt_eff_mod +
                              0.20 * theta.lpt_eff_mod +
                              0.30 * theta.lpt_flow_mod);
  const double f_lpc = 1.0 - (0.20 * theta.hpt_eff_mod +
                              0.40 * theta.lpt_eff_mod +
                              0.40 * theta.lpt_flow_mod);
  const double f_hpc = 1.0 - (0.80 * theta.hpt_eff_mod +
                              0.10 * theta.lpt_eff_mod +
                              0.10 * theta.lpt_flow_mod);
  const double sm_fan = 100.0 * (kChokeMargin * fan_pr(1.0) / (pr_fan * f_fan) - 1.0);
  const double sm_lpc = 100.0 * (kChokeMargin * lpc_pr(1.0) / (pr_lpc * f_lpc) - 1.0);
  const double sm_hpc = 100.0 * (kChokeMargin * hpc_pr(1.0) / (pr_hpc * f_hpc) - 1.0);

  ModelOutput out;
  out.sensors[kWf] = wf;
  out.sensors[kNf] = nf;
  out.sensors[kNc] = nc;
  out.sensors[kT24] = t24;
  out.sensors[kT30] = t30;
  out.sensors[kT40] = t40;
  out.sensors[kT48] = t48;
  out.sensors[kT50] = t50;
  out.sensors[kP15] = p15;
  out.sensors[kP2] = p2;
  out.sensors[kP21] = p21;
  out.sensors[kP24] = p24;
  out.sensors[kPs30] = ps30;
  out.sensors[kP30] = p30;
  out.sensors[kP40] = p40;
  out.sensors[kP50] = p50;

  out.virtuals[kP45] = p45;
  out.virtuals[kW21] = w21;
  out.virtuals[kW22] = w22;
  out.virtuals[kW25] = w25;
  out.virtuals[kW31] = w31;
  out.virtuals[kW32] = w32;
  out.virtuals[kW48] = w48;
  out.virtuals[kW50] = w50;
  out.virtuals[kSmFan] = sm_fan;
  out.virtuals[kSmLPC] = sm_lpc;
  out.virtuals[kSmHPC] = sm_hpc;

  for (double v : out.sensors.v) check_positive(v, "sensor output");
  for (int i = kP45; i <= kW50; ++i)
    check_positive(out.virtuals[i], "flow output");
  return out;
}

}  // namespace phm::engine
