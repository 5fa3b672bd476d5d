#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "phm/engine_model.hpp"
#include "phm/fleet.hpp"
#include "phm/nn.hpp"
#include "phm/ukf.hpp"

namespace phm::surrogate {

// Learned one-step response model: x(t) = D(w(t), x(t-1), theta(t)). It
// exists to stand in for the exact gas-path computation inside the filter
// loop; the exact model stays the source of truth for every emitted trace.
//
// D is fitted in two stages per sensor. A small net on the operating point
// alone absorbs the bulk flight-envelope response; a second net on the full
// (w, x_prev, theta) input regresses the residual, which is dominated by the
// health deviation. Splitting this way concentrates the second fit's capacity
// on exactly the sensitivities the calibration filter probes.

// One unit's aligned sample streams used for fitting: operating points, the
// health estimates that drove them, and the responses to regress.
struct FitStream {
  std::vector<engine::OperatingPoint> w;
  std::vector<engine::HealthState> theta;
  std::vector<engine::SensorFrame> x;

  std::size_t size() const { return w.size(); }
  void validate() const;  // throws ConfigError when the streams disagree
};

// Flatten a calibrated unit into a fit stream (w from the unit's samples,
// theta and x from the calibrated estimates).
FitStream stream_from_trace(const fleet::UnitRecord& unit,
                            const calib::CalibratedTrace& trace);

struct SurrogateTrainConfig {
  std::vector<int> mean_hidden = {16, 16};  // envelope-response nets
  std::vector<int> hidden = {32, 32};       // residual nets
  nn::TrainConfig mean_train;  // template for stage one; seeds are replaced
  nn::TrainConfig train;       // template for stage two; seeds are replaced
  double val_fraction = 0.1;   // held-out share, (0, 0.5]
  std::uint64_t seed = 0;

  static SurrogateTrainConfig defaults();
  void validate() const;
};

// Input layout: [alt, mach, tra, t2, previous 16 sensors, 3 health
// modifiers] = 23 features; the mean nets read the first 4.
inline constexpr int kSurrogateInputDim = 4 + engine::kNumSensors + 3;

struct SurrogateModel {
  std::vector<nn::Network> mean_nets;   // per sensor, operating point only
  std::vector<nn::Network> resid_nets;  // per sensor, full input
  Eigen::VectorXd in_lo, in_hi;         // feature ranges seen in fitting
  Eigen::VectorXd mean_lo, mean_hi;     // response ranges for stage one
  Eigen::VectorXd resid_lo, resid_hi;   // residual ranges for stage two
  Eigen::VectorXd held_out_rel_err;     // mean |err| / |truth| per sensor
  std::size_t tuple_count = 0;          // transitions used for fitting

  engine::SensorFrame evaluate(const engine::OperatingPoint& w,
                               const engine::SensorFrame& x_prev,
                               const engine::HealthState& theta) const;

  // Drop-in measurement function for ukf_step. The filter evaluates 2n+1
  // sigma points per step with n = 3; the closure counts calls to detect step
  // boundaries, carries its recurrent response across them using the previous
  // step's operating point together with the new step's central (prior-mean)
  // health state, and bootstraps the very first response from the exact
  // model. One closure serves one unit; request a fresh one per trajectory.
  calib::MeasurementModel recurrent_model() const;
};

// Regress next-step responses on (w_t, x_{t-1}, theta_t) across all streams,
// never forming transitions across stream boundaries. Requires at least 1000
// transitions; throws ConfigError otherwise.
SurrogateModel fit_surrogate(const std::vector<FitStream>& streams,
                             const SurrogateTrainConfig& cfg);

}  // namespace phm::surrogate
