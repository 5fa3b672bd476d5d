#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phm/engine_model.hpp"
#include "phm/fleet.hpp"

namespace phm::calib {

// Health-parameter estimation: a random-walk state theta filtered against the
// sensor stream with a scaled-sigma-point unscented update. The filter state
// persists across flight cycles; degradation is continuous, so restarting at
// every flight would discard the converged posterior.

struct UkfConfig {
  Eigen::Vector3d q_diag{1e-7, 1e-7, 1e-7};  // process noise, stated at the
                                             // reference sample cadence
  Eigen::VectorXd r_diag;                    // measurement noise, one per sensor
  double alpha_sp = 1e-3;
  double beta_sp = 2.0;
  double kappa_sp = 0.0;
  Eigen::Vector3d theta0{0.0, 0.0, 0.0};
  Eigen::Vector3d p0_diag{1e-4, 1e-4, 1e-4};

  // r_diag from the relative sensor-noise level applied to the reference-frame
  // magnitudes; r_inflation widens it when the operating envelope runs hotter
  // than the reference point.
  static UkfConfig defaults(double sigma_rel = 0.004, double r_inflation = 1.0);
  void validate() const;  // throws ConfigError
};

struct UkfState {
  Eigen::Vector3d theta_mean;
  Eigen::Matrix3d theta_cov;
  long step = 0;
};

struct SigmaWeights {
  Eigen::VectorXd wm;  // mean weights, sum to 1
  Eigen::VectorXd wc;  // covariance weights
  double gamma = 0.0;  // sigma-point spread, sqrt(n + lambda)
};
SigmaWeights sigma_weights(int n, double alpha, double beta, double kappa);

// 2n+1 points as columns, column 0 exactly the mean. Cholesky failure retries
// once with 1e-9 jitter on the diagonal, then throws NumericError.
Eigen::MatrixXd sigma_points(const Eigen::VectorXd& mean,
                             const Eigen::MatrixXd& cov, double alpha,
                             double kappa);

// One measurement update of (mean, cov) against y with noise diag(r_diag).
// Exposed generically so the update can be checked against a linear Kalman
// filter on linear measurement functions.
void unscented_update(
    Eigen::VectorXd& mean, Eigen::MatrixXd& cov,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& h,
    const Eigen::VectorXd& y, const Eigen::VectorXd& r_diag, double alpha,
    double beta, double kappa, double* innovation_norm = nullptr);

using MeasurementModel = std::function<engine::SensorFrame(
    const engine::OperatingPoint&, const engine::HealthState&)>;

// Physics model as the filter's measurement function. The box margin admits
// sigma points (and a transiently overshooting mean) slightly outside the
// valid modifier range.
MeasurementModel exact_measurement_model(double health_box_margin = 0.05);

UkfState ukf_init(const UkfConfig& cfg);

// Random-walk predict (cov += q_scale * Q) followed by the unscented update.
// Returns the posterior mean. q_scale renormalizes the process noise when the
// sample cadence differs from the one q_diag was stated at.
engine::HealthState ukf_step(UkfState& state, const UkfConfig& cfg,
                             const engine::OperatingPoint& w,
                             const engine::SensorFrame& y,
                             const MeasurementModel& model,
                             double q_scale = 1.0,
                             double* innovation_norm = nullptr);

struct CalibratedTrace {
  int unit_id = 0;
  std::vector<int> cycle;
  std::vector<int> sample;
  std::vector<engine::HealthState> theta_hat;  // clamped into the modifier box
  std::vector<engine::SensorFrame> xhat_s;
  std::vector<engine::VirtualFrame> xhat_v;
  std::vector<double> innovation_norm;
  std::vector<std::array<double, 3>> theta_std;  // posterior std per component
  std::vector<std::uint8_t> clamped;             // 1 where the mean was clamped
  std::size_t burn_in_samples = 0;

  std::size_t size() const { return theta_hat.size(); }
  std::size_t clamp_count() const;
};

struct CalibrationConfig {
  UkfConfig ukf = UkfConfig::defaults();
  int reference_samples_per_cycle = 200;  // cadence q_diag refers to
  int burn_in_cycles = 1;
  void validate() const;
};

// Sequential filtering over every sample of the unit, state carried across
// cycles. The emitted responses are always recomputed from the exact physics
// at the clamped estimate, whatever measurement model drove the filter.
CalibratedTrace calibrate_trajectory(const fleet::UnitRecord& unit,
                                     const MeasurementModel& model,
                                     const CalibrationConfig& cfg);

void write_trace_csv(const std::string& path, const CalibratedTrace& trace);
CalibratedTrace read_trace_csv(const std::string& path);

// Sentinel disabling noise injection.
inline constexpr double kNoNoiseSnrDb =
    std::numeric_limits<double>::infinity();

// White Gaussian noise per component sized to the requested signal-to-noise
// ratio, with signal power taken over the series. Components with zero power
// pass through unchanged.
std::vector<engine::HealthState> inject_noise(
    const std::vector<engine::HealthState>& series, double snr_db,
    std::uint64_t seed);

// theta(t) + alpha * (theta(0) - theta(t)), theta(0) being the first sample
// of the series.
std::vector<engine::HealthState> inject_bias(
    const std::vector<engine::HealthState>& series, double alpha_bias);

}  // namespace phm::calib
