#include "phm/ukf.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "phm/errors.hpp"
#include "phm/io/csv.hpp"
#include "phm/random.hpp"

namespace phm::calib {

namespace {

constexpr double kCholJitter = 1e-9;

Eigen::VectorXd frame_to_vec(const engine::SensorFrame& f) {
  Eigen::VectorXd v(engine::kNumSensors);
  for (int i = 0; i < engine::kNumSensors; ++i) v[i] = f[i];
  return v;
}

void check_positive_diag(const Eigen::VectorXd& d, const char* what) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]) || d[i] <= 0.0) {
      std::ostringstream msg;
      msg << what << "[" << i << "] must be a positive finite variance, got "
          << d[i];
      throw ConfigError(msg.str());
    }
  }
}

}  // namespace

UkfConfig UkfConfig::defaults(double sigma_rel, double r_inflation) {
  if (!(sigma_rel > 0.0) || !(r_inflation > 0.0)) {
    throw ConfigError("sigma_rel and r_inflation must be positive");
  }
  UkfConfig cfg;
  const engine::SensorFrame ref =
      engine::evaluate_model(engine::OperatingPoint::cruise_reference(),
                             engine::reference_health())
          .sensors;
  cfg.r_diag.resize(engine::kNumSensors);
  for (int i = 0; i < engine::kNumSensors; ++i) {
    const double sd = sigma_rel * r_inflation * ref[i];
    cfg.r_diag[i] = sd * sd;
  }
  return cfg;
}

void UkfConfig::validate() const {
  check_positive_diag(q_diag, "q_diag");
  check_positive_diag(p0_diag, "p0_diag");
  if (r_diag.size() != engine::kNumSensors) {
    throw ConfigError("r_diag must hold one variance per sensor");
  }
  check_positive_diag(r_diag, "r_diag");
  if (!(alpha_sp > 0.0 && alpha_sp <= 1.0)) {
    throw ConfigError("alpha_sp must lie in (0, 1]");
  }
  if (!(beta_sp >= 0.0) || !(kappa_sp >= 0.0)) {
    throw ConfigError("beta_sp and kappa_sp must be non-negative");
  }
  for (double t : theta0) {
    if (!std::isfinite(t)) throw ConfigError("theta0 must be finite");
  }
}

SigmaWeights sigma_weights(int n, double alpha, double beta, double kappa) {
  const double lambda = alpha * alpha * (n + kappa) - n;
  const double denom = n + lambda;
  SigmaWeights sw;
  sw.wm.resize(2 * n + 1);
  sw.wc.resize(2 * n + 1);
  sw.wm[0] = lambda / denom;
  sw.wc[0] = lambda / denom + (1.0 - alpha * alpha + beta);
  for (int i = 1; i <= 2 * n; ++i) {
    sw.wm[i] = 0.5 / denom;
    sw.wc[i] = 0.5 / denom;
  }
  sw.gamma = std::sqrt(denom);
  return sw;
}

Eigen::MatrixXd sigma_points(const Eigen::VectorXd& mean,
                             const Eigen::MatrixXd& cov, double alpha,
                             double kappa) {
  const auto n = mean.size();
  const double gamma = std::sqrt(alpha * alpha * (n + kappa));
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd jittered =
        cov + kCholJitter * Eigen::MatrixXd::Identity(n, n);
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) {
      throw NumericError(
          "state covariance is not positive definite after jitter retry");
    }
  }
  const Eigen::MatrixXd root = gamma * Eigen::MatrixXd(llt.matrixL());
  Eigen::MatrixXd points(n, 2 * n + 1);
  points.col(0) = mean;
  for (Eigen::Index i = 0; i < n; ++i) {
    points.col(1 + i) = mean + root.col(i);
    points.col(1 + n + i) = mean - root.col(i);
  }
  return points;
}

void unscented_update(
    Eigen::VectorXd& mean, Eigen::MatrixXd& cov,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& h,
    const Eigen::VectorXd& y, const Eigen::VectorXd& r_diag, double alpha,
    double beta, double kappa, double* innovation_norm) {
  const auto n = mean.size();
  const SigmaWeights sw =
      sigma_weights(static_cast<int>(n), alpha, beta, kappa);
  const Eigen::MatrixXd chi = sigma_points(mean, cov, alpha, kappa);

  const auto m = y.size();
  Eigen::MatrixXd ys(m, 2 * n + 1);
  for (Eigen::Index i = 0; i < chi.cols(); ++i) {
    const Eigen::VectorXd yi = h(chi.col(i));
    if (yi.size() != m) {
      throw NumericError("measurement function dimension mismatch");
    }
    ys.col(i) = yi;
  }

  // Deviation form: with tiny alpha the raw weights are O(1/alpha^2) and the
  // plain weighted sum cancels catastrophically; anchoring on the central
  // point keeps every weighted term small.
  Eigen::VectorXd y_pred = ys.col(0);
  for (Eigen::Index i = 1; i < ys.cols(); ++i) {
    y_pred += sw.wm[i] * (ys.col(i) - ys.col(0));
  }

  Eigen::MatrixXd s = r_diag.asDiagonal();
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < ys.cols(); ++i) {
    const Eigen::VectorXd dy = ys.col(i) - y_pred;
    s += sw.wc[i] * dy * dy.transpose();
    if (i > 0) {
      const Eigen::VectorXd dx = chi.col(i) - mean;
      cross += sw.wc[i] * dx * dy.transpose();
    }
  }

  Eigen::LLT<Eigen::MatrixXd> s_llt(s);
  if (s_llt.info() != Eigen::Success) {
    throw NumericError("innovation covariance is not positive definite");
  }
  const Eigen::MatrixXd gain = s_llt.solve(cross.transpose()).transpose();

  const Eigen::VectorXd innovation = y - y_pred;
  if (innovation_norm != nullptr) *innovation_norm = innovation.norm();

  mean += gain * innovation;
  cov -= gain * s * gain.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
}

MeasurementModel exact_measurement_model(double health_box_margin) {
  return [health_box_margin](const engine::OperatingPoint& w,
                             const engine::HealthState& theta) {
    return engine::evaluate_model(w, theta, health_box_margin).sensors;
  };
}

UkfState ukf_init(const UkfConfig& cfg) {
  cfg.validate();
  UkfState state;
  state.theta_mean = cfg.theta0;
  state.theta_cov = cfg.p0_diag.asDiagonal();
  state.step = 0;
  return state;
}

engine::HealthState ukf_step(UkfState& state, const UkfConfig& cfg,
                             const engine::OperatingPoint& w,
                             const engine::SensorFrame& y,
                             const MeasurementModel& model, double q_scale,
                             double* innovation_norm) {
  if (!(q_scale > 0.0) || !std::isfinite(q_scale)) {
    throw ConfigError("q_scale must be positive and finite");
  }
  state.theta_cov += (q_scale * cfg.q_diag).asDiagonal();

  auto h = [&](const Eigen::VectorXd& th) {
    const engine::SensorFrame f =
        model(w, engine::HealthState{th[0], th[1], th[2]});
    return frame_to_vec(f);
  };

  Eigen::VectorXd mean = state.theta_mean;
  Eigen::MatrixXd cov = state.theta_cov;
  unscented_update(mean, cov, h, frame_to_vec(y), cfg.r_diag, cfg.alpha_sp,
                   cfg.beta_sp, cfg.kappa_sp, innovation_norm);
  state.theta_mean = mean;
  state.theta_cov = cov;
  ++state.step;
  return engine::HealthState{mean[0], mean[1], mean[2]};
}

std::size_t CalibratedTrace::clamp_count() const {
  std::size_t n = 0;
  for (std::uint8_t c : clamped) n += c;
  return n;
}

void CalibrationConfig::validate() const {
  ukf.validate();
  if (reference_samples_per_cycle < 1) {
    throw ConfigError("reference_samples_per_cycle must be positive");
  }
  if (burn_in_cycles < 0) throw ConfigError("burn_in_cycles must be >= 0");
}

CalibratedTrace calibrate_trajectory(const fleet::UnitRecord& unit,
                                     const MeasurementModel& model,
                                     const CalibrationConfig& cfg) {
  cfg.validate();
  if (unit.cycles.empty()) {
    throw ConfigError("cannot calibrate a unit with no flight cycles");
  }

  CalibratedTrace trace;
  trace.unit_id = unit.unit_id;
  const std::size_t total = unit.sample_count();
  trace.cycle.reserve(total);
  trace.sample.reserve(total);
  trace.theta_hat.reserve(total);
  trace.xhat_s.reserve(total);
  trace.xhat_v.reserve(total);
  trace.innovation_norm.reserve(total);
  trace.theta_std.reserve(total);
  trace.clamped.reserve(total);

  for (std::size_t c = 0;
       c < std::min<std::size_t>(static_cast<std::size_t>(cfg.burn_in_cycles),
                                 unit.cycles.size());
       ++c) {
    trace.burn_in_samples += unit.cycles[c].samples.size();
  }

  UkfState state = ukf_init(cfg.ukf);
  for (const auto& cycle : unit.cycles) {
    const double q_scale = static_cast<double>(cfg.reference_samples_per_cycle) /
                           static_cast<double>(cycle.samples.size());
    int sample_idx = 0;
    for (const auto& s : cycle.samples) {
      double innovation = 0.0;
      const engine::HealthState raw =
          ukf_step(state, cfg.ukf, s.w, s.sensors, model, q_scale, &innovation);

      engine::HealthState emitted = raw;
      bool clamped = false;
      auto clamp_mod = [&](double& v) {
        const double c2 = std::clamp(v, engine::HealthState::kMinMod,
                                     engine::HealthState::kMaxMod);
        clamped |= c2 != v;
        v = c2;
      };
      clamp_mod(emitted.hpt_eff_mod);
      clamp_mod(emitted.lpt_eff_mod);
      clamp_mod(emitted.lpt_flow_mod);

      const engine::ModelOutput out = engine::evaluate_model(s.w, emitted);
      trace.cycle.push_back(cycle.cycle_index);
      trace.sample.push_back(sample_idx++);
      trace.theta_hat.push_back(emitted);
      trace.xhat_s.push_back(out.sensors);
      trace.xhat_v.push_back(out.virtuals);
      trace.innovation_norm.push_back(innovation);
      trace.theta_std.push_back(
          {std::sqrt(std::max(0.0, state.theta_cov(0, 0))),
           std::sqrt(std::max(0.0, state.theta_cov(1, 1))),
           std::sqrt(std::max(0.0, state.theta_cov(2, 2)))});
      trace.clamped.push_back(clamped ? 1 : 0);
    }
  }
  return trace;
}

namespace {

std::vector<std::string> trace_columns() {
  std::vector<std::string> cols = {"unit", "cycle", "sample"};
  cols.emplace_back("theta_hat_hpt_eff_mod");
  cols.emplace_back("theta_hat_lpt_eff_mod");
  cols.emplace_back("theta_hat_lpt_flow_mod");
  for (const char* name : engine::kSensorNames) {
    cols.push_back(std::string("xhat_s_") + name);
  }
  for (const char* name : engine::kVirtualNames) {
    cols.push_back(std::string("xhat_v_") + name);
  }
  cols.emplace_back("innovation_norm");
  return cols;
}

}  // namespace

void write_trace_csv(const std::string& path, const CalibratedTrace& trace) {
  io::CsvTable table;
  table.columns = trace_columns();
  table.rows.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::vector<double> row;
    row.reserve(table.columns.size());
    row.push_back(static_cast<double>(trace.unit_id));
    row.push_back(static_cast<double>(trace.cycle[i]));
    row.push_back(static_cast<double>(trace.sample[i]));
    const auto th = trace.theta_hat[i].as_array();
    row.insert(row.end(), th.begin(), th.end());
    for (int s = 0; s < engine::kNumSensors; ++s) {
      row.push_back(trace.xhat_s[i][s]);
    }
    for (int v = 0; v < engine::kNumVirtual; ++v) {
      row.push_back(trace.xhat_v[i][v]);
    }
    row.push_back(trace.innovation_norm[i]);
    table.rows.push_back(std::move(row));
  }
  io::write_csv(path, table);
}

CalibratedTrace read_trace_csv(const std::string& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.columns != trace_columns()) {
    throw IoError("calibrated-trace column layout mismatch in " + path);
  }
  CalibratedTrace trace;
  for (const auto& row : table.rows) {
    if (trace.theta_hat.empty()) {
      trace.unit_id = static_cast<int>(row[0]);
    } else if (static_cast<int>(row[0]) != trace.unit_id) {
      throw IoError("trace file mixes units: " + path);
    }
    trace.cycle.push_back(static_cast<int>(row[1]));
    trace.sample.push_back(static_cast<int>(row[2]));
    trace.theta_hat.push_back(engine::HealthState{row[3], row[4], row[5]});
    engine::SensorFrame xs;
    for (int s = 0; s < engine::kNumSensors; ++s) {
      xs[s] = row[6 + static_cast<std::size_t>(s)];
    }
    trace.xhat_s.push_back(xs);
    engine::VirtualFrame xv;
    for (int v = 0; v < engine::kNumVirtual; ++v) {
      xv[v] = row[6 + engine::kNumSensors + static_cast<std::size_t>(v)];
    }
    trace.xhat_v.push_back(xv);
    trace.innovation_norm.push_back(row.back());
  }
  return trace;
}

std::vector<engine::HealthState> inject_noise(
    const std::vector<engine::HealthState>& series, double snr_db,
    std::uint64_t seed) {
  if (series.empty()) throw ConfigError("cannot perturb an empty series");
  if (std::isnan(snr_db)) throw ConfigError("snr_db must not be NaN");
  if (snr_db == kNoNoiseSnrDb) return series;

  std::array<double, 3> power{};
  for (const auto& th : series) {
    const auto a = th.as_array();
    for (std::size_t i = 0; i < 3; ++i) power[i] += a[i] * a[i];
  }
  for (double& p : power) p /= static_cast<double>(series.size());

  const double snr_lin = std::pow(10.0, snr_db / 10.0);
  std::array<double, 3> noise_sd{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (power[i] > 0.0) {
      noise_sd[i] = std::sqrt(power[i] / snr_lin);
    } else {
      noise_sd[i] = 0.0;
      std::clog << "inject_noise: component " << i
                << " has zero power, passing through unchanged\n";
    }
  }

  auto rng = make_engine(derive_seed(seed, {seed_tag::kPerturb}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<engine::HealthState> out;
  out.reserve(series.size());
  for (const auto& th : series) {
    auto a = th.as_array();
    for (std::size_t i = 0; i < 3; ++i) {
      if (noise_sd[i] > 0.0) a[i] += noise_sd[i] * gauss(rng);
    }
    out.push_back(engine::HealthState::from_array(a));
  }
  return out;
}

std::vector<engine::HealthState> inject_bias(
    const std::vector<engine::HealthState>& series, double alpha_bias) {
  if (series.empty()) throw ConfigError("cannot perturb an empty series");
  if (!std::isfinite(alpha_bias)) throw ConfigError("alpha_bias must be finite");
  const auto theta0 = series.front().as_array();
  std::vector<engine::HealthState> out;
  out.reserve(series.size());
  for (const auto& th : series) {
    auto a = th.as_array();
    for (std::size_t i = 0; i < 3; ++i) {
      a[i] += alpha_bias * (theta0[i] - a[i]);
    }
    out.push_back(engine::HealthState::from_array(a));
  }
  return out;
}

}  // namespace phm::calib
