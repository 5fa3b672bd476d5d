#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "phm/engine_model.hpp"
#include "phm/errors.hpp"
#include "phm/fleet.hpp"
#include "phm/io/hash.hpp"
#include "phm/random.hpp"
#include "phm/ukf.hpp"

using namespace phm;
using namespace phm::calib;

namespace {

// Textbook linear Kalman filter, written directly from the measurement-update
// equations with the Joseph-form covariance. Shares no code with the filter
// under test.
struct LinearKfOracle {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  void predict(const Eigen::VectorXd& q_diag) {
    cov += Eigen::MatrixXd(q_diag.asDiagonal());
  }

  void update(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
              const Eigen::VectorXd& r_diag) {
    const Eigen::MatrixXd r = r_diag.asDiagonal();
    const Eigen::MatrixXd s = a * cov * a.transpose() + r;
    const Eigen::MatrixXd k = cov * a.transpose() * s.inverse();
    mean += k * (y - a * mean);
    const Eigen::MatrixXd i_ka =
        Eigen::MatrixXd::Identity(cov.rows(), cov.cols()) - k * a;
    cov = i_ka * cov * i_ka.transpose() + k * r * k.transpose();
  }
};

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) b(i, j) = gauss(rng);
  }
  return scale * (b * b.transpose() / n +
                  Eigen::MatrixXd::Identity(n, n));
}

fleet::DegradationConfig fast_degradation(fleet::FailureMode mode) {
  fleet::DegradationConfig deg;
  deg.mode = mode;
  deg.normal_rate_min = 0.004;
  deg.normal_rate_max = 0.007;
  deg.abnormal_rate_min = 0.022;
  deg.abnormal_rate_max = 0.045;
  deg.ts_min = 8.0;
  deg.ts_max = 14.0;
  return deg;
}

double min_eigenvalue(const Eigen::Matrix3d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m)
      .eigenvalues()
      .minCoeff();
}

}  // namespace

TEST_SUITE("calibration") {

TEST_CASE("sigma weights satisfy the scaled identities") {
  for (auto [n, alpha, beta, kappa] :
       {std::tuple{3, 1e-3, 2.0, 0.0}, std::tuple{5, 0.5, 1.0, 2.0}}) {
    const SigmaWeights sw = sigma_weights(n, alpha, beta, kappa);
    REQUIRE(sw.wm.size() == 2 * n + 1);
    CHECK(sw.wm.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sw.wc.sum() ==
          doctest::Approx(2.0 - alpha * alpha + beta).epsilon(1e-9));
    CHECK(sw.gamma ==
          doctest::Approx(alpha * std::sqrt(n + kappa)).epsilon(1e-12));
  }
}

TEST_CASE("sigma points reproduce the prior mean and covariance") {
  auto rng = make_engine(404);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd mean(3);
    for (int i = 0; i < 3; ++i) mean[i] = 0.05 * gauss(rng);
    const Eigen::MatrixXd cov = random_spd(rng, 3, 1e-4);

    const double alpha = 1e-3, beta = 2.0, kappa = 0.0;
    const Eigen::MatrixXd chi = sigma_points(mean, cov, alpha, kappa);
    const SigmaWeights sw = sigma_weights(3, alpha, beta, kappa);
    REQUIRE(chi.cols() == 7);
    CHECK((chi.col(0).array() == mean.array()).all());

    Eigen::VectorXd mean_rec = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < 7; ++i) mean_rec += sw.wm[i] * chi.col(i);
    CHECK((mean_rec - mean).cwiseAbs().maxCoeff() < 1e-9);

    Eigen::MatrixXd cov_rec = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 7; ++i) {
      const Eigen::VectorXd d = chi.col(i) - mean;
      cov_rec += sw.wc[i] * d * d.transpose();
    }
    CHECK((cov_rec - cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("a nearly singular covariance is rescued once, a bad one is not") {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd nearly = Eigen::Vector3d(1e-30, 1e-30, -1e-12).asDiagonal();
  const Eigen::MatrixXd chi = sigma_points(mean, nearly, 1e-3, 0.0);
  CHECK(chi.allFinite());

  Eigen::MatrixXd indefinite = Eigen::Vector3d(-1e-3, 1e-4, 1e-4).asDiagonal();
  CHECK_THROWS_AS(sigma_points(mean, indefinite, 1e-3, 0.0), NumericError);
}

TEST_CASE("unscented update matches a linear Kalman filter") {
  auto rng = make_engine(606);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3, m = 5;
    Eigen::MatrixXd a(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = 2.0 * u01(rng) - 1.0;
    }
    Eigen::VectorXd r_diag(m), q_diag(n), truth(n);
    for (int i = 0; i < m; ++i) r_diag[i] = 1e-6 + 1e-4 * u01(rng);
    for (int j = 0; j < n; ++j) q_diag[j] = 1e-8 + 1e-7 * u01(rng);
    for (int j = 0; j < n; ++j) truth[j] = -0.1 * u01(rng);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd cov = random_spd(rng, n, 1e-4);
    LinearKfOracle oracle{mean, cov};

    for (int step = 0; step < 5; ++step) {
      Eigen::VectorXd y = a * truth;
      for (int i = 0; i < m; ++i) y[i] += std::sqrt(r_diag[i]) * gauss(rng);

      cov += Eigen::MatrixXd(q_diag.asDiagonal());
      unscented_update(
          mean, cov, [&](const Eigen::VectorXd& th) { return a * th; }, y,
          r_diag, 1e-3, 2.0, 0.0);

      oracle.predict(q_diag);
      oracle.update(a, y, r_diag);

      CHECK((mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((cov - oracle.cov).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("ukf_step on a linear model matches the oracle end to end") {
  auto rng = make_engine(607);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::MatrixXd a(engine::kNumSensors, 3);
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < 3; ++j) a(i, j) = 2.0 * u01(rng) - 1.0;
  }
  const MeasurementModel linear_model =
      [&a](const engine::OperatingPoint&, const engine::HealthState& theta) {
        const auto t = theta.as_array();
        const Eigen::VectorXd y =
            a * Eigen::Vector3d(t[0], t[1], t[2]);
        engine::SensorFrame f;
        for (int i = 0; i < engine::kNumSensors; ++i) f[i] = y[i];
        return f;
      };

  UkfConfig cfg;
  cfg.r_diag = Eigen::VectorXd::Constant(engine::kNumSensors, 1e-6);
  UkfState state = ukf_init(cfg);
  LinearKfOracle oracle{state.theta_mean,
                        Eigen::MatrixXd(state.theta_cov)};

  const Eigen::Vector3d truth(-0.06, -0.02, -0.04);
  const auto w = engine::OperatingPoint::cruise_reference();
  for (int step = 0; step < 8; ++step) {
    Eigen::VectorXd y = a * truth;
    engine::SensorFrame yf;
    for (int i = 0; i < engine::kNumSensors; ++i) {
      yf[i] = y[i] + 1e-3 * gauss(rng);
    }
    ukf_step(state, cfg, w, yf, linear_model);
    oracle.predict(cfg.q_diag);
    Eigen::VectorXd yv(engine::kNumSensors);
    for (int i = 0; i < engine::kNumSensors; ++i) yv[i] = yf[i];
    oracle.update(a, yv, cfg.r_diag);

    CHECK((state.theta_mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((Eigen::MatrixXd(state.theta_cov) - oracle.cov)
              .cwiseAbs()
              .maxCoeff() < 1e-6);
  }
  CHECK(state.step == 8);
}

TEST_CASE("an uninformative measurement leaves the prior in place") {
  UkfConfig cfg = UkfConfig::defaults();
  cfg.r_diag = Eigen::VectorXd::Constant(engine::kNumSensors, 1e12);
  UkfState state = ukf_init(cfg);
  const Eigen::Vector3d prior = state.theta_mean;

  const auto w = engine::OperatingPoint::cruise_reference();
  const auto y =
      engine::evaluate_model(w, engine::HealthState{-0.08, -0.05, -0.06})
          .sensors;
  ukf_step(state, cfg, w, y, exact_measurement_model());
  CHECK((state.theta_mean - prior).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("the filter locks onto a stationary health state") {
  const engine::HealthState truth{-0.05, -0.03, -0.04};
  const auto w = engine::OperatingPoint::cruise_reference();
  const auto clean = engine::evaluate_model(w, truth).sensors;

  const double sigma_rel = 0.004;
  UkfConfig cfg = UkfConfig::defaults(sigma_rel);
  UkfState state = ukf_init(cfg);

  auto rng = make_engine(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const MeasurementModel model = exact_measurement_model();

  std::vector<double> innovations;
  for (int step = 0; step < 500; ++step) {
    engine::SensorFrame y;
    for (int i = 0; i < engine::kNumSensors; ++i) {
      y[i] = clean[i] * (1.0 + sigma_rel * gauss(rng));
    }
    double innovation = 0.0;
    ukf_step(state, cfg, w, y, model, 1.0, &innovation);
    innovations.push_back(innovation);
    CHECK(min_eigenvalue(state.theta_cov) >= -1e-10);
  }

  const auto t = truth.as_array();
  for (int i = 0; i < 3; ++i) {
    const double err = std::abs(state.theta_mean[i] - t[static_cast<std::size_t>(i)]);
    const double sd = std::sqrt(state.theta_cov(i, i));
    CHECK(err < 3.0 * sd);
  }
  CHECK(innovations[0] > innovations[199]);
}

TEST_CASE("noise-free fleet data calibrates to the ground truth") {
  const fleet::UnitRecord unit =
      fleet::simulate_unit(321, 8, fleet::RouteClass::Long,
                           fast_degradation(fleet::FailureMode::HptPlusLpt), 30,
                           0.0, 120);

  CalibrationConfig cfg;
  cfg.ukf = UkfConfig::defaults(1e-4);
  const CalibratedTrace trace =
      calibrate_trajectory(unit, exact_measurement_model(), cfg);

  REQUIRE(trace.size() == unit.sample_count());
  REQUIRE(trace.burn_in_samples == 30);

  std::array<double, 3> sq_err{};
  std::size_t n_post = 0;
  for (std::size_t i = trace.burn_in_samples; i < trace.size(); ++i) {
    const auto truth =
        unit.theta[static_cast<std::size_t>(trace.cycle[i] - 1)].as_array();
    const auto est = trace.theta_hat[i].as_array();
    for (std::size_t k = 0; k < 3; ++k) {
      sq_err[k] += (est[k] - truth[k]) * (est[k] - truth[k]);
    }
    ++n_post;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::sqrt(sq_err[k] / static_cast<double>(n_post)) < 0.005);
  }

  // The emitted responses are defined as the exact physics at the emitted
  // estimate, bit for bit.
  std::size_t flat = 0;
  for (const auto& cycle : unit.cycles) {
    for (const auto& s : cycle.samples) {
      const auto out = engine::evaluate_model(s.w, trace.theta_hat[flat]);
      CHECK(trace.xhat_s[flat].v == out.sensors.v);
      CHECK(trace.xhat_v[flat].v == out.virtuals.v);
      ++flat;
    }
  }
}

TEST_CASE("credible intervals cover the truth across a degrading unit") {
  fleet::DegradationConfig deg;  // default wear rates
  deg.mode = fleet::FailureMode::HptPlusLpt;
  const double sigma_rel = 0.004;
  const fleet::UnitRecord unit = fleet::simulate_unit(
      654, 9, fleet::RouteClass::Long, deg, 200, sigma_rel, 250);

  CalibrationConfig cfg;
  cfg.ukf = UkfConfig::defaults(sigma_rel);
  const CalibratedTrace trace =
      calibrate_trajectory(unit, exact_measurement_model(), cfg);

  std::size_t covered = 0, total = 0;
  for (std::size_t i = trace.burn_in_samples; i < trace.size(); ++i) {
    const auto truth =
        unit.theta[static_cast<std::size_t>(trace.cycle[i] - 1)].as_array();
    const auto est = trace.theta_hat[i].as_array();
    for (std::size_t k = 0; k < 3; ++k) {
      covered += std::abs(est[k] - truth[k]) <= 2.576 * trace.theta_std[i][k];
      ++total;
    }
  }
  CHECK(total > 10000);
  const double coverage =
      static_cast<double>(covered) / static_cast<double>(total);
  CHECK(coverage >= 0.95);
}

TEST_CASE("bias injection follows the shrinkage formula") {
  std::vector<engine::HealthState> series = {
      {0.0, 0.0, 0.0}, {-0.10, -0.02, -0.05}, {-0.12, -0.04, -0.07}};

  const auto ident = inject_bias(series, 0.0);
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(ident[i].as_array() == series[i].as_array());
  }

  const auto collapsed = inject_bias(series, 1.0);
  for (const auto& th : collapsed) {
    CHECK(th.as_array() == series.front().as_array());
  }

  const auto pushed = inject_bias(series, -0.5);
  CHECK(pushed[1].hpt_eff_mod == doctest::Approx(-0.15).epsilon(1e-12));
  CHECK(pushed[1].lpt_eff_mod == doctest::Approx(-0.03).epsilon(1e-12));
  CHECK(pushed[2].lpt_flow_mod == doctest::Approx(-0.105).epsilon(1e-12));
}

TEST_CASE("noise injection hits the requested signal-to-noise ratio") {
  std::vector<engine::HealthState> series;
  series.reserve(10000);
  for (int t = 0; t < 10000; ++t) {
    const double u = t / 10000.0;
    series.push_back(engine::HealthState{-0.08 * u, -0.05 * u, 0.0});
  }

  const auto clean = inject_noise(series, kNoNoiseSnrDb, 99);
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(clean[i].as_array() == series[i].as_array());
  }

  const auto once = inject_noise(series, 20.0, 77);
  const auto again = inject_noise(series, 20.0, 77);
  for (std::size_t i = 0; i < series.size(); ++i) {
    CHECK(once[i].as_array() == again[i].as_array());
  }

  for (double snr_db : {20.0, 15.0}) {
    const auto noisy = inject_noise(series, snr_db, 55);
    for (std::size_t k = 0; k < 2; ++k) {
      double sig = 0.0, noise = 0.0;
      for (std::size_t i = 0; i < series.size(); ++i) {
        const double s = series[i].as_array()[k];
        const double d = noisy[i].as_array()[k] - s;
        sig += s * s;
        noise += d * d;
      }
      const double snr_emp = 10.0 * std::log10(sig / noise);
      CHECK(snr_emp == doctest::Approx(snr_db).epsilon(0.05));
    }
    // The flow component carries no signal and must pass through untouched.
    for (std::size_t i = 0; i < series.size(); ++i) {
      CHECK(noisy[i].lpt_flow_mod == 0.0);
    }
  }
}

TEST_CASE("calibrated traces round-trip through their CSV form") {
  const fleet::UnitRecord unit =
      fleet::simulate_unit(43, 6, fleet::RouteClass::Short,
                           fast_degradation(fleet::FailureMode::Hpt), 30, 0.004,
                           120);
  CalibrationConfig cfg;
  const CalibratedTrace trace =
      calibrate_trajectory(unit, exact_measurement_model(), cfg);

  const auto path = std::filesystem::temp_directory_path() / "trace_rt.csv";
  const auto path_b = std::filesystem::temp_directory_path() / "trace_rt_b.csv";
  write_trace_csv(path.string(), trace);
  write_trace_csv(path_b.string(), trace);
  CHECK(io::sha256_file(path.string()) == io::sha256_file(path_b.string()));

  const CalibratedTrace back = read_trace_csv(path.string());
  REQUIRE(back.size() == trace.size());
  CHECK(back.unit_id == trace.unit_id);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(back.cycle[i] == trace.cycle[i]);
    CHECK(back.sample[i] == trace.sample[i]);
    CHECK(back.theta_hat[i].as_array() == trace.theta_hat[i].as_array());
    CHECK(back.xhat_s[i].v == trace.xhat_s[i].v);
    CHECK(back.xhat_v[i].v == trace.xhat_v[i].v);
    CHECK(back.innovation_norm[i] == trace.innovation_norm[i]);
  }

  {
    std::ofstream bad(path);
    bad << "unit,cycle\n1,1\n";
  }
  CHECK_THROWS_AS(read_trace_csv(path.string()), IoError);
  std::filesystem::remove(path);
  std::filesystem::remove(path_b);
}

TEST_CASE("configuration errors are rejected up front") {
  UkfConfig cfg = UkfConfig::defaults();
  cfg.q_diag[1] = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = UkfConfig::defaults();
  cfg.r_diag.resize(4);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = UkfConfig::defaults();
  cfg.alpha_sp = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = UkfConfig::defaults();
  cfg.p0_diag[0] = -1e-4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  CHECK_THROWS_AS(UkfConfig::defaults(0.0), ConfigError);

  UkfState state = ukf_init(UkfConfig::defaults());
  const auto w = engine::OperatingPoint::cruise_reference();
  const auto y = engine::evaluate_model(w, engine::reference_health()).sensors;
  CHECK_THROWS_AS(ukf_step(state, UkfConfig::defaults(), w, y,
                           exact_measurement_model(), 0.0),
                  ConfigError);

  CalibrationConfig ccfg;
  ccfg.burn_in_cycles = -1;
  CHECK_THROWS_AS(ccfg.validate(), ConfigError);

  fleet::UnitRecord empty;
  CHECK_THROWS_AS(
      calibrate_trajectory(empty, exact_measurement_model(), CalibrationConfig{}),
      ConfigError);

  std::vector<engine::HealthState> none;
  CHECK_THROWS_AS(inject_bias(none, 0.5), ConfigError);
  CHECK_THROWS_AS(inject_noise(none, 20.0, 1), ConfigError);
}

}  // TEST_SUITE
