#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "phm/engine_model.hpp"
#include "phm/errors.hpp"
#include "phm/features.hpp"
#include "phm/fleet.hpp"
#include "phm/ukf.hpp"

namespace {

using namespace phm;
using features::FeatureVariant;

fleet::DegradationConfig fast_deg(fleet::FailureMode mode) {
  fleet::DegradationConfig d;
  d.mode = mode;
  d.normal_rate_min = 0.004;
  d.normal_rate_max = 0.007;
  d.abnormal_rate_min = 0.022;
  d.abnormal_rate_max = 0.045;
  d.ts_min = 8.0;
  d.ts_max = 14.0;
  return d;
}

struct CalibratedUnit {
  fleet::UnitRecord unit;
  calib::CalibratedTrace trace;
};

const std::vector<CalibratedUnit>& calibrated_units() {
  static const std::vector<CalibratedUnit> units = [] {
    std::vector<CalibratedUnit> out;
    calib::CalibrationConfig cfg;
    cfg.ukf = calib::UkfConfig::defaults();
    cfg.reference_samples_per_cycle = 30;
    const auto model = calib::exact_measurement_model();
    for (int id = 1; id <= 2; ++id) {
      fleet::UnitRecord u = fleet::simulate_unit(
          3000 + static_cast<std::uint64_t>(id), id, fleet::RouteClass::Long,
          fast_deg(fleet::FailureMode::HptPlusLpt), 30, 0.004, 120);
      calib::CalibratedTrace t = calib::calibrate_trajectory(u, model, cfg);
      out.push_back({std::move(u), std::move(t)});
    }
    return out;
  }();
  return units;
}

// Hand-built matrix with the DataDriven shape: unit/cycle labels supplied,
// feature values encode (row, col) for easy checks.
features::EnhancedFeatureMatrix synthetic_matrix(
    const std::vector<int>& unit_per_row) {
  features::EnhancedFeatureMatrix m;
  m.variant = FeatureVariant::DataDriven;
  m.column_names = features::variant_column_names(m.variant);
  const auto n = static_cast<Eigen::Index>(unit_per_row.size());
  m.values.resize(n, 20);
  m.rul.resize(n);
  m.unit = unit_per_row;
  m.cycle.assign(unit_per_row.size(), 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < 20; ++c) {
      m.values(r, c) = 1000.0 * static_cast<double>(r) + static_cast<double>(c);
    }
    m.rul[r] = 500.0 - static_cast<double>(r);
  }
  return m;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("variant column inventory: 20 / 36 / 47 / 50, strictly nested") {
  CHECK(features::variant_columns(FeatureVariant::DataDriven) == 20);
  CHECK(features::variant_columns(FeatureVariant::PlusXsHat) == 36);
  CHECK(features::variant_columns(FeatureVariant::PlusXvHat) == 47);
  CHECK(features::variant_columns(FeatureVariant::FullHybrid) == 50);

  const std::vector<FeatureVariant> chain = {
      FeatureVariant::DataDriven, FeatureVariant::PlusXsHat,
      FeatureVariant::PlusXvHat, FeatureVariant::FullHybrid};
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const auto prev = features::variant_column_names(chain[i - 1]);
    const auto cur = features::variant_column_names(chain[i]);
    REQUIRE(cur.size() > prev.size());
    for (std::size_t k = 0; k < prev.size(); ++k) CHECK(cur[k] == prev[k]);
  }
  const auto full = features::variant_column_names(FeatureVariant::FullHybrid);
  CHECK(full[0] == "alt");
  CHECK(full[4] == engine::kSensorNames[0]);
  CHECK(full[20] == std::string("xhat_s_") + engine::kSensorNames[0]);
  CHECK(full[36] == std::string("xhat_v_") + engine::kVirtualNames[0]);
  CHECK(full[47] == "theta_hat_hpt_eff_mod");
  CHECK(full[49] == "theta_hat_lpt_flow_mod");

  for (FeatureVariant v : chain) {
    CHECK(features::variant_from_string(features::to_string(v)) == v);
  }
  CHECK_THROWS_AS(features::variant_from_string("hybrid"), phm::ConfigError);
}

TEST_CASE("normalizer fit: ranges, degenerate flags, order independence") {
  Eigen::MatrixXd x(4, 3);
  x << 0.0, 5.0, 7.0,
      10.0, 5.0, 7.0,
       2.0, 5.0, 7.0,
       6.0, 5.0, 7.0;
  x(2, 2) = 8.0;  // third column: {7,7,8,7}
  auto p = features::fit_normalizer(x, "dev");
  CHECK(p.lo[0] == 0.0);
  CHECK(p.hi[0] == 10.0);
  CHECK(p.degenerate[0] == 0);
  CHECK(p.degenerate[1] == 1);  // constant column
  CHECK(p.degenerate[2] == 0);
  CHECK(p.provenance == "dev");

  // Row order must not matter.
  Eigen::MatrixXd shuffled = x;
  shuffled.row(0).swap(shuffled.row(3));
  shuffled.row(1).swap(shuffled.row(2));
  auto q = features::fit_normalizer(shuffled, "dev");
  CHECK((p.lo - q.lo).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.hi - q.hi).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(features::fit_normalizer(Eigen::MatrixXd()), phm::ConfigError);
}

TEST_CASE("normalizer endpoints, no clipping, exact inverse") {
  Eigen::MatrixXd dev(3, 2);
  dev << 0.0, -4.0,
        10.0,  4.0,
         5.0,  0.0;
  auto p = features::fit_normalizer(dev);

  Eigen::MatrixXd probe(4, 2);
  probe << 0.0, -4.0,   // mins -> -1
          10.0,  4.0,   // maxs -> +1
           5.0,  0.0,   // midpoints -> 0
          15.0,  6.0;   // beyond the range -> unclipped
  Eigen::MatrixXd n = features::apply_normalizer(probe, p);
  CHECK(n(0, 0) == doctest::Approx(-1.0));
  CHECK(n(0, 1) == doctest::Approx(-1.0));
  CHECK(n(1, 0) == doctest::Approx(1.0));
  CHECK(n(1, 1) == doctest::Approx(1.0));
  CHECK(n(2, 0) == doctest::Approx(0.0));
  CHECK(n(2, 1) == doctest::Approx(0.0));
  CHECK(n(3, 0) == doctest::Approx(2.0));
  CHECK(n(3, 1) == doctest::Approx(1.5));

  Eigen::MatrixXd back = features::invert_normalizer(n, p);
  CHECK((back - probe).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd wrong(2, 3);
  wrong.setZero();
  CHECK_THROWS_AS(features::apply_normalizer(wrong, p), phm::ConfigError);

  // Degenerate columns map to 0 and invert to the fitted value.
  Eigen::MatrixXd cdev(2, 1);
  cdev << 3.5, 3.5;
  auto cp = features::fit_normalizer(cdev);
  Eigen::MatrixXd cin(2, 1);
  cin << 3.5, 99.0;
  Eigen::MatrixXd cn = features::apply_normalizer(cin, cp);
  CHECK(cn(0, 0) == 0.0);
  CHECK(cn(1, 0) == 0.0);
  Eigen::MatrixXd cb = features::invert_normalizer(cn, cp);
  CHECK(cb(0, 0) == 3.5);
  CHECK(cb(1, 0) == 3.5);
}

TEST_CASE("assembly stitches the variant columns from unit and trace") {
  const auto& cu = calibrated_units()[0];
  const auto& unit = cu.unit;
  const auto& trace = cu.trace;

  auto dd = features::assemble_variant(unit, nullptr, FeatureVariant::DataDriven);
  CHECK(dd.values.cols() == 20);
  CHECK(dd.rows() == static_cast<Eigen::Index>(unit.sample_count()));

  auto full = features::assemble_variant(unit, &trace, FeatureVariant::FullHybrid);
  CHECK(full.values.cols() == 50);
  CHECK(full.rows() == dd.rows());

  // Spot-check a mid-trace row across every column group.
  const Eigen::Index r = full.rows() / 2;
  std::size_t flat = 0;
  for (const auto& cyc : unit.cycles) {
    for (const auto& s : cyc.samples) {
      if (static_cast<Eigen::Index>(flat) == r) {
        CHECK(full.values(r, 0) == s.w.alt);
        CHECK(full.values(r, 1) == s.w.mach);
        CHECK(full.values(r, 2) == s.w.tra);
        CHECK(full.values(r, 3) == s.w.t2);
        for (int i = 0; i < engine::kNumSensors; ++i) {
          CHECK(full.values(r, 4 + i) == s.sensors[i]);
          CHECK(full.values(r, 20 + i) == trace.xhat_s[flat][i]);
        }
        for (int i = 0; i < engine::kNumVirtual; ++i) {
          CHECK(full.values(r, 36 + i) == trace.xhat_v[flat][i]);
        }
        const auto th = trace.theta_hat[flat].as_array();
        for (int i = 0; i < 3; ++i) {
          CHECK(full.values(r, 47 + i) == th[static_cast<std::size_t>(i)]);
        }
        CHECK(full.rul[r] == static_cast<double>(cyc.rul_label));
        CHECK(full.unit[static_cast<std::size_t>(r)] == unit.unit_id);
        CHECK(full.cycle[static_cast<std::size_t>(r)] == cyc.cycle_index);
      }
      ++flat;
    }
  }

  // Missing or misaligned traces are named errors.
  try {
    features::assemble_variant(unit, nullptr, FeatureVariant::PlusXsHat);
    FAIL("expected an error about the missing trace");
  } catch (const phm::ConfigError& e) {
    CHECK(std::string(e.what()).find(std::to_string(unit.unit_id)) !=
          std::string::npos);
  }
  calib::CalibratedTrace short_trace = trace;
  short_trace.theta_hat.pop_back();
  short_trace.xhat_s.pop_back();
  short_trace.xhat_v.pop_back();
  CHECK_THROWS_AS(
      features::assemble_variant(unit, &short_trace, FeatureVariant::PlusXsHat),
      phm::ConfigError);
}

TEST_CASE("fleet assembly concatenates units in order") {
  const auto& cus = calibrated_units();
  std::vector<fleet::UnitRecord> units = {cus[0].unit, cus[1].unit};
  std::vector<calib::CalibratedTrace> traces = {cus[0].trace, cus[1].trace};

  auto m = features::assemble_fleet(units, traces, FeatureVariant::PlusXvHat);
  CHECK(m.values.cols() == 47);
  CHECK(m.rows() == static_cast<Eigen::Index>(units[0].sample_count() +
                                              units[1].sample_count()));
  CHECK(m.unit.front() == units[0].unit_id);
  CHECK(m.unit.back() == units[1].unit_id);

  // DataDriven works without traces.
  auto dd = features::assemble_fleet(units, {}, FeatureVariant::DataDriven);
  CHECK(dd.values.cols() == 20);

  CHECK_THROWS_AS(features::assemble_fleet(units, {}, FeatureVariant::PlusXsHat),
                  phm::ConfigError);
  CHECK_THROWS_AS(
      features::assemble_fleet({}, {}, FeatureVariant::DataDriven),
      phm::ConfigError);
}

TEST_CASE("sliding windows: counts, contents, boundaries, skipping") {
  // One unit with 100 rows: 51 windows of length 50.
  auto one = synthetic_matrix(std::vector<int>(100, 7));
  auto t = features::sliding_windows(one, 50, 1);
  CHECK(t.size() == 51);
  // Window 2 covers rows 2..51 (1-based), i.e. row indices 1..50.
  CHECK(t.windows[1](0, 0) == one.values(1, 0));
  CHECK(t.windows[1](49, 19) == one.values(50, 19));
  CHECK(t.rul[1] == one.rul[50]);
  CHECK(t.rul[50] == one.rul[99]);

  // Two units of 60 rows each: 11 windows per unit, none spanning the join.
  std::vector<int> two_units(120, 1);
  std::fill(two_units.begin() + 60, two_units.end(), 2);
  auto both = synthetic_matrix(two_units);
  auto t2 = features::sliding_windows(both, 50, 1);
  CHECK(t2.size() == 22);
  for (std::size_t k = 0; k < t2.size(); ++k) {
    const double first = t2.windows[k](0, 0);
    const double last = t2.windows[k](49, 0);
    // Rows encode their index * 1000; a window must stay inside one unit.
    const auto first_row = static_cast<int>(first / 1000.0);
    const auto last_row = static_cast<int>(last / 1000.0);
    CHECK(last_row - first_row == 49);
    CHECK(both.unit[static_cast<std::size_t>(first_row)] ==
          both.unit[static_cast<std::size_t>(last_row)]);
    CHECK(t2.unit[k] == both.unit[static_cast<std::size_t>(last_row)]);
  }

  // A unit shorter than the window is skipped entirely.
  std::vector<int> with_short(100, 1);
  std::fill(with_short.begin() + 70, with_short.end(), 2);  // unit 2 has 30
  auto mixed = synthetic_matrix(with_short);
  auto t3 = features::sliding_windows(mixed, 50, 1);
  CHECK(t3.size() == 21);  // 70 - 50 + 1
  for (std::size_t k = 0; k < t3.size(); ++k) CHECK(t3.unit[k] == 1);

  // Stride 2 halves the window count.
  auto t4 = features::sliding_windows(one, 50, 2);
  CHECK(t4.size() == 26);  // offsets 0,2,...,50

  CHECK_THROWS_AS(features::sliding_windows(one, 0, 1), phm::ConfigError);
  CHECK_THROWS_AS(features::sliding_windows(one, 50, 0), phm::ConfigError);
}

TEST_CASE("validation split is stratified, disjoint, and seeded") {
  std::vector<int> unit_ids;
  for (int u = 1; u <= 10; ++u) {
    for (int k = 0; k < 100; ++k) unit_ids.push_back(u);
  }
  auto s = features::split_validation(unit_ids, 0.10, 99);
  CHECK(s.val.size() == 100);
  CHECK(s.train.size() == 900);

  std::set<Eigen::Index> seen;
  for (auto i : s.train) seen.insert(i);
  for (auto i : s.val) {
    CHECK(seen.count(i) == 0);
    seen.insert(i);
  }
  CHECK(seen.size() == 1000);

  // Exactly 10 validation rows from every unit.
  std::vector<int> per_unit(11, 0);
  for (auto i : s.val) per_unit[static_cast<std::size_t>(unit_ids[static_cast<std::size_t>(i)])]++;
  for (int u = 1; u <= 10; ++u) CHECK(per_unit[static_cast<std::size_t>(u)] == 10);

  auto s2 = features::split_validation(unit_ids, 0.10, 99);
  CHECK(s2.val == s.val);
  CHECK(s2.train == s.train);
  auto s3 = features::split_validation(unit_ids, 0.10, 100);
  CHECK(s3.val != s.val);

  CHECK_THROWS_AS(features::split_validation(unit_ids, 0.0, 1), phm::ConfigError);
  CHECK_THROWS_AS(features::split_validation(unit_ids, 0.5, 1), phm::ConfigError);
}

TEST_CASE("gathered datasets carry the right rows and targets") {
  auto m = synthetic_matrix(std::vector<int>(60, 3));
  auto d = features::gather_dense(m, {0, 5, 59});
  CHECK(d.x.rows() == 20);
  CHECK(d.x.cols() == 3);
  CHECK(d.x(4, 1) == m.values(5, 4));
  CHECK(d.y[2] == m.rul[59]);
  CHECK_THROWS_AS(features::gather_dense(m, {60}), phm::ConfigError);

  auto t = features::sliding_windows(m, 50, 1);
  auto wd = features::gather_windows(t, {0, 10});
  CHECK(wd.x.rows() == 20);
  CHECK(wd.x.cols() == 50 * 2);
  // Packed layout: column time*B + sample.
  CHECK(wd.x(0, 0) == t.windows[0](0, 0));
  CHECK(wd.x(0, 1) == t.windows[10](0, 0));
  CHECK(wd.x(19, 49 * 2 + 1) == t.windows[10](49, 19));
  CHECK(wd.y[1] == t.rul[10]);
  CHECK_THROWS_AS(features::gather_windows(t, {999}), phm::ConfigError);
}

TEST_CASE("feature matrices round-trip through CSV with their sidecar") {
  const auto& cu = calibrated_units()[0];
  auto m = features::assemble_variant(cu.unit, &cu.trace,
                                      FeatureVariant::FullHybrid);
  auto p = features::fit_normalizer(m.values, "dev");

  const std::string base = "/tmp/phm_feature_roundtrip";
  features::write_feature_matrix(base, m, &p, 4242);

  features::NormalizerParams p2;
  std::uint64_t seed = 0;
  auto m2 = features::read_feature_matrix(base, &p2, &seed);
  CHECK(seed == 4242);
  CHECK(m2.variant == m.variant);
  CHECK(m2.column_names == m.column_names);
  REQUIRE(m2.rows() == m.rows());
  CHECK((m2.values - m.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m2.rul - m.rul).cwiseAbs().maxCoeff() == 0.0);
  CHECK(m2.unit == m.unit);
  CHECK(m2.cycle == m.cycle);
  CHECK((p2.lo - p.lo).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p2.hi - p.hi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p2.degenerate == p.degenerate);
  CHECK(p2.provenance == "dev");

  // Corrupt sidecar JSON is rejected.
  {
    std::ofstream bad(base + ".json", std::ios::trunc);
    bad << "{ not json";
  }
  CHECK_THROWS_AS(features::read_feature_matrix(base, nullptr, nullptr),
                  phm::IoError);
  std::remove((base + ".csv").c_str());
  std::remove((base + ".json").c_str());
}

TEST_CASE("normalized matrices keep their labels") {
  auto m = synthetic_matrix(std::vector<int>(30, 4));
  auto p = features::fit_normalizer(m.values);
  auto n = features::normalized(m, p);
  CHECK(n.rows() == m.rows());
  CHECK(n.unit == m.unit);
  CHECK(n.cycle == m.cycle);
  CHECK((n.rul - m.rul).cwiseAbs().maxCoeff() == 0.0);
  CHECK(n.values.maxCoeff() <= 1.0 + 1e-12);
  CHECK(n.values.minCoeff() >= -1.0 - 1e-12);
  CHECK((features::invert_normalizer(n.values, p) - m.values)
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

}  // TEST_SUITE
