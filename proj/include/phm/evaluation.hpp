#pragma once

// Prognostic metrics: RMSE, the asymmetric exponential score, per-cycle
// prediction aggregation with uncertainty bands, prediction horizons, and a
// histogram-based normalized mutual-information feature ranking.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phm::eval {

// Per-sample predictions with their targets and (unit, cycle) labels.
struct PredictionSet {
  std::vector<double> y_hat;
  std::vector<double> y;
  std::vector<int> unit;
  std::vector<int> cycle;

  std::size_t size() const { return y_hat.size(); }
  // Equal lengths, non-empty, finite values.
  void validate() const;
};

double rmse(const PredictionSet& pred);

// Asymmetric exponential score, summed over samples (not averaged).
// Under-estimation (y_hat < y) uses alpha = 1/13; over-estimation 1/10, so
// predicting a unit healthier than it is costs more at equal error size.
double nasa_score(const PredictionSet& pred);

// One unit's predictions aggregated per cycle: mean with a [min, max] band,
// plus the per-cycle true RUL and sample counts.
struct CycleSeries {
  int unit_id = 0;
  std::vector<int> cycle;       // ascending, one entry per evaluated cycle
  std::vector<double> mean;     // mean prediction over the cycle's samples
  std::vector<double> lo;       // min prediction in the cycle
  std::vector<double> hi;       // max prediction
  std::vector<double> rul;      // true RUL of the cycle
  std::vector<int> count;       // samples aggregated into the cycle

  std::size_t size() const { return cycle.size(); }
};

// Groups by (unit, cycle); units ordered by first appearance, cycles ascending.
std::vector<CycleSeries> per_cycle_average(const PredictionSet& pred);

struct HorizonResult {
  int unit_id = 0;
  int t_eol = 0;
  int first_reliable_cycle = 0;  // smallest cycle from which every later
                                 // evaluated cycle keeps |error| <= threshold
  double horizon = 0.0;          // t_eol - first_reliable_cycle, 0 if none
  bool qualified = false;        // false when no suffix passes the test
};

// Scans the per-cycle mean error |rul - mean| (or the band extremes when
// use_band is set) for the earliest cycle whose entire future stays within
// the threshold.
HorizonResult prediction_horizon(const CycleSeries& series, int t_eol,
                                 double threshold = 5.0,
                                 bool use_band = false);

struct MiEntry {
  std::string name;
  double nmi = 0.0;
};

// Ranks columns of `features` by normalized mutual information with y:
// equal-width histograms with n_bins over each variable's [min, max] span,
// plug-in MI from the joint histogram, normalized by min(H(feature), H(y)).
// Constant columns score 0. Result is sorted descending (ties keep column
// order). Requires at least 1000 samples.
std::vector<MiEntry> mutual_information_ranking(
    const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
    const std::vector<std::string>& names, int n_bins = 32);

struct PrognosticReport {
  double rmse_value = 0.0;
  double s_score = 0.0;          // raw sum
  double s_score_scaled = 0.0;   // s_score * 1e-5, the table-ready figure
  double horizon_threshold = 5.0;
  std::vector<CycleSeries> cycles;
  std::vector<HorizonResult> horizons;
  double fleet_average_horizon = 0.0;
  std::map<std::string, std::string> metadata;
};

// Full evaluation of one prediction set; t_eol_by_unit supplies each unit's
// end-of-life cycle for the horizon scan.
PrognosticReport evaluate_predictions(const PredictionSet& pred,
                                      const std::map<int, int>& t_eol_by_unit,
                                      double horizon_threshold = 5.0);

void write_report_json(const std::string& path, const PrognosticReport& report);
PrognosticReport read_report_json(const std::string& path);

// Plot-ready per-cycle table: unit, cycle, rul, mean, min, max.
void write_cycle_csv(const std::string& path, const PrognosticReport& report);

}  // namespace phm::eval
