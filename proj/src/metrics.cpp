#include "phm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "phm/errors.hpp"
#include "phm/io/csv.hpp"

namespace phm::eval {

namespace {

using nlohmann::json;

void require_nonempty(const PredictionSet& pred, const char* op) {
  if (pred.size() == 0) {
    throw DomainError(std::string(op) + " needs at least one prediction");
  }
}

}  // namespace

void PredictionSet::validate() const {
  if (y.size() != y_hat.size() || unit.size() != y_hat.size() ||
      cycle.size() != y_hat.size()) {
    throw ConfigError("prediction set fields must have equal lengths");
  }
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    if (!std::isfinite(y_hat[i]) || !std::isfinite(y[i])) {
      throw NumericError("prediction set contains a non-finite value at row " +
                         std::to_string(i));
    }
  }
}

double rmse(const PredictionSet& pred) {
  require_nonempty(pred, "rmse");
  pred.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.y[i] - pred.y_hat[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double nasa_score(const PredictionSet& pred) {
  require_nonempty(pred, "nasa_score");
  pred.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double delta = pred.y[i] - pred.y_hat[i];
    const double alpha = delta > 0.0 ? 1.0 / 13.0 : 1.0 / 10.0;
    s += std::exp(alpha * std::abs(delta));
  }
  return s;
}

std::vector<CycleSeries> per_cycle_average(const PredictionSet& pred) {
  require_nonempty(pred, "per_cycle_average");
  pred.validate();

  // Units in first-appearance order; cycles ascending within each unit.
  std::vector<int> unit_order;
  std::map<int, std::map<int, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(pred.unit[i]);
    if (fresh) unit_order.push_back(pred.unit[i]);
    (*it).second[pred.cycle[i]].push_back(i);
  }

  std::vector<CycleSeries> out;
  out.reserve(unit_order.size());
  for (int u : unit_order) {
    CycleSeries s;
    s.unit_id = u;
    for (const auto& [c, rows] : groups[u]) {
      double sum = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t i : rows) {
        sum += pred.y_hat[i];
        lo = std::min(lo, pred.y_hat[i]);
        hi = std::max(hi, pred.y_hat[i]);
      }
      s.cycle.push_back(c);
      s.mean.push_back(sum / static_cast<double>(rows.size()));
      s.lo.push_back(lo);
      s.hi.push_back(hi);
      s.rul.push_back(pred.y[rows.front()]);
      s.count.push_back(static_cast<int>(rows.size()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

HorizonResult prediction_horizon(const CycleSeries& series, int t_eol,
                                 double threshold, bool use_band) {
  if (series.size() == 0) {
    throw DomainError("prediction_horizon needs a non-empty cycle series");
  }
  if (t_eol < 1) throw ConfigError("t_eol must be positive");
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");

  HorizonResult r;
  r.unit_id = series.unit_id;
  r.t_eol = t_eol;

  const auto within = [&](std::size_t k) {
    if (use_band) {
      return std::abs(series.rul[k] - series.lo[k]) <= threshold &&
             std::abs(series.rul[k] - series.hi[k]) <= threshold;
    }
    return std::abs(series.rul[k] - series.mean[k]) <= threshold;
  };

  // Walk backwards: the qualifying prefix of the reversed series is the
  // longest suffix where every cycle stays within the threshold.
  std::ptrdiff_t first = -1;
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(series.size()) - 1;
       k >= 0; --k) {
    if (!within(static_cast<std::size_t>(k))) break;
    first = k;
  }
  if (first < 0) {
    r.qualified = false;
    r.horizon = 0.0;
    return r;
  }
  r.qualified = true;
  r.first_reliable_cycle = series.cycle[static_cast<std::size_t>(first)];
  r.horizon = static_cast<double>(t_eol - r.first_reliable_cycle);
  return r;
}

namespace {

// Equal-width bin index over [lo, hi]; the top edge folds into the last bin.
int bin_of(double v, double lo, double hi, int n_bins) {
  if (!(hi > lo)) return 0;
  const double u = (v - lo) / (hi - lo);
  auto b = static_cast<int>(u * n_bins);
  return std::clamp(b, 0, n_bins - 1);
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

}  // namespace

std::vector<MiEntry> mutual_information_ranking(
    const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
    const std::vector<std::string>& names, int n_bins) {
  const auto n = features.rows();
  const auto d = features.cols();
  if (n < 1000) {
    throw ConfigError("mutual information ranking needs at least 1000 samples, got " +
                      std::to_string(n));
  }
  if (y.size() != n) throw ConfigError("target length must match feature rows");
  if (static_cast<Eigen::Index>(names.size()) != d) {
    throw ConfigError("need one name per feature column");
  }
  if (n_bins < 2) throw ConfigError("n_bins must be at least 2");

  const double y_lo = y.minCoeff();
  const double y_hi = y.maxCoeff();
  std::vector<int> y_bin(static_cast<std::size_t>(n));
  std::vector<double> py(static_cast<std::size_t>(n_bins), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    y_bin[static_cast<std::size_t>(i)] = bin_of(y[i], y_lo, y_hi, n_bins);
    py[static_cast<std::size_t>(y_bin[static_cast<std::size_t>(i)])] += 1.0;
  }
  for (auto& q : py) q /= static_cast<double>(n);
  const double hy = entropy(py);

  std::vector<MiEntry> out(static_cast<std::size_t>(d));
  for (Eigen::Index c = 0; c < d; ++c) {
    out[static_cast<std::size_t>(c)].name = names[static_cast<std::size_t>(c)];
    const double f_lo = features.col(c).minCoeff();
    const double f_hi = features.col(c).maxCoeff();
    if (!(f_hi > f_lo) || hy <= 0.0) {
      out[static_cast<std::size_t>(c)].nmi = 0.0;  // constant by convention
      continue;
    }
    std::vector<double> pf(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> joint(static_cast<std::size_t>(n_bins * n_bins), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int bf = bin_of(features(i, c), f_lo, f_hi, n_bins);
      pf[static_cast<std::size_t>(bf)] += 1.0;
      joint[static_cast<std::size_t>(bf * n_bins +
                                     y_bin[static_cast<std::size_t>(i)])] += 1.0;
    }
    for (auto& q : pf) q /= static_cast<double>(n);
    double mi = 0.0;
    for (int bf = 0; bf < n_bins; ++bf) {
      for (int by = 0; by < n_bins; ++by) {
        const double pj =
            joint[static_cast<std::size_t>(bf * n_bins + by)] /
            static_cast<double>(n);
        if (pj > 0.0) {
          mi += pj * std::log(pj / (pf[static_cast<std::size_t>(bf)] *
                                    py[static_cast<std::size_t>(by)]));
        }
      }
    }
    const double hf = entropy(pf);
    const double denom = std::min(hf, hy);
    double nmi = denom > 0.0 ? mi / denom : 0.0;
    nmi = std::clamp(nmi, 0.0, 1.0);  // guard plug-in rounding at the 1 edge
    out[static_cast<std::size_t>(c)].nmi = nmi;
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const MiEntry& a, const MiEntry& b) {
                     return a.nmi > b.nmi;
                   });
  return out;
}

PrognosticReport evaluate_predictions(const PredictionSet& pred,
                                      const std::map<int, int>& t_eol_by_unit,
                                      double horizon_threshold) {
  PrognosticReport rep;
  rep.rmse_value = rmse(pred);
  rep.s_score = nasa_score(pred);
  rep.s_score_scaled = rep.s_score * 1e-5;
  rep.horizon_threshold = horizon_threshold;
  rep.cycles = per_cycle_average(pred);

  double horizon_sum = 0.0;
  for (const auto& s : rep.cycles) {
    auto it = t_eol_by_unit.find(s.unit_id);
    if (it == t_eol_by_unit.end()) {
      throw ConfigError("no end-of-life cycle supplied for unit " +
                        std::to_string(s.unit_id));
    }
    rep.horizons.push_back(
        prediction_horizon(s, it->second, horizon_threshold));
    horizon_sum += rep.horizons.back().horizon;
  }
  rep.fleet_average_horizon =
      rep.horizons.empty() ? 0.0
                           : horizon_sum / static_cast<double>(rep.horizons.size());
  return rep;
}

void write_report_json(const std::string& path,
                       const PrognosticReport& report) {
  json j;
  j["rmse"] = report.rmse_value;
  j["s_score"] = report.s_score;
  j["s_score_scaled"] = report.s_score_scaled;
  j["horizon_threshold"] = report.horizon_threshold;
  j["fleet_average_horizon"] = report.fleet_average_horizon;
  j["horizons"] = json::array();
  for (const auto& h : report.horizons) {
    j["horizons"].push_back({{"unit", h.unit_id},
                             {"t_eol", h.t_eol},
                             {"first_reliable_cycle", h.first_reliable_cycle},
                             {"horizon", h.horizon},
                             {"qualified", h.qualified}});
  }
  j["cycles"] = json::array();
  for (const auto& s : report.cycles) {
    j["cycles"].push_back({{"unit", s.unit_id},
                           {"cycle", s.cycle},
                           {"mean", s.mean},
                           {"min", s.lo},
                           {"max", s.hi},
                           {"rul", s.rul},
                           {"count", s.count}});
  }
  j["metadata"] = report.metadata;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report file for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing report file: " + path);
}

PrognosticReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed report file " + path + ": " + e.what());
  }
  try {
    PrognosticReport rep;
    rep.rmse_value = j.at("rmse").get<double>();
    rep.s_score = j.at("s_score").get<double>();
    rep.s_score_scaled = j.at("s_score_scaled").get<double>();
    rep.horizon_threshold = j.at("horizon_threshold").get<double>();
    rep.fleet_average_horizon = j.at("fleet_average_horizon").get<double>();
    for (const auto& h : j.at("horizons")) {
      HorizonResult r;
      r.unit_id = h.at("unit").get<int>();
      r.t_eol = h.at("t_eol").get<int>();
      r.first_reliable_cycle = h.at("first_reliable_cycle").get<int>();
      r.horizon = h.at("horizon").get<double>();
      r.qualified = h.at("qualified").get<bool>();
      rep.horizons.push_back(r);
    }
    for (const auto& c : j.at("cycles")) {
      CycleSeries s;
      s.unit_id = c.at("unit").get<int>();
      s.cycle = c.at("cycle").get<std::vector<int>>();
      s.mean = c.at("mean").get<std::vector<double>>();
      s.lo = c.at("min").get<std::vector<double>>();
      s.hi = c.at("max").get<std::vector<double>>();
      s.rul = c.at("rul").get<std::vector<double>>();
      s.count = c.at("count").get<std::vector<int>>();
      rep.cycles.push_back(std::move(s));
    }
    if (j.contains("metadata")) {
      rep.metadata =
          j.at("metadata").get<std::map<std::string, std::string>>();
    }
    return rep;
  } catch (const json::exception& e) {
    throw IoError("report file " + path + " is missing fields: " + e.what());
  }
}

void write_cycle_csv(const std::string& path, const PrognosticReport& report) {
  io::CsvTable t;
  t.columns = {"unit", "cycle", "rul", "mean", "min", "max"};
  for (const auto& s : report.cycles) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      t.rows.push_back({static_cast<double>(s.unit_id),
                        static_cast<double>(s.cycle[k]), s.rul[k], s.mean[k],
                        s.lo[k], s.hi[k]});
    }
  }
  io::write_csv(path, t);
}

}  // namespace phm::eval
