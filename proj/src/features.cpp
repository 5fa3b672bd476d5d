#include "phm/features.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "phm/errors.hpp"
#include "phm/io/csv.hpp"
#include "phm/random.hpp"

namespace phm::features {

namespace {

constexpr int kW = 4;
constexpr int kXs = engine::kNumSensors;
constexpr int kXv = engine::kNumVirtual;
constexpr int kTheta = 3;

const char* kThetaNames[kTheta] = {"theta_hat_hpt_eff_mod",
                                   "theta_hat_lpt_eff_mod",
                                   "theta_hat_lpt_flow_mod"};

int variant_rank(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::DataDriven: return 0;
    case FeatureVariant::PlusXsHat: return 1;
    case FeatureVariant::PlusXvHat: return 2;
    case FeatureVariant::FullHybrid: return 3;
  }
  throw ConfigError("unknown feature variant");
}

}  // namespace

int variant_columns(FeatureVariant v) {
  switch (variant_rank(v)) {
    case 0: return kW + kXs;                          // 20
    case 1: return kW + 2 * kXs;                      // 36
    case 2: return kW + 2 * kXs + kXv;                // 47
    default: return kW + 2 * kXs + kXv + kTheta;      // 50
  }
}

std::vector<std::string> variant_column_names(FeatureVariant v) {
  std::vector<std::string> names = {"alt", "mach", "tra", "t2"};
  for (int i = 0; i < kXs; ++i) {
    names.push_back(engine::kSensorNames[static_cast<std::size_t>(i)]);
  }
  const int rank = variant_rank(v);
  if (rank >= 1) {
    for (int i = 0; i < kXs; ++i) {
      names.push_back(std::string("xhat_s_") +
                      engine::kSensorNames[static_cast<std::size_t>(i)]);
    }
  }
  if (rank >= 2) {
    for (int i = 0; i < kXv; ++i) {
      names.push_back(std::string("xhat_v_") +
                      engine::kVirtualNames[static_cast<std::size_t>(i)]);
    }
  }
  if (rank >= 3) {
    for (const char* n : kThetaNames) names.push_back(n);
  }
  return names;
}

std::string to_string(FeatureVariant v) {
  switch (variant_rank(v)) {
    case 0: return "data_driven";
    case 1: return "plus_xs_hat";
    case 2: return "plus_xv_hat";
    default: return "full_hybrid";
  }
}

FeatureVariant variant_from_string(const std::string& s) {
  if (s == "data_driven") return FeatureVariant::DataDriven;
  if (s == "plus_xs_hat") return FeatureVariant::PlusXsHat;
  if (s == "plus_xv_hat") return FeatureVariant::PlusXvHat;
  if (s == "full_hybrid") return FeatureVariant::FullHybrid;
  throw ConfigError("unknown feature variant: " + s);
}

void EnhancedFeatureMatrix::validate() const {
  const auto n = values.rows();
  if (values.cols() != variant_columns(variant)) {
    throw ConfigError("feature matrix width does not match its variant");
  }
  if (static_cast<Eigen::Index>(column_names.size()) != values.cols()) {
    throw ConfigError("column name list out of step with the feature matrix");
  }
  if (rul.size() != n || static_cast<Eigen::Index>(unit.size()) != n ||
      static_cast<Eigen::Index>(cycle.size()) != n) {
    throw ConfigError("feature labels out of step with the feature matrix");
  }
  if (!values.allFinite()) {
    throw NumericError("feature matrix contains non-finite values");
  }
}

NormalizerParams fit_normalizer(const Eigen::MatrixXd& dev_values,
                                const std::string& provenance) {
  if (dev_values.rows() < 1 || dev_values.cols() < 1) {
    throw ConfigError("cannot fit a normalizer on an empty matrix");
  }
  NormalizerParams p;
  p.lo = dev_values.colwise().minCoeff();
  p.hi = dev_values.colwise().maxCoeff();
  p.degenerate.assign(static_cast<std::size_t>(dev_values.cols()), 0);
  for (Eigen::Index c = 0; c < dev_values.cols(); ++c) {
    if (!(p.hi[c] > p.lo[c])) p.degenerate[static_cast<std::size_t>(c)] = 1;
  }
  p.provenance = provenance;
  return p;
}

Eigen::MatrixXd apply_normalizer(const Eigen::MatrixXd& values,
                                 const NormalizerParams& p) {
  if (values.cols() != p.columns()) {
    throw ConfigError("normalizer fitted on a different column count");
  }
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (p.degenerate[static_cast<std::size_t>(c)]) {
      out.col(c).setZero();
    } else {
      const double span = p.hi[c] - p.lo[c];
      out.col(c) = 2.0 * (values.col(c).array() - p.lo[c]) / span - 1.0;
    }
  }
  return out;
}

Eigen::MatrixXd invert_normalizer(const Eigen::MatrixXd& normalized,
                                  const NormalizerParams& p) {
  if (normalized.cols() != p.columns()) {
    throw ConfigError("normalizer fitted on a different column count");
  }
  Eigen::MatrixXd out(normalized.rows(), normalized.cols());
  for (Eigen::Index c = 0; c < normalized.cols(); ++c) {
    if (p.degenerate[static_cast<std::size_t>(c)]) {
      out.col(c).setConstant(p.lo[c]);
    } else {
      const double span = p.hi[c] - p.lo[c];
      out.col(c) = p.lo[c] + 0.5 * (normalized.col(c).array() + 1.0) * span;
    }
  }
  return out;
}

EnhancedFeatureMatrix assemble_variant(const fleet::UnitRecord& unit,
                                       const calib::CalibratedTrace* trace,
                                       FeatureVariant variant) {
  const int rank = variant_rank(variant);
  if (rank >= 1) {
    if (trace == nullptr) {
      throw ConfigError("unit " + std::to_string(unit.unit_id) +
                        " needs a calibrated trace for variant " +
                        to_string(variant));
    }
    if (trace->size() != unit.sample_count()) {
      throw ConfigError("unit " + std::to_string(unit.unit_id) +
                        ": calibrated trace length does not match its samples");
    }
  }

  EnhancedFeatureMatrix m;
  m.variant = variant;
  m.column_names = variant_column_names(variant);
  const auto n = static_cast<Eigen::Index>(unit.sample_count());
  m.values.resize(n, variant_columns(variant));
  m.rul.resize(n);
  m.unit.reserve(static_cast<std::size_t>(n));
  m.cycle.reserve(static_cast<std::size_t>(n));

  Eigen::Index r = 0;
  std::size_t flat = 0;
  for (const fleet::FlightCycle& cyc : unit.cycles) {
    for (const fleet::Sample& s : cyc.samples) {
      Eigen::Index c = 0;
      m.values(r, c++) = s.w.alt;
      m.values(r, c++) = s.w.mach;
      m.values(r, c++) = s.w.tra;
      m.values(r, c++) = s.w.t2;
      for (int i = 0; i < kXs; ++i) m.values(r, c++) = s.sensors[i];
      if (rank >= 1) {
        for (int i = 0; i < kXs; ++i) m.values(r, c++) = trace->xhat_s[flat][i];
      }
      if (rank >= 2) {
        for (int i = 0; i < kXv; ++i) m.values(r, c++) = trace->xhat_v[flat][i];
      }
      if (rank >= 3) {
        const auto th = trace->theta_hat[flat].as_array();
        for (int i = 0; i < kTheta; ++i) m.values(r, c++) = th[static_cast<std::size_t>(i)];
      }
      m.rul[r] = static_cast<double>(cyc.rul_label);
      m.unit.push_back(unit.unit_id);
      m.cycle.push_back(cyc.cycle_index);
      ++r;
      ++flat;
    }
  }
  m.validate();
  return m;
}

EnhancedFeatureMatrix assemble_fleet(
    const std::vector<fleet::UnitRecord>& units,
    const std::vector<calib::CalibratedTrace>& traces, FeatureVariant variant) {
  if (units.empty()) throw ConfigError("cannot assemble features for no units");
  const int rank = variant_rank(variant);
  if (rank >= 1 && traces.size() != units.size()) {
    throw ConfigError("need one calibrated trace per unit for variant " +
                      to_string(variant));
  }

  std::vector<EnhancedFeatureMatrix> parts;
  parts.reserve(units.size());
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const calib::CalibratedTrace* trace =
        traces.empty() ? nullptr : &traces[i];
    parts.push_back(assemble_variant(units[i], trace, variant));
    total += parts.back().rows();
  }

  EnhancedFeatureMatrix m;
  m.variant = variant;
  m.column_names = parts.front().column_names;
  m.values.resize(total, variant_columns(variant));
  m.rul.resize(total);
  m.unit.reserve(static_cast<std::size_t>(total));
  m.cycle.reserve(static_cast<std::size_t>(total));
  Eigen::Index r = 0;
  for (const EnhancedFeatureMatrix& part : parts) {
    m.values.middleRows(r, part.rows()) = part.values;
    m.rul.segment(r, part.rows()) = part.rul;
    m.unit.insert(m.unit.end(), part.unit.begin(), part.unit.end());
    m.cycle.insert(m.cycle.end(), part.cycle.begin(), part.cycle.end());
    r += part.rows();
  }
  m.validate();
  return m;
}

EnhancedFeatureMatrix normalized(const EnhancedFeatureMatrix& m,
                                 const NormalizerParams& p) {
  EnhancedFeatureMatrix out = m;
  out.values = apply_normalizer(m.values, p);
  return out;
}

WindowTensor sliding_windows(const EnhancedFeatureMatrix& m, int n_tw,
                             int stride) {
  if (n_tw < 1) throw ConfigError("window length must be >= 1");
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  m.validate();

  WindowTensor t;
  t.n_tw = n_tw;
  const auto n = m.rows();
  Eigen::Index start = 0;
  std::vector<double> targets;
  while (start < n) {
    Eigen::Index end = start;
    while (end < n && m.unit[static_cast<std::size_t>(end)] ==
                          m.unit[static_cast<std::size_t>(start)]) {
      ++end;
    }
    const Eigen::Index len = end - start;
    if (len < n_tw) {
      std::clog << "sliding_windows: unit "
                << m.unit[static_cast<std::size_t>(start)] << " has " << len
                << " samples, shorter than the window length " << n_tw
                << "; skipped\n";
    } else {
      for (Eigen::Index off = 0; off + n_tw <= len; off += stride) {
        const Eigen::Index last = start + off + n_tw - 1;
        t.windows.push_back(m.values.middleRows(start + off, n_tw));
        targets.push_back(m.rul[last]);
        t.unit.push_back(m.unit[static_cast<std::size_t>(last)]);
        t.cycle.push_back(m.cycle[static_cast<std::size_t>(last)]);
      }
    }
    start = end;
  }
  t.rul = Eigen::Map<Eigen::VectorXd>(targets.data(),
                                      static_cast<Eigen::Index>(targets.size()));
  return t;
}

SplitIndices split_validation(const std::vector<int>& unit_ids, double frac,
                              std::uint64_t seed) {
  if (!(frac > 0.0) || !(frac < 0.5)) {
    throw ConfigError("validation fraction must lie in (0, 0.5)");
  }
  // Group row indices per unit, preserving first-appearance order of units.
  std::vector<int> order_of_units;
  std::vector<std::vector<Eigen::Index>> groups;
  for (std::size_t r = 0; r < unit_ids.size(); ++r) {
    const int u = unit_ids[r];
    std::size_t g = 0;
    for (; g < order_of_units.size(); ++g) {
      if (order_of_units[g] == u) break;
    }
    if (g == order_of_units.size()) {
      order_of_units.push_back(u);
      groups.emplace_back();
    }
    groups[g].push_back(static_cast<Eigen::Index>(r));
  }

  SplitIndices out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto rows = groups[g];
    auto rng = make_engine(derive_seed(
        seed, {seed_tag::kSplit, static_cast<std::uint64_t>(
                                     static_cast<std::int64_t>(order_of_units[g]))}));
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::lround(frac * static_cast<double>(rows.size())));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_val ? out.val : out.train).push_back(rows[i]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

nn::Dataset gather_dense(const EnhancedFeatureMatrix& m,
                         const std::vector<Eigen::Index>& rows) {
  nn::Dataset d;
  d.x.resize(m.values.cols(), static_cast<Eigen::Index>(rows.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = rows[i];
    if (r < 0 || r >= m.rows()) throw ConfigError("row index out of range");
    d.x.col(static_cast<Eigen::Index>(i)) = m.values.row(r).transpose();
    d.y[static_cast<Eigen::Index>(i)] = m.rul[r];
  }
  return d;
}

nn::Dataset gather_windows(const WindowTensor& t,
                           const std::vector<Eigen::Index>& picks) {
  std::vector<Eigen::MatrixXd> chosen;
  chosen.reserve(picks.size());
  nn::Dataset d;
  d.y.resize(static_cast<Eigen::Index>(picks.size()));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const Eigen::Index k = picks[i];
    if (k < 0 || k >= static_cast<Eigen::Index>(t.size())) {
      throw ConfigError("window index out of range");
    }
    chosen.push_back(t.windows[static_cast<std::size_t>(k)]);
    d.y[static_cast<Eigen::Index>(i)] = t.rul[k];
  }
  d.x = nn::pack_windows(chosen);
  return d;
}

void write_feature_matrix(const std::string& base_path,
                          const EnhancedFeatureMatrix& m,
                          const NormalizerParams* normalizer,
                          std::uint64_t seed) {
  m.validate();
  io::CsvTable table;
  table.columns = {"unit", "cycle", "rul"};
  for (const std::string& n : m.column_names) table.columns.push_back(n);
  table.rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    row.reserve(table.columns.size());
    row.push_back(static_cast<double>(m.unit[static_cast<std::size_t>(r)]));
    row.push_back(static_cast<double>(m.cycle[static_cast<std::size_t>(r)]));
    row.push_back(m.rul[r]);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      row.push_back(m.values(r, c));
    }
    table.rows.push_back(std::move(row));
  }
  io::write_csv(base_path + ".csv", table);

  nlohmann::json j;
  j["variant"] = to_string(m.variant);
  j["columns"] = m.column_names;
  j["seed"] = seed;
  if (normalizer != nullptr) {
    nlohmann::json nj;
    nj["provenance"] = normalizer->provenance;
    nj["lo"] = std::vector<double>(normalizer->lo.data(),
                                   normalizer->lo.data() + normalizer->lo.size());
    nj["hi"] = std::vector<double>(normalizer->hi.data(),
                                   normalizer->hi.data() + normalizer->hi.size());
    nj["degenerate"] = normalizer->degenerate;
    j["normalizer"] = nj;
  }
  std::ofstream out(base_path + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot open " + base_path + ".json for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + base_path + ".json");
}

EnhancedFeatureMatrix read_feature_matrix(const std::string& base_path,
                                          NormalizerParams* normalizer_out,
                                          std::uint64_t* seed_out) {
  std::ifstream in(base_path + ".json");
  if (!in) throw IoError("cannot open " + base_path + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt feature sidecar: ") + e.what());
  }

  EnhancedFeatureMatrix m;
  try {
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.column_names = j.at("columns").get<std::vector<std::string>>();
    if (seed_out != nullptr) *seed_out = j.at("seed").get<std::uint64_t>();
    if (normalizer_out != nullptr) {
      if (j.contains("normalizer")) {
        const auto& nj = j.at("normalizer");
        const auto lo = nj.at("lo").get<std::vector<double>>();
        const auto hi = nj.at("hi").get<std::vector<double>>();
        normalizer_out->lo =
            Eigen::Map<const Eigen::VectorXd>(lo.data(),
                                              static_cast<Eigen::Index>(lo.size()));
        normalizer_out->hi =
            Eigen::Map<const Eigen::VectorXd>(hi.data(),
                                              static_cast<Eigen::Index>(hi.size()));
        normalizer_out->degenerate =
            nj.at("degenerate").get<std::vector<std::uint8_t>>();
        normalizer_out->provenance = nj.at("provenance").get<std::string>();
      } else {
        *normalizer_out = NormalizerParams{};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("feature sidecar missing fields: ") + e.what());
  }
  if (m.column_names !=
      variant_column_names(m.variant)) {
    throw IoError("feature sidecar column order does not match its variant");
  }

  const io::CsvTable table = io::read_csv(base_path + ".csv");
  std::vector<std::string> expect = {"unit", "cycle", "rul"};
  for (const std::string& n : m.column_names) expect.push_back(n);
  if (table.columns != expect) {
    throw IoError("feature CSV header does not match the sidecar");
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  m.values.resize(n, variant_columns(m.variant));
  m.rul.resize(n);
  m.unit.reserve(static_cast<std::size_t>(n));
  m.cycle.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    m.unit.push_back(static_cast<int>(row[0]));
    m.cycle.push_back(static_cast<int>(row[1]));
    m.rul[r] = row[2];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      m.values(r, c) = row[static_cast<std::size_t>(c) + 3];
    }
  }
  m.validate();
  return m;
}

}  // namespace phm::features
