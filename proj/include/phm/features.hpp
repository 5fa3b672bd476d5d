#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phm/engine_model.hpp"
#include "phm/fleet.hpp"
#include "phm/nn.hpp"
#include "phm/ukf.hpp"

namespace phm::features {

// Input assembly for the remaining-life regressors: pick a feature variant,
// concatenate the per-sample columns in a fixed order, normalize with
// development-data statistics, and window per unit.

// Nested variants; each adds columns to the previous one.
//   DataDriven  w | x_s                        4 + 16           = 20
//   PlusXsHat   w | x_s | xhat_s               4 + 16 + 16      = 36
//   PlusXvHat   w | x_s | xhat_s | xhat_v      4 + 16 + 16 + 11 = 47
//   FullHybrid  w | x_s | xhat_s | xhat_v | th 4 + 16 + 16 + 11 + 3 = 50
enum class FeatureVariant { DataDriven, PlusXsHat, PlusXvHat, FullHybrid };

int variant_columns(FeatureVariant v);
std::vector<std::string> variant_column_names(FeatureVariant v);
std::string to_string(FeatureVariant v);
FeatureVariant variant_from_string(const std::string& s);

// Per-column affine map to [-1, 1]; fitted on development data only and
// carried with a provenance tag so downstream stages can assert the fit
// never saw test rows.
struct NormalizerParams {
  Eigen::VectorXd lo, hi;
  std::vector<std::uint8_t> degenerate;  // 1 where hi == lo
  std::string provenance;                // e.g. "dev"

  Eigen::Index columns() const { return lo.size(); }
};

// Sample-major feature block for one or more units: values(r, c) is feature c
// of sample r, with aligned targets and (unit, cycle) labels per row.
struct EnhancedFeatureMatrix {
  FeatureVariant variant = FeatureVariant::DataDriven;
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;  // samples x columns
  Eigen::VectorXd rul;     // per row, cycle-level remaining life
  std::vector<int> unit;   // per row
  std::vector<int> cycle;  // per row

  Eigen::Index rows() const { return values.rows(); }
  void validate() const;  // throws ConfigError on inconsistent shapes
};

// Stride-1 (by default) sliding windows that never cross unit boundaries;
// each window's target is the RUL of its last row.
struct WindowTensor {
  int n_tw = 0;
  std::vector<Eigen::MatrixXd> windows;  // each n_tw x columns
  Eigen::VectorXd rul;                   // per window
  std::vector<int> unit;                 // per window
  std::vector<int> cycle;                // cycle of the window's last row

  std::size_t size() const { return windows.size(); }
};

NormalizerParams fit_normalizer(const Eigen::MatrixXd& dev_values,
                                const std::string& provenance = "dev");

// x' = 2 (x - lo) / (hi - lo) - 1; values outside the fitted range stay
// un-clipped, degenerate columns map to 0.
Eigen::MatrixXd apply_normalizer(const Eigen::MatrixXd& values,
                                 const NormalizerParams& p);

// Inverse of apply_normalizer; degenerate columns recover their fitted value.
Eigen::MatrixXd invert_normalizer(const Eigen::MatrixXd& normalized,
                                  const NormalizerParams& p);

// Per-unit assembly. Variants beyond DataDriven need the unit's calibrated
// trace; pass nullptr otherwise. Throws ConfigError naming the unit when the
// trace is missing or misaligned.
EnhancedFeatureMatrix assemble_variant(const fleet::UnitRecord& unit,
                                       const calib::CalibratedTrace* trace,
                                       FeatureVariant variant);

// Multi-unit assembly preserving unit order; traces[i] pairs with units[i]
// (the whole vector may be empty for DataDriven).
EnhancedFeatureMatrix assemble_fleet(
    const std::vector<fleet::UnitRecord>& units,
    const std::vector<calib::CalibratedTrace>& traces, FeatureVariant variant);

// Replace the feature block with its normalized image (labels untouched).
EnhancedFeatureMatrix normalized(const EnhancedFeatureMatrix& m,
                                 const NormalizerParams& p);

// Units shorter than n_tw are skipped with a note on stderr.
WindowTensor sliding_windows(const EnhancedFeatureMatrix& m, int n_tw = 50,
                             int stride = 1);

// Unit-stratified sample-level split: per unit, round(frac * n_u) rows go to
// validation, drawn from a seeded shuffle. Returned indices are sorted.
struct SplitIndices {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> val;
};
SplitIndices split_validation(const std::vector<int>& unit_ids, double frac,
                              std::uint64_t seed);

// Materialize rows / windows into nnet datasets (dense features x B, or the
// packed conv layout).
nn::Dataset gather_dense(const EnhancedFeatureMatrix& m,
                         const std::vector<Eigen::Index>& rows);
nn::Dataset gather_windows(const WindowTensor& t,
                           const std::vector<Eigen::Index>& picks);

// CSV persistence with a JSON sidecar (variant, column order, normalizer,
// seed) at <base>.csv / <base>.json.
void write_feature_matrix(const std::string& base_path,
                          const EnhancedFeatureMatrix& m,
                          const NormalizerParams* normalizer,
                          std::uint64_t seed);
EnhancedFeatureMatrix read_feature_matrix(const std::string& base_path,
                                          NormalizerParams* normalizer_out,
                                          std::uint64_t* seed_out);

}  // namespace phm::features
