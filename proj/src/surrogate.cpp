#include "phm/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "phm/errors.hpp"
#include "phm/random.hpp"

namespace phm::surrogate {

namespace {

constexpr int kSensors = engine::kNumSensors;
constexpr int kMeanInputDim = 4;  // alt, mach, tra, t2
constexpr std::size_t kMinTuples = 1000;

Eigen::VectorXd input_vector(const engine::OperatingPoint& w,
                             const engine::SensorFrame& x_prev,
                             const engine::HealthState& theta) {
  Eigen::VectorXd v(kSurrogateInputDim);
  v[0] = w.alt;
  v[1] = w.mach;
  v[2] = w.tra;
  v[3] = w.t2;
  for (int i = 0; i < kSensors; ++i) v[4 + i] = x_prev[i];
  const auto th = theta.as_array();
  for (int i = 0; i < 3; ++i) v[4 + kSensors + i] = th[i];
  return v;
}

// Affine map to [-1, 1] over the fitted range; a flat range maps to 0.
double normalize_one(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return 0.0;
  return 2.0 * (x - lo) / span - 1.0;
}

double denormalize_one(double u, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  return lo + 0.5 * (u + 1.0) * span;
}

Eigen::VectorXd normalize_rows(const Eigen::MatrixXd& raw,
                               const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi,
                               Eigen::MatrixXd& out) {
  out.resize(raw.rows(), raw.cols());
  for (int r = 0; r < raw.rows(); ++r) {
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      out(r, c) = normalize_one(raw(r, c), lo[r], hi[r]);
    }
  }
  return lo;
}

}  // namespace

void FitStream::validate() const {
  if (w.size() != theta.size() || w.size() != x.size()) {
    throw ConfigError("fit stream fields must have equal lengths");
  }
}

FitStream stream_from_trace(const fleet::UnitRecord& unit,
                            const calib::CalibratedTrace& trace) {
  if (unit.sample_count() != trace.size()) {
    throw ConfigError("trace length does not match the unit's sample count");
  }
  FitStream out;
  out.w.reserve(trace.size());
  for (const fleet::FlightCycle& cycle : unit.cycles) {
    for (const fleet::Sample& s : cycle.samples) out.w.push_back(s.w);
  }
  out.theta = trace.theta_hat;
  out.x = trace.xhat_s;
  out.validate();
  return out;
}

SurrogateTrainConfig SurrogateTrainConfig::defaults() {
  SurrogateTrainConfig cfg;
  cfg.mean_train.batch_size = 512;
  cfg.mean_train.lr = 3e-3;
  cfg.mean_train.max_epochs = 40;
  cfg.mean_train.patience = 8;
  cfg.train.batch_size = 512;
  cfg.train.lr = 3e-3;
  cfg.train.max_epochs = 80;
  cfg.train.patience = 12;
  return cfg;
}

void SurrogateTrainConfig::validate() const {
  if (mean_hidden.empty() || hidden.empty()) {
    throw ConfigError("surrogate needs at least one hidden layer per stage");
  }
  for (int h : mean_hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  mean_train.validate();
  train.validate();
  if (!(val_fraction > 0.0) || val_fraction > 0.5) {
    throw ConfigError("val_fraction must lie in (0, 0.5]");
  }
}

engine::SensorFrame SurrogateModel::evaluate(
    const engine::OperatingPoint& w, const engine::SensorFrame& x_prev,
    const engine::HealthState& theta) const {
  if (static_cast<int>(mean_nets.size()) != kSensors ||
      static_cast<int>(resid_nets.size()) != kSensors) {
    throw ConfigError("surrogate model holds the wrong number of networks");
  }
  const Eigen::VectorXd raw = input_vector(w, x_prev, theta);
  Eigen::MatrixXd full(kSurrogateInputDim, 1);
  for (int i = 0; i < kSurrogateInputDim; ++i) {
    full(i, 0) = normalize_one(raw[i], in_lo[i], in_hi[i]);
  }
  const Eigen::MatrixXd head = full.topRows(kMeanInputDim);
  engine::SensorFrame out;
  for (int i = 0; i < kSensors; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const double mean_u = nn::predict(mean_nets[si], head)[0];
    const double resid_u = nn::predict(resid_nets[si], full)[0];
    out[i] = denormalize_one(mean_u, mean_lo[i], mean_hi[i]) +
             denormalize_one(resid_u, resid_lo[i], resid_hi[i]);
  }
  return out;
}

calib::MeasurementModel SurrogateModel::recurrent_model() const {
  struct State {
    engine::SensorFrame x_prev;
    engine::OperatingPoint w_prev;
    long calls = 0;
    bool primed = false;
  };
  auto st = std::make_shared<State>();
  // Captured by value so the closure outlives the fitted model object.
  SurrogateModel model = *this;
  constexpr long kCallsPerStep = 2 * 3 + 1;  // sigma evaluations per ukf_step
  return [st, model](const engine::OperatingPoint& w,
                     const engine::HealthState& theta) -> engine::SensorFrame {
    if (!st->primed) {
      st->x_prev = engine::evaluate_model(w, theta).sensors;
      st->w_prev = w;
      st->primed = true;
    } else if (st->calls % kCallsPerStep == 0) {
      // First sigma evaluation of a new filter step: theta here is the prior
      // mean, i.e. the previous posterior under the random walk, so one
      // surrogate step with the previous operating point advances x_prev to
      // the response of the step that just closed.
      st->x_prev = model.evaluate(st->w_prev, st->x_prev, theta);
      st->w_prev = w;
    }
    ++st->calls;
    return model.evaluate(w, st->x_prev, theta);
  };
}

SurrogateModel fit_surrogate(const std::vector<FitStream>& streams,
                             const SurrogateTrainConfig& cfg) {
  cfg.validate();

  // Collect transition tuples, never across stream boundaries.
  std::size_t n_tuples = 0;
  for (const FitStream& s : streams) {
    s.validate();
    if (s.size() >= 2) n_tuples += s.size() - 1;
  }
  if (n_tuples < kMinTuples) {
    throw ConfigError("surrogate fitting needs at least 1000 transition "
                      "tuples, got " + std::to_string(n_tuples));
  }

  const auto n_all = static_cast<Eigen::Index>(n_tuples);
  Eigen::MatrixXd inputs(kSurrogateInputDim, n_all);
  Eigen::MatrixXd targets(kSensors, n_all);
  Eigen::Index col = 0;
  for (const FitStream& s : streams) {
    for (std::size_t t = 1; t < s.size(); ++t) {
      inputs.col(col) = input_vector(s.w[t], s.x[t - 1], s.theta[t]);
      for (int i = 0; i < kSensors; ++i) targets(i, col) = s.x[t][i];
      ++col;
    }
  }

  SurrogateModel model;
  model.tuple_count = n_tuples;
  model.in_lo = inputs.rowwise().minCoeff();
  model.in_hi = inputs.rowwise().maxCoeff();
  model.mean_lo = targets.rowwise().minCoeff();
  model.mean_hi = targets.rowwise().maxCoeff();

  Eigen::MatrixXd inputs_n;
  normalize_rows(inputs, model.in_lo, model.in_hi, inputs_n);
  const Eigen::MatrixXd head_n = inputs_n.topRows(kMeanInputDim);

  // One shared shuffled split across all sensors and both stages.
  std::vector<Eigen::Index> order(n_tuples);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_engine(derive_seed(cfg.seed, {seed_tag::kSurrogate,
                                               seed_tag::kSplit}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::lround(
             cfg.val_fraction * static_cast<double>(n_tuples))));
  const auto n_train = n_all - n_val;
  if (n_train < 1) throw ConfigError("surrogate split leaves no training data");

  Eigen::MatrixXd full_train(kSurrogateInputDim, n_train);
  Eigen::MatrixXd full_val(kSurrogateInputDim, n_val);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    full_train.col(i) = inputs_n.col(order[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index i = 0; i < n_val; ++i) {
    full_val.col(i) = inputs_n.col(order[static_cast<std::size_t>(n_train + i)]);
  }
  const Eigen::MatrixXd head_train = full_train.topRows(kMeanInputDim);
  const Eigen::MatrixXd head_val = full_val.topRows(kMeanInputDim);

  model.mean_nets.reserve(static_cast<std::size_t>(kSensors));
  model.resid_nets.reserve(static_cast<std::size_t>(kSensors));
  model.resid_lo = Eigen::VectorXd::Zero(kSensors);
  model.resid_hi = Eigen::VectorXd::Zero(kSensors);
  model.held_out_rel_err = Eigen::VectorXd::Zero(kSensors);

  for (int sensor = 0; sensor < kSensors; ++sensor) {
    const auto su = static_cast<std::uint64_t>(sensor);

    // Stage one: envelope response from the operating point alone.
    Eigen::VectorXd y_mean_train(n_train), y_mean_val(n_val);
    for (Eigen::Index i = 0; i < n_train; ++i) {
      y_mean_train[i] =
          normalize_one(targets(sensor, order[static_cast<std::size_t>(i)]),
                        model.mean_lo[sensor], model.mean_hi[sensor]);
    }
    for (Eigen::Index i = 0; i < n_val; ++i) {
      y_mean_val[i] = normalize_one(
          targets(sensor, order[static_cast<std::size_t>(n_train + i)]),
          model.mean_lo[sensor], model.mean_hi[sensor]);
    }
    nn::Network mean_net = nn::build_mlp(kMeanInputDim, cfg.mean_hidden);
    nn::xavier_init(mean_net,
                    derive_seed(cfg.seed, {seed_tag::kSurrogate,
                                           seed_tag::kInit, 2 * su}));
    nn::TrainConfig mt = cfg.mean_train;
    mt.seed = derive_seed(cfg.seed, {seed_tag::kSurrogate,
                                     seed_tag::kTraining, 2 * su});
    nn::train(mean_net, nn::Dataset{head_train, y_mean_train},
              nn::Dataset{head_val, y_mean_val}, mt);

    // Stage two: residual after the envelope response, in raw units.
    const Eigen::VectorXd mean_pred_all_u = nn::predict(mean_net, head_n);
    Eigen::VectorXd resid_all(n_all);
    for (Eigen::Index i = 0; i < n_all; ++i) {
      resid_all[i] = targets(sensor, i) -
                     denormalize_one(mean_pred_all_u[i], model.mean_lo[sensor],
                                     model.mean_hi[sensor]);
    }
    model.resid_lo[sensor] = resid_all.minCoeff();
    model.resid_hi[sensor] = resid_all.maxCoeff();

    Eigen::VectorXd y_res_train(n_train), y_res_val(n_val);
    for (Eigen::Index i = 0; i < n_train; ++i) {
      y_res_train[i] =
          normalize_one(resid_all[order[static_cast<std::size_t>(i)]],
                        model.resid_lo[sensor], model.resid_hi[sensor]);
    }
    for (Eigen::Index i = 0; i < n_val; ++i) {
      y_res_val[i] = normalize_one(
          resid_all[order[static_cast<std::size_t>(n_train + i)]],
          model.resid_lo[sensor], model.resid_hi[sensor]);
    }
    nn::Network resid_net = nn::build_mlp(kSurrogateInputDim, cfg.hidden);
    nn::xavier_init(resid_net,
                    derive_seed(cfg.seed, {seed_tag::kSurrogate,
                                           seed_tag::kInit, 2 * su + 1}));
    nn::TrainConfig rt = cfg.train;
    rt.seed = derive_seed(cfg.seed, {seed_tag::kSurrogate,
                                     seed_tag::kTraining, 2 * su + 1});
    nn::train(resid_net, nn::Dataset{full_train, y_res_train},
              nn::Dataset{full_val, y_res_val}, rt);

    // Held-out relative error of the composite prediction in raw units.
    const Eigen::VectorXd mean_val_u = nn::predict(mean_net, head_val);
    const Eigen::VectorXd res_val_u = nn::predict(resid_net, full_val);
    double rel = 0.0;
    for (Eigen::Index i = 0; i < n_val; ++i) {
      const double pred =
          denormalize_one(mean_val_u[i], model.mean_lo[sensor],
                          model.mean_hi[sensor]) +
          denormalize_one(res_val_u[i], model.resid_lo[sensor],
                          model.resid_hi[sensor]);
      const double truth =
          targets(sensor, order[static_cast<std::size_t>(n_train + i)]);
      rel += std::abs(pred - truth) / std::max(std::abs(truth), 1e-12);
    }
    model.held_out_rel_err[sensor] = rel / static_cast<double>(n_val);

    model.mean_nets.push_back(std::move(mean_net));
    model.resid_nets.push_back(std::move(resid_net));
  }
  return model;
}

}  // namespace phm::surrogate
