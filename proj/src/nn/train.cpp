#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "phm/errors.hpp"
#include "phm/nn.hpp"
#include "phm/random.hpp"

namespace phm::nn {

namespace {

int sample_count(const Network& net, const Dataset& d) {
  if (net.has_conv_input()) {
    if (d.x.cols() % net.in_time != 0) {
      throw ConfigError("conv dataset width is not a multiple of the window");
    }
    return static_cast<int>(d.x.cols()) / net.in_time;
  }
  return static_cast<int>(d.x.cols());
}

void check_dataset(const Network& net, const Dataset& d, const char* which) {
  if (d.x.rows() != net.in_features) {
    std::ostringstream msg;
    msg << which << " set has " << d.x.rows() << " feature rows, network wants "
        << net.in_features;
    throw ConfigError(msg.str());
  }
  const int n = sample_count(net, d);
  if (n == 0) {
    throw ConfigError(std::string(which) + " set is empty");
  }
  if (d.y.size() != n) {
    std::ostringstream msg;
    msg << which << " targets hold " << d.y.size() << " values for " << n
        << " samples";
    throw ConfigError(msg.str());
  }
}

// Pull the selected samples into a dense batch, keeping the conv layout's
// time blocking.
Dataset gather(const Dataset& d, const std::vector<int>& order, int lo, int hi,
               int time, int total) {
  const int bs = hi - lo;
  Dataset out;
  out.y.resize(bs);
  for (int j = 0; j < bs; ++j) out.y[j] = d.y[order[static_cast<std::size_t>(lo + j)]];
  if (time == 0) {
    out.x.resize(d.x.rows(), bs);
    for (int j = 0; j < bs; ++j) {
      out.x.col(j) = d.x.col(order[static_cast<std::size_t>(lo + j)]);
    }
  } else {
    out.x.resize(d.x.rows(), static_cast<Eigen::Index>(time) * bs);
    for (int t = 0; t < time; ++t) {
      for (int j = 0; j < bs; ++j) {
        out.x.col(static_cast<Eigen::Index>(t) * bs + j) =
            d.x.col(static_cast<Eigen::Index>(t) * total +
                    order[static_cast<std::size_t>(lo + j)]);
      }
    }
  }
  return out;
}

double validation_rmse(const Network& net, const Dataset& val) {
  const Eigen::VectorXd pred = predict(net, val.x);
  return std::sqrt((pred - val.y).squaredNorm() /
                   static_cast<double>(val.y.size()));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

TrainLog train(Network& net, const Dataset& train_set, const Dataset& val_set,
               const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  check_dataset(net, train_set, "training");
  check_dataset(net, val_set, "validation");

  const int time = net.has_conv_input() ? net.in_time : 0;
  const int n_train = sample_count(net, train_set);

  OptimizerConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  OptimizerState opt = OptimizerState::init(net);

  auto rng = make_engine(derive_seed(cfg.seed, {seed_tag::kTraining}));
  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  std::vector<Eigen::MatrixXd> best_w = net.w;
  std::vector<Eigen::VectorXd> best_b = net.b;
  double best_rmse = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int n_batches = 0;
    for (int lo = 0; lo < n_train; lo += cfg.batch_size) {
      const int hi = std::min(lo + cfg.batch_size, n_train);
      const Dataset batch = gather(train_set, order, lo, hi, time, n_train);
      Grads g;
      try {
        g = gradients(net, batch.x, batch.y);
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch "
            << n_batches + 1 << ": " << e.what();
        throw NumericError(msg.str());
      }
      amsgrad_step(opt, net, g, opt_cfg);
      loss_sum += g.loss;
      ++n_batches;
    }
    log.train_loss.push_back(loss_sum / n_batches);

    const double rmse = validation_rmse(net, val_set);
    if (!std::isfinite(rmse)) {
      std::ostringstream msg;
      msg << "validation RMSE went non-finite at epoch " << epoch;
      throw NumericError(msg.str());
    }
    log.val_rmse.push_back(rmse);
    log.stopped_epoch = epoch;

    if (rmse < best_rmse) {
      best_rmse = rmse;
      best_w = net.w;
      best_b = net.b;
      log.best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= cfg.patience) break;
    }
  }

  net.w = std::move(best_w);
  net.b = std::move(best_b);
  return log;
}

}  // namespace phm::nn
