#include <cmath>

#include "phm/errors.hpp"
#include "phm/nn.hpp"

namespace phm::nn {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("moment decay rates must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
}

OptimizerState OptimizerState::init(const Network& net) {
  net.validate();
  OptimizerState opt;
  const std::size_t n = net.layers.size();
  opt.m_w.resize(n);
  opt.v_w.resize(n);
  opt.vhat_w.resize(n);
  opt.m_b.resize(n);
  opt.v_b.resize(n);
  opt.vhat_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    opt.m_w[i] = Eigen::MatrixXd::Zero(net.w[i].rows(), net.w[i].cols());
    opt.v_w[i] = opt.m_w[i];
    opt.vhat_w[i] = opt.m_w[i];
    opt.m_b[i] = Eigen::VectorXd::Zero(net.b[i].size());
    opt.v_b[i] = opt.m_b[i];
    opt.vhat_b[i] = opt.m_b[i];
  }
  return opt;
}

void amsgrad_step(OptimizerState& opt, Network& net, const Grads& g,
                  const OptimizerConfig& cfg) {
  cfg.validate();
  if (g.w.size() != net.layers.size() || opt.m_w.size() != net.layers.size()) {
    throw ConfigError("gradient or optimizer state out of step with network");
  }

  ++opt.step;
  const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));

  auto update = [&](auto& param, auto& m, auto& v, auto& vhat,
                    const auto& grad) {
    if (param.size() == 0) return;
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
      throw ConfigError("gradient shape mismatch");
    }
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v.array() =
        cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square();
    vhat = vhat.cwiseMax(v);
    param.array() -=
        cfg.lr * (m.array() / corr1) / (vhat.array().sqrt() + cfg.eps);
  };

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.w[i], opt.m_w[i], opt.v_w[i], opt.vhat_w[i], g.w[i]);
    update(net.b[i], opt.m_b[i], opt.v_b[i], opt.vhat_b[i], g.b[i]);
  }
}

}  // namespace phm::nn
