#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phm::nn {

// Small feed-forward engine covering the two prognostics architectures: dense
// stacks and 1-D convolutions over the time axis of a sliding window. All
// math is double precision so gradient checks against central differences are
// meaningful.
//
// Batch layouts:
//   dense input   features x B
//   conv input    channels x (T*B), column t*B + s holding time step t of
//                 sample s; pack_windows builds this from per-sample windows.

enum class LayerKind { Dense, Conv1d, Flatten, Relu };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int units = 0;     // Dense output width
  int channels = 0;  // Conv1d output channels
  int kernel = 0;    // Conv1d kernel length

  static LayerSpec dense(int units);
  static LayerSpec conv1d(int channels, int kernel = 10);
  static LayerSpec flatten();
  static LayerSpec relu();
};

struct Network {
  int in_features = 0;  // dense input width, or input channels for conv nets
  int in_time = 0;      // window length for conv nets, 0 for dense input
  std::vector<LayerSpec> layers;
  std::vector<Eigen::MatrixXd> w;  // parallel to layers, empty when unused
  std::vector<Eigen::VectorXd> b;

  std::size_t parameter_count() const;
  bool has_conv_input() const { return in_time > 0; }
  int output_dim() const;
  void validate() const;  // throws ConfigError on inconsistent shapes
};

// Dense stack in_features -> 200 -> 200 -> 200 -> 50 -> 1, hidden ReLU,
// linear output.
Network build_fnn(int in_features);

// Conv stack over a length-n_tw window: three same-padded kernel-10
// convolutions (10, 10, 1 channels, each ReLU), flatten, dense 50 with ReLU,
// linear output.
Network build_cnn(int in_channels, int n_tw = 50);

// General dense ReLU stack with a linear scalar head:
// in_features -> hidden[0] -> ... -> hidden.back() -> 1.
Network build_mlp(int in_features, const std::vector<int>& hidden);

// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.
void xavier_init(Network& net, std::uint64_t seed);

// Stack per-sample windows (rows = time, cols = features) into the conv batch
// layout.
Eigen::MatrixXd pack_windows(const std::vector<Eigen::MatrixXd>& windows);

// Full forward pass; returns the final stage (output_dim x B).
Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& x);

// forward() for scalar-output networks, one value per sample.
Eigen::VectorXd predict(const Network& net, const Eigen::MatrixXd& x);

struct Grads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  double loss = 0.0;  // mean squared error over the batch
};

// Reverse-mode gradients of the mean-squared-error loss.
Grads gradients(const Network& net, const Eigen::MatrixXd& x,
                const Eigen::VectorXd& y);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

struct OptimizerState {
  std::vector<Eigen::MatrixXd> m_w, v_w, vhat_w;
  std::vector<Eigen::VectorXd> m_b, v_b, vhat_b;
  long step = 0;

  static OptimizerState init(const Network& net);
};

// One AMSGrad update. First moment is bias-corrected; the running maximum of
// the second moment is used raw, which is what makes the step size
// non-increasing per coordinate.
void amsgrad_step(OptimizerState& opt, Network& net, const Grads& g,
                  const OptimizerConfig& cfg);

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

struct TrainConfig {
  int batch_size = 1024;
  double lr = 1e-3;
  int max_epochs = 60;
  int patience = 5;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss;  // mean batch MSE per epoch
  std::vector<double> val_rmse;    // validation RMSE after each epoch
  int best_epoch = 0;              // 1-based epoch whose params were kept
  int stopped_epoch = 0;           // last epoch that actually ran
};

// Mini-batch training with seeded shuffling and early stopping: stop once the
// validation RMSE has failed to improve for `patience` consecutive epochs,
// then restore the best-validation parameters into `net`. Throws NumericError
// if the loss goes non-finite.
TrainLog train(Network& net, const Dataset& train_set, const Dataset& val_set,
               const TrainConfig& cfg);

void write_train_log_csv(const std::string& path, const TrainLog& log);

// Flat binary parameter container with a JSON shape header. `meta` is stored
// verbatim (serialized JSON text) and returned on load.
void save_network(const std::string& path, const Network& net,
                  const std::string& meta_json = "{}");
Network load_network(const std::string& path, std::string* meta_json = nullptr);

}  // namespace phm::nn
