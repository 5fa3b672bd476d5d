#include "phm/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "phm/errors.hpp"
#include "phm/io/csv.hpp"
#include "phm/random.hpp"

namespace phm::nn {

namespace {

constexpr char kMagic[9] = "PHMNETB1";

struct Shape {
  bool conv = false;
  int width = 0;  // features, or channels on the conv path
  int time = 0;
};

Shape input_shape(const Network& net) {
  if (net.in_features < 1) {
    throw ConfigError("network needs a positive input width");
  }
  if (net.in_time < 0) throw ConfigError("in_time must be non-negative");
  if (net.in_time > 0) return {true, net.in_features, net.in_time};
  return {false, net.in_features, 0};
}

Shape next_shape(const Shape& s, const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Dense:
      if (s.conv) {
        throw ConfigError("dense layer applied to an unflattened conv stage");
      }
      if (spec.units < 1) throw ConfigError("dense layer needs units >= 1");
      return {false, spec.units, 0};
    case LayerKind::Conv1d:
      if (!s.conv) {
        throw ConfigError("conv layer needs a channels-by-time stage");
      }
      if (spec.channels < 1 || spec.kernel < 1) {
        throw ConfigError("conv layer needs positive channels and kernel");
      }
      return {true, spec.channels, s.time};
    case LayerKind::Flatten:
      if (!s.conv) throw ConfigError("flatten needs a conv stage");
      return {false, s.width * s.time, 0};
    case LayerKind::Relu:
      return s;
  }
  throw ConfigError("unknown layer kind");
}

void allocate_params(Network& net) {
  net.w.assign(net.layers.size(), Eigen::MatrixXd());
  net.b.assign(net.layers.size(), Eigen::VectorXd());
  Shape s = input_shape(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    if (spec.kind == LayerKind::Dense) {
      net.w[i] = Eigen::MatrixXd::Zero(spec.units, s.width);
      net.b[i] = Eigen::VectorXd::Zero(spec.units);
    } else if (spec.kind == LayerKind::Conv1d) {
      net.w[i] = Eigen::MatrixXd::Zero(spec.channels, s.width * spec.kernel);
      net.b[i] = Eigen::VectorXd::Zero(spec.channels);
    }
    s = next_shape(s, spec);
  }
}

// Zero-padded copy of a conv stage, pad_left = (kernel-1)/2 whole time steps
// on the left so same-padding output index t reads padded blocks t..t+k-1.
Eigen::MatrixXd pad_stage(const Eigen::MatrixXd& a, int time, int batch,
                          int kernel) {
  Eigen::MatrixXd padded =
      Eigen::MatrixXd::Zero(a.rows(), (time + kernel - 1) * batch);
  const int pad_left = (kernel - 1) / 2;
  for (int t = 0; t < time; ++t) {
    padded.middleCols((t + pad_left) * batch, batch) =
        a.middleCols(t * batch, batch);
  }
  return padded;
}

Eigen::MatrixXd conv_forward(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                             const Eigen::MatrixXd& a, int time, int batch,
                             int kernel) {
  const auto cin = a.rows();
  const auto cout = w.rows();
  const Eigen::MatrixXd padded = pad_stage(a, time, batch, kernel);
  Eigen::MatrixXd z(cout, time * batch);
  for (int t = 0; t < time; ++t) {
    auto zt = z.middleCols(t * batch, batch);
    zt.colwise() = b;
    for (int dt = 0; dt < kernel; ++dt) {
      zt.noalias() += w.middleCols(dt * cin, cin) *
                      padded.middleCols((t + dt) * batch, batch);
    }
  }
  return z;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[i] = layer i-1 out
  std::vector<Shape> shapes;          // shape entering each layer, plus final
  int batch = 0;
};

ForwardCache run_forward(const Network& net, const Eigen::MatrixXd& x) {
  net.validate();
  Shape s = input_shape(net);
  ForwardCache cache;
  if (s.conv) {
    if (x.rows() != s.width || x.cols() % s.time != 0) {
      std::ostringstream msg;
      msg << "conv input must be " << s.width << " x (" << s.time
          << "*B), got " << x.rows() << " x " << x.cols();
      throw ConfigError(msg.str());
    }
    cache.batch = static_cast<int>(x.cols()) / s.time;
  } else {
    if (x.rows() != s.width) {
      std::ostringstream msg;
      msg << "dense input must have " << s.width << " rows, got " << x.rows();
      throw ConfigError(msg.str());
    }
    cache.batch = static_cast<int>(x.cols());
  }

  cache.acts.reserve(net.layers.size() + 1);
  cache.shapes.reserve(net.layers.size() + 1);
  cache.acts.push_back(x);
  cache.shapes.push_back(s);

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    const Eigen::MatrixXd& a = cache.acts.back();
    Eigen::MatrixXd out;
    switch (spec.kind) {
      case LayerKind::Dense:
        out.noalias() = net.w[i] * a;
        out.colwise() += net.b[i];
        break;
      case LayerKind::Conv1d:
        out = conv_forward(net.w[i], net.b[i], a, s.time, cache.batch,
                           spec.kernel);
        break;
      case LayerKind::Flatten: {
        out.resize(static_cast<Eigen::Index>(s.width) * s.time, cache.batch);
        for (int c = 0; c < s.width; ++c) {
          for (int t = 0; t < s.time; ++t) {
            out.row(c * s.time + t) =
                a.row(c).segment(static_cast<Eigen::Index>(t) * cache.batch,
                                 cache.batch);
          }
        }
        break;
      }
      case LayerKind::Relu:
        out = a.cwiseMax(0.0);
        break;
    }
    s = next_shape(s, spec);
    cache.acts.push_back(std::move(out));
    cache.shapes.push_back(s);
  }
  return cache;
}

}  // namespace

LayerSpec LayerSpec::dense(int units) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv1d(int channels, int kernel) {
  LayerSpec s;
  s.kind = LayerKind::Conv1d;
  s.channels = channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : w) n += static_cast<std::size_t>(m.size());
  for (const auto& v : b) n += static_cast<std::size_t>(v.size());
  return n;
}

int Network::output_dim() const {
  Shape s = input_shape(*this);
  for (const auto& spec : layers) s = next_shape(s, spec);
  if (s.conv) return s.width * s.time;
  return s.width;
}

void Network::validate() const {
  if (w.size() != layers.size() || b.size() != layers.size()) {
    throw ConfigError("parameter containers out of step with the layer list");
  }
  Shape s = input_shape(*this);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    if (spec.kind == LayerKind::Dense) {
      if (w[i].rows() != spec.units || w[i].cols() != s.width ||
          b[i].size() != spec.units) {
        throw ConfigError("dense layer parameter shape mismatch");
      }
    } else if (spec.kind == LayerKind::Conv1d) {
      if (w[i].rows() != spec.channels ||
          w[i].cols() != static_cast<Eigen::Index>(s.width) * spec.kernel ||
          b[i].size() != spec.channels) {
        throw ConfigError("conv layer parameter shape mismatch");
      }
    } else if (w[i].size() != 0 || b[i].size() != 0) {
      throw ConfigError("non-parametric layer carries parameters");
    }
    s = next_shape(s, spec);
  }
}

Network build_fnn(int in_features) {
  if (in_features < 1) throw ConfigError("input width must be >= 1");
  Network net;
  net.in_features = in_features;
  net.in_time = 0;
  for (int width : {200, 200, 200, 50}) {
    net.layers.push_back(LayerSpec::dense(width));
    net.layers.push_back(LayerSpec::relu());
  }
  net.layers.push_back(LayerSpec::dense(1));
  allocate_params(net);
  return net;
}

Network build_mlp(int in_features, const std::vector<int>& hidden) {
  if (in_features < 1) throw ConfigError("input width must be >= 1");
  Network net;
  net.in_features = in_features;
  net.in_time = 0;
  for (int width : hidden) {
    if (width < 1) throw ConfigError("hidden widths must be >= 1");
    net.layers.push_back(LayerSpec::dense(width));
    net.layers.push_back(LayerSpec::relu());
  }
  net.layers.push_back(LayerSpec::dense(1));
  allocate_params(net);
  return net;
}

Network build_cnn(int in_channels, int n_tw) {
  if (in_channels < 1) throw ConfigError("input channels must be >= 1");
  if (n_tw < 1) throw ConfigError("window length must be >= 1");
  Network net;
  net.in_features = in_channels;
  net.in_time = n_tw;
  for (int channels : {10, 10, 1}) {
    net.layers.push_back(LayerSpec::conv1d(channels));
    net.layers.push_back(LayerSpec::relu());
  }
  net.layers.push_back(LayerSpec::flatten());
  net.layers.push_back(LayerSpec::dense(50));
  net.layers.push_back(LayerSpec::relu());
  net.layers.push_back(LayerSpec::dense(1));
  allocate_params(net);
  return net;
}

void xavier_init(Network& net, std::uint64_t seed) {
  net.validate();
  auto rng = make_engine(derive_seed(seed, {seed_tag::kInit}));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Shape s = input_shape(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    if (spec.kind == LayerKind::Dense || spec.kind == LayerKind::Conv1d) {
      double fan_in = 0.0, fan_out = 0.0;
      if (spec.kind == LayerKind::Dense) {
        fan_in = s.width;
        fan_out = spec.units;
      } else {
        fan_in = static_cast<double>(s.width) * spec.kernel;
        fan_out = static_cast<double>(spec.channels) * spec.kernel;
      }
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      double* data = net.w[i].data();
      for (Eigen::Index k = 0; k < net.w[i].size(); ++k) {
        data[k] = bound * (2.0 * u01(rng) - 1.0);
      }
      net.b[i].setZero();
    }
    s = next_shape(s, spec);
  }
}

Eigen::MatrixXd pack_windows(const std::vector<Eigen::MatrixXd>& windows) {
  if (windows.empty()) throw ConfigError("cannot pack an empty window list");
  const auto time = windows.front().rows();
  const auto feats = windows.front().cols();
  const auto batch = static_cast<Eigen::Index>(windows.size());
  Eigen::MatrixXd packed(feats, time * batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    const Eigen::MatrixXd& win = windows[static_cast<std::size_t>(s)];
    if (win.rows() != time || win.cols() != feats) {
      throw ConfigError("windows in one batch must share a shape");
    }
    for (Eigen::Index t = 0; t < time; ++t) {
      packed.col(t * batch + s) = win.row(t).transpose();
    }
  }
  return packed;
}

Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& x) {
  return run_forward(net, x).acts.back();
}

Eigen::VectorXd predict(const Network& net, const Eigen::MatrixXd& x) {
  if (net.output_dim() != 1) {
    throw ConfigError("predict needs a scalar-output network");
  }
  return forward(net, x).row(0).transpose();
}

Grads gradients(const Network& net, const Eigen::MatrixXd& x,
                const Eigen::VectorXd& y) {
  const ForwardCache cache = run_forward(net, x);
  const int batch = cache.batch;
  if (net.output_dim() != 1) {
    throw ConfigError("gradients are defined for scalar-output networks");
  }
  if (y.size() != batch) {
    throw ConfigError("target length does not match the batch");
  }

  Grads g;
  g.w.assign(net.layers.size(), Eigen::MatrixXd());
  g.b.assign(net.layers.size(), Eigen::VectorXd());

  const Eigen::RowVectorXd residual =
      cache.acts.back().row(0) - y.transpose();
  g.loss = residual.squaredNorm() / batch;
  if (!std::isfinite(g.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss over a batch of " << batch;
    throw NumericError(msg.str());
  }

  Eigen::MatrixXd delta = (2.0 / batch) * residual;
  for (std::size_t ii = net.layers.size(); ii-- > 0;) {
    const LayerSpec& spec = net.layers[ii];
    const Eigen::MatrixXd& a_in = cache.acts[ii];
    const Shape& s_in = cache.shapes[ii];
    switch (spec.kind) {
      case LayerKind::Dense: {
        g.w[ii].noalias() = delta * a_in.transpose();
        g.b[ii] = delta.rowwise().sum();
        delta = (net.w[ii].transpose() * delta).eval();
        break;
      }
      case LayerKind::Conv1d: {
        const int time = s_in.time;
        const auto cin = a_in.rows();
        const auto cout = net.w[ii].rows();
        const int kernel = spec.kernel;
        const int pad_left = (kernel - 1) / 2;
        const Eigen::MatrixXd padded = pad_stage(a_in, time, batch, kernel);

        g.w[ii] = Eigen::MatrixXd::Zero(cout, cin * kernel);
        g.b[ii] = delta.rowwise().sum();
        Eigen::MatrixXd dpad =
            Eigen::MatrixXd::Zero(cin, (time + kernel - 1) * batch);
        for (int t = 0; t < time; ++t) {
          const auto dz = delta.middleCols(t * batch, batch);
          for (int dt = 0; dt < kernel; ++dt) {
            g.w[ii].middleCols(dt * cin, cin).noalias() +=
                dz * padded.middleCols((t + dt) * batch, batch).transpose();
            dpad.middleCols((t + dt) * batch, batch).noalias() +=
                net.w[ii].middleCols(dt * cin, cin).transpose() * dz;
          }
        }
        Eigen::MatrixXd da(cin, static_cast<Eigen::Index>(time) * batch);
        for (int t = 0; t < time; ++t) {
          da.middleCols(t * batch, batch) =
              dpad.middleCols((t + pad_left) * batch, batch);
        }
        delta = std::move(da);
        break;
      }
      case LayerKind::Flatten: {
        Eigen::MatrixXd da(s_in.width,
                           static_cast<Eigen::Index>(s_in.time) * batch);
        for (int c = 0; c < s_in.width; ++c) {
          for (int t = 0; t < s_in.time; ++t) {
            da.row(c).segment(static_cast<Eigen::Index>(t) * batch, batch) =
                delta.row(c * s_in.time + t);
          }
        }
        delta = std::move(da);
        break;
      }
      case LayerKind::Relu: {
        delta = delta.array() * (a_in.array() > 0.0).cast<double>();
        break;
      }
    }
  }
  return g;
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_rmse\n";
  for (std::size_t e = 0; e < log.train_loss.size(); ++e) {
    out << (e + 1) << ',' << io::format_double(log.train_loss[e]) << ','
        << io::format_double(log.val_rmse[e]) << '\n';
  }
}

void save_network(const std::string& path, const Network& net,
                  const std::string& meta_json) {
  net.validate();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("meta_json is not valid JSON: ") + e.what());
  }

  nlohmann::json header;
  header["in_features"] = net.in_features;
  header["in_time"] = net.in_time;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& spec : net.layers) {
    nlohmann::json l;
    switch (spec.kind) {
      case LayerKind::Dense:
        l["kind"] = "dense";
        l["units"] = spec.units;
        break;
      case LayerKind::Conv1d:
        l["kind"] = "conv1d";
        l["channels"] = spec.channels;
        l["kernel"] = spec.kernel;
        break;
      case LayerKind::Flatten:
        l["kind"] = "flatten";
        break;
      case LayerKind::Relu:
        l["kind"] = "relu";
        break;
    }
    layers.push_back(l);
  }
  header["layers"] = layers;
  header["parameter_count"] = net.parameter_count();
  header["meta"] = meta;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 8);
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.w[i].size() > 0) {
      out.write(reinterpret_cast<const char*>(net.w[i].data()),
                static_cast<std::streamsize>(sizeof(double) * net.w[i].size()));
      out.write(reinterpret_cast<const char*>(net.b[i].data()),
                static_cast<std::streamsize>(sizeof(double) * net.b[i].size()));
    }
  }
  if (!out) throw IoError("short write to " + path);
}

Network load_network(const std::string& path, std::string* meta_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path + " is not a network parameter file");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (1u << 20)) {
    throw IoError("corrupt header length in " + path);
  }
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("corrupt header JSON: ") + e.what());
  }

  Network net;
  net.in_features = header.at("in_features").get<int>();
  net.in_time = header.at("in_time").get<int>();
  for (const auto& l : header.at("layers")) {
    const std::string kind = l.at("kind").get<std::string>();
    if (kind == "dense") {
      net.layers.push_back(LayerSpec::dense(l.at("units").get<int>()));
    } else if (kind == "conv1d") {
      net.layers.push_back(LayerSpec::conv1d(l.at("channels").get<int>(),
                                             l.at("kernel").get<int>()));
    } else if (kind == "flatten") {
      net.layers.push_back(LayerSpec::flatten());
    } else if (kind == "relu") {
      net.layers.push_back(LayerSpec::relu());
    } else {
      throw IoError("unknown layer kind in " + path + ": " + kind);
    }
  }
  allocate_params(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.w[i].size() > 0) {
      in.read(reinterpret_cast<char*>(net.w[i].data()),
              static_cast<std::streamsize>(sizeof(double) * net.w[i].size()));
      in.read(reinterpret_cast<char*>(net.b[i].data()),
              static_cast<std::streamsize>(sizeof(double) * net.b[i].size()));
    }
  }
  if (!in) throw IoError("truncated parameter payload in " + path);
  in.peek();
  if (!in.eof()) throw IoError("trailing bytes after parameters in " + path);
  if (header.at("parameter_count").get<std::size_t>() !=
      net.parameter_count()) {
    throw IoError("parameter count mismatch in " + path);
  }
  if (meta_json != nullptr) *meta_json = header.at("meta").dump();
  return net;
}

}  // namespace phm::nn
