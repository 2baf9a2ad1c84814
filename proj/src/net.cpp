#include "prunelab/net.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace prunelab {

namespace {

// Shared forward pass over a batch. acts[0] is the input, acts[l+1] the
// (post-activation) output of layer l.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
  std::vector<Eigen::MatrixXd> preacts;  // z_l before the nonlinearity
};

ForwardCache run_forward(const Network& net, const Eigen::MatrixXd& x) {
  const auto& layers = net.layers();
  if (x.cols() != net.input_dim()) {
    std::ostringstream msg;
    msg << "layer 0 expects input dim " << net.input_dim() << ", got "
        << x.cols();
    fail_dimension(msg.str());
  }
  ForwardCache cache;
  cache.acts.reserve(layers.size() + 1);
  cache.preacts.reserve(layers.size());
  cache.acts.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = cache.acts.back() * net.layer_matrix(l);
    cache.preacts.push_back(z);
    if (layers[l].has_activation) {
      cache.acts.push_back(z.cwiseMax(0.0));
    } else {
      cache.acts.push_back(std::move(z));
    }
  }
  return cache;
}

Eigen::MatrixXd one_hot_rows(const std::vector<int>& labels, int classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      std::ostringstream msg;
      msg << "label " << labels[i] << " out of range [0, " << classes << ")";
      fail_dimension(msg.str());
    }
    y(i, labels[i]) = 1.0;
  }
  return y;
}

// Backward pass from d(loss)/d(logits); returns presignal matrices and
// optionally accumulates mean weight gradients.
struct BackwardResult {
  std::vector<Eigen::MatrixXd> presignals;  // n x out_dim per layer
};

BackwardResult run_backward(const Network& net, const ForwardCache& cache,
                            const Eigen::MatrixXd& dlogits, int task) {
  const auto& layers = net.layers();
  const Eigen::MatrixXd& xi = net.head(task);
  BackwardResult out;
  out.presignals.resize(layers.size());
  Eigen::MatrixXd dact = dlogits * xi.transpose();  // d loss / d features
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    Eigen::MatrixXd dz;
    if (layers[l].has_activation) {
      dz = dact.cwiseProduct(
          (cache.preacts[l].array() > 0.0).cast<double>().matrix());
    } else {
      dz = std::move(dact);
    }
    if (l > 0) {
      dact = dz * net.layer_matrix(l).transpose();
    }
    out.presignals[l] = std::move(dz);
  }
  return out;
}

// d(per-example loss)/d(logits): one row per example, no 1/n factor.
Eigen::MatrixXd per_example_dlogits(const Eigen::MatrixXd& logits,
                                    const Eigen::MatrixXd& targets) {
  const double scale = 2.0 / static_cast<double>(logits.cols());
  return scale * (logits - targets);
}

Eigen::VectorXd flatten_mean_grads(const Network& net,
                                   const std::vector<Eigen::MatrixXd>& acts,
                                   const std::vector<Eigen::MatrixXd>& dz,
                                   double inv_n) {
  Eigen::VectorXd g(net.encoder_params());
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const int m = net.layers()[l].in_dim;
    const int h = net.layers()[l].out_dim;
    Eigen::MatrixXd wgrad = inv_n * (acts[l].transpose() * dz[l]);  // m x h
    Eigen::Map<RowMajorMatrix>(g.data() + net.layer_offset(l), m, h) = wgrad;
  }
  return g;
}

}  // namespace

Network::Network(std::vector<LayerSpec> layers, Eigen::VectorXd weights,
                 std::map<int, Eigen::MatrixXd> heads)
    : layers_(std::move(layers)),
      weights_(std::move(weights)),
      heads_(std::move(heads)) {
  if (layers_.empty()) fail_dimension("network needs at least one layer");
  int total = 0;
  offsets_.reserve(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    if (spec.in_dim < 1 || spec.out_dim < 1) {
      std::ostringstream msg;
      msg << "layer " << l << " has non-positive dims " << spec.in_dim << "x"
          << spec.out_dim;
      fail_dimension(msg.str());
    }
    if (l + 1 < layers_.size() && spec.out_dim != layers_[l + 1].in_dim) {
      std::ostringstream msg;
      msg << "layer " << l << " out_dim " << spec.out_dim
          << " does not chain into layer " << l + 1 << " in_dim "
          << layers_[l + 1].in_dim;
      fail_dimension(msg.str());
    }
    offsets_.push_back(total);
    total += spec.param_count();
  }
  if (weights_.size() != total) {
    std::ostringstream msg;
    msg << "weight vector has " << weights_.size() << " entries, layers need "
        << total;
    fail_dimension(msg.str());
  }
  for (const auto& [task, xi] : heads_) {
    if (xi.rows() != feature_dim()) {
      std::ostringstream msg;
      msg << "head for task " << task << " has " << xi.rows()
          << " rows, feature dim is " << feature_dim();
      fail_dimension(msg.str());
    }
  }
}

Network Network::random_init(const std::vector<int>& dims,
                             const std::vector<int>& head_tasks, int classes,
                             std::uint64_t seed) {
  if (dims.size() < 2) fail_dimension("dimension chain needs >= 2 entries");
  std::vector<LayerSpec> layers;
  int total = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = (i + 2 == dims.size());
    layers.push_back({dims[i], dims[i + 1], !last});
    total += dims[i] * dims[i + 1];
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(total);
  int at = 0;
  for (const auto& spec : layers) {
    const double scale = std::sqrt(2.0 / spec.in_dim);
    for (int k = 0; k < spec.param_count(); ++k) w[at++] = scale * normal(rng);
  }
  std::map<int, Eigen::MatrixXd> heads;
  const int h = dims.back();
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (int task : head_tasks) {
    Eigen::MatrixXd xi(h, classes);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < classes; ++c) xi(r, c) = head_scale * normal(rng);
    heads.emplace(task, std::move(xi));
  }
  return Network(std::move(layers), std::move(w), std::move(heads));
}

const Eigen::MatrixXd& Network::head(int task) const {
  auto it = heads_.find(task);
  if (it == heads_.end()) {
    std::ostringstream msg;
    msg << "no head registered for task " << task;
    fail_dimension(msg.str());
  }
  return it->second;
}

Eigen::Map<const RowMajorMatrix> Network::layer_matrix(int layer) const {
  const auto& spec = layers_[layer];
  return Eigen::Map<const RowMajorMatrix>(weights_.data() + offsets_[layer],
                                          spec.in_dim, spec.out_dim);
}

Network Network::with_weights(Eigen::VectorXd weights) const {
  return Network(layers_, std::move(weights), heads_);
}

Network Network::with_head(int task, Eigen::MatrixXd head) const {
  auto heads = heads_;
  heads[task] = std::move(head);
  return Network(layers_, weights_, std::move(heads));
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Eigen::VectorXd features(const Network& net, const Eigen::VectorXd& x) {
  return features_batch(net, x.transpose()).row(0).transpose();
}

Eigen::MatrixXd features_batch(const Network& net, const Eigen::MatrixXd& x) {
  return run_forward(net, x).acts.back();
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x,
                        int task) {
  return logits_batch(net, x.transpose(), task).row(0).transpose();
}

Eigen::MatrixXd logits_batch(const Network& net, const Eigen::MatrixXd& x,
                             int task) {
  return features_batch(net, x) * net.head(task);
}

double mse_loss(const Eigen::VectorXd& logits, int label) {
  const int classes = static_cast<int>(logits.size());
  if (label < 0 || label >= classes) {
    std::ostringstream msg;
    msg << "label " << label << " out of range [0, " << classes << ")";
    fail_dimension(msg.str());
  }
  double sum = 0.0;
  for (int c = 0; c < classes; ++c) {
    const double r = logits[c] - (c == label ? 1.0 : 0.0);
    sum += r * r;
  }
  return sum / classes;
}

double batch_loss(const Network& net, const Batch& batch, int task) {
  const Eigen::MatrixXd logits = logits_batch(net, batch.inputs, task);
  const Eigen::MatrixXd y = one_hot_rows(batch.labels, net.classes(task));
  return (logits - y).squaredNorm() / (logits.rows() * logits.cols());
}

Eigen::VectorXd grad(const Network& net, const Batch& batch, int task) {
  if (batch.size() < 1) fail_dimension("empty batch");
  ForwardCache cache = run_forward(net, batch.inputs);
  const Eigen::MatrixXd y = one_hot_rows(batch.labels, net.classes(task));
  Eigen::MatrixXd dlogits =
      per_example_dlogits(cache.acts.back() * net.head(task), y);
  BackwardResult back = run_backward(net, cache, dlogits, task);
  return flatten_mean_grads(net, cache.acts, back.presignals,
                            1.0 / batch.size());
}

Eigen::MatrixXd per_example_grads(const Network& net, const Batch& batch,
                                  int task) {
  LayerStreams streams = layer_streams(net, batch, task);
  const int n = batch.size();
  Eigen::MatrixXd grads(n, net.encoder_params());
  Eigen::VectorXd row(net.encoder_params());
  for (int i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const int m = net.layers()[l].in_dim;
      const int h = net.layers()[l].out_dim;
      Eigen::Map<RowMajorMatrix>(row.data() + net.layer_offset(l), m, h) =
          streams.activations[l].row(i).transpose() *
          streams.presignals[l].row(i);
    }
    grads.row(i) = row.transpose();
  }
  return grads;
}

LayerStreams layer_streams(const Network& net, const Batch& batch, int task) {
  if (batch.size() < 1) fail_dimension("empty batch");
  ForwardCache cache = run_forward(net, batch.inputs);
  const Eigen::MatrixXd y = one_hot_rows(batch.labels, net.classes(task));
  Eigen::MatrixXd dlogits =
      per_example_dlogits(cache.acts.back() * net.head(task), y);
  BackwardResult back = run_backward(net, cache, dlogits, task);
  LayerStreams streams;
  streams.activations.assign(cache.acts.begin(),
                             cache.acts.end() - 1);
  streams.presignals = std::move(back.presignals);
  return streams;
}

TrainGradients training_gradients(const Network& net, const Batch& batch,
                                  int task) {
  if (batch.size() < 1) fail_dimension("empty batch");
  ForwardCache cache = run_forward(net, batch.inputs);
  const Eigen::MatrixXd y = one_hot_rows(batch.labels, net.classes(task));
  const Eigen::MatrixXd logits = cache.acts.back() * net.head(task);
  const int n = batch.size();
  TrainGradients out;
  out.loss = (logits - y).squaredNorm() / (logits.rows() * logits.cols());
  Eigen::MatrixXd dlogits = per_example_dlogits(logits, y);
  out.head = cache.acts.back().transpose() * dlogits / n;
  BackwardResult back = run_backward(net, cache, dlogits, task);
  out.encoder =
      flatten_mean_grads(net, cache.acts, back.presignals, 1.0 / n);
  return out;
}

}  // namespace prunelab
