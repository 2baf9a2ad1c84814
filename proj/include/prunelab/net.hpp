#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "prunelab/errors.hpp"

namespace prunelab {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  bool has_activation = false;  // ReLU applied to this layer's output

  int param_count() const { return in_dim * out_dim; }
};

/// A labeled multi-class batch. Rows of `inputs` are examples.
struct Batch {
  Eigen::MatrixXd inputs;   // n x d
  std::vector<int> labels;  // class indices in [0, C)

  int size() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
};

/// Dense bias-free feed-forward encoder with per-task linear heads.
///
/// Encoder weights live in one flat vector, layer-major and row-major
/// within each layer's in_dim x out_dim matrix; every module in the
/// library shares that flattening. Networks are immutable values:
/// with_weights / with_head build modified copies.
class Network {
 public:
  Network(std::vector<LayerSpec> layers, Eigen::VectorXd weights,
          std::map<int, Eigen::MatrixXd> heads);

  /// He-initialized encoder over the dimension chain `dims`
  /// (input dim, hidden dims..., feature dim), ReLU between encoder
  /// layers and none on the last, plus one random head per task id.
  static Network random_init(const std::vector<int>& dims,
                             const std::vector<int>& head_tasks, int classes,
                             std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const std::map<int, Eigen::MatrixXd>& heads() const { return heads_; }

  int encoder_params() const { return static_cast<int>(weights_.size()); }
  int input_dim() const { return layers_.front().in_dim; }
  int feature_dim() const { return layers_.back().out_dim; }

  bool has_head(int task) const { return heads_.count(task) > 0; }
  const Eigen::MatrixXd& head(int task) const;  // h x C
  int classes(int task) const {
    return static_cast<int>(head(task).cols());
  }

  /// Offset of layer l's first weight in the flat vector.
  int layer_offset(int layer) const { return offsets_[layer]; }

  /// View of layer l's weights as its in_dim x out_dim matrix.
  Eigen::Map<const RowMajorMatrix> layer_matrix(int layer) const;

  Network with_weights(Eigen::VectorXd weights) const;
  Network with_head(int task, Eigen::MatrixXd head) const;

 private:
  std::vector<LayerSpec> layers_;
  Eigen::VectorXd weights_;
  std::map<int, Eigen::MatrixXd> heads_;
  std::vector<int> offsets_;
};

/// Index of the largest coefficient; ties resolve to the lowest index.
int argmax_lowest(const Eigen::VectorXd& v);

/// Encoder output for a single input.
Eigen::VectorXd features(const Network& net, const Eigen::VectorXd& x);

/// Encoder outputs for a batch, one row per example.
Eigen::MatrixXd features_batch(const Network& net, const Eigen::MatrixXd& x);

/// Logits features(x)^T xi_task for a single input.
Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& x,
                        int task);

Eigen::MatrixXd logits_batch(const Network& net, const Eigen::MatrixXd& x,
                             int task);

/// Mean squared error against the one-hot target, averaged over classes.
double mse_loss(const Eigen::VectorXd& logits, int label);

/// Mean of per-example MSE losses over the batch.
double batch_loss(const Network& net, const Batch& batch, int task);

/// Gradient of batch_loss w.r.t. the flat encoder weights. Heads are
/// treated as constants.
Eigen::VectorXd grad(const Network& net, const Batch& batch, int task);

/// Row i is the encoder gradient of example i's loss alone.
Eigen::MatrixXd per_example_grads(const Network& net, const Batch& batch,
                                  int task);

/// Per-layer input activations and pre-activation loss gradients, one row
/// per example. presignals[l] holds d(per-example loss)/dz_l, so the
/// outer product activations[l].row(i)^T * presignals[l].row(i) is
/// example i's gradient for layer l.
struct LayerStreams {
  std::vector<Eigen::MatrixXd> activations;  // n x in_dim per layer
  std::vector<Eigen::MatrixXd> presignals;   // n x out_dim per layer
};

LayerStreams layer_streams(const Network& net, const Batch& batch, int task);

/// One-pass loss + encoder gradient + head gradient, for the trainer.
struct TrainGradients {
  double loss = 0.0;
  Eigen::VectorXd encoder;  // p_enc
  Eigen::MatrixXd head;     // h x C
};

TrainGradients training_gradients(const Network& net, const Batch& batch,
                                  int task);

}  // namespace prunelab
