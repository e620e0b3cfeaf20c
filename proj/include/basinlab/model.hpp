#pragma once

// Fully connected ReLU networks with optional batch normalization per hidden
// layer, and the flat parameter vector all landscape arithmetic works on.
//
// Hidden layer l:   z = h W_l + b_l;  [z = BN_l(z)];  h = relu(z);  [h = dropout(h)]
// Output layer:     logits = h W_L + b_L
//
// Parameter layout, in order, for every layer l: W<l>, b<l>, then gamma<l>,
// beta<l> when that layer is batch-normalized. Running statistics are model
// state (BnStats) and never part of the parameter vector.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "basinlab/rng.hpp"
#include "basinlab/tensor.hpp"

namespace basinlab {

struct ModelSpec {
  std::vector<std::size_t> layer_sizes;
  std::vector<bool> batch_norm;  // one flag per hidden layer
  double dropout_rate = 0.0;

  /// The [784, 50, 10] two-layer network, batch-normalized hidden layer by default.
  static ModelSpec fc2(bool with_batch_norm = true);

  void validate() const;
  [[nodiscard]] std::size_t hidden_layers() const { return layer_sizes.size() - 2; }
  [[nodiscard]] std::size_t input_dim() const { return layer_sizes.front(); }
  [[nodiscard]] std::size_t num_classes() const { return layer_sizes.back(); }
  [[nodiscard]] std::string canonical() const;
  /// Digest of canonical(); parameter vectors built from equal specs share it.
  [[nodiscard]] std::string hash() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

class Layout {
 public:
  explicit Layout(std::vector<LayoutEntry> entries);

  [[nodiscard]] const std::vector<LayoutEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t total() const { return total_; }
  [[nodiscard]] const LayoutEntry& find(std::string_view name) const;

  friend bool operator==(const Layout& a, const Layout& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<LayoutEntry> entries_;
  std::size_t total_ = 0;
};

class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::shared_ptr<const Layout> layout, std::string config_hash);
  ParameterVector(std::shared_ptr<const Layout> layout, std::string config_hash, std::vector<double> data);

  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] const Layout& layout() const { return *layout_; }
  [[nodiscard]] const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  [[nodiscard]] const std::string& config_hash() const { return config_hash_; }

  [[nodiscard]] std::span<double> view(std::string_view name);
  [[nodiscard]] std::span<const double> view(std::string_view name) const;
  [[nodiscard]] Tensor tensor(std::string_view name) const;

  [[nodiscard]] bool compatible(const ParameterVector& other) const {
    return config_hash_ == other.config_hash_ && data_.size() == other.data_.size();
  }
  /// Throws IncompatibleError when config hashes differ.
  void require_compatible(const ParameterVector& other, std::string_view context) const;

  /// Same hash and the same bit patterns in every slot.
  [[nodiscard]] bool bitwise_equal(const ParameterVector& other) const;

  /// Same shape and hash, new values.
  [[nodiscard]] ParameterVector with_data(std::vector<double> data) const;

 private:
  std::shared_ptr<const Layout> layout_;
  std::string config_hash_;
  std::vector<double> data_;
};

/// Per-layer tensors in layout order.
std::vector<Tensor> unflatten(const ParameterVector& params);
ParameterVector flatten(std::shared_ptr<const Layout> layout, std::string config_hash,
                        const std::vector<Tensor>& tensors);

double norm(const ParameterVector& p);
double distance(const ParameterVector& p, const ParameterVector& q);

struct InitScheme {
  enum class Kind { xavier_uniform, gaussian };
  Kind kind = Kind::xavier_uniform;
  double mean = 0.0;
  double std = 1.0;

  static InitScheme xavier() { return {}; }
  static InitScheme gaussian(double mean, double std) { return {Kind::gaussian, mean, std}; }
  void validate() const;
};

std::string_view init_kind_name(InitScheme::Kind kind);
InitScheme::Kind parse_init_kind(std::string_view name);

/// Running mean/variance for each batch-normalized hidden layer, in order.
struct BnLayerStats {
  std::vector<double> mean;
  std::vector<double> var;
  friend bool operator==(const BnLayerStats&, const BnLayerStats&) = default;
};

struct BnStats {
  std::vector<BnLayerStats> layers;
  friend bool operator==(const BnStats&, const BnStats&) = default;
};

/// One keep-mask tensor per hidden layer; empty when dropout is off.
using DropoutMasks = std::vector<Tensor>;

struct GradientRecord {
  std::shared_ptr<const Layout> layout;
  std::vector<double> grad;  // aligned with the parameter vector
  double loss = 0.0;

  [[nodiscard]] std::span<const double> view(std::string_view name) const;
};

/// Intermediates of one forward pass. Single use: backward consumes it.
class ForwardTrace {
 public:
  enum class State { empty, forwarded, consumed };

  [[nodiscard]] State state() const { return state_; }
  [[nodiscard]] const Tensor& logits() const { return logits_; }
  /// Batch statistics of each BN layer (train mode only).
  [[nodiscard]] std::vector<BatchStats> batch_stats() const;

 private:
  friend class Model;

  struct Hidden {
    Tensor pre;        // h W + b
    BatchNormCache bn;
    Tensor act_in;     // relu input
    Tensor act_out;    // relu output, before dropout
    Tensor out;        // layer output
    bool has_bn = false;
  };

  State state_ = State::empty;
  Mode mode_ = Mode::eval;
  const ParameterVector* params_ = nullptr;
  const Tensor* input_ = nullptr;
  const DropoutMasks* masks_ = nullptr;
  std::vector<Hidden> hidden_;
  Tensor logits_;
  std::vector<std::vector<double>> gammas_;
};

struct LossAndGrad {
  double loss = 0.0;
  double accuracy = 0.0;
  GradientRecord grad;
};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& scores, std::span<const int> labels);

class Model {
 public:
  explicit Model(ModelSpec spec);

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] const std::shared_ptr<const Layout>& layout() const { return layout_; }
  [[nodiscard]] const std::string& config_hash() const { return hash_; }
  [[nodiscard]] std::size_t parameter_count() const { return layout_->total(); }
  [[nodiscard]] bool has_batch_norm() const;

  [[nodiscard]] ParameterVector zero_parameters() const;
  [[nodiscard]] ParameterVector initialize(const InitScheme& scheme, const rng::StreamKey& init_key) const;
  /// Running statistics at mean 0, variance 1.
  [[nodiscard]] BnStats initial_bn_stats() const;

  /// Masks for (epoch, batch) from the dropout stream; empty if dropout_rate is 0.
  [[nodiscard]] DropoutMasks dropout_masks(const rng::SeedPlan& seeds, std::uint64_t epoch,
                                           std::uint64_t batch, std::size_t rows) const;

  /// `params`, `x` and `masks` must outlive the returned trace. Dropout applies
  /// only in train mode and only when masks are given.
  ForwardTrace forward(const ParameterVector& params, BnStats& stats, const Tensor& x, Mode mode,
                       const DropoutMasks* masks = nullptr, bool update_running = true) const;

  /// Reverse-mode gradient of the loss whose logit gradient is `dlogits`.
  GradientRecord backward(ForwardTrace& trace, const Tensor& dlogits) const;

  LossAndGrad loss_and_grad(const ParameterVector& params, BnStats& stats, const Tensor& x,
                            std::span<const int> labels, Mode mode, const DropoutMasks* masks = nullptr,
                            bool update_running = true) const;

  /// Eval-mode logits (running statistics, no dropout).
  [[nodiscard]] Tensor logits(const ParameterVector& params, const BnStats& stats, const Tensor& inputs) const;
  /// Eval-mode softmax probabilities.
  [[nodiscard]] Tensor predict(const ParameterVector& params, const BnStats& stats, const Tensor& inputs) const;

 private:
  void require_params(const ParameterVector& params) const;

  ModelSpec spec_;
  std::shared_ptr<const Layout> layout_;
  std::string hash_;
  std::vector<int> bn_index_;  // hidden layer -> index into BnStats, or -1
};

Model build(const ModelSpec& spec);

}  // namespace basinlab
