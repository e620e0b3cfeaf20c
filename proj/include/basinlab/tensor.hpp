#pragma once

// Dense row-major float64 tensors and the layer kernels FC networks need:
// affine, batch normalization, dropout, ReLU and softmax cross-entropy.
// Each kernel has a matching backward that consumes whatever its forward cached.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace basinlab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::size_t rows() const;
  [[nodiscard]] std::size_t cols() const;

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::vector<double>& storage() { return data_; }
  [[nodiscard]] const std::vector<double>& storage() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws NonFiniteError naming `what` if any entry is NaN or Inf.
void check_finite(std::span<const double> values, std::string_view what);
inline void check_finite(const Tensor& t, std::string_view what) { check_finite(t.data(), what); }
[[nodiscard]] bool all_finite(std::span<const double> values);

enum class Mode { train, eval };

// ---- affine ---------------------------------------------------------------

/// y = x W + b for x[batch, n_in], W[n_in, n_out], b[n_out].
Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b);

struct AffineGrads {
  Tensor dx;
  Tensor dW;
  Tensor db;
};

/// `need_dx = false` skips the input gradient (first layer).
AffineGrads affine_backward(const Tensor& dy, const Tensor& x, const Tensor& W, bool need_dx = true);

// ---- batch normalization ------------------------------------------------

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = kBatchNormEpsilon;
  double momentum = kBatchNormMomentum;

  static BatchNormState identity(std::size_t features);
  [[nodiscard]] std::size_t features() const { return gamma.size(); }
  void validate() const;
};

/// Per-feature statistics of one training batch. `var` is the unbiased estimate.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::size_t count = 0;
};

struct BatchNormCache {
  Mode mode = Mode::train;
  Tensor xhat;
  std::vector<double> inv_std;
  BatchStats stats;
};

/// Train mode normalizes with the biased batch variance and folds the batch
/// statistics into the running averages (unbiased variance); eval mode uses the
/// running statistics. `update_running = false` leaves them untouched.
Tensor batchnorm_forward(const Tensor& x, BatchNormState& bn, Mode mode,
                         BatchNormCache* cache = nullptr, bool update_running = true);

struct BatchNormGrads {
  Tensor dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

BatchNormGrads batchnorm_backward(const Tensor& dy, std::span<const double> gamma,
                                  const BatchNormCache& cache);

// ---- dropout --------------------------------------------------------------

/// Inverted dropout: x * mask / (1 - rate). The mask is supplied by the caller.
Tensor dropout_forward(const Tensor& x, double rate, const Tensor& mask);
Tensor dropout_backward(const Tensor& dy, double rate, const Tensor& mask);

// ---- relu -----------------------------------------------------------------

Tensor relu_forward(const Tensor& x);
/// Gradient passes where the forward input was strictly positive.
Tensor relu_backward(const Tensor& dy, const Tensor& x);

// ---- softmax / cross-entropy ----------------------------------------------

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

struct XentResult {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean of -log softmax(logits)[label]; gradient is (softmax - onehot) / batch.
XentResult softmax_xent(const Tensor& logits, std::span<const int> labels);

/// Argmax per row; ties go to the lowest index and NaN entries never win.
std::vector<int> argmax_rows(const Tensor& t);

}  // namespace basinlab
