#include "basinlab/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "basinlab/errors.hpp"

namespace basinlab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

MatrixMap as_matrix(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_matrix(const Tensor& t, std::string_view what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be rank 2, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  return data_.size() / shape_[0];
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

// ---- affine ---------------------------------------------------------------

Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_matrix(x, "affine input");
  require_matrix(W, "affine weight");
  if (x.cols() != W.rows()) {
    throw ShapeError("affine: input " + shape_str(x.shape()) + " does not conform to weight " + shape_str(W.shape()));
  }
  if (b.size() != W.cols()) throw ShapeError("affine: bias length does not match output width");
  check_finite(x, "affine input");

  Tensor y({x.rows(), W.cols()});
  auto ym = as_matrix(y);
  ym.noalias() = as_matrix(x) * as_matrix(W);
  const auto bias = b.data();
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias[j];
  }
  return y;
}

AffineGrads affine_backward(const Tensor& dy, const Tensor& x, const Tensor& W, bool need_dx) {
  if (dy.rows() != x.rows() || dy.cols() != W.cols()) throw ShapeError("affine_backward: upstream gradient shape");
  AffineGrads g;
  g.dW = Tensor({W.rows(), W.cols()});
  as_matrix(g.dW).noalias() = as_matrix(x).transpose() * as_matrix(dy);
  g.db = Tensor({W.cols()});
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    for (std::size_t j = 0; j < dy.cols(); ++j) g.db[j] += dy(i, j);
  }
  if (need_dx) {
    g.dx = Tensor({x.rows(), x.cols()});
    as_matrix(g.dx).noalias() = as_matrix(dy) * as_matrix(W).transpose();
  }
  return g;
}

// ---- batch normalization ------------------------------------------------

BatchNormState BatchNormState::identity(std::size_t features) {
  BatchNormState bn;
  bn.gamma.assign(features, 1.0);
  bn.beta.assign(features, 0.0);
  bn.running_mean.assign(features, 0.0);
  bn.running_var.assign(features, 1.0);
  return bn;
}

void BatchNormState::validate() const {
  const std::size_t f = gamma.size();
  if (beta.size() != f || running_mean.size() != f || running_var.size() != f) {
    throw ShapeError("batch-norm state vectors must share one feature count");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("batch-norm epsilon must be positive");
  for (double v : running_var) {
    if (!(v >= 0.0)) throw InvalidArgument("batch-norm running variance must be non-negative");
  }
}

Tensor batchnorm_forward(const Tensor& x, BatchNormState& bn, Mode mode, BatchNormCache* cache,
                         bool update_running) {
  require_matrix(x, "batchnorm input");
  bn.validate();
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (f != bn.features()) throw ShapeError("batchnorm: feature count does not match state");
  check_finite(x, "batchnorm input");

  Tensor y({n, f});
  std::vector<double> mean(f, 0.0);
  std::vector<double> var(f, 0.0);

  if (mode == Mode::train) {
    if (n < 2) throw InvalidArgument("batchnorm: train mode needs a batch of at least 2");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += x(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(n);
    check_finite(mean, "batchnorm batch mean");
    check_finite(var, "batchnorm batch variance");
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }

  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + bn.epsilon);

  Tensor xhat({n, f});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      xhat(i, j) = (x(i, j) - mean[j]) * inv_std[j];
      y(i, j) = bn.gamma[j] * xhat(i, j) + bn.beta[j];
    }
  }

  BatchStats stats;
  if (mode == Mode::train) {
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    stats.mean = mean;
    stats.var.resize(f);
    for (std::size_t j = 0; j < f; ++j) stats.var[j] = var[j] * unbias;
    stats.count = n;
    if (update_running) {
      const double m = bn.momentum;
      for (std::size_t j = 0; j < f; ++j) {
        bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * stats.mean[j];
        bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * stats.var[j];
      }
    }
  }

  if (cache) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->stats = std::move(stats);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& dy, std::span<const double> gamma, const BatchNormCache& cache) {
  const Tensor& xhat = cache.xhat;
  if (dy.shape() != xhat.shape()) throw ShapeError("batchnorm_backward: upstream gradient shape");
  const std::size_t n = dy.rows();
  const std::size_t f = dy.cols();

  BatchNormGrads g;
  g.dgamma.assign(f, 0.0);
  g.dbeta.assign(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      g.dgamma[j] += dy(i, j) * xhat(i, j);
      g.dbeta[j] += dy(i, j);
    }
  }

  g.dx = Tensor({n, f});
  if (cache.mode == Mode::eval) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) g.dx(i, j) = dy(i, j) * gamma[j] * cache.inv_std[j];
    }
    return g;
  }

  // dx = inv_std / N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat * xhat)), dxhat = dy * gamma
  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < f; ++j) {
    const double sum_dxhat = g.dbeta[j] * gamma[j];
    const double sum_dxhat_xhat = g.dgamma[j] * gamma[j];
    const double scale = cache.inv_std[j] / nn;
    for (std::size_t i = 0; i < n; ++i) {
      const double dxhat = dy(i, j) * gamma[j];
      g.dx(i, j) = scale * (nn * dxhat - sum_dxhat - xhat(i, j) * sum_dxhat_xhat);
    }
  }
  return g;
}

// ---- dropout --------------------------------------------------------------

namespace {
void check_dropout_args(const Tensor& x, double rate, const Tensor& mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  require_same_shape(x, mask, "dropout mask");
}
}  // namespace

Tensor dropout_forward(const Tensor& x, double rate, const Tensor& mask) {
  check_dropout_args(x, rate, mask);
  const double scale = 1.0 / (1.0 - rate);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i] * scale;
  return y;
}

Tensor dropout_backward(const Tensor& dy, double rate, const Tensor& mask) {
  return dropout_forward(dy, rate, mask);
}

// ---- relu -----------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& x) {
  require_same_shape(dy, x, "relu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---- softmax / cross-entropy ----------------------------------------------

Tensor softmax(const Tensor& logits) {
  require_matrix(logits, "softmax input");
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) p(i, j) /= z;
  }
  return p;
}

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "logits");
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != n) throw ShapeError("softmax_xent: label count does not match batch");
  check_finite(logits, "logits");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw InvalidArgument("softmax_xent: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
  }

  XentResult r;
  r.dlogits = Tensor({n, c});
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(z);
    const auto label = static_cast<std::size_t>(labels[i]);
    total += lse - logits(i, label);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits(i, j) - lse);
      r.dlogits(i, j) = (p - (j == label ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.loss = total * inv_n;
  return r;
}

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(t.rows(), 0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    int best = -1;
    double best_v = 0.0;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const double v = t(i, j);
      if (std::isnan(v)) continue;
      if (best < 0 || v > best_v) {
        best = static_cast<int>(j);
        best_v = v;
      }
    }
    out[i] = best < 0 ? 0 : best;
  }
  return out;
}

}  // namespace basinlab
