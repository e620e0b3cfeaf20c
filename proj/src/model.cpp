#include "basinlab/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "basinlab/errors.hpp"
#include "basinlab/hash.hpp"

namespace basinlab {

// ---- ModelSpec ------------------------------------------------------------

ModelSpec ModelSpec::fc2(bool with_batch_norm) {
  return ModelSpec{{784, 50, 10}, {with_batch_norm}, 0.0};
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2) throw InvalidArgument("model needs at least an input and an output size");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw InvalidArgument("layer sizes must be positive");
  }
  if (batch_norm.size() != hidden_layers()) {
    throw InvalidArgument("batch_norm needs one flag per hidden layer (" + std::to_string(hidden_layers()) + ")");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must lie in [0, 1)");
}

std::string ModelSpec::canonical() const {
  std::string out = "mlp-relu;layers=";
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(layer_sizes[i]);
  }
  out += ";bn=";
  for (bool b : batch_norm) out += b ? '1' : '0';
  char buf[64];
  std::snprintf(buf, sizeof buf, ";dropout=%.17g", dropout_rate);
  return out + buf;
}

std::string ModelSpec::hash() const { return hex64(fnv1a(canonical())); }

// ---- Layout / ParameterVector --------------------------------------------

Layout::Layout(std::vector<LayoutEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.offset != total_ || e.size != shape_size(e.shape)) {
      throw InvalidArgument("layout entries must tile the parameter vector without gaps");
    }
    total_ += e.size;
  }
}

const LayoutEntry& Layout::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw InvalidArgument("no parameter tensor named '" + std::string(name) + "'");
}

ParameterVector::ParameterVector(std::shared_ptr<const Layout> layout, std::string config_hash)
    : layout_(std::move(layout)), config_hash_(std::move(config_hash)), data_(layout_->total(), 0.0) {}

ParameterVector::ParameterVector(std::shared_ptr<const Layout> layout, std::string config_hash,
                                 std::vector<double> data)
    : layout_(std::move(layout)), config_hash_(std::move(config_hash)), data_(std::move(data)) {
  if (data_.size() != layout_->total()) {
    throw ShapeError("parameter data length " + std::to_string(data_.size()) + " does not match layout size " +
                     std::to_string(layout_->total()));
  }
}

std::span<double> ParameterVector::view(std::string_view name) {
  const auto& e = layout_->find(name);
  return std::span<double>(data_).subspan(e.offset, e.size);
}

std::span<const double> ParameterVector::view(std::string_view name) const {
  const auto& e = layout_->find(name);
  return std::span<const double>(data_).subspan(e.offset, e.size);
}

Tensor ParameterVector::tensor(std::string_view name) const {
  const auto& e = layout_->find(name);
  auto v = std::span<const double>(data_).subspan(e.offset, e.size);
  return Tensor(e.shape, std::vector<double>(v.begin(), v.end()));
}

void ParameterVector::require_compatible(const ParameterVector& other, std::string_view context) const {
  if (!compatible(other)) {
    throw IncompatibleError(std::string(context) + ": parameter vectors come from different models (" + config_hash_ +
                            " vs " + other.config_hash_ + ")");
  }
}

bool ParameterVector::bitwise_equal(const ParameterVector& other) const {
  return config_hash_ == other.config_hash_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

ParameterVector ParameterVector::with_data(std::vector<double> data) const {
  return ParameterVector(layout_, config_hash_, std::move(data));
}

std::vector<Tensor> unflatten(const ParameterVector& params) {
  std::vector<Tensor> out;
  out.reserve(params.layout().entries().size());
  for (const auto& e : params.layout().entries()) out.push_back(params.tensor(e.name));
  return out;
}

ParameterVector flatten(std::shared_ptr<const Layout> layout, std::string config_hash,
                        const std::vector<Tensor>& tensors) {
  const auto& entries = layout->entries();
  if (tensors.size() != entries.size()) throw ShapeError("flatten: tensor count does not match layout");
  std::vector<double> data(layout->total());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (tensors[i].shape() != entries[i].shape) throw ShapeError("flatten: shape mismatch for " + entries[i].name);
    std::copy(tensors[i].data().begin(), tensors[i].data().end(), data.begin() + static_cast<std::ptrdiff_t>(entries[i].offset));
  }
  return ParameterVector(std::move(layout), std::move(config_hash), std::move(data));
}

double norm(const ParameterVector& p) {
  double s = 0.0;
  for (double v : p.data()) s += v * v;
  return std::sqrt(s);
}

double distance(const ParameterVector& p, const ParameterVector& q) {
  p.require_compatible(q, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data()[i] - q.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// ---- InitScheme -----------------------------------------------------------

void InitScheme::validate() const {
  if (kind == Kind::gaussian && !(std > 0.0)) throw InvalidArgument("gaussian init needs std > 0");
}

std::string_view init_kind_name(InitScheme::Kind kind) {
  return kind == InitScheme::Kind::gaussian ? "gaussian" : "xavier_uniform";
}

InitScheme::Kind parse_init_kind(std::string_view name) {
  if (name == "xavier_uniform" || name == "xavier") return InitScheme::Kind::xavier_uniform;
  if (name == "gaussian") return InitScheme::Kind::gaussian;
  throw InvalidArgument("unknown init scheme '" + std::string(name) + "'");
}

// ---- GradientRecord / ForwardTrace ---------------------------------------

std::span<const double> GradientRecord::view(std::string_view name) const {
  const auto& e = layout->find(name);
  return std::span<const double>(grad).subspan(e.offset, e.size);
}

std::vector<BatchStats> ForwardTrace::batch_stats() const {
  std::vector<BatchStats> out;
  for (const auto& h : hidden_) {
    if (h.has_bn) out.push_back(h.bn.stats);
  }
  return out;
}

double accuracy(const Tensor& scores, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---- Model ----------------------------------------------------------------

namespace {
std::string wname(std::size_t l) { return "W" + std::to_string(l); }
std::string bname(std::size_t l) { return "b" + std::to_string(l); }
std::string gname(std::size_t l) { return "gamma" + std::to_string(l); }
std::string betaname(std::size_t l) { return "beta" + std::to_string(l); }
}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  hash_ = spec_.hash();
  std::vector<LayoutEntry> entries;
  std::size_t offset = 0;
  auto add = [&](std::string name, Shape shape) {
    const std::size_t n = shape_size(shape);
    entries.push_back({std::move(name), std::move(shape), offset, n});
    offset += n;
  };
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  int bn_count = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec_.layer_sizes[l];
    const std::size_t out = spec_.layer_sizes[l + 1];
    add(wname(l), {in, out});
    add(bname(l), {out});
    if (l < spec_.hidden_layers()) {
      if (spec_.batch_norm[l]) {
        add(gname(l), {out});
        add(betaname(l), {out});
        bn_index_.push_back(bn_count++);
      } else {
        bn_index_.push_back(-1);
      }
    }
  }
  layout_ = std::make_shared<const Layout>(std::move(entries));
}

Model build(const ModelSpec& spec) { return Model(spec); }

bool Model::has_batch_norm() const {
  return std::any_of(bn_index_.begin(), bn_index_.end(), [](int i) { return i >= 0; });
}

ParameterVector Model::zero_parameters() const { return ParameterVector(layout_, hash_); }

ParameterVector Model::initialize(const InitScheme& scheme, const rng::StreamKey& init_key) const {
  scheme.validate();
  ParameterVector p = zero_parameters();
  auto data = p.data();
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& e = layout_->find(wname(l));
    const double fan_in = static_cast<double>(e.shape[0]);
    const double fan_out = static_cast<double>(e.shape[1]);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < e.size; ++i) {
      const std::size_t k = e.offset + i;
      const auto key = init_key.offset(2 * k);
      data[k] = scheme.kind == InitScheme::Kind::xavier_uniform
                    ? a * (2.0 * rng::draw_uniform(key) - 1.0)
                    : scheme.mean + scheme.std * rng::draw_gaussian(key);
    }
    if (l < spec_.hidden_layers() && spec_.batch_norm[l]) {
      for (double& g : p.view(gname(l))) g = 1.0;
    }
  }
  return p;
}

BnStats Model::initial_bn_stats() const {
  BnStats s;
  for (std::size_t l = 0; l < spec_.hidden_layers(); ++l) {
    if (bn_index_[l] >= 0) {
      const std::size_t f = spec_.layer_sizes[l + 1];
      s.layers.push_back({std::vector<double>(f, 0.0), std::vector<double>(f, 1.0)});
    }
  }
  return s;
}

DropoutMasks Model::dropout_masks(const rng::SeedPlan& seeds, std::uint64_t epoch, std::uint64_t batch,
                                  std::size_t rows) const {
  DropoutMasks masks;
  if (spec_.dropout_rate <= 0.0) return masks;
  for (std::size_t l = 0; l < spec_.hidden_layers(); ++l) {
    const std::size_t width = spec_.layer_sizes[l + 1];
    auto key = seeds.key(rng::Stream::dropout, rng::dropout_counter(epoch, batch, l));
    masks.emplace_back(Shape{rows, width}, rng::dropout_mask(key, rows * width, spec_.dropout_rate));
  }
  return masks;
}

void Model::require_params(const ParameterVector& params) const {
  if (params.config_hash() != hash_ || params.size() != layout_->total()) {
    throw IncompatibleError("parameter vector " + params.config_hash() + " does not belong to model " + hash_);
  }
}

ForwardTrace Model::forward(const ParameterVector& params, BnStats& stats, const Tensor& x, Mode mode,
                            const DropoutMasks* masks, bool update_running) const {
  require_params(params);
  if (x.rank() != 2 || x.cols() != spec_.input_dim()) {
    throw ShapeError("model input must be [batch, " + std::to_string(spec_.input_dim()) + "]");
  }
  const bool use_dropout = mode == Mode::train && spec_.dropout_rate > 0.0 && masks != nullptr;
  if (use_dropout && masks->size() != spec_.hidden_layers()) {
    throw InvalidArgument("dropout needs one mask per hidden layer");
  }

  ForwardTrace t;
  t.mode_ = mode;
  t.params_ = &params;
  t.input_ = &x;
  t.masks_ = use_dropout ? masks : nullptr;
  t.hidden_.resize(spec_.hidden_layers());

  const Tensor* h = &x;
  for (std::size_t l = 0; l < spec_.hidden_layers(); ++l) {
    auto& layer = t.hidden_[l];
    layer.pre = affine_forward(*h, params.tensor(wname(l)), params.tensor(bname(l)));
    if (bn_index_[l] >= 0) {
      auto& rs = stats.layers.at(static_cast<std::size_t>(bn_index_[l]));
      BatchNormState bn;
      auto g = params.view(gname(l));
      auto b = params.view(betaname(l));
      bn.gamma.assign(g.begin(), g.end());
      bn.beta.assign(b.begin(), b.end());
      bn.running_mean = rs.mean;
      bn.running_var = rs.var;
      layer.act_in = batchnorm_forward(layer.pre, bn, mode, &layer.bn, update_running);
      layer.has_bn = true;
      if (mode == Mode::train && update_running) {
        rs.mean = std::move(bn.running_mean);
        rs.var = std::move(bn.running_var);
      }
      t.gammas_.push_back(std::move(bn.gamma));
    } else {
      layer.act_in = layer.pre;
      t.gammas_.emplace_back();
    }
    layer.act_out = relu_forward(layer.act_in);
    layer.out = use_dropout ? dropout_forward(layer.act_out, spec_.dropout_rate, (*masks)[l]) : layer.act_out;
    h = &layer.out;
  }
  const std::size_t last = spec_.layer_sizes.size() - 2;
  t.logits_ = affine_forward(*h, params.tensor(wname(last)), params.tensor(bname(last)));
  t.state_ = ForwardTrace::State::forwarded;
  return t;
}

GradientRecord Model::backward(ForwardTrace& trace, const Tensor& dlogits) const {
  if (trace.state_ == ForwardTrace::State::empty) throw InvalidArgument("backward called before forward");
  if (trace.state_ == ForwardTrace::State::consumed) throw InvalidArgument("forward trace already consumed");
  if (dlogits.shape() != trace.logits_.shape()) throw ShapeError("backward: logit gradient shape");
  const ParameterVector& params = *trace.params_;

  GradientRecord rec;
  rec.layout = layout_;
  rec.grad.assign(layout_->total(), 0.0);
  auto put = [&](const std::string& name, std::span<const double> g) {
    const auto& e = layout_->find(name);
    std::copy(g.begin(), g.end(), rec.grad.begin() + static_cast<std::ptrdiff_t>(e.offset));
  };

  const std::size_t n_hidden = spec_.hidden_layers();
  auto layer_input = [&](std::size_t l) -> const Tensor& {
    return l == 0 ? *trace.input_ : trace.hidden_[l - 1].out;
  };

  auto out = affine_backward(dlogits, layer_input(n_hidden), params.tensor(wname(n_hidden)), n_hidden > 0);
  put(wname(n_hidden), out.dW.data());
  put(bname(n_hidden), out.db.data());
  Tensor dh = std::move(out.dx);

  for (std::size_t l = n_hidden; l-- > 0;) {
    const auto& layer = trace.hidden_[l];
    if (trace.masks_) dh = dropout_backward(dh, spec_.dropout_rate, (*trace.masks_)[l]);
    Tensor dz = relu_backward(dh, layer.act_in);
    if (layer.has_bn) {
      auto g = batchnorm_backward(dz, trace.gammas_[l], layer.bn);
      put(gname(l), g.dgamma);
      put(betaname(l), g.dbeta);
      dz = std::move(g.dx);
    }
    auto a = affine_backward(dz, layer_input(l), params.tensor(wname(l)), l > 0);
    put(wname(l), a.dW.data());
    put(bname(l), a.db.data());
    dh = std::move(a.dx);
  }

  trace.state_ = ForwardTrace::State::consumed;
  return rec;
}

LossAndGrad Model::loss_and_grad(const ParameterVector& params, BnStats& stats, const Tensor& x,
                                 std::span<const int> labels, Mode mode, const DropoutMasks* masks,
                                 bool update_running) const {
  auto trace = forward(params, stats, x, mode, masks, update_running);
  auto xent = softmax_xent(trace.logits(), labels);
  LossAndGrad r;
  r.loss = xent.loss;
  r.accuracy = accuracy(trace.logits(), labels);
  r.grad = backward(trace, xent.dlogits);
  r.grad.loss = xent.loss;
  return r;
}

Tensor Model::logits(const ParameterVector& params, const BnStats& stats, const Tensor& inputs) const {
  BnStats local = stats;
  auto trace = forward(params, local, inputs, Mode::eval);
  return trace.logits();
}

Tensor Model::predict(const ParameterVector& params, const BnStats& stats, const Tensor& inputs) const {
  return softmax(logits(params, stats, inputs));
}

}  // namespace basinlab
