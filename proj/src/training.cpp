#include "basinlab/training.hpp"

#include "basinlab/errors.hpp"
#include "basinlab/hash.hpp"

namespace basinlab {

EpochMetrics run_epoch(const Model& model, RunState& state, const optim::OptimizerSpec& spec, const Dataset& train,
                       const ParameterVector& init, const rng::SeedPlan& seeds, std::size_t epoch,
                       std::size_t batch_size) {
  if (train.empty()) throw InvalidArgument("run_epoch: empty training data");
  if (batch_size == 0) throw InvalidArgument("run_epoch: batch size must be positive");
  spec.validate();
  if (state.opt.size() != state.theta.size()) state.opt = optim::OptimizerState::zeros(state.theta.size());
  if (state.bn.layers.empty() && model.has_batch_norm()) state.bn = model.initial_bn_stats();

  const std::size_t n = train.size();
  const auto order = rng::shuffle_indices(seeds.key(rng::Stream::shuffle, rng::shuffle_counter(epoch)), n);

  EpochMetrics m;
  m.stream_digest = fnv1a_values(std::span<const std::size_t>(order));
  double loss_sum = 0.0;
  double acc_sum = 0.0;
  std::size_t seen = 0;
  const std::size_t min_batch = model.has_batch_norm() ? 2 : 1;

  for (std::size_t begin = 0, b = 0; begin < n; begin += batch_size, ++b) {
    const std::size_t end = std::min(n, begin + batch_size);
    if (end - begin < min_batch) break;
    const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
    const Dataset batch = train.gather(idx);
    const DropoutMasks masks = model.dropout_masks(seeds, epoch, b, batch.size());
    for (const auto& mask : masks) m.stream_digest = fnv1a_values(mask.data(), m.stream_digest);
    const DropoutMasks* mask_ptr = masks.empty() ? nullptr : &masks;

    auto lg = model.loss_and_grad(state.theta, state.bn, batch.inputs, batch.labels, Mode::train, mask_ptr);
    loss_sum += lg.loss * static_cast<double>(batch.size());
    acc_sum += lg.accuracy * static_cast<double>(batch.size());
    seen += batch.size();

    optim::GradFn grad_fn;
    if (spec.rk2) {
      // second stage: same minibatch and masks, running statistics untouched
      grad_fn = [&](std::span<const double> probe) {
        BnStats scratch = state.bn;
        const auto at = state.theta.with_data(std::vector<double>(probe.begin(), probe.end()));
        return model.loss_and_grad(at, scratch, batch.inputs, batch.labels, Mode::train, mask_ptr, false).grad.grad;
      };
    }
    optim::step(spec, state.opt, state.theta.data(), lg.grad.grad, grad_fn);
    check_finite(state.theta.data(), "parameters after step");
    ++m.batches;
  }

  m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
  m.train_accuracy = seen ? acc_sum / static_cast<double>(seen) : 0.0;
  m.dist_from_init = distance(state.theta, init);
  m.weight_norm = norm(state.theta);
  return m;
}

namespace {

EpochRecord evaluate_record(const Model& model, const RunState& state, const ParameterVector& init,
                            const Dataset& train, const Dataset* test, const ScheduleOptions& options,
                            std::size_t epoch, const std::string& label, BnStats* refreshed,
                            landscape::Evaluation* train_eval) {
  EpochRecord r;
  r.epoch = epoch;
  r.optimizer = label;
  const BnStats stats = landscape::refresh_bn_stats(model, state.theta, train, options.refresh);
  const auto tr = landscape::evaluate(model, state.theta, stats, train);
  r.train_loss = tr.loss;
  r.train_accuracy = tr.accuracy;
  const bool eval_test = test && (options.eval_every <= 1 || epoch % options.eval_every == 0);
  if (eval_test) {
    const auto te = landscape::evaluate(model, state.theta, stats, *test);
    r.test_loss = te.loss;
    r.test_accuracy = te.accuracy;
  }
  r.dist_from_init = distance(state.theta, init);
  r.weight_norm = norm(state.theta);
  if (refreshed) *refreshed = stats;
  if (train_eval) *train_eval = tr;
  return r;
}

}  // namespace

ScheduleResult run_schedule(const Model& model, const ParameterVector& theta0, const optim::SwitchSchedule& schedule,
                            std::size_t total_epochs, const Dataset& train, const Dataset* test,
                            const rng::SeedPlan& seeds, const ScheduleOptions& options) {
  schedule.validate();
  for (const auto& seg : schedule.segments) {
    if (seg.start_epoch >= total_epochs) {
      throw InvalidArgument("schedule segment starts at epoch " + std::to_string(seg.start_epoch) +
                            ", beyond the " + std::to_string(total_epochs) + "-epoch run");
    }
  }

  ScheduleResult result;
  RunState state{theta0, optim::OptimizerState::zeros(theta0.size()), model.initial_bn_stats()};

  auto checkpoint = [&](std::size_t epoch, const std::string& label) {
    Checkpoint c;
    landscape::Evaluation ev;
    auto rec = evaluate_record(model, state, theta0, train, test, options, epoch, label, &c.bn, &ev);
    c.params = state.theta;
    c.model = model.spec();
    c.optimizer = label;
    c.epoch = epoch;
    c.master_seed = seeds.master_seed;
    c.run_hash = options.run_hash;
    c.eval_loss = ev.loss;
    c.eval_accuracy = ev.accuracy;
    result.checkpoints.push_back(std::move(c));
    return rec;
  };

  std::size_t segment = 0;
  const auto& first = schedule.segments.front().spec;
  result.series.push_back(checkpoint(0, first.label()));

  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    while (segment + 1 < schedule.segments.size() && schedule.segments[segment + 1].start_epoch <= epoch) {
      ++segment;
      if (!options.warm_start) state.opt = optim::OptimizerState::zeros(state.theta.size());
    }
    const auto& spec = schedule.segments[segment].spec;
    const auto m = run_epoch(model, state, spec, train, theta0, seeds, epoch, options.batch_size);

    const std::size_t done = epoch + 1;
    const bool boundary = segment + 1 < schedule.segments.size() && schedule.segments[segment + 1].start_epoch == done;
    EpochRecord rec;
    if (boundary || done == total_epochs) {
      rec = checkpoint(done, spec.label());
    } else {
      rec = evaluate_record(model, state, theta0, train, test, options, done, spec.label(), nullptr, nullptr);
    }
    rec.minibatch_loss = m.train_loss;
    rec.minibatch_accuracy = m.train_accuracy;
    rec.stream_digest = m.stream_digest;
    result.series.push_back(std::move(rec));
  }
  return result;
}

}  // namespace basinlab
