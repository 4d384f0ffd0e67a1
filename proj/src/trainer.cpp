#include "fire/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "fire/error.hpp"

namespace fire {

void TrainConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("decay rate must lie in (0, 1]");
  if (decay_steps < 1) throw ConfigError("decay steps must be at least 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

Tensor smoothed_loss(std::span<const Tensor> per_iteration, std::size_t label, real epsilon) {
  if (per_iteration.empty()) throw ConfigError("smoothed_loss: no iterations");
  const std::size_t n = per_iteration.front().size();
  if (label >= n) {
    throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(n) + " candidates");
  }
  std::vector<real> weights(n, epsilon);
  weights[label] += 1.0;
  const Tensor coefficients = Tensor::from(per_iteration.front().shape(), std::move(weights));
  Tensor total;
  for (const auto& g : per_iteration) {
    if (g.size() != n) throw ShapeError("smoothed_loss: iterations disagree on candidate count");
    const Tensor term = sum(mul(log_clamped(g, 1e-12), coefficients));
    total = total.node() ? add(total, term) : term;
  }
  return scale(total, -1.0);
}

real lr_at(std::size_t step, real base, real decay, std::size_t every) {
  return base * std::pow(decay, static_cast<real>(step / every));
}

real lr_at(std::size_t step, const TrainConfig& config) {
  return lr_at(step, config.learning_rate, config.decay_rate, config.decay_steps);
}

Adam::Adam(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::apply(std::size_t slot, Tensor& param, std::span<const real> grad, real lr) {
  if (slot >= m_.size()) throw ShapeError("adam: no moments for parameter slot " + std::to_string(slot));
  if (grad.size() != param.size() || m_[slot].size() != param.size()) {
    throw ShapeError("adam: gradient of " + std::to_string(grad.size()) + " values for parameter " +
                     shape_string(param.shape()));
  }
  const real t = static_cast<real>(step_);
  const real c1 = 1.0 - std::pow(kBeta1, t), c2 = 1.0 - std::pow(kBeta2, t);
  auto value = param.mutable_data();
  auto& m = m_[slot];
  auto& v = v_[slot];
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
    v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEpsilon);
  }
}

void Adam::step(const std::vector<Tensor>& params, real lr) {
  if (params.size() != m_.size()) throw ShapeError("adam: parameter list changed size");
  ++step_;
  std::vector<real> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (!p.requires_grad()) continue;
    if (p.has_grad()) {
      apply(i, p, p.grad(), lr);
    } else {
      zeros.assign(p.size(), 0.0);
      apply(i, p, zeros, lr);
    }
  }
}

real clip_gradients(const std::vector<Tensor>& params, real max_norm) {
  real total = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (real g : p.grad()) total += g * g;
  const real norm = std::sqrt(total);
  if (norm > max_norm) {
    const real factor = max_norm / norm;
    for (auto p : params)
      if (p.has_grad())
        for (real& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

nlohmann::json MetricRecord::to_json() const {
  return {{"step", step}, {"split", split}, {"metric", metric}, {"value", value}};
}

std::vector<std::vector<real>> snapshot(const FireParams& params) {
  std::vector<std::vector<real>> out;
  for (const auto& n : params.named()) out.emplace_back(n.tensor.data().begin(), n.tensor.data().end());
  return out;
}

void restore(const FireParams& params, const std::vector<std::vector<real>>& values) {
  auto named = params.named();
  if (named.size() != values.size()) throw ShapeError("restore: snapshot does not match the parameter set");
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto dst = named[i].tensor.mutable_data();
    if (dst.size() != values[i].size()) throw ShapeError("restore: size mismatch for " + named[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

TrainResult train(FireParams& params, Adam& optimizer, const ModelConfig& model, const TrainConfig& config,
                  std::span<const IndexedExample> train_set, std::span<const IndexedExample> validation,
                  const EpochCallback& on_epoch, std::ostream* metrics) {
  model.validate();
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  const auto trainable = params.trainable();
  Rng root(config.seed);
  Rng shuffle_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);

  TrainResult result;
  auto record = [&](std::size_t step, std::string split, std::string metric, real value) {
    result.history.push_back({step, std::move(split), std::move(metric), value});
    if (metrics) *metrics << result.history.back().to_json().dump() << '\n';
  };

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    real epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const real weight = 1.0 / static_cast<real>(end - begin);
      for (auto p : trainable) p.zero_grad();
      real batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = train_set[order[i]];
        Tape tape;
        TapeScope scope(tape);
        const auto fwd = forward(params, model, ex, Mode::kTrain, &dropout_rng);
        const Tensor loss = scale(smoothed_loss(fwd.prediction.per_iteration, ex.label, config.epsilon), weight);
        batch_loss += loss.item();
        tape.backward(loss);
      }
      clip_gradients(trainable, config.clip_norm);
      optimizer.step(trainable, lr_at(optimizer.steps(), config));
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss * static_cast<real>(end - begin);
      record(optimizer.steps(), "train", "loss", batch_loss);
    }
    ++result.epochs_run;
    record(optimizer.steps(), "train", "epoch_loss", epoch_loss / static_cast<real>(order.size()));

    if (!validation.empty()) {
      const real r1 = evaluate(params, model, validation, config.threads).r1;
      record(optimizer.steps(), "validation", "R@1", r1);
      if (r1 > result.best_validation) {
        result.best_validation = r1;
        result.best_step = optimizer.steps();
        result.best_values = snapshot(params);
      }
    }
    if (on_epoch && !on_epoch(epoch, result)) break;
  }
  if (!result.best_values.empty()) {
    restore(params, result.best_values);
  } else {
    result.best_step = optimizer.steps();
    result.best_values = snapshot(params);
  }
  return result;
}

}  // namespace fire
