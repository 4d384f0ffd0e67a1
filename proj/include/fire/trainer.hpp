#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fire/eval.hpp"
#include "fire/model.hpp"

namespace fire {

struct TrainConfig {
  real epsilon = 0.05;
  std::size_t batch_size = 16;
  real learning_rate = 0.00025;
  real decay_rate = 0.96;
  std::size_t decay_steps = 5000;
  real clip_norm = 5.0;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // validation workers

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// -sum_l sum_c (y_c + epsilon) log g^l_c with log arguments clamped at 1e-12.
Tensor smoothed_loss(std::span<const Tensor> per_iteration, std::size_t label, real epsilon);

/// Staircase exponential decay.
real lr_at(std::size_t step, real base = 0.00025, real decay = 0.96, std::size_t every = 5000);
real lr_at(std::size_t step, const TrainConfig& config);

class Adam {
 public:
  static constexpr real kBeta1 = 0.9;
  static constexpr real kBeta2 = 0.999;
  static constexpr real kEpsilon = 1e-8;

  /// Moments for every trainable tensor of `params`, in order.
  explicit Adam(const std::vector<Tensor>& params = {});

  /// One update from the accumulated gradients; tensors that do not require
  /// gradients are skipped entirely.
  void step(const std::vector<Tensor>& params, real lr);
  /// Update of a single tensor with an explicit gradient.
  void apply(std::size_t slot, Tensor& param, std::span<const real> grad, real lr);

  std::size_t steps() const { return step_; }
  void set_steps(std::size_t s) { step_ = s; }
  std::vector<std::vector<real>>& first_moments() { return m_; }
  std::vector<std::vector<real>>& second_moments() { return v_; }
  const std::vector<std::vector<real>>& first_moments() const { return m_; }
  const std::vector<std::vector<real>>& second_moments() const { return v_; }

 private:
  std::size_t step_ = 0;
  std::vector<std::vector<real>> m_;
  std::vector<std::vector<real>> v_;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
real clip_gradients(const std::vector<Tensor>& params, real max_norm);

struct MetricRecord {
  std::size_t step = 0;
  std::string split;
  std::string metric;
  real value = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<real> step_losses;
  std::vector<MetricRecord> history;
  real best_validation = -1.0;
  std::size_t best_step = 0;
  std::vector<std::vector<real>> best_values;  // snapshot of FireParams::named()
  std::size_t epochs_run = 0;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(std::size_t epoch, const TrainResult&)>;

/// Mini-batch training with seeded shuffling. When a validation set is given
/// the parameters with the best validation R@1 are restored at the end.
TrainResult train(FireParams& params, Adam& optimizer, const ModelConfig& model, const TrainConfig& config,
                  std::span<const IndexedExample> train_set, std::span<const IndexedExample> validation = {},
                  const EpochCallback& on_epoch = {}, std::ostream* metrics = nullptr);

std::vector<std::vector<real>> snapshot(const FireParams& params);
void restore(const FireParams& params, const std::vector<std::vector<real>>& values);

}  // namespace fire
