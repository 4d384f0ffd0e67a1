#include "fire/matcher.hpp"

#include "fire/error.hpp"
#include "fire/init.hpp"

namespace fire {

IterationParams IterationParams::init(std::size_t d, Rng& rng) {
  IterationParams p;
  p.context = ReferParams::init(d, rng);
  p.response = ReferParams::init(d, rng);
  p.knowledge = ReferParams::init(d, rng);
  p.response_k = ReferParams::init(d, rng);
  return p;
}

std::vector<IterationState> iterate(const IterationState& initial, const MatchMasks& masks,
                                    std::span<const IterationParams> params, std::size_t iterations) {
  if (iterations < 1) throw ConfigError("iterations L must be at least 1");
  if (params.size() < iterations) {
    throw ConfigError("need parameters for " + std::to_string(iterations) + " iterations, have " +
                      std::to_string(params.size()));
  }
  std::vector<IterationState> states;
  states.reserve(iterations);
  const IterationState* prev = &initial;
  for (std::size_t l = 0; l < iterations; ++l) {
    const auto& p = params[l];
    IterationState next;
    next.context = refer(prev->context, masks.context, prev->response, masks.response, p.context).output;
    next.response = refer(prev->response, masks.response, prev->context, masks.context, p.response).output;
    next.knowledge = refer(prev->knowledge, masks.knowledge, prev->response_k, masks.response, p.knowledge).output;
    next.response_k = refer(prev->response_k, masks.response, prev->knowledge, masks.knowledge, p.response_k).output;
    states.push_back(std::move(next));
    prev = &states.back();
  }
  return states;
}

Tensor pool_matching(const Tensor& x, std::size_t steps, std::span<const std::size_t> lengths) {
  if (x.rank() < 2) throw ShapeError("pool_matching: expected rows of vectors, got " + shape_string(x.shape()));
  const std::size_t d = x.last_dim();
  const Tensor rows = reshape(x, {x.size() / d, d});
  if (rows.dim(0) != lengths.size() * steps) {
    throw ShapeError("pool_matching: " + std::to_string(lengths.size()) + " sentences of " + std::to_string(steps) +
                     " steps do not cover " + std::to_string(rows.dim(0)) + " rows");
  }
  return concat_last({segment_pool(rows, steps, lengths, PoolMode::kMax),
                      segment_pool(rows, steps, lengths, PoolMode::kMean)});
}

AttentionParams AttentionParams::init(std::size_t in, std::size_t a, Rng& rng) {
  return {init::glorot(in, a, rng), Tensor::zeros({a}, true), init::glorot(a, 1, rng)};
}

MlpParams MlpParams::init(std::size_t in, std::size_t h, Rng& rng) {
  return {init::glorot(in, h, rng), Tensor::zeros({h}, true), init::glorot(h, 1, rng), Tensor::zeros({1}, true)};
}

AggregationParams AggregationParams::init(const ModelDims& dims, Rng& rng) {
  const std::size_t pooled = 2 * dims.encoded_dim();
  const std::size_t matching = 4 * dims.aggregator_hidden + 3 * pooled;
  AggregationParams p;
  p.context = BiLstmParams::init(pooled, dims.aggregator_hidden, rng);
  p.knowledge = AttentionParams::init(pooled, dims.aggregator_hidden, rng);
  p.mlp = MlpParams::init(matching, dims.mlp_hidden, rng);
  return p;
}

Tensor context_aggregate(const BiLstmParams& params, const Tensor& utterances, std::size_t slots,
                         std::span<const std::size_t> valid) {
  const EncodedBatch enc = encode_batch(params, utterances, slots, valid);
  return concat_last({segment_pool(enc.states, slots, valid, PoolMode::kMax), sentence_embeddings(enc)});
}

Tensor knowledge_aggregate(const AttentionParams& params, const Tensor& entries, std::size_t slots,
                           std::span<const std::uint8_t> keep, Tensor* weights) {
  if (entries.rank() != 2 || slots == 0 || entries.dim(0) % slots != 0 || keep.size() != slots) {
    throw ShapeError("knowledge_aggregate: " + shape_string(entries.shape()) + " is not groups of " +
                     std::to_string(slots) + " entries");
  }
  const std::size_t groups = entries.dim(0) / slots, in = entries.dim(1);
  const Tensor scores =
      reshape(matmul(tanh(add_bias(matmul(entries, params.projection), params.bias)), params.vector), {groups, slots});
  Mask mask(groups * slots);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep[i % slots];
  const Tensor attention = softmax_rows(scores, mask);
  if (weights) *weights = attention;
  return reshape(bmm(reshape(attention, {groups, 1, slots}), reshape(entries, {groups, slots, in})), {groups, in});
}

Tensor mlp_score(const MlpParams& params, const Tensor& x) {
  const Tensor hidden = relu(add_bias(matmul(x, params.hidden_weights), params.hidden_bias));
  return add_bias(matmul(hidden, params.output_weights), params.output_bias);
}

Prediction predict(const MlpParams& params, std::span<const Tensor> matching, std::size_t candidates) {
  if (matching.empty()) throw ConfigError("predict: no iterations");
  Prediction out;
  const Mask all(candidates, 1);
  for (const auto& m : matching) {
    if (m.rank() != 2 || m.dim(0) != candidates) {
      throw ShapeError("predict: candidate group " + shape_string(m.shape()) + " is not " +
                       std::to_string(candidates) + " candidates");
    }
    out.per_iteration.push_back(softmax_rows(reshape(mlp_score(params, m), {1, candidates}), all));
  }
  Tensor total = out.per_iteration.front();
  for (std::size_t l = 1; l < out.per_iteration.size(); ++l) total = add(total, out.per_iteration[l]);
  out.distribution = scale(total, 1.0 / static_cast<real>(out.per_iteration.size()));
  return out;
}

}  // namespace fire
