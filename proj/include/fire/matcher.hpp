#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fire/encoder.hpp"
#include "fire/filters.hpp"

namespace fire {

/// The four referring sites of one iteration.
struct IterationParams {
  ReferParams context;     // C refers to R
  ReferParams response;    // R refers to C
  ReferParams knowledge;   // K refers to R*
  ReferParams response_k;  // R* refers to K

  static IterationParams init(std::size_t d, Rng& rng);
};

/// Tensors are [B, rows, d]; B is the candidate count.
struct IterationState {
  Tensor context;
  Tensor response;
  Tensor knowledge;
  Tensor response_k;
};

struct MatchMasks {
  Mask context;    // [B * l_c]
  Mask response;   // [B * l_r]
  Mask knowledge;  // [B * l_k], dropped entries already cleared
};

/// Runs `iterations` rounds of mutual referring. Returns states 1..L.
std::vector<IterationState> iterate(const IterationState& initial, const MatchMasks& masks,
                                    std::span<const IterationParams> params, std::size_t iterations);

/// [max ; mean] over the valid steps of each sentence. `x` holds
/// lengths.size() sentences of `steps` rows each. Output [sentences, 2d].
Tensor pool_matching(const Tensor& x, std::size_t steps, std::span<const std::size_t> lengths);

struct AttentionParams {
  Tensor projection;  // [in, a]
  Tensor bias;        // [a]
  Tensor vector;      // [a, 1]

  static AttentionParams init(std::size_t in, std::size_t a, Rng& rng);
};

struct MlpParams {
  Tensor hidden_weights;  // [in, h]
  Tensor hidden_bias;     // [h]
  Tensor output_weights;  // [h, 1]
  Tensor output_bias;     // [1]

  static MlpParams init(std::size_t in, std::size_t h, Rng& rng);
};

/// Parameters shared by every iteration.
struct AggregationParams {
  BiLstmParams context;
  AttentionParams knowledge;
  MlpParams mlp;

  static AggregationParams init(const ModelDims& dims, Rng& rng);
};

/// Chronological recurrent pass over the utterance vectors of each of the
/// `groups` sequences ([groups * slots, in]); [max ; last hidden state].
Tensor context_aggregate(const BiLstmParams& params, const Tensor& utterances, std::size_t slots,
                         std::span<const std::size_t> valid);

/// Attention-weighted sum of kept entry vectors ([groups * slots, in]); the
/// `keep` flags are per slot and shared by every group.
Tensor knowledge_aggregate(const AttentionParams& params, const Tensor& entries, std::size_t slots,
                           std::span<const std::uint8_t> keep, Tensor* weights = nullptr);

/// Scalar MLP score per row: [rows, in] -> [rows, 1].
Tensor mlp_score(const MlpParams& params, const Tensor& x);

struct Prediction {
  std::vector<Tensor> per_iteration;  // each [1, B]
  Tensor distribution;                // [1, B], mean of the above
};

/// Softmax over candidates of each iteration's MLP scores, averaged over
/// iterations. Every entry of `matching` is [B, m].
Prediction predict(const MlpParams& params, std::span<const Tensor> matching, std::size_t candidates);

}  // namespace fire
