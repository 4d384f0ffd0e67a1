#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fire/encoder.hpp"
#include "fire/filters.hpp"
#include "fire/matcher.hpp"
#include "fire/text.hpp"

namespace fire {

struct ModelConfig {
  ModelDims dims;
  std::size_t iterations = 3;
  real gamma = 0.3;
  real dropout = 0.2;
  bool use_filters = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

struct FireParams {
  WordRepParams word;
  BiLstmParams encoder;
  ReferParams context_filter;
  ReferParams knowledge_filter;
  Tensor relevance;  // M [d, d]
  std::vector<IterationParams> iterations;
  AggregationParams aggregation;

  static FireParams init(const ModelConfig& config, Tensor pretrained, Tensor task, std::size_t char_vocab,
                         Rng& rng);

  /// Every tensor under a stable name, frozen tables included.
  std::vector<NamedTensor> named() const;
  std::vector<Tensor> trainable() const;
};

enum class Mode { kTrain, kEval };

struct ForwardResult {
  Prediction prediction;
  RelevanceScores relevance;  // empty when filters are disabled
  std::vector<std::uint8_t> gate;
  std::vector<Tensor> entry_attention;  // per iteration, [B, n_k]
};

/// Scores every candidate of one example. Training mode draws dropout masks
/// from `dropout_rng` and uses the differentiable gate surrogate.
ForwardResult forward(const FireParams& params, const ModelConfig& config, const IndexedExample& example,
                      Mode mode = Mode::kEval, Rng* dropout_rng = nullptr);

}  // namespace fire
