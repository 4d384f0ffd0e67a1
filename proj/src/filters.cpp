#include "fire/filters.hpp"

#include <cmath>
#include <limits>

#include "fire/error.hpp"
#include "fire/init.hpp"

namespace fire {

ReferParams ReferParams::init(std::size_t d, Rng& rng) {
  return {init::glorot(4 * d, d, rng), Tensor::zeros({d}, true)};
}

Referred refer(const Tensor& query, std::span<const std::uint8_t> query_mask, const Tensor& kv,
               std::span<const std::uint8_t> kv_mask, const ReferParams& params) {
  if (query.rank() != 3 || kv.rank() != 3 || query.dim(0) != kv.dim(0) || query.dim(2) != kv.dim(2)) {
    throw ShapeError("refer: query " + shape_string(query.shape()) + " and key/value " + shape_string(kv.shape()) +
                     " disagree");
  }
  const std::size_t batch = query.dim(0), q = query.dim(1), v = kv.dim(1), d = query.dim(2);
  if (params.weight.rank() != 2 || params.weight.dim(0) != 4 * d || params.weight.dim(1) != d) {
    throw ShapeError("refer: projection " + shape_string(params.weight.shape()) + " does not fit d=" +
                     std::to_string(d));
  }
  if (query_mask.size() != batch * q || kv_mask.size() != batch * v) {
    throw ShapeError("refer: mask sizes do not match " + shape_string(query.shape()) + " / " +
                     shape_string(kv.shape()));
  }
  Mask cell_mask(batch * q * v);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < v; ++j) cell_mask[(b * q + i) * v + j] = kv_mask[b * v + j];

  const Tensor attention = softmax_rows(bmm_nt(query, kv), cell_mask);
  const Tensor attended = bmm(attention, kv);
  const Tensor enhanced = concat_last({query, attended, sub(query, attended), mul(query, attended)});
  Tensor compressed = relu(add_bias(matmul(enhanced, params.weight), params.bias));
  std::vector<real> row_mask(query_mask.begin(), query_mask.end());
  compressed = mul_rows(compressed, Tensor::from({batch * q}, std::move(row_mask)));
  return {add(compressed, query), attention};
}

Tensor context_filter(const Tensor& context, std::span<const std::uint8_t> context_mask, const Tensor& knowledge,
                      std::span<const std::uint8_t> knowledge_mask, const ReferParams& params) {
  return refer(context, context_mask, knowledge, knowledge_mask, params).output;
}

std::vector<real> RelevanceScores::entry_values() const {
  std::vector<real> out(entry_scores.data().begin(), entry_scores.data().end());
  if (!has_utterances()) out.assign(out.size(), -std::numeric_limits<real>::infinity());
  return out;
}

RelevanceScores entry_relevance(const Tensor& utterance_embeddings, const Tensor& entry_embeddings,
                                const Tensor& relevance_matrix, std::size_t valid_utterances) {
  if (utterance_embeddings.rank() != 2 || entry_embeddings.rank() != 2 ||
      utterance_embeddings.dim(1) != entry_embeddings.dim(1)) {
    throw ShapeError("entry_relevance: embeddings " + shape_string(utterance_embeddings.shape()) + " and " +
                     shape_string(entry_embeddings.shape()) + " disagree");
  }
  const std::size_t n_c = utterance_embeddings.dim(0), n_k = entry_embeddings.dim(0), d = entry_embeddings.dim(1);
  if (valid_utterances > n_c) throw ShapeError("entry_relevance: more valid utterances than rows");
  RelevanceScores out;
  out.valid_utterances = valid_utterances;
  const Tensor projected = reshape(matmul(utterance_embeddings, relevance_matrix), {1, n_c, d});
  out.pair_scores = reshape(bmm_nt(projected, reshape(entry_embeddings, {1, n_k, d})), {n_c, n_k});
  const std::size_t lengths[] = {valid_utterances};
  out.entry_scores = reshape(segment_pool(out.pair_scores, n_c, lengths, PoolMode::kMax), {n_k});
  return out;
}

void validate_gamma(real gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ConfigError("gate threshold gamma must lie in [0, 1), got " + std::to_string(gamma));
  }
}

bool keep_entry(real score, real gamma) { return 1.0 / (1.0 + std::exp(-score)) > gamma; }

KnowledgeFiltered knowledge_filter(const Tensor& knowledge, std::span<const std::uint8_t> knowledge_mask,
                                   const Tensor& context, std::span<const std::uint8_t> context_mask,
                                   const RelevanceScores& relevance, std::size_t entry_steps,
                                   std::size_t valid_entries, real gamma, const ReferParams& params,
                                   GateMode mode) {
  validate_gamma(gamma);
  const std::size_t n_k = relevance.entry_scores.size();
  if (knowledge.rank() != 3 || knowledge.dim(1) != n_k * entry_steps) {
    throw ShapeError("knowledge_filter: knowledge " + shape_string(knowledge.shape()) + " is not " +
                     std::to_string(n_k) + " entries of " + std::to_string(entry_steps) + " steps");
  }
  KnowledgeFiltered out;
  out.gate.assign(n_k, 0);
  std::vector<real> flags(n_k, 0.0);
  for (std::size_t n = 0; n < n_k; ++n) {
    const bool keep = n < valid_entries && relevance.has_utterances() && keep_entry(relevance.entry_scores[n], gamma);
    out.gate[n] = keep;
    flags[n] = keep ? 1.0 : 0.0;
  }
  out.token_mask.assign(knowledge_mask.begin(), knowledge_mask.end());
  std::vector<std::int64_t> owner(n_k * entry_steps);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    owner[i] = static_cast<std::int64_t>(i / entry_steps);
    if (!out.gate[i / entry_steps]) out.token_mask[i] = 0;
  }

  const Tensor referred = refer(knowledge, knowledge_mask, context, context_mask, params).output;
  Tensor coefficient = Tensor::from({n_k, 1}, std::move(flags));
  if (mode == GateMode::kSurrogate) {
    coefficient = mul(coefficient, sigmoid(reshape(relevance.entry_scores, {n_k, 1})));
  }
  out.knowledge = mul_rows(referred, gather_rows(coefficient, owner));
  return out;
}

nlohmann::json relevance_dump(const RelevanceScores& relevance, std::span<const std::uint8_t> gate,
                              std::size_t valid_entries, real gamma) {
  using nlohmann::json;
  const std::size_t n_k = relevance.pair_scores.dim(1);
  const std::size_t entries = std::min(valid_entries, n_k);
  json pairs = json::array();
  for (std::size_t m = 0; m < relevance.valid_utterances; ++m) {
    json row = json::array();
    for (std::size_t n = 0; n < entries; ++n) row.push_back(relevance.pair_scores[m * n_k + n]);
    pairs.push_back(std::move(row));
  }
  json scores = json::array(), sigmoids = json::array(), gates = json::array();
  for (std::size_t n = 0; n < entries; ++n) {
    if (relevance.has_utterances()) {
      const real s = relevance.entry_scores[n];
      scores.push_back(s);
      sigmoids.push_back(1.0 / (1.0 + std::exp(-s)));
    } else {
      scores.push_back(nullptr);  // max over an empty set
      sigmoids.push_back(nullptr);
    }
    gates.push_back(static_cast<bool>(gate[n]));
  }
  return json{{"gamma", gamma},
              {"num_utterances", relevance.valid_utterances},
              {"num_entries", entries},
              {"s_mn", std::move(pairs)},
              {"s_n", std::move(scores)},
              {"sigmoid_s_n", std::move(sigmoids)},
              {"gate", std::move(gates)}};
}

}  // namespace fire
