#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fire/rng.hpp"
#include "fire/tensor.hpp"

namespace fire {

using Mask = std::vector<std::uint8_t>;

/// Compression layer of one referring site: ReLU([Q; Q~; Q-Q~; Q*Q~] W + b).
struct ReferParams {
  Tensor weight;  // [4d, d]
  Tensor bias;    // [d]

  static ReferParams init(std::size_t d, Rng& rng);
};

struct Referred {
  Tensor output;     // [B, q, d]
  Tensor attention;  // [B, q, v], rows sum to 1 over valid kv rows
};

/// Cross attention from `query` [B, q, d] onto `kv` [B, v, d] followed by the
/// enhancement/compression layer and a residual connection. Masks flag valid
/// rows ([B*q] and [B*v]). Invalid query rows pass through unchanged.
Referred refer(const Tensor& query, std::span<const std::uint8_t> query_mask, const Tensor& kv,
               std::span<const std::uint8_t> kv_mask, const ReferParams& params);

/// Knowledge-aware context: refer(context, knowledge).
Tensor context_filter(const Tensor& context, std::span<const std::uint8_t> context_mask, const Tensor& knowledge,
                      std::span<const std::uint8_t> knowledge_mask, const ReferParams& params);

struct RelevanceScores {
  Tensor pair_scores;               // s_mn [n_c, n_k]
  Tensor entry_scores;              // s_n  [n_k]; only meaningful when has_utterances
  std::size_t valid_utterances = 0;
  bool has_utterances() const { return valid_utterances > 0; }
  /// s_n as plain numbers; -infinity when no utterance is valid.
  std::vector<real> entry_values() const;
};

/// s_mn = u_m^T M e_n over sentence embeddings; s_n = max over the first
/// `valid_utterances` rows.
RelevanceScores entry_relevance(const Tensor& utterance_embeddings, const Tensor& entry_embeddings,
                                const Tensor& relevance_matrix, std::size_t valid_utterances);

enum class GateMode {
  kHard,       // coefficient = keep flag
  kSurrogate,  // coefficient = keep flag * sigmoid(s_n); trains the relevance matrix
};

struct KnowledgeFiltered {
  Tensor knowledge;      // K0 [1, n_k * T_e, d]
  std::vector<std::uint8_t> gate;  // per entry
  Mask token_mask;       // knowledge token mask restricted to kept entries
};

/// Keep flag of one entry: sigmoid(s_n) > gamma (a tie drops the entry).
bool keep_entry(real score, real gamma);
void validate_gamma(real gamma);

/// Context-aware knowledge with entry gating. `knowledge` is [1, n_k*T_e, d]
/// with entries laid out in consecutive blocks of `entry_steps` rows;
/// entries at or beyond `valid_entries` are always dropped.
KnowledgeFiltered knowledge_filter(const Tensor& knowledge, std::span<const std::uint8_t> knowledge_mask,
                                   const Tensor& context, std::span<const std::uint8_t> context_mask,
                                   const RelevanceScores& relevance, std::size_t entry_steps,
                                   std::size_t valid_entries, real gamma, const ReferParams& params,
                                   GateMode mode);

/// JSON record of the relevance scores and gate decisions of one example.
nlohmann::json relevance_dump(const RelevanceScores& relevance, std::span<const std::uint8_t> gate,
                              std::size_t valid_entries, real gamma);

}  // namespace fire
