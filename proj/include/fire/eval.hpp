#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fire/model.hpp"

namespace fire {

/// 1-based rank of `label` by descending score; ties go to the lower index.
std::size_t rank_of(std::span<const real> scores, std::size_t label);

/// 1 when the true candidate ranks within the top k, else 0.
int recall_at_k(std::span<const real> scores, std::size_t label, std::size_t k);

struct EvalReport {
  std::string dataset;
  std::size_t examples = 0;
  real r1 = 0.0;
  real r2 = 0.0;
  real r5 = 0.0;
  std::vector<std::size_t> ranks;
  std::vector<std::vector<std::uint8_t>> gates;

  nlohmann::json to_json(bool per_example = false) const;
  bool operator==(const EvalReport&) const = default;
};

/// Builds a report from the true-candidate ranks.
EvalReport report_from_ranks(std::vector<std::size_t> ranks, std::string dataset = {});

/// Candidate distribution of one example in evaluation mode.
std::vector<real> score_example(const FireParams& params, const ModelConfig& config, const IndexedExample& example);

/// Evaluation over a dataset; examples are spread over `threads` workers.
EvalReport evaluate(const FireParams& params, const ModelConfig& config, std::span<const IndexedExample> examples,
                    std::size_t threads = 1, std::string dataset = {});

/// As above after checking that `dataset` was indexed with the vocabulary
/// identified by `fingerprint`.
EvalReport evaluate(const FireParams& params, const ModelConfig& config, const IndexedDataset& dataset,
                    std::uint64_t fingerprint, std::size_t threads = 1, std::string name = {});

}  // namespace fire
