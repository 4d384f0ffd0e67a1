#include "fire/eval.hpp"

#include <cmath>
#include <thread>

#include "fire/error.hpp"

namespace fire {

std::size_t rank_of(std::span<const real> scores, std::size_t label) {
  if (label >= scores.size()) {
    throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(scores.size()) +
                    " candidates");
  }
  for (real s : scores)
    if (!std::isfinite(s)) throw DataError("non-finite candidate score");
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > scores[label] || (scores[i] == scores[label] && i < label)) ++rank;
  }
  return rank;
}

int recall_at_k(std::span<const real> scores, std::size_t label, std::size_t k) {
  return rank_of(scores, label) <= k ? 1 : 0;
}

nlohmann::json EvalReport::to_json(bool per_example) const {
  nlohmann::json j{{"dataset", dataset}, {"examples", examples}, {"R@1", r1}, {"R@2", r2}, {"R@5", r5}};
  if (per_example) {
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      nlohmann::json row{{"rank", ranks[i]}};
      if (i < gates.size()) {
        auto g = nlohmann::json::array();
        for (auto flag : gates[i]) g.push_back(static_cast<bool>(flag));
        row["gate"] = std::move(g);
      }
      rows.push_back(std::move(row));
    }
    j["per_example"] = std::move(rows);
  }
  return j;
}

EvalReport report_from_ranks(std::vector<std::size_t> ranks, std::string dataset) {
  EvalReport r;
  r.dataset = std::move(dataset);
  r.examples = ranks.size();
  std::size_t hits1 = 0, hits2 = 0, hits5 = 0;
  for (std::size_t rank : ranks) {
    hits1 += rank <= 1;
    hits2 += rank <= 2;
    hits5 += rank <= 5;
  }
  if (!ranks.empty()) {
    const real n = static_cast<real>(ranks.size());
    r.r1 = static_cast<real>(hits1) / n;
    r.r2 = static_cast<real>(hits2) / n;
    r.r5 = static_cast<real>(hits5) / n;
  }
  r.ranks = std::move(ranks);
  return r;
}

std::vector<real> score_example(const FireParams& params, const ModelConfig& config, const IndexedExample& example) {
  const auto result = forward(params, config, example, Mode::kEval);
  const auto values = result.prediction.distribution.data();
  return {values.begin(), values.end()};
}

EvalReport evaluate(const FireParams& params, const ModelConfig& config, std::span<const IndexedExample> examples,
                    std::size_t threads, std::string dataset) {
  std::vector<std::size_t> ranks(examples.size());
  std::vector<std::vector<std::uint8_t>> gates(examples.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < examples.size(); i += stride) {
      const auto result = forward(params, config, examples[i], Mode::kEval);
      ranks[i] = rank_of(result.prediction.distribution.data(), examples[i].label);
      gates[i] = result.gate;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, examples.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  auto report = report_from_ranks(std::move(ranks), std::move(dataset));
  report.gates = std::move(gates);
  return report;
}

EvalReport evaluate(const FireParams& params, const ModelConfig& config, const IndexedDataset& dataset,
                    std::uint64_t fingerprint, std::size_t threads, std::string name) {
  if (dataset.vocab_fingerprint != fingerprint) {
    throw FingerprintMismatchError("dataset vocabulary fingerprint " + std::to_string(dataset.vocab_fingerprint) +
                                   " does not match checkpoint " + std::to_string(fingerprint));
  }
  return evaluate(params, config, dataset.examples, threads, std::move(name));
}

}  // namespace fire
