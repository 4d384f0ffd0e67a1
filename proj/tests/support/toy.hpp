#pragma once

// Small end-to-end setups on the synthetic corpus.

#include <utility>

#include "fire/init.hpp"
#include "fire/model.hpp"
#include "fire/synthetic.hpp"

namespace fire::testing {

inline ModelDims toy_dims(std::size_t hidden = 8) {
  ModelDims d;
  d.pretrained_dim = 16;
  d.task_dim = 8;
  d.char_dim = 4;
  d.filters_per_width = 4;
  d.hidden = hidden;
  d.aggregator_hidden = hidden;
  d.mlp_hidden = 16;
  return d;
}

inline PaddingLimits toy_limits(std::size_t candidates, std::size_t entries = 3) {
  PaddingLimits l;
  l.max_chars_per_word = 6;
  l.max_words_per_utterance = 4;
  l.max_utterances = 2;
  l.max_words_per_response = 3;
  l.max_words_per_entry = 4;
  l.max_entries = entries;
  l.candidates = candidates;
  return l;
}

inline SyntheticSpec toy_spec(std::size_t episodes, std::size_t candidates, std::size_t entries = 3) {
  SyntheticSpec s;
  s.episodes = episodes;
  s.candidates = candidates;
  s.entries = entries;
  return s;
}

/// Frozen random word tables with a zero PAD row.
inline std::pair<Tensor, Tensor> random_tables(const Vocab& vocab, const ModelDims& dims, Rng& rng) {
  auto pre = init::uniform({vocab.size(), dims.pretrained_dim}, -0.5, 0.5, rng, false);
  auto task = init::uniform({vocab.size(), dims.task_dim}, -0.5, 0.5, rng, false);
  for (std::size_t j = 0; j < dims.pretrained_dim; ++j) pre.mutable_data()[j] = 0.0;
  for (std::size_t j = 0; j < dims.task_dim; ++j) task.mutable_data()[j] = 0.0;
  return {pre, task};
}

struct Toy {
  Vocab vocab;
  PaddingLimits limits;
  ModelConfig config;
  std::vector<RawEpisode> episodes;
  IndexedDataset data;
  FireParams params;
};

inline Toy make_toy(const SyntheticSpec& spec, const PaddingLimits& limits, const ModelConfig& config,
                    std::uint64_t data_seed, std::uint64_t model_seed) {
  Toy t;
  Rng data_rng(data_seed);
  t.episodes = generate_synthetic(spec, data_rng);
  t.vocab = Vocab::build(corpus_tokens(t.episodes), 1);
  t.limits = limits;
  t.config = config;
  t.data = index_dataset(t.episodes, t.vocab, limits);
  Rng model_rng(model_seed);
  auto [pre, task] = random_tables(t.vocab, config.dims, model_rng);
  t.params = FireParams::init(config, pre, task, t.vocab.char_size(), model_rng);
  return t;
}

/// Adds small noise to every trainable tensor so zero-initialized biases do
/// not leave ReLU inputs sitting exactly on the kink.
inline void perturb(const FireParams& params, Rng& rng, real scale = 0.05) {
  for (auto t : params.trainable())
    for (real& v : t.mutable_data()) v += rng.uniform(-scale, scale);
}

inline ModelConfig toy_config(std::size_t iterations = 2, std::size_t hidden = 8) {
  ModelConfig c;
  c.dims = toy_dims(hidden);
  c.iterations = iterations;
  c.gamma = 0.2;
  return c;
}

}  // namespace fire::testing
