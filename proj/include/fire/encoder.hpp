#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fire/rng.hpp"
#include "fire/tensor.hpp"

namespace fire {

/// Sizes of the word representation and recurrent layers. The defaults are
/// the full-scale model; tests and the synthetic corpus use scaled-down sets.
struct ModelDims {
  std::size_t pretrained_dim = 300;
  std::size_t task_dim = 100;
  std::size_t char_dim = 16;
  std::size_t filters_per_width = 50;
  std::vector<std::size_t> filter_widths = {3, 4, 5};
  std::size_t hidden = 200;             // encoder, per direction
  std::size_t aggregator_hidden = 200;  // chronological context aggregator, per direction
  std::size_t mlp_hidden = 256;

  std::size_t char_features() const { return filters_per_width * filter_widths.size(); }
  std::size_t word_dim() const { return pretrained_dim + task_dim + char_features(); }
  std::size_t encoded_dim() const { return 2 * hidden; }
  std::size_t max_filter_width() const;
  bool operator==(const ModelDims&) const = default;
};

/// One LSTM direction. Gate blocks are laid out [input | forget | cell | output].
struct LstmParams {
  Tensor input_weights;      // [in, 4h]
  Tensor recurrent_weights;  // [h, 4h]
  Tensor bias;               // [4h]

  std::size_t hidden() const { return recurrent_weights.dim(0); }
  static LstmParams init(std::size_t input, std::size_t hidden, Rng& rng);
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  std::size_t hidden() const { return forward.hidden(); }
  static BiLstmParams init(std::size_t input, std::size_t hidden, Rng& rng);
};

struct WordRepParams {
  Tensor pretrained;  // frozen [V, pretrained_dim]
  Tensor task;        // frozen [V, task_dim]
  Tensor char_table;  // [C, char_dim]; row 0 (PAD) is never read
  std::vector<std::size_t> widths;
  std::vector<Tensor> conv_weights;  // [width * char_dim, filters]
  std::vector<Tensor> conv_biases;   // [filters]

  std::size_t char_features() const;
  /// `pretrained`/`task` are taken as given and marked frozen.
  static WordRepParams init(Tensor pretrained, Tensor task, std::size_t char_vocab, const ModelDims& dims, Rng& rng);
};

/// Char-CNN features for `words` words of `chars` character ids each:
/// per width, convolution + ReLU + max over positions. Output [words, 3F].
Tensor char_conv(const WordRepParams& params, std::span<const std::int32_t> char_ids, std::size_t chars);

/// [pretrained ; task ; char_conv] per word. Output [words, word_dim].
Tensor word_representation(const WordRepParams& params, std::span<const std::int32_t> word_ids,
                           std::span<const std::int32_t> char_ids, std::size_t chars);

/// A batch of equal-capacity sequences: rows are (sequence, step) pairs,
/// sequence-major. Steps at or beyond a sequence's length are zero.
struct EncodedBatch {
  Tensor states;  // [sequences * steps, 2h]
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;

  std::size_t sequences() const { return lengths.size(); }
};

/// Runs both directions over every sequence; each direction only sees the
/// first lengths[s] steps.
EncodedBatch encode_batch(const BiLstmParams& params, const Tensor& inputs, std::size_t steps,
                          std::span<const std::size_t> lengths);

/// Single sentence: wordvecs [t, in] -> states [t, 2h].
EncodedBatch encode_sentence(const BiLstmParams& params, const Tensor& wordvecs, std::size_t length);

/// Last-hidden-state pooling: [forward state at the last valid step ;
/// backward state at step 0]. Zero for empty sequences. Output [sequences, 2h].
Tensor sentence_embeddings(const EncodedBatch& encoded);

}  // namespace fire
