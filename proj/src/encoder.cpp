#include "fire/encoder.hpp"

#include <algorithm>

#include "fire/error.hpp"
#include "fire/init.hpp"

namespace fire {

std::size_t ModelDims::max_filter_width() const {
  return filter_widths.empty() ? 0 : *std::max_element(filter_widths.begin(), filter_widths.end());
}

LstmParams LstmParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.input_weights = init::uniform({input, 4 * hidden}, -0.05, 0.05, rng);
  // one orthogonal h x h block per gate
  std::vector<real> recurrent(hidden * 4 * hidden);
  for (std::size_t gate = 0; gate < 4; ++gate) {
    const auto block = init::orthogonal(hidden, rng);
    for (std::size_t i = 0; i < hidden; ++i)
      for (std::size_t j = 0; j < hidden; ++j) recurrent[i * 4 * hidden + gate * hidden + j] = block[i * hidden + j];
  }
  p.recurrent_weights = Tensor::from({hidden, 4 * hidden}, std::move(recurrent), true);
  std::vector<real> bias(4 * hidden, 0.0);
  std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden), bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden), 1.0);
  p.bias = Tensor::from({4 * hidden}, std::move(bias), true);
  return p;
}

BiLstmParams BiLstmParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  BiLstmParams p;
  p.forward = LstmParams::init(input, hidden, rng);
  p.backward = LstmParams::init(input, hidden, rng);
  return p;
}

std::size_t WordRepParams::char_features() const {
  std::size_t total = 0;
  for (const auto& b : conv_biases) total += b.size();
  return total;
}

WordRepParams WordRepParams::init(Tensor pretrained, Tensor task, std::size_t char_vocab, const ModelDims& dims,
                                  Rng& rng) {
  if (pretrained.rank() != 2 || task.rank() != 2 || pretrained.dim(0) != task.dim(0)) {
    throw ShapeError("word tables must be [vocab, dim] with equal vocab: " + shape_string(pretrained.shape()) +
                     " vs " + shape_string(task.shape()));
  }
  WordRepParams p;
  p.pretrained = std::move(pretrained);
  p.task = std::move(task);
  p.pretrained.set_requires_grad(false);
  p.task.set_requires_grad(false);
  p.char_table = init::uniform({char_vocab, dims.char_dim}, -0.1, 0.1, rng);
  p.widths = dims.filter_widths;
  for (std::size_t w : dims.filter_widths) {
    p.conv_weights.push_back(init::glorot(w * dims.char_dim, dims.filters_per_width, rng));
    p.conv_biases.push_back(Tensor::zeros({dims.filters_per_width}, true));
  }
  return p;
}

Tensor char_conv(const WordRepParams& params, std::span<const std::int32_t> char_ids, std::size_t chars) {
  if (chars == 0 || char_ids.size() % chars != 0) {
    throw ShapeError("char_conv: " + std::to_string(char_ids.size()) + " ids do not split into words of " +
                     std::to_string(chars) + " characters");
  }
  const std::size_t words = char_ids.size() / chars;
  std::vector<Tensor> banks;
  for (std::size_t b = 0; b < params.widths.size(); ++b) {
    const std::size_t width = params.widths[b];
    if (width > chars) {
      throw ShapeError("char_conv: filter width " + std::to_string(width) + " exceeds " + std::to_string(chars) +
                       " characters per word");
    }
    const std::size_t positions = chars - width + 1;
    // im2col straight from the embedding table; PAD characters read as zero rows
    std::vector<std::int64_t> rows;
    rows.reserve(words * positions * width);
    for (std::size_t n = 0; n < words; ++n)
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t j = 0; j < width; ++j) {
          const std::int32_t id = char_ids[n * chars + p + j];
          rows.push_back(id == 0 ? -1 : id);
        }
    const std::size_t cd = params.char_table.dim(1);
    auto windows = reshape(gather_rows(params.char_table, rows), {words * positions, width * cd});
    auto activations = relu(add_bias(matmul(windows, params.conv_weights[b]), params.conv_biases[b]));
    const std::vector<std::size_t> lengths(words, positions);
    banks.push_back(segment_pool(activations, positions, lengths, PoolMode::kMax));
  }
  return concat_last(banks);
}

Tensor word_representation(const WordRepParams& params, std::span<const std::int32_t> word_ids,
                           std::span<const std::int32_t> char_ids, std::size_t chars) {
  if (char_ids.size() != word_ids.size() * chars) {
    throw ShapeError("word_representation: " + std::to_string(word_ids.size()) + " words but " +
                     std::to_string(char_ids.size()) + " character ids");
  }
  const std::vector<std::int64_t> rows(word_ids.begin(), word_ids.end());
  return concat_last({gather_rows(params.pretrained, rows), gather_rows(params.task, rows),
                      char_conv(params, char_ids, chars)});
}

namespace {

// Runs one direction over pre-projected inputs (x W + b) laid out
// sequence-major. Returns hidden states in the same layout.
Tensor run_lstm(const LstmParams& p, const Tensor& projected, std::size_t sequences, std::size_t steps) {
  const std::size_t h = p.hidden();
  Tensor hidden_state, cell;
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  std::vector<std::int64_t> rows(sequences);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < sequences; ++s) rows[s] = static_cast<std::int64_t>(s * steps + t);
    Tensor gates = gather_rows(projected, rows);
    if (t > 0) gates = add(gates, matmul(hidden_state, p.recurrent_weights));
    const Tensor sig = sigmoid(gates);
    const Tensor input_gate = slice_last(sig, 0, h);
    const Tensor output_gate = slice_last(sig, 3 * h, h);
    const Tensor candidate = tanh(slice_last(gates, 2 * h, h));
    cell = t > 0 ? add(mul(slice_last(sig, h, h), cell), mul(input_gate, candidate)) : mul(input_gate, candidate);
    hidden_state = mul(output_gate, tanh(cell));
    outputs.push_back(hidden_state);
  }
  // step-major -> sequence-major
  std::vector<std::int64_t> order(sequences * steps);
  for (std::size_t s = 0; s < sequences; ++s)
    for (std::size_t t = 0; t < steps; ++t) order[s * steps + t] = static_cast<std::int64_t>(t * sequences + s);
  return gather_rows(concat_rows(outputs), order);
}

}  // namespace

EncodedBatch encode_batch(const BiLstmParams& params, const Tensor& inputs, std::size_t steps,
                          std::span<const std::size_t> lengths) {
  const std::size_t sequences = lengths.size();
  if (inputs.rank() != 2 || inputs.dim(0) != sequences * steps) {
    throw ShapeError("encode_batch: inputs " + shape_string(inputs.shape()) + " are not " +
                     std::to_string(sequences) + " sequences of " + std::to_string(steps) + " steps");
  }
  EncodedBatch out;
  out.steps = steps;
  out.lengths.assign(lengths.begin(), lengths.end());
  if (sequences == 0 || steps == 0) {
    out.states = Tensor::zeros({sequences * steps, 2 * params.hidden()});
    return out;
  }

  // keep[i]: row i itself if valid else -1; reversed[i]: mirror within the
  // valid prefix. Both are involutions on the valid rows.
  std::vector<std::int64_t> keep(sequences * steps, -1), reversed(sequences * steps, -1);
  for (std::size_t s = 0; s < sequences; ++s) {
    if (lengths[s] > steps) {
      throw ShapeError("encode_batch: length " + std::to_string(lengths[s]) + " exceeds " + std::to_string(steps) +
                       " steps");
    }
    for (std::size_t t = 0; t < lengths[s]; ++t) {
      keep[s * steps + t] = static_cast<std::int64_t>(s * steps + t);
      reversed[s * steps + t] = static_cast<std::int64_t>(s * steps + lengths[s] - 1 - t);
    }
  }
  const Tensor fwd_in = add_bias(matmul(inputs, params.forward.input_weights), params.forward.bias);
  const Tensor bwd_in =
      gather_rows(add_bias(matmul(inputs, params.backward.input_weights), params.backward.bias), reversed);
  const Tensor fwd = gather_rows(run_lstm(params.forward, fwd_in, sequences, steps), keep);
  const Tensor bwd = gather_rows(run_lstm(params.backward, bwd_in, sequences, steps), reversed);
  out.states = concat_last({fwd, bwd});
  return out;
}

EncodedBatch encode_sentence(const BiLstmParams& params, const Tensor& wordvecs, std::size_t length) {
  if (wordvecs.rank() != 2) throw ShapeError("encode_sentence: expected [t, in], got " + shape_string(wordvecs.shape()));
  const std::size_t lengths[] = {length};
  return encode_batch(params, wordvecs, wordvecs.dim(0), lengths);
}

Tensor sentence_embeddings(const EncodedBatch& encoded) {
  const std::size_t h = encoded.states.last_dim() / 2;
  std::vector<std::int64_t> last(encoded.sequences()), first(encoded.sequences());
  for (std::size_t s = 0; s < encoded.sequences(); ++s) {
    const std::size_t len = encoded.lengths[s];
    last[s] = len == 0 ? -1 : static_cast<std::int64_t>(s * encoded.steps + len - 1);
    first[s] = len == 0 ? -1 : static_cast<std::int64_t>(s * encoded.steps);
  }
  return concat_last({gather_rows(slice_last(encoded.states, 0, h), last),
                      gather_rows(slice_last(encoded.states, h, h), first)});
}

}  // namespace fire
