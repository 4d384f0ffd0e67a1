#include "fire/model.hpp"

#include "fire/error.hpp"
#include "fire/init.hpp"

namespace fire {

void ModelConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations L must be at least 1");
  validate_gamma(gamma);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (dims.filter_widths.empty() || dims.hidden == 0 || dims.aggregator_hidden == 0 || dims.mlp_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

FireParams FireParams::init(const ModelConfig& config, Tensor pretrained, Tensor task, std::size_t char_vocab,
                            Rng& rng) {
  config.validate();
  const auto& dims = config.dims;
  if (pretrained.rank() != 2 || pretrained.dim(1) != dims.pretrained_dim || task.rank() != 2 ||
      task.dim(1) != dims.task_dim) {
    throw ShapeError("embedding tables " + shape_string(pretrained.shape()) + " / " + shape_string(task.shape()) +
                     " do not match the configured widths");
  }
  const std::size_t d = dims.encoded_dim();
  FireParams p;
  p.word = WordRepParams::init(std::move(pretrained), std::move(task), char_vocab, dims, rng);
  p.encoder = BiLstmParams::init(dims.word_dim(), dims.hidden, rng);
  p.context_filter = ReferParams::init(d, rng);
  p.knowledge_filter = ReferParams::init(d, rng);
  p.relevance = init::glorot(d, d, rng);
  for (std::size_t l = 0; l < config.iterations; ++l) p.iterations.push_back(IterationParams::init(d, rng));
  p.aggregation = AggregationParams::init(dims, rng);
  return p;
}

namespace {

void add_lstm(std::vector<NamedTensor>& out, const std::string& prefix, const LstmParams& p) {
  out.push_back({prefix + ".input_weights", p.input_weights});
  out.push_back({prefix + ".recurrent_weights", p.recurrent_weights});
  out.push_back({prefix + ".bias", p.bias});
}

void add_refer(std::vector<NamedTensor>& out, const std::string& prefix, const ReferParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

}  // namespace

std::vector<NamedTensor> FireParams::named() const {
  std::vector<NamedTensor> out;
  out.push_back({"word.pretrained", word.pretrained, false});
  out.push_back({"word.task", word.task, false});
  out.push_back({"word.char_table", word.char_table});
  for (std::size_t b = 0; b < word.widths.size(); ++b) {
    const std::string w = std::to_string(word.widths[b]);
    out.push_back({"word.conv" + w + ".weight", word.conv_weights[b]});
    out.push_back({"word.conv" + w + ".bias", word.conv_biases[b]});
  }
  add_lstm(out, "encoder.forward", encoder.forward);
  add_lstm(out, "encoder.backward", encoder.backward);
  add_refer(out, "filter.context", context_filter);
  add_refer(out, "filter.knowledge", knowledge_filter);
  out.push_back({"filter.relevance", relevance});
  for (std::size_t l = 0; l < iterations.size(); ++l) {
    const std::string prefix = "iteration" + std::to_string(l + 1);
    add_refer(out, prefix + ".context", iterations[l].context);
    add_refer(out, prefix + ".response", iterations[l].response);
    add_refer(out, prefix + ".knowledge", iterations[l].knowledge);
    add_refer(out, prefix + ".response_k", iterations[l].response_k);
  }
  add_lstm(out, "aggregate.context.forward", aggregation.context.forward);
  add_lstm(out, "aggregate.context.backward", aggregation.context.backward);
  out.push_back({"aggregate.knowledge.projection", aggregation.knowledge.projection});
  out.push_back({"aggregate.knowledge.bias", aggregation.knowledge.bias});
  out.push_back({"aggregate.knowledge.vector", aggregation.knowledge.vector});
  out.push_back({"mlp.hidden.weight", aggregation.mlp.hidden_weights});
  out.push_back({"mlp.hidden.bias", aggregation.mlp.hidden_bias});
  out.push_back({"mlp.output.weight", aggregation.mlp.output_weights});
  out.push_back({"mlp.output.bias", aggregation.mlp.output_bias});
  return out;
}

std::vector<Tensor> FireParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& n : named())
    if (n.trainable) out.push_back(n.tensor);
  return out;
}

namespace {

Mask token_mask(const SentenceGrid& grid) {
  Mask m(grid.rows * grid.words, 0);
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t t = 0; t < grid.lengths[r]; ++t) m[r * grid.words + t] = 1;
  return m;
}

template <typename T>
std::vector<T> tile(const std::vector<T>& v, std::size_t times) {
  std::vector<T> out;
  out.reserve(v.size() * times);
  for (std::size_t i = 0; i < times; ++i) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// [rows, d] -> [times, rows, d]
Tensor tile_rows(const Tensor& x, std::size_t times) {
  const std::size_t rows = x.size() / x.last_dim();
  std::vector<std::int64_t> index(rows * times);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<std::int64_t>(i % rows);
  return reshape(gather_rows(reshape(x, {rows, x.last_dim()}), index), {times, rows, x.last_dim()});
}

}  // namespace

ForwardResult forward(const FireParams& params, const ModelConfig& config, const IndexedExample& example, Mode mode,
                      Rng* dropout_rng) {
  const bool training = mode == Mode::kTrain;
  if (training && config.dropout > 0.0 && !dropout_rng) throw ConfigError("training forward needs a dropout rng");
  const auto& ctx = example.context;
  const auto& kn = example.knowledge;
  const auto& cand = example.candidates;
  if (ctx.chars != kn.chars || ctx.chars != cand.chars) throw ShapeError("forward: grids disagree on characters");
  const std::size_t d = config.dims.encoded_dim();
  const std::size_t n_c = ctx.rows, n_k = kn.rows, batch = cand.rows;
  const std::size_t l_c = n_c * ctx.words, l_k = n_k * kn.words, l_r = batch * cand.words;
  auto drop = [&](const Tensor& x) {
    return training && config.dropout > 0.0 ? dropout(x, config.dropout, *dropout_rng) : x;
  };

  // one word-representation pass over every position of the example
  std::vector<std::int32_t> words, chars;
  for (const SentenceGrid* g : {&ctx, &kn, &cand}) {
    words.insert(words.end(), g->word_ids.begin(), g->word_ids.end());
    chars.insert(chars.end(), g->char_ids.begin(), g->char_ids.end());
  }
  const Tensor reps = drop(word_representation(params.word, words, chars, ctx.chars));
  auto section = [&](std::size_t begin, std::size_t count) {
    std::vector<std::int64_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = static_cast<std::int64_t>(begin + i);
    return gather_rows(reps, idx);
  };
  const EncodedBatch enc_c = encode_batch(params.encoder, section(0, l_c), ctx.words, ctx.lengths);
  const EncodedBatch enc_k = encode_batch(params.encoder, section(l_c, l_k), kn.words, kn.lengths);
  const EncodedBatch enc_r = encode_batch(params.encoder, section(l_c + l_k, l_r), cand.words, cand.lengths);
  const Tensor c_bar = drop(enc_c.states), k_bar = drop(enc_k.states), r_bar = drop(enc_r.states);

  const Mask c_mask = token_mask(ctx), r_mask = token_mask(cand);
  Mask k_mask = token_mask(kn);
  for (std::size_t i = 0; i < l_k; ++i)
    if (i / kn.words >= example.num_entries) k_mask[i] = 0;

  ForwardResult out;
  Tensor c0, k0;
  Mask k0_mask;
  if (config.use_filters) {
    const Tensor c3 = reshape(c_bar, {1, l_c, d}), k3 = reshape(k_bar, {1, l_k, d});
    c0 = context_filter(c3, c_mask, k3, k_mask, params.context_filter);
    out.relevance = entry_relevance(sentence_embeddings(enc_c), sentence_embeddings(enc_k), params.relevance,
                                    example.num_utterances);
    auto filtered = knowledge_filter(k3, k_mask, c3, c_mask, out.relevance, kn.words, example.num_entries,
                                     config.gamma, params.knowledge_filter,
                                     training ? GateMode::kSurrogate : GateMode::kHard);
    k0 = filtered.knowledge;
    k0_mask = std::move(filtered.token_mask);
    out.gate = std::move(filtered.gate);
  } else {
    c0 = c_bar;
    k0 = k_bar;
    k0_mask = k_mask;
    out.gate.assign(n_k, 0);
    for (std::size_t n = 0; n < std::min(n_k, example.num_entries); ++n) out.gate[n] = 1;
  }

  IterationState initial;
  initial.context = tile_rows(c0, batch);
  initial.knowledge = tile_rows(k0, batch);
  initial.response = reshape(r_bar, {batch, cand.words, d});
  initial.response_k = initial.response;
  MatchMasks masks{tile(c_mask, batch), r_mask, tile(k0_mask, batch)};
  const auto states = iterate(initial, masks, params.iterations, config.iterations);

  const auto utt_lengths = tile(ctx.lengths, batch);
  const auto entry_lengths = tile(kn.lengths, batch);
  const std::vector<std::size_t> valid_utterances(batch, example.num_utterances);
  const auto& agg = params.aggregation;
  std::vector<Tensor> matching;
  for (const auto& s : states) {
    const Tensor c = context_aggregate(agg.context, pool_matching(s.context, ctx.words, utt_lengths), n_c,
                                       valid_utterances);
    Tensor weights;
    const Tensor k = knowledge_aggregate(agg.knowledge, pool_matching(s.knowledge, kn.words, entry_lengths), n_k,
                                         out.gate, &weights);
    out.entry_attention.push_back(weights);
    const Tensor r = pool_matching(s.response, cand.words, cand.lengths);
    const Tensor rk = pool_matching(s.response_k, cand.words, cand.lengths);
    matching.push_back(concat_last({c, r, k, rk}));
  }
  out.prediction = predict(agg.mlp, matching, batch);
  return out;
}

}  // namespace fire
