#include <gtest/gtest.h>

#include <cmath>

#include "fire/encoder.hpp"
#include "fire/init.hpp"
#include "support/gradcheck.hpp"

namespace fire {
namespace {

using testing::random_tensor;

ModelDims toy_dims() {
  ModelDims d;
  d.pretrained_dim = 5;
  d.task_dim = 3;
  d.char_dim = 4;
  d.filters_per_width = 2;
  d.hidden = 3;
  return d;
}

WordRepParams toy_word_params(Rng& rng, const ModelDims& dims, std::size_t vocab = 6, std::size_t chars = 7) {
  auto pre = random_tensor(rng, {vocab, dims.pretrained_dim}, false);
  auto task = random_tensor(rng, {vocab, dims.task_dim}, false);
  for (std::size_t j = 0; j < dims.pretrained_dim; ++j) pre.mutable_data()[j] = 0.0;
  for (std::size_t j = 0; j < dims.task_dim; ++j) task.mutable_data()[j] = 0.0;
  return WordRepParams::init(pre, task, chars, dims, rng);
}

TEST(CharConv, FullScaleOutputIs150) {
  Rng rng(1);
  ModelDims dims;
  auto params = WordRepParams::init(Tensor::zeros({3, 300}), Tensor::zeros({3, 100}), 10, dims, rng);
  const std::vector<std::int32_t> ids = {2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const auto out = char_conv(params, ids, 18);
  EXPECT_EQ(out.shape(), (Shape{1, 150}));
  EXPECT_EQ(word_representation(params, std::vector<std::int32_t>{2}, ids, 18).shape(), (Shape{1, 550}));
}

TEST(CharConv, ZeroEmbeddingsAndBiasesGiveZero) {
  Rng rng(2);
  const auto dims = toy_dims();
  auto params = toy_word_params(rng, dims);
  std::fill(params.char_table.mutable_data().begin(), params.char_table.mutable_data().end(), 0.0);
  const std::vector<std::int32_t> ids = {2, 3, 4, 5, 6, 0};
  const auto out = char_conv(params, ids, 6);
  for (real v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(CharConv, PermutingFiltersPermutesOutputs) {
  Rng rng(3);
  const auto dims = toy_dims();
  auto params = toy_word_params(rng, dims);
  const std::vector<std::int32_t> ids = {2, 3, 4, 5, 6, 2, 5, 3, 0, 0, 0, 0};
  const auto before = char_conv(params, ids, 6);
  // swap the two filters of the width-4 bank (second bank)
  auto w = params.conv_weights[1].mutable_data();
  const std::size_t rows = params.conv_weights[1].dim(0);
  for (std::size_t r = 0; r < rows; ++r) std::swap(w[r * 2], w[r * 2 + 1]);
  const auto after = char_conv(params, ids, 6);
  const std::size_t f = dims.char_features();
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_EQ(after[n * f + 0], before[n * f + 0]);
    EXPECT_EQ(after[n * f + 1], before[n * f + 1]);
    EXPECT_EQ(after[n * f + 2], before[n * f + 3]);
    EXPECT_EQ(after[n * f + 3], before[n * f + 2]);
    EXPECT_EQ(after[n * f + 4], before[n * f + 4]);
  }
}

TEST(WordRepresentation, ConcatenationOrderAndPadWord) {
  Rng rng(4);
  const auto dims = toy_dims();
  auto params = toy_word_params(rng, dims);
  const std::vector<std::int32_t> words = {3, 0, 3};
  const std::vector<std::int32_t> chars = {2, 3, 4, 5, 0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 4, 5, 0, 0};
  const auto rep = word_representation(params, words, chars, 6);
  const std::size_t width = dims.word_dim();
  ASSERT_EQ(rep.shape(), (Shape{3, width}));
  for (std::size_t j = 0; j < dims.pretrained_dim; ++j) EXPECT_EQ(rep[j], params.pretrained[3 * dims.pretrained_dim + j]);
  for (std::size_t j = 0; j < dims.task_dim; ++j)
    EXPECT_EQ(rep[dims.pretrained_dim + j], params.task[3 * dims.task_dim + j]);
  // PAD word: zero table parts, char part equals char_conv of all-PAD characters
  const auto pad_chars = char_conv(params, std::vector<std::int32_t>(6, 0), 6);
  for (std::size_t j = 0; j < dims.pretrained_dim + dims.task_dim; ++j) EXPECT_EQ(rep[width + j], 0.0);
  for (std::size_t j = 0; j < dims.char_features(); ++j)
    EXPECT_EQ(rep[width + dims.pretrained_dim + dims.task_dim + j], pad_chars[j]);
  for (std::size_t j = 0; j < width; ++j) EXPECT_EQ(rep[j], rep[2 * width + j]);
}

// Plain scalar LSTM used as an oracle for the batched tensor implementation.
std::vector<real> reference_lstm(const LstmParams& p, const std::vector<std::vector<real>>& xs) {
  const std::size_t h = p.hidden(), in = p.input_weights.dim(0);
  std::vector<real> hs(h, 0.0), cs(h, 0.0), out;
  auto sig = [](real v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (const auto& x : xs) {
    std::vector<real> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      z[j] = p.bias[j];
      for (std::size_t i = 0; i < in; ++i) z[j] += x[i] * p.input_weights[i * 4 * h + j];
      for (std::size_t i = 0; i < h; ++i) z[j] += hs[i] * p.recurrent_weights[i * 4 * h + j];
    }
    for (std::size_t j = 0; j < h; ++j) {
      cs[j] = sig(z[h + j]) * cs[j] + sig(z[j]) * std::tanh(z[2 * h + j]);
      hs[j] = sig(z[3 * h + j]) * std::tanh(cs[j]);
    }
    out.insert(out.end(), hs.begin(), hs.end());
  }
  return out;
}

TEST(EncodeSentence, MatchesScalarReference) {
  Rng rng(5);
  const std::size_t in = 4, h = 3, t = 5, len = 4;
  auto params = BiLstmParams::init(in, h, rng);
  const auto x = random_tensor(rng, {t, in}, false);
  const auto enc = encode_sentence(params, x, len);
  std::vector<std::vector<real>> steps;
  for (std::size_t i = 0; i < len; ++i) steps.emplace_back(x.data().begin() + i * in, x.data().begin() + (i + 1) * in);
  const auto fwd = reference_lstm(params.forward, steps);
  std::reverse(steps.begin(), steps.end());
  const auto bwd = reference_lstm(params.backward, steps);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      EXPECT_NEAR(enc.states[i * 2 * h + j], fwd[i * h + j], 1e-12);
      EXPECT_NEAR(enc.states[i * 2 * h + h + j], bwd[(len - 1 - i) * h + j], 1e-12);
    }
  }
  for (std::size_t j = 0; j < 2 * h; ++j) EXPECT_EQ(enc.states[(t - 1) * 2 * h + j], 0.0);
}

TEST(EncodeSentence, StepCountAndZeroLength) {
  Rng rng(6);
  auto params = BiLstmParams::init(4, 3, rng);
  const auto x = random_tensor(rng, {7, 4}, false);
  const auto enc = encode_sentence(params, x, 0);
  EXPECT_EQ(enc.states.shape(), (Shape{7, 6}));
  for (real v : enc.states.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeSentence, BatchCompositionDoesNotChangeStates) {
  Rng rng(7);
  auto params = BiLstmParams::init(4, 3, rng);
  const auto a = random_tensor(rng, {5, 4}, false);
  const auto b = random_tensor(rng, {5, 4}, false);
  const auto alone = encode_sentence(params, a, 3);
  const std::size_t lengths[] = {4, 3};
  const auto batch = encode_batch(params, concat_rows({b, a}), 5, lengths);
  for (std::size_t i = 0; i < alone.states.size(); ++i) EXPECT_EQ(alone.states[i], batch.states[30 + i]);
}

TEST(SentenceEmbedding, LengthOneIsThatStep) {
  Rng rng(8);
  auto params = BiLstmParams::init(4, 3, rng);
  const auto enc = encode_sentence(params, random_tensor(rng, {4, 4}, false), 1);
  const auto emb = sentence_embeddings(enc);
  ASSERT_EQ(emb.shape(), (Shape{1, 6}));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(emb[j], enc.states[j]);
}

TEST(SentenceEmbedding, AppendedPaddingDoesNotChangeEmbedding) {
  Rng rng(9);
  auto params = BiLstmParams::init(4, 3, rng);
  const auto x = random_tensor(rng, {3, 4}, false);
  const auto padded = concat_rows({x, Tensor::zeros({4, 4})});
  const auto a = sentence_embeddings(encode_sentence(params, x, 3));
  const auto b = sentence_embeddings(encode_sentence(params, padded, 3));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a[j], b[j]);
}

TEST(SentenceEmbedding, FullScaleDimIs400) {
  Rng rng(10);
  auto params = BiLstmParams::init(2, 200, rng);
  EXPECT_EQ(sentence_embeddings(encode_sentence(params, Tensor::zeros({2, 2}), 2)).shape(), (Shape{1, 400}));
}

TEST(EncoderGradient, FiniteDifferencesThroughRecurrentCells) {
  Rng rng(11);
  const auto dims = toy_dims();
  auto word = toy_word_params(rng, dims);
  auto lstm = BiLstmParams::init(dims.word_dim(), dims.hidden, rng);
  const std::vector<std::int32_t> words = {2, 5, 3, 0, 4, 4, 0, 0};
  std::vector<std::int32_t> chars(words.size() * 6, 0);
  for (std::size_t i = 0; i < chars.size(); ++i) chars[i] = (i % 6 < 4) ? static_cast<std::int32_t>(1 + i % 5) : 0;
  const std::size_t lengths[] = {3, 2};
  const auto probe = random_tensor(rng, {8, 2 * dims.hidden}, false);
  auto loss = [&] {
    auto enc = encode_batch(lstm, word_representation(word, words, chars, 6), 4, lengths);
    return add(sum(mul(enc.states, probe)), sum(sentence_embeddings(enc)));
  };
  std::vector<Tensor> leaves = {word.char_table,
                                lstm.forward.input_weights,
                                lstm.forward.recurrent_weights,
                                lstm.forward.bias,
                                lstm.backward.input_weights,
                                lstm.backward.recurrent_weights,
                                lstm.backward.bias};
  for (auto& w : word.conv_weights) leaves.push_back(w);
  for (auto& b : word.conv_biases) leaves.push_back(b);
  const auto result = testing::check_gradients(loss, leaves);
  EXPECT_LT(result.max_relative_error, 1e-4) << result.worst;
  EXPECT_FALSE(word.pretrained.has_grad());
}

}  // namespace
}  // namespace fire
