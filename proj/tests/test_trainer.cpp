#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fire/checkpoint.hpp"
#include "fire/error.hpp"
#include "fire/trainer.hpp"
#include "support/toy.hpp"

namespace fire {
namespace {

using namespace fire::testing;

std::vector<Tensor> uniform_iterations(std::size_t l, std::size_t n) {
  return std::vector<Tensor>(l, Tensor::full({1, n}, 1.0 / static_cast<real>(n)));
}

TEST(SmoothedLoss, UniformClosedForm) {
  const auto g = uniform_iterations(1, 20);
  EXPECT_NEAR(smoothed_loss(g, 7, 0.05).item(), 2.0 * std::log(20.0), 1e-12);
  EXPECT_NEAR(smoothed_loss(g, 7, 0.05).item(), 5.9915, 1e-3);
}

TEST(SmoothedLoss, ZeroEpsilonIsCrossEntropy) {
  const std::vector<Tensor> g = {Tensor::from({1, 3}, {0.2, 0.5, 0.3}), Tensor::from({1, 3}, {0.1, 0.1, 0.8})};
  EXPECT_NEAR(smoothed_loss(g, 2, 0.0).item(), -std::log(0.3) - std::log(0.8), 1e-12);
}

TEST(SmoothedLoss, SumOverIterations) {
  Rng rng(1);
  std::vector<Tensor> g;
  for (int l = 0; l < 3; ++l) {
    std::vector<real> p(20);
    real z = 0.0;
    for (auto& v : p) z += (v = rng.uniform(0.1, 1.0));
    for (auto& v : p) v /= z;
    g.push_back(Tensor::from({1, 20}, p));
  }
  real separate = 0.0;
  for (int l = 0; l < 3; ++l) separate += smoothed_loss(std::span(g).subspan(l, 1), 4, 0.05).item();
  EXPECT_NEAR(smoothed_loss(g, 4, 0.05).item(), separate, 1e-9);
  EXPECT_GT(separate, 0.0);
}

TEST(SmoothedLoss, ClampsZeroProbabilityAndRejectsBadLabel) {
  const std::vector<Tensor> g = {Tensor::from({1, 2}, {0.0, 1.0})};
  EXPECT_NEAR(smoothed_loss(g, 0, 0.0).item(), -std::log(1e-12), 1e-9);
  EXPECT_THROW(smoothed_loss(g, 2, 0.05), DataError);
}

TEST(Schedule, StaircaseValues) {
  EXPECT_EQ(lr_at(0), 0.00025);
  EXPECT_EQ(lr_at(4999), 0.00025);
  EXPECT_EQ(lr_at(5000), 0.00025 * 0.96);
  EXPECT_NEAR(lr_at(5000), 0.00024, 1e-18);
  EXPECT_NEAR(lr_at(10000), 0.0002304, 1e-18);
  for (std::size_t s = 0; s < 100000; s += 777) EXPECT_LE(lr_at(s + 777), lr_at(s));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::from({1}, {2.0}, true);
  Adam adam({w});
  adam.set_steps(1);
  const real g[] = {1.0};
  adam.apply(0, w, g, 0.01);
  EXPECT_NEAR(w[0], 2.0 - 0.01, 1e-9);
}

TEST(Adam, ZeroGradientAndFrozenTensorsStayPut) {
  Tensor w = Tensor::from({2}, {1.0, -1.0}, true);
  Tensor frozen = Tensor::from({2}, {3.0, 4.0}, false);
  Adam adam({w, frozen});
  adam.step({w, frozen}, 0.1);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], -1.0);
  EXPECT_EQ(frozen[0], 3.0);
}

TEST(Adam, ShapeMismatchIsError) {
  Tensor w = Tensor::zeros({3}, true);
  Adam adam({w});
  const real g[] = {1.0, 2.0};
  EXPECT_THROW(adam.apply(0, w, g, 0.1), ShapeError);
}

TEST(Clip, GlobalNormIsBounded) {
  Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({1}, true);
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  b.mutable_grad()[0] = 12.0;
  EXPECT_DOUBLE_EQ(clip_gradients({a, b}, 5.0), 13.0);
  EXPECT_NEAR(a.grad()[0], 3.0 * 5.0 / 13.0, 1e-15);
  EXPECT_NEAR(b.grad()[0], 12.0 * 5.0 / 13.0, 1e-15);
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.batch_size = 4;
  c.learning_rate = 0.005;
  c.epochs = epochs;
  c.seed = 3;
  return c;
}

TEST(Train, RunsAreBitIdenticalAndTablesFrozen) {
  auto a = make_toy(toy_spec(8, 4), toy_limits(4), toy_config(2, 4), 1, 2);
  auto b = make_toy(toy_spec(8, 4), toy_limits(4), toy_config(2, 4), 1, 2);
  const std::vector<real> pre(a.params.word.pretrained.data().begin(), a.params.word.pretrained.data().end());
  Adam oa(a.params.trainable()), ob(b.params.trainable());
  const auto ra = train(a.params, oa, a.config, quick_config(2), a.data.examples, a.data.examples);
  const auto rb = train(b.params, ob, b.config, quick_config(2), b.data.examples, b.data.examples);
  EXPECT_EQ(ra.step_losses, rb.step_losses);
  EXPECT_EQ(snapshot(a.params), snapshot(b.params));
  EXPECT_EQ(ra.step_losses.size(), 4u);
  for (std::size_t i = 0; i < pre.size(); ++i) EXPECT_EQ(a.params.word.pretrained[i], pre[i]);
}

TEST(Train, BestValidationDominatesHistory) {
  auto toy = make_toy(toy_spec(8, 4), toy_limits(4), toy_config(1, 4), 3, 4);
  Adam opt(toy.params.trainable());
  std::ostringstream metrics;
  const auto result =
      train(toy.params, opt, toy.config, quick_config(4), toy.data.examples, toy.data.examples, {}, &metrics);
  std::size_t validations = 0;
  for (const auto& rec : result.history) {
    if (rec.split != "validation") continue;
    ++validations;
    EXPECT_GE(result.best_validation, rec.value);
  }
  EXPECT_EQ(validations, 4u);
  EXPECT_NEAR(evaluate(toy.params, toy.config, toy.data.examples).r1, result.best_validation, 1e-15);
  std::string line;
  std::istringstream lines(metrics.str());
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("step") && j.contains("split") && j.contains("metric") && j.contains("value"));
  }
}

TEST(Train, EmptyTrainingSetIsError) {
  auto toy = make_toy(toy_spec(1, 4), toy_limits(4), toy_config(1, 4), 5, 6);
  Adam opt(toy.params.trainable());
  EXPECT_THROW(train(toy.params, opt, toy.config, quick_config(1), {}), DataError);
}

TEST(Train, LossDecreasesOnSmallCorpus) {
  auto toy = make_toy(toy_spec(8, 4), toy_limits(4), toy_config(1, 4), 7, 8);
  Adam opt(toy.params.trainable());
  auto config = quick_config(15);
  const auto result = train(toy.params, opt, toy.config, config, toy.data.examples);
  real first = result.step_losses[0] + result.step_losses[1];
  real last = result.step_losses[result.step_losses.size() - 1] + result.step_losses[result.step_losses.size() - 2];
  EXPECT_LT(last, first);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto toy = make_toy(toy_spec(4, 4), toy_limits(4), toy_config(2, 4), 9, 10);
  Adam opt(toy.params.trainable());
  train(toy.params, opt, toy.config, quick_config(1), toy.data.examples);
  std::stringstream buffer;
  save_checkpoint(buffer, toy.params, &opt, toy.config, quick_config(1), toy.limits, toy.vocab);
  const auto loaded = load_checkpoint(buffer);
  EXPECT_EQ(snapshot(loaded.params), snapshot(toy.params));
  EXPECT_EQ(loaded.model, toy.config);
  EXPECT_EQ(loaded.train, quick_config(1));
  EXPECT_EQ(loaded.limits, toy.limits);
  EXPECT_EQ(loaded.fingerprint(), toy.vocab.fingerprint());
  EXPECT_EQ(loaded.optimizer.steps(), opt.steps());
  EXPECT_EQ(loaded.optimizer.first_moments(), opt.first_moments());
  EXPECT_EQ(loaded.optimizer.second_moments(), opt.second_moments());
  EXPECT_FALSE(loaded.params.word.pretrained.requires_grad());
  EXPECT_EQ(evaluate(loaded.params, loaded.model, toy.data, loaded.fingerprint()),
            evaluate(toy.params, toy.config, toy.data, toy.vocab.fingerprint()));
}

std::string raw_checkpoint(std::uint32_t version, const std::string& header, std::size_t payload_bytes) {
  std::string bytes = "FIRECKPT";
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((version >> (8 * i)) & 0xff));
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((header.size() >> (8 * i)) & 0xff));
  return bytes + header + std::string(payload_bytes, '\0');
}

TEST(Checkpoint, PayloadInconsistencyIsDetected) {
  const std::string header =
      R"({"tensors":[{"name":"x","shape":[2,3],"dtype":"f64","offset":0}],"payload_bytes":48})";
  std::istringstream in(raw_checkpoint(kCheckpointVersion, header, 5 * 8));
  EXPECT_THROW(load_checkpoint(in), CheckpointPayloadError);
}

TEST(Checkpoint, NewerVersionNamesBothVersions) {
  std::istringstream in(raw_checkpoint(kCheckpointVersion + 1, "{}", 0));
  try {
    load_checkpoint(in);
    FAIL() << "expected a version error";
  } catch (const CheckpointVersionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion + 1)), std::string::npos);
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion)), std::string::npos);
  }
}

TEST(Checkpoint, GarbageAndFingerprintMismatch) {
  std::istringstream junk("not a checkpoint at all");
  EXPECT_THROW(load_checkpoint(junk), CheckpointError);
  auto toy = make_toy(toy_spec(2, 4), toy_limits(4), toy_config(1, 4), 11, 12);
  std::stringstream buffer;
  save_checkpoint(buffer, toy.params, nullptr, toy.config, TrainConfig{}, toy.limits, toy.vocab);
  const auto loaded = load_checkpoint(buffer);
  EXPECT_NO_THROW(check_fingerprint(loaded, toy.vocab.fingerprint()));
  EXPECT_THROW(check_fingerprint(loaded, toy.vocab.fingerprint() ^ 1), FingerprintMismatchError);
  auto other = toy.data;
  other.vocab_fingerprint ^= 1;
  EXPECT_THROW(evaluate(loaded.params, loaded.model, other, loaded.fingerprint()), FingerprintMismatchError);
}

}  // namespace
}  // namespace fire
