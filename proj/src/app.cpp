#include "fire/app.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "fire/error.hpp"

namespace fire {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CheckpointError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  return 1;
}

std::vector<RawEpisode> read_episodes(const std::string& path, CorpusFormat format, std::size_t candidates) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  try {
    return parse_episodes(in, format, candidates);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

namespace {

Tensor read_table(const std::string& path, std::size_t dim, const Vocab& vocab, Rng& rng, std::ostream& log) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);
  auto table = load_pretrained_embeddings(in, dim, vocab, rng);
  log << "embeddings " << path << ": " << table.misses << " of " << vocab.size() << " words not found\n";
  return table.table;
}

}  // namespace

TrainOutcome run_train(const RunConfig& config, std::ostream& log) {
  for (const auto& line : config.describe()) log << line << '\n';
  const auto train_eps = read_episodes(config.train_data, config.format, config.limits.candidates);
  std::vector<RawEpisode> valid_eps;
  if (!config.valid_data.empty()) valid_eps = read_episodes(config.valid_data, config.format, config.limits.candidates);
  const Vocab vocab = Vocab::build(corpus_tokens(train_eps), config.min_count);
  const auto train_set = index_dataset(train_eps, vocab, config.limits);
  const auto valid_set = index_dataset(valid_eps, vocab, config.limits);

  Rng rng(config.train.seed);
  Rng embed_rng = rng.fork(10);
  Tensor pretrained = read_table(config.pretrained_embeddings, config.model.dims.pretrained_dim, vocab, embed_rng, log);
  Tensor task = read_table(config.task_embeddings, config.model.dims.task_dim, vocab, embed_rng, log);
  Rng init_rng = rng.fork(11);
  FireParams params = FireParams::init(config.model, pretrained, task, vocab.char_size(), init_rng);
  Adam optimizer(params.trainable());

  std::ofstream metrics_file;
  if (!config.metrics.empty()) {
    metrics_file.open(config.metrics);
    if (!metrics_file) throw ConfigError("cannot open metrics file: " + config.metrics);
  }
  TrainOutcome outcome;
  outcome.train_examples = train_set.examples.size();
  outcome.valid_examples = valid_set.examples.size();
  outcome.vocab_size = vocab.size();
  outcome.result = train(params, optimizer, config.model, config.train, train_set.examples, valid_set.examples,
                         [&](std::size_t epoch, const TrainResult& r) {
                           log << "epoch " << epoch + 1;
                           for (auto it = r.history.rbegin(); it != r.history.rend() && it->metric != "loss"; ++it) {
                             log << ' ' << it->split << ' ' << it->metric << ' ' << it->value;
                           }
                           log << '\n';
                           return true;
                         },
                         metrics_file.is_open() ? &metrics_file : nullptr);
  save_checkpoint(config.checkpoint, params, &optimizer, config.model, config.train, config.limits, vocab);
  log << "checkpoint written to " << config.checkpoint << '\n';
  return outcome;
}

EvalReport run_eval(const std::string& checkpoint, const std::string& data, CorpusFormat format,
                    std::size_t threads) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto episodes = read_episodes(data, format, ckpt.limits.candidates);
  const auto dataset = index_dataset(episodes, ckpt.vocab, ckpt.limits);
  return evaluate(ckpt.params, ckpt.model, dataset, ckpt.fingerprint(), threads, data);
}

namespace {

template <typename Fn>
std::size_t for_each_line(const CheckpointContents& checkpoint, std::istream& in, std::ostream& out, Fn&& emit) {
  std::size_t failures = 0;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record{{"line", number}};
    try {
      const auto episode = parse_canonical_line(line, number, checkpoint.limits.candidates, false);
      emit(index_and_pad(episode, checkpoint.vocab, checkpoint.limits), record);
    } catch (const DataError& e) {
      ++failures;
      record = {{"line", number}, {"error", e.what()}};
    }
    out << record.dump() << '\n';
  }
  return failures;
}

}  // namespace

std::size_t run_score(const CheckpointContents& checkpoint, std::istream& in, std::ostream& out) {
  return for_each_line(checkpoint, in, out, [&](const IndexedExample& ex, nlohmann::json& record) {
    const auto probs = score_example(checkpoint.params, checkpoint.model, ex);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    auto ranking = nlohmann::json::array();
    for (std::size_t i : order) ranking.push_back({{"index", i}, {"probability", probs[i]}});
    record["ranking"] = std::move(ranking);
  });
}

std::size_t run_inspect(const CheckpointContents& checkpoint, std::istream& in, std::ostream& out) {
  return for_each_line(checkpoint, in, out, [&](const IndexedExample& ex, nlohmann::json& record) {
    const auto result = forward(checkpoint.params, checkpoint.model, ex, Mode::kEval);
    if (checkpoint.model.use_filters) {
      record["relevance"] = relevance_dump(result.relevance, result.gate, ex.num_entries, checkpoint.model.gamma);
    } else {
      record["relevance"] = nullptr;
    }
    record["filters"] = checkpoint.model.use_filters;
  });
}

}  // namespace fire
