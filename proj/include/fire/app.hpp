#pragma once

#include <cstddef>
#include <exception>
#include <iosfwd>
#include <string>

#include "fire/checkpoint.hpp"
#include "fire/config.hpp"
#include "fire/eval.hpp"

namespace fire {

/// 0 success, 1 usage/config, 2 data, 3 checkpoint.
int exit_code_for(const std::exception& e);

struct TrainOutcome {
  TrainResult result;
  std::size_t train_examples = 0;
  std::size_t valid_examples = 0;
  std::size_t vocab_size = 0;
};

/// Builds the vocabulary from the training data, loads embeddings, trains
/// and writes the selected checkpoint. Progress goes to `log`.
TrainOutcome run_train(const RunConfig& config, std::ostream& log);

std::vector<RawEpisode> read_episodes(const std::string& path, CorpusFormat format, std::size_t candidates);

EvalReport run_eval(const std::string& checkpoint, const std::string& data, CorpusFormat format,
                    std::size_t threads = 1);

/// One JSON line per input line: the candidates ranked by probability, or an
/// error for that line. Returns the number of failed lines.
std::size_t run_score(const CheckpointContents& checkpoint, std::istream& in, std::ostream& out);

/// One JSON line per input line with the relevance scores and gate.
std::size_t run_inspect(const CheckpointContents& checkpoint, std::istream& in, std::ostream& out);

}  // namespace fire
