#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "fire/app.hpp"
#include "fire/error.hpp"
#include "fire/synthetic.hpp"

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw fire::ConfigError("cannot open output file: " + path);
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fire::DataError("cannot open input file: " + path);
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded response selection"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, data, input, output, format = "canonical-jsonl";
  std::vector<std::string> assignments;
  std::size_t threads = 1;
  bool per_example = false;

  auto* train = app.add_subcommand("train", "train a model from a key=value config file");
  train->add_option("--config", config_path, "config file")->required();
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma, epsilon;
  std::optional<std::size_t> iterations, batch, epochs;
  train->add_option("--seed", seed, "random seed");
  train->add_option("--gamma", gamma, "gate threshold");
  train->add_option("--iterations", iterations, "referring iterations L");
  train->add_option("--epsilon", epsilon, "label smoothing confidence");
  train->add_option("--batch", batch, "batch size");
  train->add_option("--epochs", epochs, "epoch count");
  train->add_option("--set", assignments, "any config key as key=value");

  auto* eval = app.add_subcommand("eval", "report R@1/R@2/R@5 on a dataset");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--format", format, "canonical-jsonl or persona-chat-text");
  eval->add_option("--threads", threads);
  eval->add_flag("--per-example", per_example, "include rank and gate per example");

  auto* score = app.add_subcommand("score", "rank the candidates of canonical-jsonl examples");
  score->add_option("--checkpoint", checkpoint)->required();
  score->add_option("--input", input)->required();
  score->add_option("--output", output)->required();

  auto* inspect = app.add_subcommand("inspect", "dump relevance scores and gate decisions");
  inspect->add_option("--checkpoint", checkpoint)->required();
  inspect->add_option("--input", input)->required();
  inspect->add_option("--output", output)->required();

  fire::SyntheticSpec spec;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic canonical-jsonl corpus");
  synth->add_option("--output", output)->required();
  synth->add_option("--episodes", spec.episodes);
  synth->add_option("--entries", spec.entries);
  synth->add_option("--candidates", spec.candidates);
  synth->add_option("--seed", synth_seed);

  std::size_t dim = 300;
  auto* embed = app.add_subcommand("embeddings", "write random embeddings for the words of a corpus");
  embed->add_option("--data", data)->required();
  embed->add_option("--format", format);
  embed->add_option("--dim", dim);
  embed->add_option("--output", output)->required();
  embed->add_option("--seed", synth_seed);
  std::size_t candidates = fire::kDefaultCandidates;
  embed->add_option("--candidates", candidates, "candidates per episode in --data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      auto config = fire::KeyValueConfig::load(config_path);
      for (const auto& a : assignments) config.set_assignment(a);
      if (seed) config.set("seed", std::to_string(*seed));
      if (gamma) config.set("gamma", std::to_string(*gamma));
      if (iterations) config.set("iterations", std::to_string(*iterations));
      if (epsilon) config.set("epsilon", std::to_string(*epsilon));
      if (batch) config.set("batch_size", std::to_string(*batch));
      if (epochs) config.set("epochs", std::to_string(*epochs));
      const auto run = fire::resolve_run_config(config);
      const auto outcome = fire::run_train(run, std::cerr);
      nlohmann::json summary{{"train_examples", outcome.train_examples},
                             {"valid_examples", outcome.valid_examples},
                             {"vocab_size", outcome.vocab_size},
                             {"epochs", outcome.result.epochs_run},
                             {"steps", outcome.result.step_losses.size()},
                             {"best_step", outcome.result.best_step},
                             {"checkpoint", run.checkpoint}};
      if (outcome.result.best_validation >= 0) summary["best_valid_R@1"] = outcome.result.best_validation;
      std::cout << summary.dump() << '\n';
    } else if (*eval) {
      const auto report = fire::run_eval(checkpoint, data, fire::parse_corpus_format(format), threads);
      std::cout << report.to_json(per_example).dump() << '\n';
    } else if (*score || *inspect) {
      const auto ckpt = fire::load_checkpoint(checkpoint);
      auto in = open_input(input);
      auto out = open_output(output);
      const std::size_t failed = *score ? fire::run_score(ckpt, in, out) : fire::run_inspect(ckpt, in, out);
      if (failed > 0) {
        std::cerr << failed << " input line(s) could not be processed; see " << output << '\n';
        return 2;
      }
    } else if (*synth) {
      fire::Rng rng(synth_seed);
      auto out = open_output(output);
      fire::write_canonical_jsonl(out, fire::generate_synthetic(spec, rng));
    } else if (*embed) {
      const auto episodes = fire::read_episodes(data, fire::parse_corpus_format(format), candidates);
      fire::Rng rng(synth_seed);
      auto out = open_output(output);
      fire::write_random_embeddings(out, fire::Vocab::build(fire::corpus_tokens(episodes), 1), dim, rng);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fire::exit_code_for(e);
  }
  return 0;
}
