#include "fire/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fire/error.hpp"

namespace fire {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key " + key + " expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

real to_real(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  real out = 0.0;
  in >> out;
  if (!in || !in.eof()) throw ConfigError("config key " + key + " expects a number, got '" + value + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key " + key + " expects true or false, got '" + value + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(to_size(key, trim(part)));
  if (out.empty()) throw ConfigError("config key " + key + " expects a comma-separated list");
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig config;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos || trim(text.substr(0, eq)).empty()) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key = value");
    }
    config.set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse(in, path);
}

void KeyValueConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& KeyValueConfig::require(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key: " + key);
  return it->second;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

Preset preset_by_name(const std::string& name) {
  if (name == "persona-original") return {name, PaddingLimits::persona_chat(), 0.3, 16, 3};
  if (name == "persona-revised") return {name, PaddingLimits::persona_chat(), 0.2, 16, 3};
  if (name == "cmudog") return {name, PaddingLimits::cmu_dog(), 0.2, 4, 3};
  throw ConfigError("unknown preset '" + name + "' (expected persona-original, persona-revised or cmudog)");
}

RunConfig resolve_run_config(const KeyValueConfig& config) {
  RunConfig run;
  run.preset = config.require("preset");
  const Preset preset = preset_by_name(run.preset);
  run.limits = preset.limits;
  run.model.gamma = preset.gamma;
  run.model.iterations = preset.iterations;
  run.train.batch_size = preset.batch_size;
  run.train_data = config.require("train_data");
  run.pretrained_embeddings = config.require("pretrained_embeddings");
  run.task_embeddings = config.require("task_embeddings");
  run.checkpoint = config.require("checkpoint");

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"preset", [](auto&, auto&) {}},
      {"train_data", [](auto&, auto&) {}},
      {"pretrained_embeddings", [](auto&, auto&) {}},
      {"task_embeddings", [](auto&, auto&) {}},
      {"checkpoint", [](auto&, auto&) {}},
      {"valid_data", [&](auto&, auto& v) { run.valid_data = v; }},
      {"metrics", [&](auto&, auto& v) { run.metrics = v; }},
      {"format", [&](auto&, auto& v) { run.format = parse_corpus_format(v); }},
      {"min_count", [&](auto& k, auto& v) { run.min_count = to_size(k, v); }},
      {"gamma", [&](auto& k, auto& v) { run.model.gamma = to_real(k, v); }},
      {"iterations", [&](auto& k, auto& v) { run.model.iterations = to_size(k, v); }},
      {"dropout", [&](auto& k, auto& v) { run.model.dropout = to_real(k, v); }},
      {"use_filters", [&](auto& k, auto& v) { run.model.use_filters = to_bool(k, v); }},
      {"pretrained_dim", [&](auto& k, auto& v) { run.model.dims.pretrained_dim = to_size(k, v); }},
      {"task_dim", [&](auto& k, auto& v) { run.model.dims.task_dim = to_size(k, v); }},
      {"char_dim", [&](auto& k, auto& v) { run.model.dims.char_dim = to_size(k, v); }},
      {"filters_per_width", [&](auto& k, auto& v) { run.model.dims.filters_per_width = to_size(k, v); }},
      {"filter_widths", [&](auto& k, auto& v) { run.model.dims.filter_widths = to_sizes(k, v); }},
      {"hidden", [&](auto& k, auto& v) { run.model.dims.hidden = to_size(k, v); }},
      {"aggregator_hidden", [&](auto& k, auto& v) { run.model.dims.aggregator_hidden = to_size(k, v); }},
      {"mlp_hidden", [&](auto& k, auto& v) { run.model.dims.mlp_hidden = to_size(k, v); }},
      {"epsilon", [&](auto& k, auto& v) { run.train.epsilon = to_real(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { run.train.batch_size = to_size(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { run.train.learning_rate = to_real(k, v); }},
      {"decay_rate", [&](auto& k, auto& v) { run.train.decay_rate = to_real(k, v); }},
      {"decay_steps", [&](auto& k, auto& v) { run.train.decay_steps = to_size(k, v); }},
      {"clip_norm", [&](auto& k, auto& v) { run.train.clip_norm = to_real(k, v); }},
      {"epochs", [&](auto& k, auto& v) { run.train.epochs = to_size(k, v); }},
      {"seed", [&](auto& k, auto& v) { run.train.seed = to_size(k, v); }},
      {"threads", [&](auto& k, auto& v) { run.train.threads = to_size(k, v); }},
      {"max_chars_per_word", [&](auto& k, auto& v) { run.limits.max_chars_per_word = to_size(k, v); }},
      {"max_words_per_utterance", [&](auto& k, auto& v) { run.limits.max_words_per_utterance = to_size(k, v); }},
      {"max_utterances", [&](auto& k, auto& v) { run.limits.max_utterances = to_size(k, v); }},
      {"max_words_per_response", [&](auto& k, auto& v) { run.limits.max_words_per_response = to_size(k, v); }},
      {"max_words_per_entry", [&](auto& k, auto& v) { run.limits.max_words_per_entry = to_size(k, v); }},
      {"max_entries", [&](auto& k, auto& v) { run.limits.max_entries = to_size(k, v); }},
      {"candidates", [&](auto& k, auto& v) { run.limits.candidates = to_size(k, v); }},
  };
  for (const auto& [key, value] : config.values()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key: " + key);
    it->second(key, value);
  }
  run.model.validate();
  run.train.validate();
  run.limits.validate();
  if (run.limits.max_chars_per_word < run.model.dims.max_filter_width()) {
    throw ConfigError("max_chars_per_word must be at least the widest character filter");
  }
  return run;
}

std::vector<std::string> RunConfig::describe() const {
  std::ostringstream widths;
  for (std::size_t i = 0; i < model.dims.filter_widths.size(); ++i) {
    widths << (i ? "," : "") << model.dims.filter_widths[i];
  }
  auto num = [](real v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  return {
      "preset=" + preset,
      "train_data=" + train_data,
      "valid_data=" + valid_data,
      "format=" + std::string(format == CorpusFormat::kCanonicalJsonl ? "canonical-jsonl" : "persona-chat-text"),
      "pretrained_embeddings=" + pretrained_embeddings,
      "task_embeddings=" + task_embeddings,
      "checkpoint=" + checkpoint,
      "metrics=" + metrics,
      "min_count=" + std::to_string(min_count),
      "gamma=" + num(model.gamma),
      "iterations=" + std::to_string(model.iterations),
      "dropout=" + num(model.dropout),
      "use_filters=" + std::string(model.use_filters ? "true" : "false"),
      "pretrained_dim=" + std::to_string(model.dims.pretrained_dim),
      "task_dim=" + std::to_string(model.dims.task_dim),
      "char_dim=" + std::to_string(model.dims.char_dim),
      "filters_per_width=" + std::to_string(model.dims.filters_per_width),
      "filter_widths=" + widths.str(),
      "hidden=" + std::to_string(model.dims.hidden),
      "aggregator_hidden=" + std::to_string(model.dims.aggregator_hidden),
      "mlp_hidden=" + std::to_string(model.dims.mlp_hidden),
      "epsilon=" + num(train.epsilon),
      "batch_size=" + std::to_string(train.batch_size),
      "learning_rate=" + num(train.learning_rate),
      "decay_rate=" + num(train.decay_rate),
      "decay_steps=" + std::to_string(train.decay_steps),
      "clip_norm=" + num(train.clip_norm),
      "epochs=" + std::to_string(train.epochs),
      "seed=" + std::to_string(train.seed),
      "threads=" + std::to_string(train.threads),
      "max_chars_per_word=" + std::to_string(limits.max_chars_per_word),
      "max_words_per_utterance=" + std::to_string(limits.max_words_per_utterance),
      "max_utterances=" + std::to_string(limits.max_utterances),
      "max_words_per_response=" + std::to_string(limits.max_words_per_response),
      "max_words_per_entry=" + std::to_string(limits.max_words_per_entry),
      "max_entries=" + std::to_string(limits.max_entries),
      "candidates=" + std::to_string(limits.candidates),
  };
}

}  // namespace fire
