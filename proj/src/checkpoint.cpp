#include "fire/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fire/error.hpp"

namespace fire {

namespace {

constexpr char kMagic[8] = {'F', 'I', 'R', 'E', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return {{"pretrained_dim", c.dims.pretrained_dim},
          {"task_dim", c.dims.task_dim},
          {"char_dim", c.dims.char_dim},
          {"filters_per_width", c.dims.filters_per_width},
          {"filter_widths", c.dims.filter_widths},
          {"hidden", c.dims.hidden},
          {"aggregator_hidden", c.dims.aggregator_hidden},
          {"mlp_hidden", c.dims.mlp_hidden},
          {"iterations", c.iterations},
          {"gamma", c.gamma},
          {"dropout", c.dropout},
          {"use_filters", c.use_filters}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epsilon", c.epsilon},         {"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
          {"decay_rate", c.decay_rate},   {"decay_steps", c.decay_steps}, {"clip_norm", c.clip_norm},
          {"epochs", c.epochs},           {"seed", c.seed},               {"threads", c.threads}};
}

nlohmann::json to_json(const PaddingLimits& l) {
  return {{"max_chars_per_word", l.max_chars_per_word},
          {"max_words_per_utterance", l.max_words_per_utterance},
          {"max_utterances", l.max_utterances},
          {"max_words_per_response", l.max_words_per_response},
          {"max_words_per_entry", l.max_words_per_entry},
          {"max_entries", l.max_entries},
          {"candidates", l.candidates}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dims.pretrained_dim = j.at("pretrained_dim");
  c.dims.task_dim = j.at("task_dim");
  c.dims.char_dim = j.at("char_dim");
  c.dims.filters_per_width = j.at("filters_per_width");
  c.dims.filter_widths = j.at("filter_widths").get<std::vector<std::size_t>>();
  c.dims.hidden = j.at("hidden");
  c.dims.aggregator_hidden = j.at("aggregator_hidden");
  c.dims.mlp_hidden = j.at("mlp_hidden");
  c.iterations = j.at("iterations");
  c.gamma = j.at("gamma");
  c.dropout = j.at("dropout");
  c.use_filters = j.at("use_filters");
  return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epsilon = j.at("epsilon");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.decay_rate = j.at("decay_rate");
  c.decay_steps = j.at("decay_steps");
  c.clip_norm = j.at("clip_norm");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.threads = j.at("threads");
  return c;
}

PaddingLimits limits_from_json(const nlohmann::json& j) {
  PaddingLimits l;
  l.max_chars_per_word = j.at("max_chars_per_word");
  l.max_words_per_utterance = j.at("max_words_per_utterance");
  l.max_utterances = j.at("max_utterances");
  l.max_words_per_response = j.at("max_words_per_response");
  l.max_words_per_entry = j.at("max_words_per_entry");
  l.max_entries = j.at("max_entries");
  l.candidates = j.at("candidates");
  return l;
}

void save_checkpoint(std::ostream& out, const FireParams& params, const Adam* optimizer, const ModelConfig& model,
                     const TrainConfig& train, const PaddingLimits& limits, const Vocab& vocab) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (const auto& n : params.named()) tensors.emplace_back(n.name, n.tensor);
  const auto trainable = params.named();
  if (optimizer) {
    std::size_t slot = 0;
    for (const auto& n : trainable) {
      if (!n.trainable) continue;
      const Shape shape = n.tensor.shape();
      tensors.emplace_back("adam.m/" + n.name, Tensor::from(shape, optimizer->first_moments().at(slot)));
      tensors.emplace_back("adam.v/" + n.name, Tensor::from(shape, optimizer->second_moments().at(slot)));
      ++slot;
    }
  }

  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}});
    offset += 8 * t.size();
  }
  std::vector<std::uint32_t> chars;
  // reserved PAD/UNK slots are implied
  for (std::size_t i = 2; i < vocab.chars().size(); ++i) chars.push_back(static_cast<std::uint32_t>(vocab.chars()[i]));
  nlohmann::json header{{"tensors", manifest},
                        {"payload_bytes", offset},
                        {"model", to_json(model)},
                        {"train", to_json(train)},
                        {"limits", to_json(limits)},
                        {"vocab", {{"tokens", vocab.tokens()}, {"chars", chars}, {"fingerprint", hex(vocab.fingerprint())}}},
                        {"optimizer", {{"present", optimizer != nullptr}, {"step", optimizer ? optimizer->steps() : 0}}}};
  const std::string text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((kCheckpointVersion >> (8 * i)) & 0xff));
  put_u64(bytes, text.size());
  bytes += text;
  bytes.reserve(bytes.size() + offset);
  for (const auto& [name, t] : tensors)
    for (real v : t.data()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed to write checkpoint");
}

void save_checkpoint(const std::string& path, const FireParams& params, const Adam* optimizer,
                     const ModelConfig& model, const TrainConfig& train, const PaddingLimits& limits,
                     const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, params, optimizer, model, train, limits, vocab);
}

CheckpointContents load_checkpoint(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(get_u64(raw + 8, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 " is not supported (this build reads version " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_u64(raw + 12, 8);
  if (header_len > bytes.size() - 20) throw CheckpointPayloadError("checkpoint header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  const std::uint64_t payload_start = 20 + header_len;
  const std::uint64_t payload_size = bytes.size() - payload_start;

  try {
    // manifest against payload
    std::unordered_map<std::string, Tensor> tensors;
    std::uint64_t expected = 0;
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name");
      const Shape shape = entry.at("shape").get<Shape>();
      const std::uint64_t offset = entry.at("offset");
      if (entry.at("dtype") != "f64") throw CheckpointPayloadError("tensor " + name + " has unsupported dtype");
      std::uint64_t count = 1;
      for (auto s : shape) count *= s;
      if (offset != expected || offset + 8 * count > payload_size) {
        throw CheckpointPayloadError("tensor " + name + " " + shape_string(shape) + " at byte " +
                                     std::to_string(offset) + " does not fit the " + std::to_string(payload_size) +
                                     "-byte payload");
      }
      std::vector<real> values(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<real>(get_u64(raw + payload_start + offset + 8 * i, 8));
      }
      tensors.emplace(name, Tensor::from(shape, std::move(values)));
      expected = offset + 8 * count;
    }
    if (expected != payload_size || header.at("payload_bytes").get<std::uint64_t>() != payload_size) {
      throw CheckpointPayloadError("manifest covers " + std::to_string(expected) + " bytes but the payload has " +
                                   std::to_string(payload_size));
    }

    CheckpointContents out;
    out.model = model_config_from_json(header.at("model"));
    out.train = train_config_from_json(header.at("train"));
    out.limits = limits_from_json(header.at("limits"));
    const auto& vj = header.at("vocab");
    std::vector<char32_t> chars;
    for (std::uint32_t c : vj.at("chars").get<std::vector<std::uint32_t>>()) chars.push_back(static_cast<char32_t>(c));
    out.vocab = Vocab::from_tables(vj.at("tokens").get<std::vector<std::string>>(), std::move(chars));
    if (hex(out.vocab.fingerprint()) != vj.at("fingerprint").get<std::string>()) {
      throw CheckpointPayloadError("stored vocabulary does not reproduce its fingerprint");
    }

    Rng scratch(0);
    out.params = FireParams::init(out.model, Tensor::zeros({out.vocab.size(), out.model.dims.pretrained_dim}),
                                  Tensor::zeros({out.vocab.size(), out.model.dims.task_dim}), out.vocab.char_size(),
                                  scratch);
    const auto named = out.params.named();
    auto take = [&](const std::string& name, Tensor dst) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw CheckpointPayloadError("checkpoint is missing tensor " + name);
      if (it->second.shape() != dst.shape()) {
        throw CheckpointPayloadError("tensor " + name + " has shape " + shape_string(it->second.shape()) +
                                     ", model expects " + shape_string(dst.shape()));
      }
      std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
    };
    for (const auto& n : named) take(n.name, n.tensor);
    out.optimizer = Adam(out.params.trainable());
    if (header.at("optimizer").at("present").get<bool>()) {
      out.optimizer.set_steps(header.at("optimizer").at("step"));
      std::size_t slot = 0;
      for (const auto& n : named) {
        if (!n.trainable) continue;
        const auto& m = tensors.at("adam.m/" + n.name);
        const auto& v = tensors.at("adam.v/" + n.name);
        out.optimizer.first_moments()[slot].assign(m.data().begin(), m.data().end());
        out.optimizer.second_moments()[slot].assign(v.data().begin(), v.data().end());
        ++slot;
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw CheckpointPayloadError(std::string("checkpoint is missing optimizer state: ") + e.what());
  }
}

CheckpointContents load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

void check_fingerprint(const CheckpointContents& checkpoint, std::uint64_t fingerprint) {
  if (checkpoint.fingerprint() != fingerprint) {
    throw FingerprintMismatchError("vocabulary fingerprint " + hex(fingerprint) + " does not match checkpoint " +
                                   hex(checkpoint.fingerprint()));
  }
}

}  // namespace fire
