#include "fire/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fire/error.hpp"

namespace fire {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

DataError line_error(std::size_t line, const std::string& reason) {
  return DataError("line " + std::to_string(line) + ": " + reason);
}

void check_candidates(const RawEpisode& ep, std::size_t expected, std::size_t line) {
  if (ep.candidates.size() != expected) {
    throw line_error(line, "episode has " + std::to_string(ep.candidates.size()) + " candidates, expected " +
                               std::to_string(expected));
  }
  if (ep.label >= ep.candidates.size()) {
    throw line_error(line, "label " + std::to_string(ep.label) + " outside [0, " +
                               std::to_string(ep.candidates.size() - 1) + "]");
  }
}

constexpr std::string_view kYourPersona = "your persona:";
constexpr std::string_view kPartnerPersona = "partner's persona:";

std::vector<RawEpisode> parse_persona_chat(std::istream& in, std::size_t expected) {
  std::vector<RawEpisode> episodes;
  std::vector<std::string> persona;
  std::vector<std::string> history;
  std::size_t previous_turn = 0;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    const auto space = line.find(' ');
    if (space == std::string_view::npos) throw line_error(line_no, "missing turn number");
    std::size_t turn = 0;
    const auto num = line.substr(0, space);
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), turn);
    if (ec != std::errc() || ptr != num.data() + num.size()) {
      throw line_error(line_no, "turn number '" + std::string(num) + "' is not an integer");
    }
    if (turn <= previous_turn) {
      persona.clear();
      history.clear();
    }
    previous_turn = turn;
    const auto rest = line.substr(space + 1);

    if (rest.starts_with(kYourPersona)) {
      persona.emplace_back(trim(rest.substr(kYourPersona.size())));
      continue;
    }
    if (rest.starts_with(kPartnerPersona)) continue;

    const auto fields = split(rest, '\t');
    if (fields.size() < 4) {
      throw line_error(line_no, "expected '<utterance>\\t<response>\\t\\t<candidates>', found " +
                                    std::to_string(fields.size()) + " tab-separated fields");
    }
    RawEpisode ep;
    ep.knowledge = persona;
    ep.context = history;
    ep.context.emplace_back(fields[0]);
    for (auto c : split(fields[3], '|')) ep.candidates.emplace_back(c);
    const std::string response(fields[1]);
    const auto it = std::find(ep.candidates.begin(), ep.candidates.end(), response);
    if (ep.candidates.size() == expected && it == ep.candidates.end()) {
      throw line_error(line_no, "true response is not among the candidates");
    }
    ep.label = static_cast<std::size_t>(it - ep.candidates.begin());
    check_candidates(ep, expected, line_no);
    history.emplace_back(fields[0]);
    history.push_back(response);
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

std::vector<std::string> string_array(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw line_error(line, std::string("missing field '") + key + "'");
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw line_error(line, std::string("field '") + key + "' is not an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw line_error(line, std::string("field '") + key + "' holds a non-string");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "persona-chat-text") return CorpusFormat::kPersonaChatText;
  if (name == "canonical-jsonl" || name == "jsonl") return CorpusFormat::kCanonicalJsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) +
                    "' (expected persona-chat-text or canonical-jsonl)");
}

RawEpisode parse_canonical_line(std::string_view line, std::size_t line_number, std::size_t expected,
                                bool require_label) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw line_error(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw line_error(line_number, "record is not a JSON object");
  RawEpisode ep;
  ep.context = string_array(j, "context", line_number);
  ep.knowledge = string_array(j, "knowledge", line_number);
  ep.candidates = string_array(j, "candidates", line_number);
  if (j.contains("label") || require_label) {
    if (!j.contains("label") || !j.at("label").is_number_integer() || j.at("label").get<long long>() < 0) {
      throw line_error(line_number, "field 'label' must be a non-negative integer");
    }
    ep.label = j.at("label").get<std::size_t>();
  }
  check_candidates(ep, expected, line_number);
  return ep;
}

std::vector<RawEpisode> parse_episodes(std::istream& in, CorpusFormat format, std::size_t expected) {
  if (format == CorpusFormat::kPersonaChatText) return parse_persona_chat(in, expected);
  std::vector<RawEpisode> episodes;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (trim(raw).empty()) continue;
    episodes.push_back(parse_canonical_line(raw, line_no, expected));
  }
  return episodes;
}

std::string to_canonical_line(const RawEpisode& ep) {
  json j;
  j["context"] = ep.context;
  j["knowledge"] = ep.knowledge;
  j["candidates"] = ep.candidates;
  j["label"] = ep.label;
  return j.dump();
}

void write_canonical_jsonl(std::ostream& out, const std::vector<RawEpisode>& episodes) {
  for (const auto& ep : episodes) out << to_canonical_line(ep) << '\n';
}

// --- tokens ----------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return tokens;
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    char32_t c = 0;
    if (b0 < 0x80) {
      c = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      c = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      c = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      c = b0 & 0x07;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + extra >= text.size() && extra > 0) {
      throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) throw DataError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      c = (c << 6) | (b & 0x3F);
    }
    out.push_back(c);
    i += extra + 1;
  }
  return out;
}

// --- vocabulary ------------------------------------------------------------

Vocab::Vocab()
    : tokens_{std::string(kPadToken), std::string(kUnkToken)},
      chars_{0, 0},
      counts_(2, 0),
      token_ids_{{tokens_[0], kPad}, {tokens_[1], kUnk}} {}

Vocab Vocab::from_tables(std::vector<std::string> tokens, std::vector<char32_t> chars) {
  Vocab v;
  for (auto& t : tokens) {
    if (t == kPadToken || t == kUnkToken || v.token_ids_.contains(t)) continue;
    v.token_ids_.emplace(t, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(std::move(t));
  }
  for (char32_t c : chars) {
    if (v.char_ids_.contains(c)) continue;
    v.char_ids_.emplace(c, static_cast<std::int32_t>(v.chars_.size()));
    v.chars_.push_back(c);
  }
  v.counts_.assign(v.tokens_.size(), 0);
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& tokens, std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  std::map<char32_t, std::size_t> char_counts;
  for (const auto& t : tokens) {
    ++counts[t];
    for (char32_t c : decode_utf8(t)) ++char_counts[c];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count && tok != kPadToken && tok != kUnkToken) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::pair<char32_t, std::size_t>> chars(char_counts.begin(), char_counts.end());
  std::stable_sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> token_table;
  for (auto& [tok, n] : kept) token_table.push_back(tok);
  std::vector<char32_t> char_table;
  for (auto& [c, n] : chars) char_table.push_back(c);
  Vocab v = from_tables(std::move(token_table), std::move(char_table));
  for (std::size_t i = 2; i < v.tokens_.size(); ++i) v.counts_[i] = counts[v.tokens_[i]];
  return v;
}

std::int32_t Vocab::id(std::string_view token) const {
  const auto it = token_ids_.find(std::string(token));
  return it == token_ids_.end() ? kUnk : it->second;
}

std::int32_t Vocab::char_id(char32_t c) const {
  const auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnk : it->second;
}

std::size_t Vocab::count(std::string_view token) const {
  const auto it = token_ids_.find(std::string(token));
  return it == token_ids_.end() ? 0 : counts_[static_cast<std::size_t>(it->second)];
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) mix(static_cast<unsigned char>(c));
    mix(0xFF);
  }
  mix(0xFE);
  for (char32_t c : chars_)
    for (int s = 0; s < 32; s += 8) mix(static_cast<unsigned char>((c >> s) & 0xFF));
  return h;
}

std::vector<std::string> corpus_tokens(const std::vector<RawEpisode>& episodes) {
  std::vector<std::string> out;
  auto add = [&out](const std::vector<std::string>& sentences) {
    for (const auto& s : sentences)
      for (auto& t : tokenize(s)) out.push_back(std::move(t));
  };
  for (const auto& ep : episodes) {
    add(ep.context);
    add(ep.knowledge);
    add(ep.candidates);
  }
  return out;
}

// --- indexing --------------------------------------------------------------

void PaddingLimits::validate() const {
  const std::pair<const char*, std::size_t> fields[] = {
      {"max_chars_per_word", max_chars_per_word},   {"max_words_per_utterance", max_words_per_utterance},
      {"max_utterances", max_utterances},           {"max_words_per_response", max_words_per_response},
      {"max_words_per_entry", max_words_per_entry}, {"max_entries", max_entries},
      {"candidates", candidates}};
  for (const auto& [name, value] : fields)
    if (value == 0) throw ConfigError(std::string(name) + " must be positive");
}

namespace {

SentenceGrid make_grid(const std::vector<std::string>& sentences, std::size_t first, std::size_t rows,
                       std::size_t words, std::size_t chars, const Vocab& vocab) {
  SentenceGrid g;
  g.rows = rows;
  g.words = words;
  g.chars = chars;
  g.word_ids.assign(rows * words, Vocab::kPad);
  g.char_ids.assign(rows * words * chars, Vocab::kPad);
  g.lengths.assign(rows, 0);
  for (std::size_t r = 0; r + first < sentences.size() && r < rows; ++r) {
    const auto tokens = tokenize(sentences[first + r]);
    const std::size_t n = std::min(tokens.size(), words);
    g.lengths[r] = n;
    for (std::size_t w = 0; w < n; ++w) {
      g.word_ids[r * words + w] = vocab.id(tokens[w]);
      const auto cps = decode_utf8(tokens[w]);
      for (std::size_t c = 0; c < std::min(cps.size(), chars); ++c)
        g.char_ids[(r * words + w) * chars + c] = vocab.char_id(cps[c]);
    }
  }
  return g;
}

}  // namespace

IndexedExample index_and_pad(const RawEpisode& ep, const Vocab& vocab, const PaddingLimits& limits) {
  limits.validate();
  IndexedExample ex;
  ex.num_utterances = std::min(ep.context.size(), limits.max_utterances);
  ex.num_entries = std::min(ep.knowledge.size(), limits.max_entries);
  ex.context = make_grid(ep.context, ep.context.size() - ex.num_utterances, limits.max_utterances,
                         limits.max_words_per_utterance, limits.max_chars_per_word, vocab);
  ex.knowledge = make_grid(ep.knowledge, ep.knowledge.size() - ex.num_entries, limits.max_entries,
                           limits.max_words_per_entry, limits.max_chars_per_word, vocab);
  ex.candidates = make_grid(ep.candidates, 0, ep.candidates.size(), limits.max_words_per_response,
                            limits.max_chars_per_word, vocab);
  ex.label = ep.label;
  return ex;
}

IndexedDataset index_dataset(const std::vector<RawEpisode>& episodes, const Vocab& vocab,
                             const PaddingLimits& limits) {
  IndexedDataset ds;
  ds.limits = limits;
  ds.vocab_fingerprint = vocab.fingerprint();
  ds.examples.reserve(episodes.size());
  for (const auto& ep : episodes) {
    if (ep.candidates.size() != limits.candidates) {
      throw DataError("episode has " + std::to_string(ep.candidates.size()) + " candidates, expected " +
                      std::to_string(limits.candidates));
    }
    ds.examples.push_back(index_and_pad(ep, vocab, limits));
  }
  return ds;
}

// --- embeddings ------------------------------------------------------------

EmbeddingTable load_pretrained_embeddings(std::istream& in, std::size_t dim, const Vocab& vocab, Rng& rng) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  std::vector<real> table(vocab.size() * dim, 0.0);
  std::vector<bool> found(vocab.size(), false);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream fields(raw);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<real> vec;
    std::string tok;
    while (fields >> tok) {
      real v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw line_error(line_no, "'" + tok + "' is not a number");
      }
      vec.push_back(v);
    }
    if (vec.size() != dim) {
      throw line_error(line_no, "expected " + std::to_string(dim) + " values after '" + word + "', found " +
                                    std::to_string(vec.size()));
    }
    const auto id = vocab.id(word);
    if (id == Vocab::kUnk && word != Vocab::kUnkToken) continue;
    if (id == Vocab::kPad || found[static_cast<std::size_t>(id)]) continue;
    found[static_cast<std::size_t>(id)] = true;
    std::copy(vec.begin(), vec.end(), table.begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  EmbeddingTable result;
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    if (found[id]) continue;
    for (std::size_t j = 0; j < dim; ++j) table[id * dim + j] = rng.uniform(-0.1, 0.1);
    if (id >= 2) ++result.misses;
  }
  result.table = Tensor::from({vocab.size(), dim}, std::move(table));
  return result;
}

void write_random_embeddings(std::ostream& out, const Vocab& vocab, std::size_t dim, Rng& rng) {
  char buf[32];
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    out << vocab.token(static_cast<std::int32_t>(id));
    for (std::size_t j = 0; j < dim; ++j) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, rng.uniform(-1.0, 1.0));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

}  // namespace fire
