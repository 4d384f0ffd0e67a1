#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fire/rng.hpp"
#include "fire/tensor.hpp"

namespace fire {

inline constexpr std::size_t kDefaultCandidates = 20;

/// One ranking instance before indexing: the dialogue so far, the grounding
/// knowledge entries, the candidate responses and the position of the true one.
struct RawEpisode {
  std::vector<std::string> context;
  std::vector<std::string> knowledge;
  std::vector<std::string> candidates;
  std::size_t label = 0;

  bool operator==(const RawEpisode&) const = default;
};

enum class CorpusFormat { kPersonaChatText, kCanonicalJsonl };

CorpusFormat parse_corpus_format(std::string_view name);

/// Reads a whole corpus. Throws DataError with the 1-based line number on the
/// first malformed line or wrong candidate count.
std::vector<RawEpisode> parse_episodes(std::istream& in, CorpusFormat format,
                                       std::size_t candidates_per_episode = kDefaultCandidates);

/// Parses one canonical-jsonl line (used by per-line tools that keep going
/// after a bad record). Without `require_label` a missing label reads as 0.
RawEpisode parse_canonical_line(std::string_view line, std::size_t line_number,
                                std::size_t candidates_per_episode = kDefaultCandidates, bool require_label = true);

std::string to_canonical_line(const RawEpisode& episode);
void write_canonical_jsonl(std::ostream& out, const std::vector<RawEpisode>& episodes);

/// Lowercases, splits on whitespace and emits every ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

/// Decodes UTF-8; throws DataError on malformed input.
std::u32string decode_utf8(std::string_view text);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();

  /// Tokens seen at least `min_count` times, ordered by (count desc, token).
  /// The character table covers every character of every token.
  static Vocab build(const std::vector<std::string>& tokens, std::size_t min_count);
  /// Rebuilds a vocabulary from its tables; reserved PAD/UNK entries are
  /// implied and must not be part of `chars`.
  static Vocab from_tables(std::vector<std::string> tokens, std::vector<char32_t> chars);

  std::size_t size() const { return tokens_.size(); }
  std::size_t char_size() const { return chars_.size(); }
  std::int32_t id(std::string_view token) const;
  std::int32_t char_id(char32_t c) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<char32_t>& chars() const { return chars_; }
  std::size_t count(std::string_view token) const;

  /// FNV-1a over both tables; identifies the id assignment.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<char32_t> chars_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::int32_t> token_ids_;
  std::unordered_map<char32_t, std::int32_t> char_ids_;
};

/// Every token of every context utterance, knowledge entry and candidate.
std::vector<std::string> corpus_tokens(const std::vector<RawEpisode>& episodes);

struct PaddingLimits {
  std::size_t max_chars_per_word = 18;
  std::size_t max_words_per_utterance = 20;
  std::size_t max_utterances = 15;
  std::size_t max_words_per_response = 20;
  std::size_t max_words_per_entry = 15;
  std::size_t max_entries = 5;
  std::size_t candidates = kDefaultCandidates;

  static PaddingLimits persona_chat() { return {18, 20, 15, 20, 15, 5}; }
  static PaddingLimits cmu_dog() { return {18, 40, 15, 40, 40, 20}; }

  void validate() const;
  bool operator==(const PaddingLimits&) const = default;
};

/// rows x words token ids plus rows x words x chars character ids, zero-padded.
struct SentenceGrid {
  std::size_t rows = 0;
  std::size_t words = 0;
  std::size_t chars = 0;
  std::vector<std::int32_t> word_ids;
  std::vector<std::int32_t> char_ids;
  std::vector<std::size_t> lengths;

  std::int32_t word(std::size_t row, std::size_t pos) const { return word_ids[row * words + pos]; }
};

struct IndexedExample {
  SentenceGrid context;
  SentenceGrid knowledge;
  SentenceGrid candidates;
  std::size_t num_utterances = 0;
  std::size_t num_entries = 0;
  std::size_t label = 0;
};

/// Keeps the last utterances/entries, the first words of a sentence and the
/// first characters of a word; everything else is padded with PAD.
IndexedExample index_and_pad(const RawEpisode& episode, const Vocab& vocab, const PaddingLimits& limits);

struct IndexedDataset {
  std::vector<IndexedExample> examples;
  PaddingLimits limits;
  std::uint64_t vocab_fingerprint = 0;
};

IndexedDataset index_dataset(const std::vector<RawEpisode>& episodes, const Vocab& vocab,
                             const PaddingLimits& limits);

struct EmbeddingTable {
  Tensor table;  // [vocab size, dim]
  std::size_t misses = 0;
};

/// Reads "token v1 ... v_dim" lines. Vocabulary words missing from the file
/// get uniform(-0.1, 0.1) rows drawn in id order; the PAD row is zero.
EmbeddingTable load_pretrained_embeddings(std::istream& in, std::size_t dim, const Vocab& vocab, Rng& rng);

/// Writes a seeded random embedding file covering the vocabulary (PAD excluded).
void write_random_embeddings(std::ostream& out, const Vocab& vocab, std::size_t dim, Rng& rng);

}  // namespace fire
