#include "fire/synthetic.hpp"

#include <algorithm>

#include "fire/error.hpp"

namespace fire {

namespace {

// Distinct pronounceable words, so characters carry some signal too.
std::vector<std::string> word_list(const std::string& prefix, std::size_t count) {
  static const char* syllables[] = {"ba", "ko", "mi", "tu", "re", "sa", "lo", "ne", "vi", "du", "pa", "ge"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(prefix + syllables[i % 12] + syllables[(i / 12) % 12]);
  return out;
}

std::vector<std::size_t> distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<RawEpisode> generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.entries < 1 || spec.candidates < 2 || spec.keys < spec.entries ||
      spec.attributes < std::max(spec.entries, spec.candidates) || spec.fillers < 4 || spec.keys > 144 ||
      spec.attributes > 144) {
    throw ConfigError("synthetic corpus specification is inconsistent");
  }
  const auto keys = word_list("k", spec.keys);
  const auto attrs = word_list("a", spec.attributes);
  const auto fillers = word_list("f", spec.fillers);
  auto filler = [&] { return fillers[rng.below(fillers.size())]; };

  std::vector<RawEpisode> out;
  for (std::size_t e = 0; e < spec.episodes; ++e) {
    RawEpisode ep;
    const auto key_ids = distinct(rng, spec.keys, spec.entries);
    const auto attr_ids = distinct(rng, spec.attributes, spec.attributes);
    for (std::size_t n = 0; n < spec.entries; ++n) {
      ep.knowledge.push_back("my " + keys[key_ids[n]] + " is " + attrs[attr_ids[n]]);
    }
    const std::size_t target = rng.below(spec.entries);
    ep.context.push_back(filler() + " " + filler() + " " + filler());
    ep.context.push_back("what is your " + keys[key_ids[target]]);

    // attribute order: other entries' attributes first, then unrelated ones
    std::vector<std::size_t> negatives;
    for (std::size_t n = 0; n < spec.entries; ++n)
      if (n != target) negatives.push_back(attr_ids[n]);
    for (std::size_t i = spec.entries; negatives.size() + 1 < spec.candidates; ++i) negatives.push_back(attr_ids[i]);
    ep.label = rng.below(spec.candidates);
    for (std::size_t c = 0, next = 0; c < spec.candidates; ++c) {
      const std::size_t a = c == ep.label ? attr_ids[target] : negatives[next++];
      ep.candidates.push_back("it is " + attrs[a]);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace fire
