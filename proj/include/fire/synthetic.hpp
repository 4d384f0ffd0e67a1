#pragma once

#include <cstddef>
#include <vector>

#include "fire/rng.hpp"
#include "fire/text.hpp"

namespace fire {

/// Knowledge-grounded toy dialogues. Every knowledge entry pairs a key word
/// with an attribute word; the last utterance asks about one key and the
/// true response names that key's attribute. Negatives name the attributes
/// of the other entries first, then unrelated attributes.
struct SyntheticSpec {
  std::size_t episodes = 64;
  std::size_t entries = 3;
  std::size_t candidates = kDefaultCandidates;
  std::size_t keys = 24;
  std::size_t attributes = 48;
  std::size_t fillers = 16;
};

std::vector<RawEpisode> generate_synthetic(const SyntheticSpec& spec, Rng& rng);

}  // namespace fire
