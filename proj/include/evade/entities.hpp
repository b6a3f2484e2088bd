#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace evade {

/// Case-folded words that are always treated as entities.
using Gazetteer = std::unordered_set<std::string>;

/// Positions (ascending) that masking must leave untouched in one sentence:
/// capitalized tokens past position 0, tokens with digits, @handles and
/// #tags, gazetteer entries, and the final token.
std::vector<std::size_t> protect_entities(std::span<const std::string> tokens, const Gazetteer& gazetteer = {});

/// Same rule applied sentence by sentence over a whole text; positions index
/// tokenize(text).
std::vector<std::size_t> protect_entities_in_text(std::string_view text, const Gazetteer& gazetteer = {});

}  // namespace evade
