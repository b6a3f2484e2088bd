#include "evade/entities.hpp"

#include "evade/corpus.hpp"
#include "evade/text.hpp"

namespace evade {

namespace {

bool is_handle(const std::string& tok) {
  return tok.size() > 1 && (tok.front() == '@' || tok.front() == '#');
}

bool starts_upper(const std::string& tok) {
  const auto cps = text::decode_utf8(tok);
  return !cps.empty() && text::is_upper(cps.front());
}

}  // namespace

std::vector<std::size_t> protect_entities(std::span<const std::string> tokens, const Gazetteer& gazetteer) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    const bool last = i + 1 == tokens.size();
    if (last || (i > 0 && starts_upper(tok)) || text::contains_digit(tok) || is_handle(tok) ||
        (!gazetteer.empty() && gazetteer.count(text::case_fold(tok)) > 0)) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> protect_entities_in_text(std::string_view text, const Gazetteer& gazetteer) {
  std::vector<std::size_t> out;
  std::size_t offset = 0;
  for (const auto& sentence : split_sentences(text)) {
    const auto toks = tokenize(sentence);
    for (std::size_t p : protect_entities(toks, gazetteer)) out.push_back(offset + p);
    offset += toks.size();
  }
  return out;
}

}  // namespace evade
