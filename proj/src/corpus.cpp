#include "evade/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/text.hpp"

namespace evade {

using text::decode_utf8;
using text::encode_utf8;

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Human: return "human";
    case Label::Machine: return "machine";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(std::string_view s) {
  if (s == "human") return Label::Human;
  if (s == "machine") return Label::Machine;
  if (s == "unlabeled") return Label::Unlabeled;
  fail(ErrorKind::InvalidArgument, "unknown label '" + std::string(s) + "'");
}

Document::Document(std::string id, std::string_view text, Label label, std::map<std::string, std::string> meta)
    : id_(std::move(id)), text_(text::normalize(text)), label_(label), meta_(std::move(meta)) {
  require(!text_.empty(), ErrorKind::EmptyText, "document '" + id_ + "' is empty after normalization");
}

Document Document::relabeled(Label label) const {
  Document copy = *this;
  copy.label_ = label;
  return copy;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  add(kUnkToken);
  add(kBosToken);
  add(kEosToken);
}

TokenId Vocabulary::add(std::string_view token, std::uint64_t count) {
  std::string key(token);
  if (auto it = index_.find(key); it != index_.end()) {
    counts_[it->second] += count;
    return it->second;
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(key, id);
  tokens_.push_back(std::move(key));
  counts_.push_back(count);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  if (auto it = index_.find(std::string(token)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void FilterPolicy::validate() const {
  require(min_chars <= max_chars, ErrorKind::InvalidArgument, "filter policy: min_chars > max_chars");
}

// ------------------------------------------------------------------ tokenize

namespace {

constexpr char32_t kAngleOpen = U'⟨';
constexpr char32_t kAngleClose = U'⟩';

bool is_word_char(char32_t c) { return text::is_letter(c) || text::is_digit(c) || text::is_mark(c); }

bool is_word_connector(char32_t c) { return c == U'\'' || c == U'’' || c == U'-'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view input) {
  const std::u32string cps = decode_utf8(input);
  const std::size_t n = cps.size();
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < n) {
    const char32_t c = cps[i];
    if (text::is_space(c)) {
      ++i;
      continue;
    }
    // ⟨name⟩ placeholders (mask and reserved tokens) stay whole.
    if (c == kAngleOpen) {
      std::size_t j = i + 1;
      while (j < n && j - i <= 16 && text::is_letter(cps[j])) ++j;
      if (j < n && j > i + 1 && cps[j] == kAngleClose) {
        tokens.push_back(encode_utf8(std::u32string_view(cps).substr(i, j + 1 - i)));
        i = j + 1;
        continue;
      }
    }
    if (text::is_emoji(c)) {
      std::size_t j = i + 1;
      while (j < n && text::is_emoji_component(cps[j])) ++j;
      tokens.push_back(encode_utf8(std::u32string_view(cps).substr(i, j - i)));
      i = j;
      continue;
    }
    const bool prefixed = (c == U'@' || c == U'#') && i + 1 < n && is_word_char(cps[i + 1]);
    if (prefixed || is_word_char(c)) {
      std::size_t j = prefixed ? i + 1 : i;
      while (j < n) {
        const char32_t d = cps[j];
        if (is_word_char(d)) {
          ++j;
        } else if (is_word_connector(d) && j + 1 < n && is_word_char(cps[j + 1])) {
          ++j;
        } else if ((d == U'.' || d == U',') && text::is_digit(cps[j - 1]) && j + 1 < n && text::is_digit(cps[j + 1])) {
          ++j;
        } else {
          break;
        }
      }
      tokens.push_back(encode_utf8(std::u32string_view(cps).substr(i, j - i)));
      i = j;
      continue;
    }
    tokens.push_back(encode_utf8(c));
    ++i;
  }
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

namespace {

bool attaches_left(std::string_view t) {
  static constexpr std::array<std::string_view, 10> kClosers = {".", ",", "!", "?", ";", ":", ")", "]", "}", "%"};
  return std::find(kClosers.begin(), kClosers.end(), t) != kClosers.end();
}

bool attaches_right(std::string_view t) { return t == "(" || t == "[" || t == "{"; }

}  // namespace

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = false;
  for (const auto& t : tokens) {
    if (!out.empty() && !glue_next && !attaches_left(t)) out.push_back(' ');
    out += t;
    glue_next = attaches_right(t);
  }
  return out;
}

// ----------------------------------------------------------- split_sentences

namespace {

constexpr std::array<std::string_view, 40> kAbbreviations = {
    "mr",  "mrs",  "ms",  "dr",   "prof", "sr",   "jr",   "st",   "vs",   "etc",
    "e.g", "i.e",  "inc", "ltd",  "co",   "corp", "jan",  "feb",  "mar",  "apr",
    "jun", "jul",  "aug", "sep",  "sept", "oct",  "nov",  "dec",  "no",   "vol",
    "fig", "u.s",  "gen", "col",  "capt", "lt",   "sgt",  "rev",  "approx", "dept"};

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

bool is_closer(char32_t c) {
  return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'’' || c == U'”';
}

// The word (letters and inner dots) ending right before position `dot`.
std::string word_before(const std::u32string& cps, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0 && (text::is_letter(cps[start - 1]) || cps[start - 1] == U'.')) --start;
  return text::case_fold(encode_utf8(std::u32string_view(cps).substr(start, dot - start)));
}

}  // namespace

std::span<const std::string_view> sentence_abbreviations() { return kAbbreviations; }

std::vector<std::string> split_sentences(std::string_view input) {
  const std::u32string cps = decode_utf8(input);
  const std::size_t n = cps.size();
  std::vector<std::string> sentences;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    std::size_t a = start;
    std::size_t b = end;
    while (a < b && text::is_space(cps[a])) ++a;
    while (b > a && text::is_space(cps[b - 1])) --b;
    if (b > a) sentences.push_back(encode_utf8(std::u32string_view(cps).substr(a, b - a)));
    start = end;
  };
  std::size_t i = 0;
  while (i < n) {
    if (!is_terminal(cps[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminal(cps[j])) ++j;
    while (j < n && is_closer(cps[j])) ++j;
    const bool at_boundary = j == n || text::is_space(cps[j]);
    if (!at_boundary) {
      i = j;
      continue;
    }
    const bool single_dot = cps[i] == U'.' && j == i + 1;
    if (single_dot) {
      const std::string w = word_before(cps, i);
      if (std::find(kAbbreviations.begin(), kAbbreviations.end(), w) != kAbbreviations.end()) {
        i = j;
        continue;
      }
    }
    emit(j);
    i = j;
  }
  emit(n);
  return sentences;
}

// ------------------------------------------------------------- filter_corpus

namespace {

bool latin_majority(std::string_view s) {
  std::size_t letters = 0;
  std::size_t latin = 0;
  for (char32_t c : decode_utf8(s)) {
    if (!text::is_letter(c)) continue;
    ++letters;
    if (text::is_latin_letter(c)) ++latin;
  }
  return letters > 0 && 2 * latin >= letters;
}

}  // namespace

std::vector<Document> filter_corpus(std::span<const Document> docs, const FilterPolicy& policy) {
  policy.validate();
  std::vector<Document> out;
  std::unordered_set<std::string> seen;
  std::unordered_map<std::string, std::size_t> per_source;
  for (const auto& doc : docs) {
    const std::size_t chars = text::char_count(doc.text());
    if (chars < policy.min_chars || chars > policy.max_chars) continue;
    if (policy.require_latin_majority && !latin_majority(doc.text())) continue;
    if (policy.dedupe && !seen.insert(doc.text()).second) continue;
    if (policy.max_docs_per_source > 0) {
      if (auto it = doc.meta().find("source"); it != doc.meta().end()) {
        if (per_source[it->second] >= policy.max_docs_per_source) continue;
        ++per_source[it->second];
      }
    }
    out.push_back(doc);
  }
  return out;
}

Vocabulary build_vocab(std::span<const Document> docs, std::uint64_t min_count) {
  require(min_count >= 1, ErrorKind::InvalidArgument, "min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> freq;
  std::size_t non_empty = 0;
  for (const auto& doc : docs) {
    const auto toks = tokenize(doc.text());
    if (!toks.empty()) ++non_empty;
    for (const auto& t : toks) ++freq[t];
  }
  require(non_empty > 0, ErrorKind::EmptyCorpus, "no document survives tokenization");
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [tok, count] : freq) {
    if (count >= min_count) kept.emplace_back(tok, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, count] : kept) vocab.add(tok, count);
  return vocab;
}

// --------------------------------------------------------------------- JSONL

std::string to_jsonl_line(const Document& doc) {
  nlohmann::json j;
  j["id"] = doc.id();
  j["text"] = doc.text();
  j["label"] = std::string(to_string(doc.label()));
  j["meta"] = nlohmann::json::object();
  for (const auto& [k, v] : doc.meta()) j["meta"][k] = v;
  return j.dump();
}

Document from_jsonl_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("malformed JSONL line: ") + e.what());
  }
  require(j.is_object() && j.contains("id") && j.contains("text"), ErrorKind::InvalidArgument,
          "JSONL document needs \"id\" and \"text\"");
  require(j["id"].is_string() && j["text"].is_string(), ErrorKind::InvalidArgument,
          "JSONL \"id\" and \"text\" must be strings");
  Label label = Label::Unlabeled;
  if (j.contains("label")) label = parse_label(j["label"].get<std::string>());
  std::map<std::string, std::string> meta;
  if (j.contains("meta") && j["meta"].is_object()) {
    for (const auto& [k, v] : j["meta"].items()) meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return Document(j["id"].get<std::string>(), j["text"].get<std::string>(), label, std::move(meta));
}

std::vector<Document> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<Document> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    docs.push_back(from_jsonl_line(line));
  }
  return docs;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  for (const auto& d : docs) out << to_jsonl_line(d) << '\n';
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<Document> read_text_lines(const std::filesystem::path& path, std::string_view source) {
  std::istringstream in(slurp(path));
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string norm = text::normalize(line);
    if (norm.empty()) continue;
    docs.emplace_back(std::string(source) + ":" + std::to_string(lineno), norm, Label::Human,
                      std::map<std::string, std::string>{{"source", std::string(source)}});
  }
  return docs;
}

std::vector<Document> read_text_sentences(const std::filesystem::path& path, std::string_view source) {
  std::vector<Document> docs;
  std::size_t k = 0;
  for (const auto& s : split_sentences(text::normalize(slurp(path)))) {
    docs.emplace_back(std::string(source) + ":s" + std::to_string(++k), s, Label::Human,
                      std::map<std::string, std::string>{{"source", std::string(source)}});
  }
  return docs;
}

}  // namespace evade
