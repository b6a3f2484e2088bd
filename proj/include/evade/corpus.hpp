#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evade {

enum class Label { Human, Machine, Unlabeled };

std::string_view to_string(Label label);
Label parse_label(std::string_view s);

/// One text item with provenance. `text` is NFC-normalized on construction.
class Document {
 public:
  Document(std::string id, std::string_view text, Label label = Label::Unlabeled,
           std::map<std::string, std::string> meta = {});

  const std::string& id() const noexcept { return id_; }
  const std::string& text() const noexcept { return text_; }
  Label label() const noexcept { return label_; }
  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }

  /// Copy carrying a different label; the original stays immutable.
  Document relabeled(Label label) const;

 private:
  std::string id_;
  std::string text_;
  Label label_;
  std::map<std::string, std::string> meta_;
};

using TokenId = std::uint32_t;

inline constexpr std::string_view kUnkToken = "⟨unk⟩";
inline constexpr std::string_view kBosToken = "⟨bos⟩";
inline constexpr std::string_view kEosToken = "⟨eos⟩";
inline constexpr std::string_view kMaskToken = "⟨mask⟩";

/// Dense token <-> index map with reserved ⟨unk⟩, ⟨bos⟩, ⟨eos⟩ at 0, 1, 2.
class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::size_t kReserved = 3;

  Vocabulary();

  /// Adds `token` if absent and returns its index.
  TokenId add(std::string_view token, std::uint64_t count = 0);

  TokenId id(std::string_view token) const;  // ⟨unk⟩ when absent
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::uint64_t count(TokenId id) const { return counts_.at(id); }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool is_reserved(TokenId id) const noexcept { return id < kReserved; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
};

struct FilterPolicy {
  std::size_t min_chars = 0;
  std::size_t max_chars = 1'000'000;
  bool require_latin_majority = false;
  bool dedupe = false;
  /// Cap on documents sharing meta["source"]; 0 disables the cap.
  std::size_t max_docs_per_source = 0;

  void validate() const;
};

std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces; tokenize() of the result is the input.
std::string join_tokens(std::span<const std::string> tokens);

/// Human-oriented join: closing punctuation attaches to the previous token.
/// Also round-trips through tokenize().
std::string detokenize(std::span<const std::string> tokens);

std::vector<std::string> split_sentences(std::string_view text);

std::vector<Document> filter_corpus(std::span<const Document> docs, const FilterPolicy& policy);

Vocabulary build_vocab(std::span<const Document> docs, std::uint64_t min_count);

/// Abbreviations that never end a sentence (lower-case, without the dot).
std::span<const std::string_view> sentence_abbreviations();

// JSONL dataset I/O: {"id","text","label","meta"} per line.
std::vector<Document> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const Document> docs);
std::string to_jsonl_line(const Document& doc);
Document from_jsonl_line(std::string_view line);

/// Reads a plain-text file and returns one document per non-blank line.
std::vector<Document> read_text_lines(const std::filesystem::path& path, std::string_view source);

/// Reads a plain-text file and returns one document per sentence.
std::vector<Document> read_text_sentences(const std::filesystem::path& path, std::string_view source);

}  // namespace evade
