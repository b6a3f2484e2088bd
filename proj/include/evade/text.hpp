#pragma once

#include <string>
#include <string_view>
#include <vector>

// Unicode helpers shared by the tokenizer, the corpus filters and the reward
// rules. Character classes come from ICU; emoji classes come from the
// shipped range table (data/emoji_ranges.txt).
namespace evade::text {

enum class EmojiKind { None, Pictograph, Component };

/// Decodes UTF-8; malformed sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);
std::string encode_utf8(std::u32string_view cps);

/// NFC normalization, whitespace runs collapsed to one space, trimmed.
std::string normalize(std::string_view s);

/// Unicode simple case folding.
std::string case_fold(std::string_view s);

EmojiKind emoji_kind(char32_t cp);
inline bool is_emoji(char32_t cp) { return emoji_kind(cp) == EmojiKind::Pictograph; }
inline bool is_emoji_component(char32_t cp) { return emoji_kind(cp) == EmojiKind::Component; }

bool is_letter(char32_t cp);
bool is_latin_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);
bool is_mark(char32_t cp);
bool is_upper(char32_t cp);

/// Number of code points after UTF-8 decoding.
std::size_t char_count(std::string_view s);

/// Number of emoji pictographs in the text.
std::size_t count_emojis(std::string_view s);

bool contains_letter(std::string_view token);
bool contains_digit(std::string_view token);
/// A "word" token has at least one letter or digit.
bool is_word(std::string_view token);

}  // namespace evade::text
