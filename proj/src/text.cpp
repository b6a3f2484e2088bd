#include "evade/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>

#include "evade/error.hpp"

namespace evade::text {

namespace {

struct EmojiRange {
  char32_t first;
  char32_t last;
  EmojiKind kind;
};

constexpr EmojiKind component = EmojiKind::Component;
constexpr EmojiKind pictograph = EmojiKind::Pictograph;

// Generated at configure time from data/emoji_ranges.txt.
constexpr EmojiRange kEmojiRanges[] = {
#include "emoji_ranges.inc"
};

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  const auto n = s.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    std::size_t len = 0;
    if (b0 < 0x80) {
      cp = b0;
      len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + len > n) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (!ok || overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string encode_utf8(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) out += encode_utf8(cp);
  return out;
}

std::string normalize(std::string_view s) {
  // Re-encode first so malformed input is replaced before ICU sees it.
  const std::string clean = encode_utf8(decode_utf8(s));
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) fail(ErrorKind::InvalidArgument, "ICU NFC normalizer unavailable");
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(clean);
  const icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) fail(ErrorKind::InvalidArgument, "NFC normalization failed");
  std::string nfc_text;
  dst.toUTF8String(nfc_text);

  std::u32string out;
  bool pending_space = false;
  for (char32_t cp : decode_utf8(nfc_text)) {
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(cp);
  }
  return encode_utf8(out);
}

std::string case_fold(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.foldCase();
  std::string out;
  u.toUTF8String(out);
  return out;
}

EmojiKind emoji_kind(char32_t cp) {
  // Components are listed first, so the first match wins.
  for (const auto& r : kEmojiRanges) {
    if (cp >= r.first && cp <= r.last) return r.kind;
  }
  return EmojiKind::None;
}

bool is_letter(char32_t cp) { return u_isalpha(static_cast<UChar32>(cp)) && !is_emoji(cp); }

bool is_latin_letter(char32_t cp) {
  if (!is_letter(cp)) return false;
  UErrorCode status = U_ZERO_ERROR;
  return uscript_getScript(static_cast<UChar32>(cp), &status) == USCRIPT_LATIN && U_SUCCESS(status);
}

bool is_digit(char32_t cp) { return u_isdigit(static_cast<UChar32>(cp)); }

bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)); }

bool is_mark(char32_t cp) {
  const auto mask = U_GET_GC_MASK(static_cast<UChar32>(cp));
  return (mask & U_GC_M_MASK) != 0;
}

bool is_upper(char32_t cp) { return u_isupper(static_cast<UChar32>(cp)); }

std::size_t char_count(std::string_view s) { return decode_utf8(s).size(); }

std::size_t count_emojis(std::string_view s) {
  const auto cps = decode_utf8(s);
  return static_cast<std::size_t>(std::count_if(cps.begin(), cps.end(), is_emoji));
}

bool contains_letter(std::string_view token) {
  const auto cps = decode_utf8(token);
  return std::any_of(cps.begin(), cps.end(), is_letter);
}

bool contains_digit(std::string_view token) {
  const auto cps = decode_utf8(token);
  return std::any_of(cps.begin(), cps.end(), is_digit);
}

bool is_word(std::string_view token) {
  const auto cps = decode_utf8(token);
  return std::any_of(cps.begin(), cps.end(), [](char32_t c) { return is_letter(c) || is_digit(c); });
}

}  // namespace evade::text
