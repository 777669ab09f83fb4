#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sasr {

// Minimal UTF-8 decode; invalid bytes are passed through as single code
// points so garbage input cannot crash scoring.
inline std::vector<std::uint32_t> to_codepoints(std::string_view s) {
  std::vector<std::uint32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::uint32_t cp = c;
    std::size_t len = 1;
    if (c >= 0xF0)
      len = 4;
    else if (c >= 0xE0)
      len = 3;
    else if (c >= 0xC0)
      len = 2;
    if (len > 1 && i + len <= s.size()) {
      cp = c & (0x7F >> len);
      bool ok = true;
      for (std::size_t k = 1; k < len; ++k) {
        unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xC0) != 0x80) {
          ok = false;
          break;
        }
        cp = (cp << 6) | (cc & 0x3F);
      }
      if (!ok) {
        cp = c;
        len = 1;
      }
    } else if (len > 1) {
      len = 1;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
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
}

namespace detail {

inline bool is_scoring_punct(std::uint32_t cp) {
  if (cp < 0x80) return !((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z'));
  if (cp >= 0x2000 && cp <= 0x206F) return true;  // general punctuation
  if (cp >= 0x3001 && cp <= 0x303F) return true;  // CJK symbols and punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;  // CJK compatibility forms
  if (cp >= 0xFF5F && cp <= 0xFF65) return true;  // halfwidth/fullwidth brackets, middle dot
  if (cp == 0x30FB) return true;                  // katakana middle dot
  return false;
}

}  // namespace detail

/// Scoring normalization, pinned by tests: fullwidth forms folded to ASCII,
/// ASCII uppercased letters lowered, whitespace and punctuation dropped.
/// Character units are Unicode code points of the result.
inline std::vector<std::uint32_t> normalize_for_scoring(std::string_view text) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t cp : to_codepoints(text)) {
    if (cp == 0x3000) continue;                            // ideographic space
    if (cp >= 0xFF01 && cp <= 0xFF5E) cp -= 0xFEE0;        // fullwidth -> ASCII
    if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
    if (detail::is_scoring_punct(cp)) continue;
    out.push_back(cp);
  }
  return out;
}

inline std::string normalize_text(std::string_view text) {
  std::string out;
  for (std::uint32_t cp : normalize_for_scoring(text)) append_utf8(out, cp);
  return out;
}

}  // namespace sasr
