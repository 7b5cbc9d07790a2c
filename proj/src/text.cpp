#include "gecvote/text.hpp"

#include <algorithm>

namespace gecvote {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x0009:
    case 0x000A:
    case 0x000B:
    case 0x000C:
    case 0x000D:
    case 0x0020:
    case 0x0085:
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

namespace {

// Decodes one codepoint starting at `pos`; advances `pos` past it. Invalid
// sequences are consumed one byte at a time and reported as U+FFFD so they
// never match the whitespace set.
char32_t decode_utf8(const std::string& s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    pos += 1;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    pos += 1;
    return 0xFFFD;
  }
  if (pos + len > s.size()) {
    pos += 1;
    return 0xFFFD;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) {
      pos += 1;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  pos += len;
  return cp;
}

}  // namespace

TokenSeq tokenize(const std::string& text) {
  TokenSeq tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = decode_utf8(text, pos);
    if (is_unicode_space(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.append(text, start, pos - start);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::size_t utf8_length(const std::string& text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    decode_utf8(text, pos);
    ++n;
  }
  return n;
}

bool edit_less(const Edit& a, const Edit& b) {
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.replacement < b.replacement;
}

void validate_edit_set(const EditSet& set) {
  const Edit* prev = nullptr;
  for (const Edit& e : set.edits) {
    if (e.start > e.end || e.end > set.source_len)
      throw BoundsError("edit span [" + std::to_string(e.start) + ", " +
                        std::to_string(e.end) + ") exceeds source length " +
                        std::to_string(set.source_len));
    if (prev) {
      if (prev->end > e.start)
        throw OverlapError("edits overlap or are unsorted at token " +
                           std::to_string(e.start));
      if (prev->start == prev->end && prev->start == e.start &&
          e.start == e.end)
        throw OverlapError("two insertions at offset " +
                           std::to_string(e.start));
    }
    prev = &e;
  }
}

TokenSeq apply_edits(const TokenSeq& source, const EditSet& edits) {
  if (edits.source_len != source.size())
    throw BoundsError("edit set built for source of length " +
                      std::to_string(edits.source_len) + ", got " +
                      std::to_string(source.size()));
  validate_edit_set(edits);
  TokenSeq out = source;
  // Descending start order keeps earlier indices valid.
  for (auto it = edits.edits.rbegin(); it != edits.edits.rend(); ++it) {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(it->start),
              out.begin() + static_cast<std::ptrdiff_t>(it->end));
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(it->start),
               it->replacement.begin(), it->replacement.end());
  }
  return out;
}

}  // namespace gecvote
