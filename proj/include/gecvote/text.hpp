#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gecvote/errors.hpp"

namespace gecvote {

// One sentence as an ordered list of whitespace-free tokens.
using TokenSeq = std::vector<std::string>;

// Splits on runs of Unicode whitespace; leading/trailing whitespace is
// ignored and empty input yields an empty sequence.
TokenSeq tokenize(const std::string& text);

// Inverse of tokenize for valid token sequences: single-space join.
std::string join_tokens(const TokenSeq& tokens);

// True for codepoints with the Unicode White_Space property.
bool is_unicode_space(char32_t cp);

// Number of codepoints in a UTF-8 string (invalid bytes count as one each).
std::size_t utf8_length(const std::string& text);

// A span replacement on a source sentence. [start, end) are token indices;
// start == end inserts before `start`, an empty replacement deletes the span.
// The category label is carried through from M2 input and excluded from
// equality: voting and scoring match on (start, end, replacement) only.
struct Edit {
  std::size_t start = 0;
  std::size_t end = 0;
  TokenSeq replacement;
  std::string category;  // empty = unknown

  friend bool operator==(const Edit& a, const Edit& b) {
    return a.start == b.start && a.end == b.end &&
           a.replacement == b.replacement;
  }
};

// (start, end, replacement) ordering, category-blind like operator==.
bool edit_less(const Edit& a, const Edit& b);

// Non-overlapping edits over one source, sorted by (start, end). Two
// insertions at the same offset are illegal within one set.
struct EditSet {
  std::size_t source_len = 0;
  std::vector<Edit> edits;
};

// Throws BoundsError / OverlapError when the invariants do not hold.
void validate_edit_set(const EditSet& set);

// Replaces each span with its replacement. Throws BoundsError if the set was
// built for a different source length or an index is out of range, and
// OverlapError on overlapping or unsorted edits.
TokenSeq apply_edits(const TokenSeq& source, const EditSet& edits);

// One source with reference edits from one or more annotators. An annotator
// with zero edits is represented by an empty EditSet.
struct AnnotationSet {
  TokenSeq source;
  std::map<unsigned, EditSet> annotations;
};

}  // namespace gecvote
