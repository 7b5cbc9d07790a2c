#pragma once

#include <string>
#include <vector>

#include "gecvote/text.hpp"

namespace gecvote {

// Parses M2 text: blocks of one "S ..." line followed by zero or more
// "A ..." lines, separated by blank lines. A noop annotation
// ("A -1 -1|||noop|||-NONE-|||...") yields an empty EditSet for its
// annotator. Throws FormatError (with line number) on malformed lines and
// SpanError when an edit span exceeds the source length.
std::vector<AnnotationSet> parse_m2(const std::string& text);

std::vector<AnnotationSet> parse_m2_file(const std::string& path);

// Canonical M2: "S " + space-joined tokens, then per edit
// "A {start} {end}|||{category or UNK}|||{replacement or -NONE-}|||REQUIRED|||-NONE-|||{annotator}"
// with annotators ascending and edits in (start, end) order. An annotator
// with no edits serializes as a noop line. Blank line between sentences,
// trailing newline.
std::string serialize_m2(const std::vector<AnnotationSet>& blocks);

}  // namespace gecvote
