#include "gecvote/m2.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gecvote {

namespace {

std::vector<std::string> split_fields(const std::string& s) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find("|||", pos);
    if (next == std::string::npos) {
      fields.push_back(s.substr(pos));
      break;
    }
    fields.push_back(s.substr(pos, next - pos));
    pos = next + 3;
  }
  return fields;
}

long parse_long(const std::string& s, std::size_t line_no) {
  long value = 0;
  const auto [ptr, ec] =
      std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError(line_no, "expected integer, got '" + s + "'");
  return value;
}

struct BlockBuilder {
  AnnotationSet block;
  bool open = false;

  void start(const TokenSeq& source) {
    block = AnnotationSet{source, {}};
    open = true;
  }

  void add_edit(unsigned annotator, Edit edit, std::size_t line_no) {
    auto& set = block.annotations[annotator];
    set.source_len = block.source.size();
    if (!set.edits.empty()) {
      const Edit& prev = set.edits.back();
      if (prev.end > edit.start)
        throw FormatError(line_no,
                          "edit overlaps or precedes an earlier edit of "
                          "annotator " +
                              std::to_string(annotator));
      if (prev.start == prev.end && prev.start == edit.start &&
          edit.start == edit.end)
        throw FormatError(line_no, "second insertion at offset " +
                                       std::to_string(edit.start) +
                                       " for annotator " +
                                       std::to_string(annotator));
      if (prev == edit)
        throw FormatError(line_no, "duplicate edit for annotator " +
                                       std::to_string(annotator));
    }
    set.edits.push_back(std::move(edit));
  }

  void add_noop(unsigned annotator) {
    auto& set = block.annotations[annotator];
    set.source_len = block.source.size();
  }

  AnnotationSet finish() {
    open = false;
    return std::move(block);
  }
};

}  // namespace

std::vector<AnnotationSet> parse_m2(const std::string& text) {
  std::vector<AnnotationSet> blocks;
  BlockBuilder builder;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    if (line.empty()) {
      if (builder.open) blocks.push_back(builder.finish());
      continue;
    }
    if (line.rfind("S ", 0) == 0 || line == "S") {
      if (builder.open) blocks.push_back(builder.finish());
      builder.start(tokenize(line.substr(1)));
      continue;
    }
    if (line.rfind("A ", 0) == 0) {
      if (!builder.open)
        throw FormatError(line_no, "annotation before any S line");
      const auto fields = split_fields(line.substr(2));
      if (fields.size() != 6)
        throw FormatError(line_no, "expected 6 |||-separated fields, got " +
                                       std::to_string(fields.size()));
      std::istringstream span(fields[0]);
      std::string start_s, end_s, extra;
      if (!(span >> start_s >> end_s) || (span >> extra))
        throw FormatError(line_no, "malformed edit span '" + fields[0] + "'");
      const long start = parse_long(start_s, line_no);
      const long end = parse_long(end_s, line_no);
      const long annotator = parse_long(fields[5], line_no);
      if (annotator < 0)
        throw FormatError(line_no, "negative annotator id");
      if (start == -1 && end == -1) {
        builder.add_noop(static_cast<unsigned>(annotator));
        continue;
      }
      if (start < 0 || end < start)
        throw FormatError(line_no, "invalid edit span [" + start_s + ", " +
                                       end_s + ")");
      if (static_cast<std::size_t>(end) > builder.block.source.size())
        throw SpanError(line_no,
                        "edit span end " + end_s + " exceeds source length " +
                            std::to_string(builder.block.source.size()));
      Edit edit;
      edit.start = static_cast<std::size_t>(start);
      edit.end = static_cast<std::size_t>(end);
      if (fields[2] != "-NONE-") edit.replacement = tokenize(fields[2]);
      edit.category = fields[1];
      builder.add_edit(static_cast<unsigned>(annotator), std::move(edit),
                       line_no);
      continue;
    }
    throw FormatError(line_no, "expected S/A/blank line");
  }
  if (builder.open) blocks.push_back(builder.finish());
  return blocks;
}

std::vector<AnnotationSet> parse_m2_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open M2 file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_m2(buf.str());
}

std::string serialize_m2(const std::vector<AnnotationSet>& blocks) {
  std::string out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (b) out += '\n';
    const AnnotationSet& block = blocks[b];
    out += "S " + join_tokens(block.source) + '\n';
    for (const auto& [annotator, set] : block.annotations) {
      if (set.edits.empty()) {
        out += "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||" +
               std::to_string(annotator) + '\n';
        continue;
      }
      for (const Edit& e : set.edits) {
        out += "A " + std::to_string(e.start) + ' ' + std::to_string(e.end) +
               "|||" + (e.category.empty() ? "UNK" : e.category) + "|||" +
               (e.replacement.empty() ? "-NONE-"
                                      : join_tokens(e.replacement)) +
               "|||REQUIRED|||-NONE-|||" + std::to_string(annotator) + '\n';
      }
    }
  }
  return out;
}

}  // namespace gecvote
