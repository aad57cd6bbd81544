#include "cats/corpus.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cats/log.hpp"

namespace cats {

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) out += utf8_encode(c);
  return out;
}

std::size_t Sentence::word_count() const {
  std::size_t n = 0;
  for (const auto& t : tokens) n += t.segments.size();
  return n;
}

std::vector<std::string> Sentence::words() const {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.insert(out.end(), t.segments.begin(), t.segments.end());
  return out;
}

bool Sentence::has_labels() const {
  if (tokens.empty()) return false;
  for (const auto& t : tokens)
    if (!t.has_labels()) return false;
  return true;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

std::optional<std::size_t> parse_index(std::string_view s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

struct WordRow {
  std::string form;
  std::string upos;
  std::string head;
  std::string deprel;
  std::size_t line = 0;
  bool placeholder = false;  // stands for a token with no predicted segments
};

constexpr std::string_view kEmptyMarker = "SegEmpty=Yes";

struct Range {
  std::size_t first, last;
  std::string form;
};

class SentenceBuilder {
 public:
  bool empty() const { return words_.empty() && ranges_.empty() && sent_id_.empty(); }

  void set_id(std::string id) { sent_id_ = std::move(id); }

  void add_range(std::size_t line, std::size_t first, std::size_t last, std::string form) {
    if (last < first) throw ParseError(line, "range " + std::to_string(first) + "-" +
                                                 std::to_string(last) + " is reversed");
    if (!ranges_.empty() && first <= ranges_.back().last) {
      throw ParseError(line, "range " + std::to_string(first) + "-" + std::to_string(last) +
                                 " overlaps range " + std::to_string(ranges_.back().first) + "-" +
                                 std::to_string(ranges_.back().last));
    }
    if (first != words_.size() + 1) {
      throw ParseError(line, "range " + std::to_string(first) + "-" + std::to_string(last) +
                                 " does not start at the next word id " +
                                 std::to_string(words_.size() + 1));
    }
    ranges_.push_back({first, last, std::move(form)});
  }

  void add_word(std::size_t line, std::size_t id, WordRow row) {
    if (id != words_.size() + 1) {
      throw ParseError(line, "word id " + std::to_string(id) + " out of sequence, expected " +
                                 std::to_string(words_.size() + 1));
    }
    row.line = line;
    words_.push_back(std::move(row));
  }

  Sentence finish(std::size_t line, std::size_t ordinal) {
    Sentence s;
    if (sent_id_.empty()) {
      s.sent_id = "s" + std::to_string(ordinal);
      log_warning("sentence ending at line " + std::to_string(line) +
                  " has no sent_id; assigned " + s.sent_id);
    } else {
      s.sent_id = sent_id_;
    }
    for (const auto& r : ranges_) {
      if (r.last > words_.size()) {
        throw ParseError(line, "range " + std::to_string(r.first) + "-" + std::to_string(r.last) +
                                   " exceeds the sentence's " + std::to_string(words_.size()) +
                                   " words");
      }
    }
    bool all_labeled = !words_.empty();
    bool all_heads = !words_.empty();
    for (const auto& w : words_) {
      if (w.placeholder) {
        all_heads = false;
        continue;
      }
      if (w.upos.empty() || w.upos == "_") all_labeled = false;
      if (w.head.empty() || w.head == "_") all_heads = false;
    }
    std::size_t next_range = 0;
    std::size_t i = 0;
    while (i < words_.size()) {
      TokenEntry t;
      std::size_t first = i + 1, last = i + 1;
      if (next_range < ranges_.size() && ranges_[next_range].first == i + 1) {
        last = ranges_[next_range].last;
        t.surface = ranges_[next_range].form;
        ++next_range;
      } else {
        t.surface = words_[i].form;
      }
      for (std::size_t k = first; k <= last; ++k) {
        if (words_[k - 1].placeholder) continue;
        t.segments.push_back(words_[k - 1].form);
        if (all_labeled) t.labels.push_back(words_[k - 1].upos);
      }
      t.char_span = {first, last};
      s.tokens.push_back(std::move(t));
      i = last;
    }
    if (all_heads) {
      for (const auto& w : words_) {
        auto head = parse_index(w.head);
        if (!head || *head > words_.size()) {
          throw ParseError(w.line, "HEAD '" + w.head + "' is not 0 or a word id in 1.." +
                                       std::to_string(words_.size()));
        }
        s.dep_annotations.push_back({w.form, *head, w.deprel});
      }
    }
    sent_id_.clear();
    words_.clear();
    ranges_.clear();
    return s;
  }

 private:
  std::string sent_id_;
  std::vector<WordRow> words_;
  std::vector<Range> ranges_;
};

}  // namespace

Corpus parse_conllu(std::istream& in, Split split) {
  Corpus corpus;
  corpus.split_tag = split;
  SentenceBuilder builder;
  std::unordered_set<std::string> seen_ids;
  std::string raw;
  std::size_t line_no = 0;
  bool open = false;

  auto close = [&] {
    Sentence s = builder.finish(line_no, corpus.sentences.size() + 1);
    if (!seen_ids.insert(s.sent_id).second) {
      throw ParseError(line_no, "duplicate sent_id '" + s.sent_id + "'");
    }
    corpus.sentences.push_back(std::move(s));
    open = false;
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (open) close();
      continue;
    }
    if (line.front() == '#') {
      constexpr std::string_view key = "sent_id";
      auto body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.substr(0, key.size()) == key) {
        auto rest = body.substr(key.size());
        while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        if (!rest.empty() && rest.front() == '=') {
          rest.remove_prefix(1);
          while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
          builder.set_id(std::string(rest));
          open = true;
        }
      }
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ParseError(line_no, "expected 10 tab-separated columns, found " +
                                    std::to_string(cols.size()));
    }
    open = true;
    const std::string_view id = cols[0];
    if (id.find('.') != std::string_view::npos) continue;  // empty nodes
    if (auto dash = id.find('-'); dash != std::string_view::npos) {
      auto first = parse_index(id.substr(0, dash));
      auto last = parse_index(id.substr(dash + 1));
      if (!first || !last || *first == 0) throw ParseError(line_no, "bad range id '" + std::string(id) + "'");
      builder.add_range(line_no, *first, *last, std::string(cols[1]));
      continue;
    }
    auto idx = parse_index(id);
    if (!idx || *idx == 0) throw ParseError(line_no, "bad word id '" + std::string(id) + "'");
    builder.add_word(line_no, *idx,
                     {std::string(cols[1]), std::string(cols[3]), std::string(cols[6]),
                      std::string(cols[7]), line_no, cols[9] == kEmptyMarker});
  }
  if (open) close();
  return corpus;
}

Corpus parse_conllu_string(std::string_view text, Split split) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in, split);
}

Corpus read_conllu_file(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_conllu(in, split);
}

void write_conllu(std::ostream& out, const Corpus& corpus,
                  const std::vector<std::string>& header_comments) {
  for (const auto& c : header_comments) out << "# " << c << '\n';
  for (const auto& s : corpus.sentences) {
    out << "# sent_id = " << s.sent_id << '\n';
    const bool deps = !s.dep_annotations.empty();
    std::size_t word = 1;
    for (const auto& t : s.tokens) {
      const std::size_t n = t.segments.size();
      if (n == 0) {
        out << word << '-' << word << '\t' << t.surface << "\t_\t_\t_\t_\t_\t_\t_\t_\n"
            << word << "\t_\t_\t_\t_\t_\t_\t_\t_\t" << kEmptyMarker << '\n';
        ++word;
        continue;
      }
      const bool range = n > 1 || (n == 1 && t.segments[0] != t.surface);
      if (range) {
        out << word << '-' << (word + n - 1) << '\t' << t.surface << "\t_\t_\t_\t_\t_\t_\t_\t_\n";
      }
      for (std::size_t k = 0; k < n; ++k, ++word) {
        out << word << '\t' << t.segments[k] << "\t_\t"
            << (t.has_labels() ? t.labels[k] : std::string("_")) << "\t_\t_\t";
        if (deps) {
          const auto& d = s.dep_annotations[word - 1];
          out << d.head << '\t' << d.relation;
        } else {
          out << "_\t_";
        }
        out << "\t_\t_\n";
      }
    }
    out << '\n';
  }
}

std::string to_conllu_string(const Corpus& corpus) {
  std::ostringstream out;
  write_conllu(out, corpus);
  return out.str();
}

Corpus strip_analyses(const Corpus& corpus) {
  Corpus out;
  out.split_tag = corpus.split_tag;
  for (const auto& s : corpus.sentences) {
    Sentence r;
    r.sent_id = s.sent_id;
    std::size_t i = 1;
    for (const auto& t : s.tokens) {
      TokenEntry e;
      e.surface = t.surface;
      e.segments = {t.surface};
      e.char_span = {i, i};
      ++i;
      r.tokens.push_back(std::move(e));
    }
    out.sentences.push_back(std::move(r));
  }
  return out;
}

int CharVocab::add(char32_t c) {
  if (auto it = ids_.find(c); it != ids_.end()) return it->second;
  const int id = static_cast<int>(kReserved + chars_.size());
  chars_.push_back(c);
  ids_.emplace(c, id);
  return id;
}

int CharVocab::id_of(char32_t c) const {
  auto it = ids_.find(c);
  return it == ids_.end() ? kUnk : it->second;
}

std::optional<char32_t> CharVocab::char_of(int id) const {
  if (id < kReserved || static_cast<std::size_t>(id) >= size()) return std::nullopt;
  return chars_[static_cast<std::size_t>(id - kReserved)];
}

std::vector<int> CharVocab::encode(std::string_view utf8) const {
  std::vector<int> ids;
  for (char32_t c : utf8_decode(utf8)) ids.push_back(id_of(c));
  return ids;
}

int LabelVocab::add(const std::string& label) {
  if (auto it = ids_.find(label); it != ids_.end()) return it->second;
  const int id = static_cast<int>(labels_.size());
  labels_.push_back(label);
  ids_.emplace(label, id);
  return id;
}

std::optional<int> LabelVocab::id_of(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelVocab::label_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= labels_.size()) {
    throw std::out_of_range("label id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(labels_.size()));
  }
  return labels_[static_cast<std::size_t>(id)];
}

std::pair<CharVocab, LabelVocab> build_vocabs(const Corpus& corpus) {
  if (corpus.token_count() == 0) throw std::invalid_argument("build_vocabs: empty corpus");
  CharVocab chars;
  LabelVocab labels;
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      for (char32_t c : utf8_decode(t.surface)) chars.add(c);
      for (const auto& seg : t.segments)
        for (char32_t c : utf8_decode(seg)) chars.add(c);
      for (const auto& l : t.labels) labels.add(l);
    }
  }
  return {std::move(chars), std::move(labels)};
}

std::vector<int> target_string(const TokenEntry& entry, const CharVocab& vocab) {
  std::vector<int> ids;
  for (std::size_t k = 0; k < entry.segments.size(); ++k) {
    if (k > 0) ids.push_back(CharVocab::kSpace);
    for (char32_t c : utf8_decode(entry.segments[k])) ids.push_back(vocab.id_of(c));
  }
  ids.push_back(CharVocab::kEot);
  return ids;
}

DecodedSymbols decode_symbols(const std::vector<int>& ids, const CharVocab& vocab) {
  DecodedSymbols out;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) out.segments.push_back(utf8_encode(current));
    current.clear();
  };
  for (int id : ids) {
    if (id == CharVocab::kEot) {
      out.saw_eot = true;
      break;
    }
    if (id == CharVocab::kSpace) {
      flush();
    } else if (id == CharVocab::kUnk) {
      current.push_back(U'�');
    } else if (auto c = vocab.char_of(id)) {
      current.push_back(*c);
    }
  }
  flush();
  return out;
}

}  // namespace cats
