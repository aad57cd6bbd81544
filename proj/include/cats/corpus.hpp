#pragma once

// CoNLL-U ingestion, token/segment extraction and symbol vocabularies.

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cats {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// UTF-8 <-> code points. Invalid bytes decode to U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(char32_t c);

struct TokenEntry {
  std::string surface;
  std::vector<std::string> segments;
  std::vector<std::string> labels;  // empty, or one per segment
  // 1-based ids of the first and last word row covered by the token.
  std::pair<std::size_t, std::size_t> char_span{0, 0};

  bool has_labels() const { return !labels.empty(); }
  bool operator==(const TokenEntry&) const = default;
};

struct DepAnnotation {
  std::string form;
  std::size_t head = 0;  // 0 = root, else 1-based word index
  std::string relation;
  bool operator==(const DepAnnotation&) const = default;
};

struct Sentence {
  std::string sent_id;
  std::vector<TokenEntry> tokens;
  std::vector<DepAnnotation> dep_annotations;  // empty, or one per word

  std::size_t word_count() const;
  // All segments of the sentence in order.
  std::vector<std::string> words() const;
  bool has_labels() const;
  bool operator==(const Sentence&) const = default;
};

enum class Split { train, dev, test };

struct Corpus {
  std::vector<Sentence> sentences;
  Split split_tag = Split::train;

  std::size_t token_count() const;
  bool operator==(const Corpus&) const = default;
};

// Throws ParseError on malformed column counts, overlapping ranges or bad ids.
Corpus parse_conllu(std::istream& in, Split split = Split::train);
Corpus parse_conllu_string(std::string_view text, Split split = Split::train);
Corpus read_conllu_file(const std::string& path, Split split = Split::train);

// Serializes FORM/UPOS/HEAD/DEPREL; other columns are written as "_".
// Multi-segment tokens (and single segments that differ from the surface)
// get a range line. A token with no segments (an empty prediction) is
// written as a one-word range whose word row is "_" with MISC SegEmpty=Yes;
// the parser reads it back as zero segments.
void write_conllu(std::ostream& out, const Corpus& corpus,
                  const std::vector<std::string>& header_comments = {});
std::string to_conllu_string(const Corpus& corpus);

// Copy of the corpus where every token is reduced to its raw surface, with
// no labels or dependency rows. This is the shape of prediction input.
Corpus strip_analyses(const Corpus& corpus);

class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSpace = 2;
  static constexpr int kEot = 3;
  static constexpr int kBos = 4;
  static constexpr int kReserved = 5;

  CharVocab() = default;

  int add(char32_t c);
  int id_of(char32_t c) const;  // kUnk when absent
  std::optional<char32_t> char_of(int id) const;
  bool contains(char32_t c) const { return ids_.count(c) != 0; }
  std::size_t size() const { return kReserved + chars_.size(); }
  // Non-reserved symbols in id order.
  const std::u32string& symbols() const { return chars_; }

  std::vector<int> encode(std::string_view utf8) const;
  bool operator==(const CharVocab& o) const { return chars_ == o.chars_; }

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, int> ids_;
};

class LabelVocab {
 public:
  int add(const std::string& label);
  std::optional<int> id_of(const std::string& label) const;
  const std::string& label_of(int id) const;
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  bool operator==(const LabelVocab& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> ids_;
};

// Insertion-ordered: surface characters then segment characters, token by
// token. Throws std::invalid_argument on an empty corpus.
std::pair<CharVocab, LabelVocab> build_vocabs(const Corpus& corpus);

// Segment ids joined by SPACE and terminated by EOT.
std::vector<int> target_string(const TokenEntry& entry, const CharVocab& vocab);

struct DecodedSymbols {
  std::vector<std::string> segments;
  bool saw_eot = false;
};

// Inverse of target_string: reads until EOT, splits on SPACE, drops empty
// segments. PAD/BOS are skipped; UNK renders as U+FFFD.
DecodedSymbols decode_symbols(const std::vector<int>& ids, const CharVocab& vocab);

}  // namespace cats
