#include <doctest.h>

#include <random>
#include <sstream>

#include "cats/corpus.hpp"
#include "cats/log.hpp"

using namespace cats;

namespace {

const std::string kFixtures = CATS_FIXTURES;

struct CapturedLog {
  std::vector<std::string> lines;
  LogSink previous;
  CapturedLog() {
    previous = set_log_sink([this](std::string_view, std::string_view m) { lines.emplace_back(m); });
  }
  ~CapturedLog() { set_log_sink(previous); }
};

std::string row(const std::string& id, const std::string& form, const std::string& upos = "_",
                const std::string& head = "_", const std::string& rel = "_") {
  return id + "\t" + form + "\t_\t" + upos + "\t_\t_\t" + head + "\t" + rel + "\t_\t_\n";
}

// Joins segments with a separator the long way, as an independent oracle.
std::vector<int> joined_ids(const std::vector<std::string>& segs, const CharVocab& v) {
  std::vector<int> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i > 0) out.push_back(CharVocab::kSpace);
    for (char ch : segs[i]) out.push_back(v.id_of(static_cast<unsigned char>(ch)));
  }
  out.push_back(CharVocab::kEot);
  return out;
}

}  // namespace

TEST_CASE("range line groups its words into one token") {
  Corpus c = parse_conllu_string("# sent_id = a\n" + row("1-2", "bslm") + row("1", "b") + row("2", "slm") + "\n");
  REQUIRE(c.sentences.size() == 1);
  REQUIRE(c.sentences[0].tokens.size() == 1);
  const auto& t = c.sentences[0].tokens[0];
  CHECK(t.surface == "bslm");
  CHECK(t.segments == std::vector<std::string>{"b", "slm"});
  CHECK(t.char_span == std::pair<std::size_t, std::size_t>{1, 2});
}

TEST_CASE("segments may contain characters absent from the surface") {
  Corpus c = read_conllu_file(kFixtures + "/bslm.conllu");
  REQUIRE(c.sentences.size() == 2);
  const auto& t = c.sentences[0].tokens[0];
  CHECK(t.surface == "bslm");
  CHECK(t.segments == std::vector<std::string>{"b", "h", "slm"});
  CHECK(t.labels == std::vector<std::string>{"ADP", "DET", "NOUN"});
  CHECK(c.sentences[0].dep_annotations.size() == 3);
  CHECK(c.sentences[0].dep_annotations[0].head == 3);
  CHECK(c.sentences[0].dep_annotations[2].relation == "root");
}

TEST_CASE("empty nodes are skipped") {
  Corpus c = read_conllu_file(kFixtures + "/bslm.conllu");
  const auto& s = c.sentences[1];
  REQUIRE(s.tokens.size() == 2);
  CHECK(s.tokens[1].surface == "gdwl");
  CHECK(s.word_count() == 3);
}

TEST_CASE("three-line fixture holds two one-token sentences") {
  CapturedLog log;
  Corpus c = read_conllu_file(kFixtures + "/three_lines.conllu");
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[0].tokens.size() == 1);
  CHECK(c.sentences[1].tokens.size() == 1);
  CHECK(c.sentences[0].sent_id == "s1");
  CHECK(c.sentences[1].sent_id == "s2");
  CHECK(log.lines.size() == 2);
  CHECK(c.token_count() == 2);
}

TEST_CASE("malformed input is rejected with a line number") {
  SUBCASE("column count") {
    try {
      parse_conllu_string("# sent_id = a\n1\tx\t_\n");
      FAIL("no error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("overlapping ranges") {
    CHECK_THROWS_AS(parse_conllu_string(row("1-2", "ab") + row("1", "a") + row("2-3", "bc") + row("2", "b") +
                                        row("3", "c") + "\n"),
                    ParseError);
  }
  SUBCASE("range that skips ahead") {
    CHECK_THROWS_AS(parse_conllu_string(row("2-3", "ab") + row("1", "a") + "\n"), ParseError);
  }
  SUBCASE("reversed range") { CHECK_THROWS_AS(parse_conllu_string(row("2-1", "ab") + "\n"), ParseError); }
  SUBCASE("word id out of order") {
    CHECK_THROWS_AS(parse_conllu_string(row("1", "a") + row("3", "b") + "\n"), ParseError);
  }
  SUBCASE("range past the end of the sentence") {
    CHECK_THROWS_AS(parse_conllu_string(row("1-3", "abc") + row("1", "a") + row("2", "b") + "\n"), ParseError);
  }
  SUBCASE("head outside the sentence") {
    CHECK_THROWS_AS(parse_conllu_string(row("1", "a", "X", "4", "dep") + "\n"), ParseError);
  }
  SUBCASE("duplicate sent_id") {
    CHECK_THROWS_AS(parse_conllu_string("# sent_id = a\n" + row("1", "a") + "\n# sent_id = a\n" + row("1", "b") + "\n"),
                    ParseError);
  }
}

TEST_CASE("partial annotations are dropped per sentence") {
  Corpus c = parse_conllu_string(row("1", "a", "NOUN", "0", "root") + row("2", "b", "_", "_", "_") + "\n");
  CHECK_FALSE(c.sentences[0].has_labels());
  CHECK(c.sentences[0].dep_annotations.empty());
}

TEST_CASE("write then parse reproduces the corpus") {
  Corpus a = read_conllu_file(kFixtures + "/bslm.conllu");
  Corpus b = parse_conllu_string(to_conllu_string(a));
  CHECK(a == b);
}

TEST_CASE("a token without segments survives a round trip") {
  Corpus c;
  Sentence s;
  s.sent_id = "e1";
  s.tokens.push_back({"ab", {"a", "b"}, {}, {1, 2}});
  s.tokens.push_back({"cd", {}, {}, {3, 3}});
  s.tokens.push_back({"ef", {"ef"}, {}, {4, 4}});
  c.sentences.push_back(s);
  Corpus back = parse_conllu_string(to_conllu_string(c));
  REQUIRE(back.sentences[0].tokens.size() == 3);
  CHECK(back.sentences[0].tokens[1].surface == "cd");
  CHECK(back.sentences[0].tokens[1].segments.empty());
  CHECK(back.sentences[0].tokens[2].segments == std::vector<std::string>{"ef"});
}

TEST_CASE("strip_analyses keeps only surfaces") {
  Corpus c = strip_analyses(read_conllu_file(kFixtures + "/bslm.conllu"));
  const auto& t = c.sentences[0].tokens[0];
  CHECK(t.segments == std::vector<std::string>{"bslm"});
  CHECK_FALSE(t.has_labels());
  CHECK(c.sentences[0].dep_annotations.empty());
}

TEST_CASE("vocabularies") {
  SUBCASE("characters of surfaces and segments plus reserved ids") {
    Corpus c = parse_conllu_string(row("1-2", "bslm") + row("1", "b", "ADP") + row("2", "slm", "NOUN") + "\n");
    auto [chars, labels] = build_vocabs(c);
    CHECK(chars.size() == 9);
    CHECK(labels.size() == 2);
    CHECK(chars.id_of(U'b') == CharVocab::kReserved);
  }
  SUBCASE("segment-only characters are included") {
    Corpus c = read_conllu_file(kFixtures + "/bslm.conllu");
    auto [chars, labels] = build_vocabs(c);
    CHECK(chars.contains(U'h'));
    CHECK(chars.id_of(U'z') == CharVocab::kUnk);
  }
  SUBCASE("empty corpus") { CHECK_THROWS_AS(build_vocabs(Corpus{}), std::invalid_argument); }
  SUBCASE("ids are insertion ordered and stable") {
    Corpus c = read_conllu_file(kFixtures + "/bslm.conllu");
    CHECK(build_vocabs(c).first == build_vocabs(c).first);
    CHECK(build_vocabs(c).first.symbols() == U"bslmhgdw");
  }
}

TEST_CASE("target strings") {
  Corpus c = read_conllu_file(kFixtures + "/bslm.conllu");
  auto [v, l] = build_vocabs(c);
  auto ids = [&](const std::string& s) { return v.encode(s); };
  SUBCASE("two segments") {
    std::vector<int> expect = ids("b");
    expect.push_back(CharVocab::kSpace);
    for (int i : ids("slm")) expect.push_back(i);
    expect.push_back(CharVocab::kEot);
    CHECK(target_string({"bslm", {"b", "slm"}, {}, {1, 2}}, v) == expect);
  }
  SUBCASE("single segment has no separator") {
    auto t = target_string({"sl", {"sl"}, {}, {1, 1}}, v);
    CHECK(std::count(t.begin(), t.end(), CharVocab::kSpace) == 0);
    CHECK(t.back() == CharVocab::kEot);
  }
  SUBCASE("unknown characters become UNK") {
    auto t = target_string({"dog", {"dog"}, {}, {1, 1}}, v);
    CHECK(t[1] == CharVocab::kUnk);
  }
  SUBCASE("separator count against a brute-force join") {
    std::mt19937_64 rng(5);
    const std::string alphabet = "bslmhgdw";
    for (int n = 0; n < 200; ++n) {
      std::vector<std::string> segs(1 + rng() % 4);
      for (auto& s : segs) {
        const std::size_t len = 1 + rng() % 4;
        for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
      }
      TokenEntry e{"x", segs, {}, {1, segs.size()}};
      const auto t = target_string(e, v);
      CHECK(t == joined_ids(segs, v));
      CHECK(std::count(t.begin(), t.end(), CharVocab::kSpace) == static_cast<long>(segs.size() - 1));
      CHECK(decode_symbols(t, v).segments == segs);
    }
  }
}

TEST_CASE("decoding symbol streams") {
  CharVocab v;
  for (char32_t ch : U"bslm") v.add(ch);
  auto enc = [&](const std::string& s) { return v.encode(s); };
  SUBCASE("split on separators") {
    std::vector<int> ids = enc("b");
    ids.push_back(CharVocab::kSpace);
    for (int i : enc("slm")) ids.push_back(i);
    ids.push_back(CharVocab::kEot);
    auto d = decode_symbols(ids, v);
    CHECK(d.segments == std::vector<std::string>{"b", "slm"});
    CHECK(d.saw_eot);
  }
  SUBCASE("only separators yields nothing") {
    auto d = decode_symbols({CharVocab::kSpace, CharVocab::kSpace, CharVocab::kEot}, v);
    CHECK(d.segments.empty());
    CHECK(d.saw_eot);
  }
  SUBCASE("symbols after EOT are ignored") {
    std::vector<int> ids = enc("bs");
    ids.push_back(CharVocab::kEot);
    ids.push_back(enc("l")[0]);
    CHECK(decode_symbols(ids, v).segments == std::vector<std::string>{"bs"});
  }
}

TEST_CASE("utf-8 round trip") {
  const std::string s = "ב\xD7\xA9ל\xC3\xA9x";
  CHECK(utf8_encode(utf8_decode(s)) == s);
  CHECK(utf8_decode("a\xC3") == U"a\uFFFD");
}
