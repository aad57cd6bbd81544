#include <doctest.h>

#include <array>
#include <random>

#include "cats/evaluation.hpp"
#include "cats/log.hpp"
#include "checks.hpp"

using namespace cats;

namespace {

const std::string kFixtures = CATS_FIXTURES;

Corpus one_token(std::vector<std::string> segs, std::vector<std::string> labels = {}) {
  std::string surface;
  for (const auto& s : segs) surface += s;
  Corpus c;
  c.sentences.push_back({"s", {{surface, std::move(segs), std::move(labels), {1, 1}}}, {}});
  return c;
}

Corpus tagged(const std::vector<std::vector<std::pair<std::string, std::string>>>& tokens) {
  Sentence s;
  s.sent_id = "n";
  for (const auto& t : tokens) {
    TokenEntry e;
    for (const auto& [seg, tag] : t) {
      e.surface += seg;
      e.segments.push_back(seg);
      e.labels.push_back(tag);
    }
    s.tokens.push_back(e);
  }
  Corpus c;
  c.sentences.push_back(s);
  return c;
}

const char* kDepGold =
    "# sent_id = d1\n"
    "1\tra\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tdw\t_\tVERB\t_\t_\t0\troot\t_\t_\n"
    "3\tkbd\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n\n";

const char* kDepPred =
    "# sent_id = d1\n"
    "1\tra\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tdw\t_\tVERB\t_\t_\t0\troot\t_\t_\n"
    "3-4\tkbd\t_\t_\t_\t_\t_\t_\t_\t_\n"
    "3\tk\t_\tADP\t_\t_\t4\tcase\t_\t_\n"
    "4\tbd\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n\n";

}  // namespace

TEST_CASE("segmentation f1 by hand") {
  SUBCASE("one missing boundary") {
    // gold {b, h, slm}, pred {b, slm}: 2 matched, P = 1, R = 2/3
    auto r = seg_prf(one_token({"b", "slm"}), one_token({"b", "h", "slm"}));
    CHECK(r.precision == doctest::Approx(1.0));
    CHECK(r.recall == doctest::Approx(2.0 / 3.0));
    CHECK(r.f1 == doctest::Approx(0.8));
  }
  SUBCASE("disjoint") {
    auto r = seg_prf(one_token({"bs", "lm"}), one_token({"b", "slm"}));
    CHECK(r.matched == 0);
    CHECK(r.f1 == 0.0);
  }
  SUBCASE("repeated segments count as a multiset") {
    auto r = seg_prf(one_token({"a", "a", "a"}), one_token({"a", "a"}));
    CHECK(r.matched == 2);
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("empty corpora give zeros, not NaN") {
    auto r = seg_prf(Corpus{}, Corpus{});
    CHECK(r.f1 == 0.0);
  }
  SUBCASE("misaligned corpora") {
    Corpus two = one_token({"a"});
    two.sentences.push_back(two.sentences[0]);
    CHECK_THROWS_AS(seg_prf(one_token({"a"}), two), EvalError);
  }
}

TEST_CASE("segmentation f1 against a sort-and-merge oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    Corpus pred, gold;
    std::size_t m = 0, p = 0, g = 0;
    const std::size_t n_sent = 1 + rng() % 3;
    for (std::size_t i = 0; i < n_sent; ++i) {
      Sentence ps, gs;
      ps.sent_id = gs.sent_id = "r" + std::to_string(i);
      const std::size_t n_tok = 1 + rng() % 4;
      for (std::size_t k = 0; k < n_tok; ++k) {
        auto a = testing::random_segments(rng), b = testing::random_segments(rng);
        m += testing::sorted_overlap(a, b);
        p += a.size();
        g += b.size();
        ps.tokens.push_back({"w", a, {}, {k + 1, k + 1}});
        gs.tokens.push_back({"w", b, {}, {k + 1, k + 1}});
      }
      pred.sentences.push_back(ps);
      gold.sentences.push_back(gs);
    }
    const auto r = seg_prf(pred, gold);
    REQUIRE(r.matched == m);
    REQUIRE(r.predicted == p);
    REQUIRE(r.gold == g);
    const double P = p ? double(m) / double(p) : 0.0, R = g ? double(m) / double(g) : 0.0;
    const double F = P + R > 0 ? 2 * P * R / (P + R) : 0.0;
    REQUIRE(std::abs(r.f1 - F) < 1e-12);
    // swapping the sides swaps precision and recall
    const auto s = seg_prf(gold, pred);
    REQUIRE(s.precision == r.recall);
    REQUIRE(s.recall == r.precision);
    REQUIRE(s.f1 == doctest::Approx(r.f1));
  }
}

TEST_CASE("labeled segmentation f1") {
  auto r = labeled_seg_f1(one_token({"b", "slm"}, {"ADP", "VERB"}), one_token({"b", "slm"}, {"ADP", "NOUN"}));
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.task == Task::pos);
  CHECK_THROWS_AS(labeled_seg_f1(one_token({"b"}), one_token({"b"}, {"ADP"})), EvalError);
}

TEST_CASE("aligned form-head-relation f1") {
  const Corpus gold = parse_conllu_string(kDepGold), pred = parse_conllu_string(kDepPred);
  // ra and dw keep their triplets; k/bd against kbd matches neither way.
  auto r = aligned_fhr_f1(pred, gold);
  CHECK(r.matched == 2);
  CHECK(r.precision == doctest::Approx(2.0 / 4.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(aligned_fhr_f1(gold, gold).f1 == doctest::Approx(1.0));
  SUBCASE("head forms matter") {
    Corpus other = gold;
    other.sentences[0].dep_annotations[0].head = 3;  // ra <- kbd
    CHECK(aligned_fhr_f1(other, gold).matched == 2);
  }
  SUBCASE("annotations are required") {
    CHECK_THROWS_AS(aligned_fhr_f1(one_token({"a"}), one_token({"a"})), EvalError);
  }
}

TEST_CASE("edit distance alignment prefers substitution at the earliest point") {
  const std::vector<std::string> p{"ra", "dw", "k", "bd"}, g{"ra", "dw", "kbd"};
  const auto ops = align_sequences(p, g);
  REQUIRE(ops.size() == 4);
  CHECK(ops[0].kind == EditKind::match);
  CHECK(ops[1].kind == EditKind::match);
  CHECK(ops[2].kind == EditKind::substitute);
  CHECK(ops[3].kind == EditKind::deletion);
}

TEST_CASE("entity span f1") {
  SUBCASE("exact span") {
    auto c = tagged({{{"ACME", "S-ORG"}}, {{"ran", "O"}}});
    CHECK(ner_span_f1(c, c).f1 == doctest::Approx(1.0));
  }
  SUBCASE("wrong type") {
    auto r = ner_span_f1(tagged({{{"ACME", "S-LOC"}}}), tagged({{{"ACME", "S-ORG"}}}));
    CHECK(r.matched == 0);
    CHECK(r.predicted == 1);
  }
  SUBCASE("a span over segments is its concatenated surface") {
    auto gold = tagged({{{"AC", "B-ORG"}, {"ME", "E-ORG"}}});
    auto pred = tagged({{{"AC", "S-ORG"}, {"ME", "S-ORG"}}});
    auto r = ner_span_f1(pred, gold);
    CHECK(r.matched == 0);
    CHECK(r.predicted == 2);
    CHECK(r.gold == 1);
    CHECK(ner_span_f1(gold, gold).matched == 1);
  }
  SUBCASE("stray inside tag opens a span, with a warning") {
    std::vector<std::string> warnings;
    auto prev = set_log_sink([&](std::string_view, std::string_view m) { warnings.emplace_back(m); });
    auto r = ner_span_f1(tagged({{{"AC", "I-ORG"}, {"ME", "E-ORG"}}}), tagged({{{"AC", "B-ORG"}, {"ME", "E-ORG"}}}));
    set_log_sink(prev);
    CHECK(r.matched == 1);
    CHECK(warnings.size() == 1);
  }
  SUBCASE("unknown tag") {
    CHECK_THROWS_AS(ner_span_f1(tagged({{{"ACME", "X-ORG"}}}), tagged({{{"ACME", "S-ORG"}}})), EvalError);
  }
}

TEST_CASE("task names") {
  for (auto t : {Task::seg, Task::pos, Task::dep, Task::ner}) CHECK(parse_task(to_string(t)) == t);
  CHECK_THROWS(parse_task("lemma"));
}

TEST_CASE("token error classes") {
  SUBCASE("missing prefix boundary") {
    auto b = classify_token_errors({"bslm"}, {"b", "slm"});
    CHECK(b.under_seg_prefix == 1);
    CHECK(b.total() == 1);
  }
  SUBCASE("extra letter") {
    auto b = classify_token_errors({"b", "h", "slm"}, {"b", "slm"});
    CHECK(b.model_artifacts == 1);
    CHECK(b.over_seg_prefix == 1);
    CHECK(b.total() == 2);
  }
  SUBCASE("suffix side") {
    CHECK(classify_token_errors({"kelbta"}, {"kelb", "ta"}).under_seg_suffix == 1);
    auto b = classify_token_errors({"kel", "bta"}, {"kelb", "ta"});
    CHECK(b.over_seg_suffix == 1);
    CHECK(b.under_seg_suffix == 1);
    CHECK(b.model_artifacts == 0);
  }
  SUBCASE("boundary before the stem midpoint is a prefix") {
    CHECK(classify_token_errors({"ko", "dega"}, {"kodega"}).over_seg_prefix == 1);
  }
  SUBCASE("correct tokens are not errors") { CHECK(classify_token_errors({"x", "y"}, {"x", "y"}).total() == 0); }
  SUBCASE("substituted letter only") {
    auto b = classify_token_errors({"bslx"}, {"bslm"});
    CHECK(b.model_artifacts == 1);
    CHECK(b.total() == 1);
  }
}

TEST_CASE("error analysis on the traced fixture") {
  const Corpus gold = read_conllu_file(kFixtures + "/errors_gold.conllu");
  const Corpus pred = read_conllu_file(kFixtures + "/errors_pred.conllu");
  REQUIRE(gold.token_count() == 20);

  // Second sentence, traced by hand: {over prefix, under prefix, over suffix, under suffix, artifacts}.
  const std::vector<std::array<std::size_t, 5>> traced{
      {0, 0, 0, 0, 0},  // w|kelb
      {0, 1, 0, 0, 0},  // wkelb for w|kelb
      {1, 1, 0, 0, 0},  // ha|bait for h|abait
      {0, 0, 1, 0, 0},  // sfr|im for sfrim
      {0, 0, 0, 1, 0},  // sfrim for sfr|im
      {1, 0, 0, 0, 1},  // l|h|bait for l|bait
      {0, 0, 0, 0, 0},  // kelb
      {1, 0, 0, 0, 0},  // m|bait|ta for mbait|ta
      {0, 0, 1, 0, 0},  // b|sfr|im for b|sfrim
      {0, 1, 0, 0, 0},  // wl|bait for w|l|bait
      {0, 0, 0, 0, 0},  // bait|i
      {0, 0, 0, 0, 1},  // kalb for kelb
      {0, 0, 0, 1, 0},  // sfr|imta for sfr|im|ta
  };
  const auto& ps = pred.sentences[1];
  const auto& gs = gold.sentences[1];
  REQUIRE(gs.tokens.size() == traced.size());
  for (std::size_t i = 0; i < traced.size(); ++i) {
    CAPTURE(i);
    const auto b = classify_token_errors(ps.tokens[i].segments, gs.tokens[i].segments);
    CHECK(b.over_seg_prefix == traced[i][0]);
    CHECK(b.under_seg_prefix == traced[i][1]);
    CHECK(b.over_seg_suffix == traced[i][2]);
    CHECK(b.under_seg_suffix == traced[i][3]);
    CHECK(b.model_artifacts == traced[i][4]);
  }

  const auto b = analyze_errors(pred, gold);
  CHECK(b.over_seg_prefix == 5);
  CHECK(b.under_seg_prefix == 4);
  CHECK(b.over_seg_suffix == 3);
  CHECK(b.under_seg_suffix == 4);
  CHECK(b.model_artifacts == 4);
  CHECK(format_breakdown(b) ==
        "Over-seg. prefix\t25.0% (5)\n"
        "Under-seg. prefix\t20.0% (4)\n"
        "Over-seg. suffix\t15.0% (3)\n"
        "Under-seg. suffix\t20.0% (4)\n"
        "Model artifacts\t20.0% (4)\n"
        "Total errors\t100.0% (20)\n");
}

TEST_CASE("breakdown formatting") {
  ErrorBreakdown b;
  b.under_seg_prefix = 77;
  b.over_seg_suffix = 25;
  CHECK(format_breakdown(b).find("Under-seg. prefix\t75.5% (77)\n") != std::string::npos);
  CHECK(format_breakdown(ErrorBreakdown{}).find("Total errors\t0.0% (0)") != std::string::npos);
}

TEST_CASE("report rendering") {
  auto r = make_report(Task::seg, 3, 4, 5);
  CHECK(format_report(r).find("F1 0.6667\n") != std::string::npos);
  CHECK(report_key_values(r).find("precision=0.750000") != std::string::npos);
}
