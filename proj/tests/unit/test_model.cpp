#include <doctest.h>

#include <cmath>
#include <random>

#include "cats/evaluation.hpp"
#include "cats/model.hpp"
#include "cats/synthetic.hpp"
#include "checks.hpp"

using namespace cats;
using nn::Graph;
using nn::Var;

namespace {

struct Fixture {
  Corpus corpus;
  CharVocab chars;
  LabelVocab labels;
  ModelConfig cfg;

  explicit Fixture(bool joint = false) {
    SynthConfig sc;
    sc.n_sentences = 40;
    corpus = generate_synthetic(sc).corpus;
    std::tie(chars, labels) = build_vocabs(corpus);
    cfg.d_char = 6;
    cfg.d_enc = 5;
    cfg.d_dec = 7;
    cfg.d_att = 4;
    cfg.d_ctx = 3;
    cfg.joint = joint;
  }
};

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<std::string> all_surfaces(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& s : c.sentences)
    for (const auto& t : s.tokens) out.push_back(t.surface);
  return out;
}

}  // namespace

TEST_CASE("encoder shapes and context sensitivity") {
  Fixture f;
  CatsModel<double> m(f.cfg, f.chars, f.labels, 1);
  const auto ids = f.chars.encode("bafa");
  Graph<double> g;
  auto enc = m.encode(g, ids, g.constant(1, 3, {0.5, -0.5, 1.0}));
  CHECK(g.rows(enc.states) == 4);
  CHECK(g.cols(enc.states) == 2 * f.cfg.d_enc);
  auto other = m.encode(g, ids, g.constant(1, 3, {-0.5, 0.5, 0.0}));
  CHECK(g.copy_value(enc.states) != g.copy_value(other.states));
  CHECK_THROWS_AS(m.encode(g, std::vector<int>{}, g.zeros(1, 3)), std::invalid_argument);
}

TEST_CASE("encoder with zero weights and zero context is all zeros") {
  Fixture f;
  CatsModel<double> m(f.cfg, f.chars, f.labels, 1);
  for (auto* p : m.parameters()) std::fill(p->value.begin(), p->value.end(), 0.0);
  Graph<double> g;
  auto enc = m.encode(g, f.chars.encode("abc"), g.zeros(1, 3));
  for (double v : g.value(enc.states)) CHECK(v == 0.0);
}

TEST_CASE("attention") {
  Fixture f;
  CatsModel<double> m(f.cfg, f.chars, f.labels, 2);
  std::mt19937_64 rng(5);
  SUBCASE("single position gets all the weight") {
    Graph<double> g;
    auto enc = m.encode(g, f.chars.encode("a"), g.zeros(1, 3));
    auto att = m.attend(g, g.constant(1, f.cfg.d_dec, random_vec(f.cfg.d_dec, rng)), enc);
    CHECK(g.value(att.weights)[0] == doctest::Approx(1.0));
    for (std::size_t j = 0; j < 2 * f.cfg.d_enc; ++j) CHECK(g.value(att.context)[j] == doctest::Approx(g.value(enc.states)[j]));
  }
  SUBCASE("zero scoring vector gives uniform weights") {
    auto* v = m.find_parameter("att.v");
    REQUIRE(v);
    std::fill(v->value.begin(), v->value.end(), 0.0);
    Graph<double> g;
    auto enc = m.encode(g, f.chars.encode("abcd"), g.zeros(1, 3));
    auto att = m.attend(g, g.constant(1, f.cfg.d_dec, random_vec(f.cfg.d_dec, rng)), enc);
    for (double w : g.value(att.weights)) CHECK(w == doctest::Approx(0.25));
  }
  SUBCASE("context is the weighted sum, recomputed by hand") {
    Graph<double> g;
    auto enc = m.encode(g, f.chars.encode("dfgbc"), g.constant(1, 3, random_vec(3, rng)));
    const auto q = random_vec(f.cfg.d_dec, rng);
    auto att = m.attend(g, g.constant(1, f.cfg.d_dec, q), enc);

    const auto& ws = m.find_parameter("att.ws")->value;
    const auto& wh = m.find_parameter("att.wh")->value;
    const auto& va = m.find_parameter("att.v")->value;
    const std::size_t n = 5, he = 2 * f.cfg.d_enc, da = f.cfg.d_att;
    const auto H = g.copy_value(enc.states);
    std::vector<double> e(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < da; ++k) {
        double a = 0;
        for (std::size_t i = 0; i < f.cfg.d_dec; ++i) a += q[i] * ws[i * da + k];
        for (std::size_t i = 0; i < he; ++i) a += H[j * he + i] * wh[i * da + k];
        e[j] += va[k] * std::tanh(a);
      }
    }
    double z = 0;
    for (double x : e) z += std::exp(x);
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double alpha = std::exp(e[j]) / z;
      CHECK(g.value(att.weights)[j] == doctest::Approx(alpha).epsilon(1e-12));
      CHECK(alpha >= 0.0);
      total += g.value(att.weights)[j];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    for (std::size_t i = 0; i < he; ++i) {
      double c = 0;
      for (std::size_t j = 0; j < n; ++j) c += std::exp(e[j]) / z * H[j * he + i];
      CHECK(g.value(att.context)[i] == doctest::Approx(c).epsilon(1e-12));
    }
  }
}

TEST_CASE("teacher forcing") {
  Fixture f(true);
  CatsModel<double> m(f.cfg, f.chars, f.labels, 3);
  const TokenEntry entry{"kobcd", {"ko", "bcd"}, {"CCONJ", "NOUN"}, {1, 2}};
  Graph<double> g;
  Var ctx = g.constant(1, 3, {0.1, 0.2, 0.3});
  auto r = m.forward_teacher_forced(g, entry, ctx);

  SUBCASE("one segment loss per target symbol, one label loss per segment") {
    const auto target = target_string(entry, f.chars);
    CHECK(r.logits.size() == target.size());
    auto terms = m.loss_terms(g, f.chars.encode(entry.surface), target, m.label_ids(entry), ctx, std::nullopt);
    CHECK(terms.tag.size() == 2);
  }
  SUBCASE("segment loss is the mean cross-entropy of the step logits") {
    const auto target = target_string(entry, f.chars);
    double total = 0;
    for (std::size_t t = 0; t < target.size(); ++t) {
      const auto z = g.copy_value(r.logits[t]);
      double mx = *std::max_element(z.begin(), z.end()), s = 0;
      for (double x : z) s += std::exp(x - mx);
      total += std::log(s) + mx - z[static_cast<std::size_t>(target[t])];
    }
    CHECK(g.scalar(r.loss_seg) == doctest::Approx(total / static_cast<double>(target.size())).epsilon(1e-12));
  }
  SUBCASE("padding adds nothing") {
    auto target = target_string(entry, f.chars);
    auto plain = m.loss_terms(g, f.chars.encode(entry.surface), target, m.label_ids(entry), ctx, std::nullopt);
    target.insert(target.end(), 4, CharVocab::kPad);
    auto padded = m.loss_terms(g, f.chars.encode(entry.surface), target, m.label_ids(entry), ctx, std::nullopt);
    CHECK(plain.seg.size() == padded.seg.size());
    CHECK(g.scalar(g.add_n(plain.seg)) == g.scalar(g.add_n(padded.seg)));
  }
  SUBCASE("joint models need labels") {
    TokenEntry bare = entry;
    bare.labels.clear();
    CHECK_THROWS_AS(m.forward_teacher_forced(g, bare, ctx), std::invalid_argument);
  }
}

TEST_CASE("loss combination") {
  Graph<double> g;
  // 0.2 * 1.0 + 0.8 * 0.5
  CHECK(g.scalar(combine_losses(g, g.constant(1, 1, {1.0}), g.constant(1, 1, {0.5}), 0.2)) == doctest::Approx(0.6));
}

TEST_CASE("with lambda = 1 the label head gets no gradient") {
  Fixture f(true);
  CatsModel<double> m(f.cfg, f.chars, f.labels, 4);
  for (auto* p : m.parameters()) p->zero_grad();
  Graph<double> g;
  auto r = m.forward_teacher_forced(g, {"bcdta", {"bcd", "ta"}, {"NOUN", "PRON"}, {1, 2}}, g.constant(1, 3, {1, 0, -1}));
  g.backward(combine_losses(g, r.loss_seg, *r.loss_tag, 1.0));
  for (double v : m.find_parameter("label.w")->grad) CHECK(v == 0.0);
  for (double v : m.find_parameter("label.b")->grad) CHECK(v == 0.0);
  double other = 0;
  for (double v : m.find_parameter("head.w")->grad) other += std::abs(v);
  CHECK(other > 0.0);
}

TEST_CASE("full model gradient check") {
  CHECK(testing::model_grad_error(1) < 1e-4);
  CHECK(testing::model_grad_error(2, false) < 1e-4);
}

TEST_CASE("degenerate decoders") {
  Fixture f;
  CatsModel<float> m(f.cfg, f.chars, f.labels, 5);
  auto* w = m.find_parameter("head.w");
  auto* b = m.find_parameter("head.b");
  std::fill(w->value.begin(), w->value.end(), 0.0f);
  std::fill(b->value.begin(), b->value.end(), 0.0f);
  const std::vector<float> ctx(3, 0.0f);
  SUBCASE("separators until the cap") {
    b->value[CharVocab::kSpace] = 50.0f;
    auto r = m.greedy_decode("bafod", ctx);
    CHECK(r.segments.empty());
    CHECK(r.empty_output);
    CHECK(r.truncated);
    CHECK(r.symbols.size() == f.cfg.max_decode_steps(5));
  }
  SUBCASE("immediate end of token") {
    b->value[CharVocab::kEot] = 50.0f;
    auto r = m.greedy_decode("bafod", ctx);
    CHECK(r.segments.empty());
    CHECK(r.empty_output);
    CHECK_FALSE(r.truncated);
  }
  SUBCASE("an empty prediction counts zero predicted segments") {
    b->value[CharVocab::kEot] = 50.0f;
    Corpus gold;
    gold.sentences.push_back({"x", {{"bafod", {"ba", "fod"}, {}, {1, 2}}}, {}});
    Corpus pred = gold;
    pred.sentences[0].tokens[0].segments = m.greedy_decode("bafod", ctx).segments;
    auto rep = seg_prf(pred, gold);
    CHECK(rep.predicted == 0);
    CHECK(rep.recall == 0.0);
  }
}

TEST_CASE("beam of width one is greedy") {
  Fixture f(true);
  CatsModel<float> m(f.cfg, f.chars, f.labels, 6);
  std::mt19937_64 rng(7);
  const auto surfaces = all_surfaces(f.corpus);
  std::uniform_real_distribution<float> d(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const std::string& s = surfaces[rng() % surfaces.size()];
    std::vector<float> ctx(3);
    for (float& x : ctx) x = d(rng);
    auto a = m.greedy_decode(s, ctx), b = m.beam_decode(s, ctx, 1);
    CHECK(a.symbols == b.symbols);
    CHECK(a.segments == b.segments);
    CHECK(a.labels == b.labels);
    CHECK(a.log_prob == doctest::Approx(b.log_prob));
  }
  CHECK_THROWS_AS(m.beam_decode("ab", std::vector<float>(3), 0), std::invalid_argument);
}

namespace {

// Three symbols: 0 = end, 1 = A, 2 = B. Greedy takes A (0.55) and then has
// to stop at 0.4; B (0.45) followed by end (0.9) is better overall.
struct ToyScorer {
  std::vector<double> log_probs(int state) {
    switch (state) {
      case 0: return {std::log(1e-9), std::log(0.55), std::log(0.45)};
      case 1: return {std::log(0.4), std::log(0.3), std::log(0.3)};
      default: return {std::log(0.9), std::log(0.05), std::log(0.05)};
    }
  }
  int advance(int, int symbol) { return symbol; }
};

}  // namespace

TEST_CASE("beam search recovers the sequence greedy misses") {
  ToyScorer s;
  auto greedy = beam_search(0, s, 1, 5, 0);
  auto beam = beam_search(0, s, 2, 5, 0);
  CHECK(greedy.symbols == std::vector<int>{1, 0});
  CHECK(beam.symbols == std::vector<int>{2, 0});
  CHECK(beam.finished);
  CHECK(beam.normalized() == doctest::Approx((std::log(0.45) + std::log(0.9)) / 2));
  CHECK(beam.normalized() > greedy.normalized());
}

TEST_CASE("zeros context makes decoding independent of the sentence") {
  Fixture f;
  CatsModel<float> m(f.cfg, f.chars, f.labels, 8);
  auto p = ContextProvider<float>::zeros(3);
  const Sentence& s = f.corpus.sentences[2];
  Sentence permuted = s;
  std::reverse(permuted.tokens.begin(), permuted.tokens.end());
  const auto a = m.greedy_decode(s.tokens[0].surface, p.vector_for(s, 0));
  const auto b = m.greedy_decode(s.tokens[0].surface, p.vector_for(permuted, permuted.tokens.size() - 1));
  CHECK(a.symbols == b.symbols);
}

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.d_enc = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.use_sentence_vector = true;
  c.joint = true;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);  // d_sent missing
}
