#pragma once

// Character-level attention encoder-decoder that rewrites a token into its
// words, separated by SPACE and closed by EOT. Every encoder input position
// carries the token's context vector, so the same surface can be segmented
// differently in different sentences. An optional label head reads the
// decoder state (plus the token vector and optionally a sentence vector)
// whenever a word is closed.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cats/corpus.hpp"
#include "cats/graph.hpp"
#include "cats/optim.hpp"

namespace cats {

struct ModelConfig {
  std::size_t d_char = 100;
  std::size_t d_enc = 256;
  std::size_t d_dec = 256;
  std::size_t d_att = 128;
  std::size_t d_ctx = 64;
  std::size_t d_sent = 0;
  bool joint = false;
  bool use_sentence_vector = false;
  bool char_encoder_enabled = true;
  std::size_t max_decode_factor = 3;
  std::size_t max_decode_slack = 10;
  double dropout = 0.0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::size_t max_decode_steps(std::size_t surface_len) const {
    return max_decode_factor * surface_len + max_decode_slack;
  }
  bool operator==(const ModelConfig&) const = default;
};

struct DecodeResult {
  std::vector<std::string> segments;
  std::vector<std::string> labels;  // joint models only
  std::vector<int> symbols;         // emitted symbol ids, EOT included when produced
  double log_prob = 0.0;
  bool truncated = false;
  bool empty_output = false;
};

// Length-normalized beam search over an abstract next-symbol model.
// Scorer must provide:
//   std::vector<double> log_probs(const State&)
//   State advance(const State&, int symbol)
struct BeamOutcome {
  std::vector<int> symbols;
  double log_prob = 0.0;
  bool finished = false;
  double normalized() const { return symbols.empty() ? 0.0 : log_prob / static_cast<double>(symbols.size()); }
};

template <typename State, typename Scorer>
BeamOutcome beam_search(const State& initial, Scorer& scorer, std::size_t width, std::size_t max_steps,
                        int eot);

template <typename T>
class CatsModel {
 public:
  struct Encoded {
    nn::Var states;     // n x 2*d_enc
    nn::Var projected;  // n x d_att
  };
  struct DecoderState {
    nn::Var h, c;
  };
  struct Attention {
    nn::Var context;  // 1 x 2*d_enc
    nn::Var weights;  // 1 x n
  };
  struct Step {
    DecoderState state;
    Attention attention;
    nn::Var logits;
  };
  struct ForwardResult {
    nn::Var loss_seg;
    std::optional<nn::Var> loss_tag;
    std::vector<nn::Var> logits;
  };
  // Sums of per-position cross-entropies, for callers that average over a batch.
  struct LossTerms {
    std::vector<nn::Var> seg;
    std::vector<nn::Var> tag;
    std::vector<nn::Var> logits;
  };

  CatsModel(ModelConfig cfg, CharVocab chars, LabelVocab labels, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const CharVocab& chars() const { return chars_; }
  const LabelVocab& labels() const { return labels_; }

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<const nn::Parameter<T>*> parameters() const;
  nn::Parameter<T>* find_parameter(const std::string& name);

  // rng, when set, enables dropout at the configured rate.
  void set_dropout_rng(std::mt19937_64* rng) { dropout_rng_ = rng; }

  Encoded encode(nn::Graph<T>& g, std::span<const int> surface, nn::Var ctx);
  Attention attend(nn::Graph<T>& g, nn::Var query, const Encoded& enc);
  DecoderState initial_state(nn::Graph<T>& g);
  Step step(nn::Graph<T>& g, const Encoded& enc, const DecoderState& prev, int prev_symbol);
  nn::Var label_logits(nn::Graph<T>& g, nn::Var decoder_h, nn::Var ctx, std::optional<nn::Var> sent);

  // Teacher forcing over a (possibly PAD-padded) target. PAD positions are
  // masked out and create no loss terms. segment_labels are label ids, one
  // per segment; required iff the model is joint.
  LossTerms loss_terms(nn::Graph<T>& g, std::span<const int> surface, std::span<const int> target,
                       std::span<const int> segment_labels, nn::Var ctx, std::optional<nn::Var> sent);

  // Mean losses for one token.
  ForwardResult forward_teacher_forced(nn::Graph<T>& g, const TokenEntry& entry, nn::Var ctx,
                                       std::optional<nn::Var> sent = std::nullopt);

  DecodeResult greedy_decode(const std::string& surface, std::span<const T> ctx,
                             std::span<const T> sent = {});
  DecodeResult beam_decode(const std::string& surface, std::span<const T> ctx, std::size_t width,
                           std::span<const T> sent = {});
  // Labels read at every SPACE/EOT of a fixed symbol sequence.
  std::vector<std::string> label_symbols(const std::string& surface, std::span<const T> ctx,
                                         std::span<const T> sent, const std::vector<int>& symbols);

  std::vector<int> label_ids(const TokenEntry& entry) const;

 private:
  nn::Var dropout(nn::Graph<T>& g, nn::Var x);
  DecodeResult finish(const std::vector<int>& symbols, double log_prob, bool truncated) const;

  ModelConfig cfg_;
  CharVocab chars_;
  LabelVocab labels_;
  nn::Parameter<T> char_embed_;
  nn::LstmParams<T> enc_fwd_, enc_bwd_;
  nn::Parameter<T> ctx_proj_w_, ctx_proj_b_;
  nn::Parameter<T> att_ws_, att_wh_, att_v_;
  nn::LstmParams<T> dec_;
  nn::Parameter<T> head_w_, head_b_;
  nn::Parameter<T> label_w_, label_b_;
  std::mt19937_64* dropout_rng_ = nullptr;
};

// lambda * l_seg + (1 - lambda) * l_tag
template <typename T>
nn::Var combine_losses(nn::Graph<T>& g, nn::Var l_seg, nn::Var l_tag, double lambda) {
  return g.add(g.scale(l_seg, static_cast<T>(lambda)), g.scale(l_tag, static_cast<T>(1.0 - lambda)));
}

// Copies every parameter value between models of identical configuration
// (e.g. float training model -> double verification model).
template <typename To, typename From>
void copy_parameters(CatsModel<To>& to, const CatsModel<From>& from);

// ---------------------------------------------------------------------------

template <typename State, typename Scorer>
BeamOutcome beam_search(const State& initial, Scorer& scorer, std::size_t width, std::size_t max_steps,
                        int eot) {
  if (width == 0) throw std::invalid_argument("beam_search: width must be at least 1");
  struct Hyp {
    State state;
    std::vector<int> symbols;
    double log_prob;
  };
  struct Candidate {
    std::size_t parent;
    int symbol;
    double log_prob;
  };
  std::vector<Hyp> live{{initial, {}, 0.0}};
  std::vector<BeamOutcome> finished;
  for (std::size_t t = 0; t < max_steps && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    for (std::size_t k = 0; k < live.size(); ++k) {
      const std::vector<double> lp = scorer.log_probs(live[k].state);
      for (std::size_t s = 0; s < lp.size(); ++s) {
        cands.push_back({k, static_cast<int>(s), live[k].log_prob + lp[s]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (cands.size() > width) cands.resize(width);
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      std::vector<int> syms = live[c.parent].symbols;
      syms.push_back(c.symbol);
      if (c.symbol == eot) {
        finished.push_back({std::move(syms), c.log_prob, true});
      } else {
        next.push_back({scorer.advance(live[c.parent].state, c.symbol), std::move(syms), c.log_prob});
      }
    }
    live = std::move(next);
  }
  if (finished.empty()) {
    for (auto& h : live) finished.push_back({std::move(h.symbols), h.log_prob, false});
  }
  if (finished.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].normalized() > finished[best].normalized()) best = i;
  }
  return finished[best];
}

}  // namespace cats
