#include "cats/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cats {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  };
  positive(d_char, "d_char");
  positive(d_enc, "d_enc");
  positive(d_dec, "d_dec");
  positive(d_att, "d_att");
  positive(d_ctx, "d_ctx");
  if (use_sentence_vector) {
    if (!joint) throw std::invalid_argument("model config: use_sentence_vector requires joint");
    positive(d_sent, "d_sent");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must be in [0,1)");
}

namespace {

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

template <typename T>
std::vector<double> to_double(std::span<const T> v) {
  return {v.begin(), v.end()};
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

template <typename T>
CatsModel<T>::CatsModel(ModelConfig cfg, CharVocab chars, LabelVocab labels, std::uint64_t seed)
    : cfg_(cfg), chars_(std::move(chars)), labels_(std::move(labels)) {
  cfg_.validate();
  if (cfg_.joint && labels_.size() == 0) throw std::invalid_argument("joint model needs a non-empty label vocabulary");
  const std::size_t V = chars_.size();
  const std::size_t enc_out = 2 * cfg_.d_enc;
  std::mt19937_64 rng(seed);

  char_embed_ = nn::Parameter<T>("char_embed", V, cfg_.d_char);
  nn::init_uniform(char_embed_, rng);
  if (cfg_.char_encoder_enabled) {
    enc_fwd_ = nn::make_lstm<T>("enc.fwd", cfg_.d_char + cfg_.d_ctx, cfg_.d_enc);
    enc_bwd_ = nn::make_lstm<T>("enc.bwd", cfg_.d_char + cfg_.d_ctx, cfg_.d_enc);
    nn::init_lstm(enc_fwd_, rng);
    nn::init_lstm(enc_bwd_, rng);
  } else {
    ctx_proj_w_ = nn::Parameter<T>("enc.ctx_proj.w", cfg_.d_ctx, enc_out);
    ctx_proj_b_ = nn::Parameter<T>("enc.ctx_proj.b", 1, enc_out);
    nn::init_uniform(ctx_proj_w_, rng);
  }
  att_ws_ = nn::Parameter<T>("att.ws", cfg_.d_dec, cfg_.d_att);
  att_wh_ = nn::Parameter<T>("att.wh", enc_out, cfg_.d_att);
  att_v_ = nn::Parameter<T>("att.v", cfg_.d_att, 1);
  nn::init_uniform(att_ws_, rng);
  nn::init_uniform(att_wh_, rng);
  nn::init_uniform(att_v_, rng);
  dec_ = nn::make_lstm<T>("dec", cfg_.d_char + enc_out, cfg_.d_dec);
  nn::init_lstm(dec_, rng);
  head_w_ = nn::Parameter<T>("head.w", cfg_.d_dec, V);
  head_b_ = nn::Parameter<T>("head.b", 1, V);
  nn::init_uniform(head_w_, rng);
  if (cfg_.joint) {
    const std::size_t in = cfg_.d_dec + cfg_.d_ctx + (cfg_.use_sentence_vector ? cfg_.d_sent : 0);
    label_w_ = nn::Parameter<T>("label.w", in, labels_.size());
    label_b_ = nn::Parameter<T>("label.b", 1, labels_.size());
    nn::init_uniform(label_w_, rng);
  }
}

template <typename T>
std::vector<nn::Parameter<T>*> CatsModel<T>::parameters() {
  std::vector<nn::Parameter<T>*> ps{&char_embed_};
  if (cfg_.char_encoder_enabled) {
    for (auto* l : {&enc_fwd_, &enc_bwd_}) ps.insert(ps.end(), {&l->w, &l->u, &l->b});
  } else {
    ps.insert(ps.end(), {&ctx_proj_w_, &ctx_proj_b_});
  }
  ps.insert(ps.end(), {&att_ws_, &att_wh_, &att_v_, &dec_.w, &dec_.u, &dec_.b, &head_w_, &head_b_});
  if (cfg_.joint) ps.insert(ps.end(), {&label_w_, &label_b_});
  return ps;
}

template <typename T>
std::vector<const nn::Parameter<T>*> CatsModel<T>::parameters() const {
  auto ps = const_cast<CatsModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <typename T>
nn::Parameter<T>* CatsModel<T>::find_parameter(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

template <typename T>
nn::Var CatsModel<T>::dropout(nn::Graph<T>& g, nn::Var x) {
  if (!dropout_rng_ || cfg_.dropout <= 0.0) return x;
  const double keep = 1.0 - cfg_.dropout;
  std::bernoulli_distribution d(keep);
  std::vector<T> mask(g.rows(x) * g.cols(x));
  for (T& m : mask) m = d(*dropout_rng_) ? static_cast<T>(1.0 / keep) : T(0);
  return g.mul(x, g.constant(g.rows(x), g.cols(x), std::move(mask)));
}

template <typename T>
typename CatsModel<T>::Encoded CatsModel<T>::encode(nn::Graph<T>& g, std::span<const int> surface, nn::Var ctx) {
  if (surface.empty()) throw std::invalid_argument("encode: empty surface");
  if (g.rows(ctx) != 1 || g.cols(ctx) != cfg_.d_ctx) {
    throw nn::ShapeError("encode: context vector is " + nn::detail::shape_str(g.rows(ctx), g.cols(ctx)) +
                         ", model expects 1x" + std::to_string(cfg_.d_ctx));
  }
  Encoded enc;
  if (!cfg_.char_encoder_enabled) {
    enc.states = g.add(g.matmul(ctx, g.param(ctx_proj_w_)), g.param(ctx_proj_b_));
  } else {
    const std::size_t n = surface.size();
    nn::Var emb = g.embedding_lookup(char_embed_, surface);
    std::vector<nn::Var> xs(n);
    for (std::size_t j = 0; j < n; ++j) xs[j] = dropout(g, g.concat({g.row(emb, j), ctx}, 1));
    std::vector<nn::Var> hf(n), hb(n);
    nn::Var h = g.zeros(1, cfg_.d_enc), c = h;
    for (std::size_t j = 0; j < n; ++j) {
      std::tie(h, c) = nn::lstm_cell(g, xs[j], h, c, enc_fwd_);
      hf[j] = h;
    }
    h = g.zeros(1, cfg_.d_enc);
    c = h;
    for (std::size_t j = n; j-- > 0;) {
      std::tie(h, c) = nn::lstm_cell(g, xs[j], h, c, enc_bwd_);
      hb[j] = h;
    }
    std::vector<nn::Var> rows(n);
    for (std::size_t j = 0; j < n; ++j) rows[j] = g.concat({hf[j], hb[j]}, 1);
    enc.states = g.concat(std::span<const nn::Var>(rows), 0);
  }
  enc.projected = g.matmul(enc.states, g.param(att_wh_));
  return enc;
}

template <typename T>
typename CatsModel<T>::Attention CatsModel<T>::attend(nn::Graph<T>& g, nn::Var query, const Encoded& enc) {
  nn::Var q = g.matmul(query, g.param(att_ws_));
  nn::Var act = g.tanh(g.add_row(enc.projected, q));
  nn::Var scores = g.reshape(g.matmul(act, g.param(att_v_)), 1, g.rows(enc.states));
  Attention a;
  a.weights = g.softmax(scores);
  a.context = g.matmul(a.weights, enc.states);
  return a;
}

template <typename T>
typename CatsModel<T>::DecoderState CatsModel<T>::initial_state(nn::Graph<T>& g) {
  nn::Var z = g.zeros(1, cfg_.d_dec);
  return {z, z};
}

template <typename T>
typename CatsModel<T>::Step CatsModel<T>::step(nn::Graph<T>& g, const Encoded& enc, const DecoderState& prev,
                                               int prev_symbol) {
  Step s;
  const int sym[1] = {prev_symbol};
  nn::Var emb = g.embedding_lookup(char_embed_, sym);
  s.attention = attend(g, prev.h, enc);
  nn::Var x = g.concat({emb, s.attention.context}, 1);
  auto [h, c] = nn::lstm_cell(g, x, prev.h, prev.c, dec_);
  s.state = {h, c};
  s.logits = g.add(g.matmul(dropout(g, h), g.param(head_w_)), g.param(head_b_));
  return s;
}

template <typename T>
nn::Var CatsModel<T>::label_logits(nn::Graph<T>& g, nn::Var decoder_h, nn::Var ctx, std::optional<nn::Var> sent) {
  if (!cfg_.joint) throw std::logic_error("label_logits: model has no label head");
  std::vector<nn::Var> parts{decoder_h, ctx};
  if (cfg_.use_sentence_vector) {
    if (!sent) throw std::invalid_argument("label_logits: model needs a sentence vector");
    parts.push_back(*sent);
  }
  nn::Var in = g.concat(std::span<const nn::Var>(parts), 1);
  return g.add(g.matmul(in, g.param(label_w_)), g.param(label_b_));
}

template <typename T>
typename CatsModel<T>::LossTerms CatsModel<T>::loss_terms(nn::Graph<T>& g, std::span<const int> surface,
                                                          std::span<const int> target,
                                                          std::span<const int> segment_labels, nn::Var ctx,
                                                          std::optional<nn::Var> sent) {
  LossTerms out;
  if (cfg_.joint) {
    std::size_t closers = 0;
    for (int t : target)
      if (t == CharVocab::kSpace || t == CharVocab::kEot) ++closers;
    if (closers != segment_labels.size()) {
      throw std::invalid_argument("loss_terms: " + std::to_string(segment_labels.size()) + " labels for " +
                                  std::to_string(closers) + " segments");
    }
  }
  Encoded enc = encode(g, surface, ctx);
  DecoderState state = initial_state(g);
  int prev = CharVocab::kBos;
  std::size_t label_pos = 0;
  for (int gold : target) {
    if (gold == CharVocab::kPad) continue;
    Step s = step(g, enc, state, prev);
    out.logits.push_back(s.logits);
    out.seg.push_back(g.cross_entropy(s.logits, gold));
    if (cfg_.joint && (gold == CharVocab::kSpace || gold == CharVocab::kEot)) {
      nn::Var ll = label_logits(g, s.state.h, ctx, sent);
      out.tag.push_back(g.cross_entropy(ll, segment_labels[label_pos++]));
    }
    state = s.state;
    prev = gold;
  }
  return out;
}

template <typename T>
std::vector<int> CatsModel<T>::label_ids(const TokenEntry& entry) const {
  std::vector<int> ids;
  for (const auto& l : entry.labels) {
    auto id = labels_.id_of(l);
    if (!id) throw std::invalid_argument("label '" + l + "' of token '" + entry.surface + "' is not in the label vocabulary");
    ids.push_back(*id);
  }
  return ids;
}

template <typename T>
typename CatsModel<T>::ForwardResult CatsModel<T>::forward_teacher_forced(nn::Graph<T>& g, const TokenEntry& entry,
                                                                          nn::Var ctx, std::optional<nn::Var> sent) {
  if (cfg_.joint && !entry.has_labels()) {
    throw std::invalid_argument("forward_teacher_forced: joint model but token '" + entry.surface + "' has no labels");
  }
  const auto surface = chars_.encode(entry.surface);
  const auto target = target_string(entry, chars_);
  const auto labels = cfg_.joint ? label_ids(entry) : std::vector<int>{};
  LossTerms terms = loss_terms(g, surface, target, labels, ctx, sent);
  ForwardResult r;
  r.logits = terms.logits;
  r.loss_seg = g.scale(g.add_n(terms.seg), static_cast<T>(1.0 / static_cast<double>(terms.seg.size())));
  if (cfg_.joint) {
    r.loss_tag = g.scale(g.add_n(terms.tag), static_cast<T>(1.0 / static_cast<double>(terms.tag.size())));
  }
  return r;
}

template <typename T>
DecodeResult CatsModel<T>::finish(const std::vector<int>& symbols, double log_prob, bool truncated) const {
  DecodeResult r;
  r.symbols = symbols;
  r.log_prob = log_prob;
  r.truncated = truncated;
  r.segments = decode_symbols(symbols, chars_).segments;
  r.empty_output = r.segments.empty();
  return r;
}

namespace {

// Reattaches per-closer labels to the segments that survive empty-segment
// removal. closer_labels[k] belongs to the k-th SPACE/EOT in symbols; a
// trailing label (truncated output) belongs to the unterminated segment.
std::vector<std::string> attach_labels(const std::vector<int>& symbols, const std::vector<std::string>& closer_labels) {
  std::vector<std::string> out;
  std::size_t k = 0;
  bool open = false;
  for (int s : symbols) {
    if (s == CharVocab::kSpace || s == CharVocab::kEot) {
      if (open && k < closer_labels.size()) out.push_back(closer_labels[k]);
      ++k;
      open = false;
      if (s == CharVocab::kEot) return out;
    } else {
      open = true;
    }
  }
  if (open && k < closer_labels.size()) out.push_back(closer_labels[k]);
  return out;
}

}  // namespace

template <typename T>
DecodeResult CatsModel<T>::greedy_decode(const std::string& surface, std::span<const T> ctx, std::span<const T> sent) {
  nn::Graph<T> g(false);
  const auto ids = chars_.encode(surface);
  nn::Var c = g.constant(1, ctx.size(), std::vector<T>(ctx.begin(), ctx.end()));
  std::optional<nn::Var> sv;
  if (cfg_.use_sentence_vector) sv = g.constant(1, sent.size(), std::vector<T>(sent.begin(), sent.end()));
  Encoded enc = encode(g, ids, c);
  DecoderState state = initial_state(g);
  int prev = CharVocab::kBos;
  std::vector<int> symbols;
  std::vector<std::string> closer_labels;
  double total = 0;
  bool done = false;
  const std::size_t cap = cfg_.max_decode_steps(ids.size());
  for (std::size_t t = 0; t < cap; ++t) {
    Step s = step(g, enc, state, prev);
    const auto lp = log_softmax(to_double<T>(g.value(s.logits)));
    const int sym = static_cast<int>(argmax(lp));
    total += lp[static_cast<std::size_t>(sym)];
    symbols.push_back(sym);
    if (cfg_.joint && (sym == CharVocab::kSpace || sym == CharVocab::kEot)) {
      const auto ll = to_double<T>(g.value(label_logits(g, s.state.h, c, sv)));
      closer_labels.push_back(labels_.label_of(static_cast<int>(argmax(ll))));
    }
    state = s.state;
    prev = sym;
    if (sym == CharVocab::kEot) {
      done = true;
      break;
    }
  }
  if (!done && cfg_.joint) {
    const auto ll = to_double<T>(g.value(label_logits(g, state.h, c, sv)));
    closer_labels.push_back(labels_.label_of(static_cast<int>(argmax(ll))));
  }
  DecodeResult r = finish(symbols, total, !done);
  if (cfg_.joint) r.labels = attach_labels(symbols, closer_labels);
  return r;
}

template <typename T>
std::vector<std::string> CatsModel<T>::label_symbols(const std::string& surface, std::span<const T> ctx,
                                                     std::span<const T> sent, const std::vector<int>& symbols) {
  if (!cfg_.joint) return {};
  nn::Graph<T> g(false);
  const auto ids = chars_.encode(surface);
  nn::Var c = g.constant(1, ctx.size(), std::vector<T>(ctx.begin(), ctx.end()));
  std::optional<nn::Var> sv;
  if (cfg_.use_sentence_vector) sv = g.constant(1, sent.size(), std::vector<T>(sent.begin(), sent.end()));
  Encoded enc = encode(g, ids, c);
  DecoderState state = initial_state(g);
  int prev = CharVocab::kBos;
  std::vector<std::string> closer_labels;
  bool done = false;
  for (int sym : symbols) {
    Step s = step(g, enc, state, prev);
    if (sym == CharVocab::kSpace || sym == CharVocab::kEot) {
      const auto ll = to_double<T>(g.value(label_logits(g, s.state.h, c, sv)));
      closer_labels.push_back(labels_.label_of(static_cast<int>(argmax(ll))));
    }
    state = s.state;
    prev = sym;
    if (sym == CharVocab::kEot) {
      done = true;
      break;
    }
  }
  if (!done) {
    const auto ll = to_double<T>(g.value(label_logits(g, state.h, c, sv)));
    closer_labels.push_back(labels_.label_of(static_cast<int>(argmax(ll))));
  }
  return attach_labels(symbols, closer_labels);
}

template <typename T>
DecodeResult CatsModel<T>::beam_decode(const std::string& surface, std::span<const T> ctx, std::size_t width,
                                       std::span<const T> sent) {
  if (width == 0) throw std::invalid_argument("beam_decode: width must be at least 1");
  nn::Graph<T> g(false);
  const auto ids = chars_.encode(surface);
  nn::Var c = g.constant(1, ctx.size(), std::vector<T>(ctx.begin(), ctx.end()));
  Encoded enc = encode(g, ids, c);

  struct State {
    DecoderState dec;
    nn::Var logits;
  };
  struct Scorer {
    CatsModel& model;
    nn::Graph<T>& g;
    const Encoded& enc;
    std::vector<double> log_probs(const State& s) { return log_softmax(to_double<T>(g.value(s.logits))); }
    State advance(const State& s, int symbol) {
      Step st = model.step(g, enc, s.dec, symbol);
      return {st.state, st.logits};
    }
  } scorer{*this, g, enc};

  Step first = step(g, enc, initial_state(g), CharVocab::kBos);
  const BeamOutcome best =
      beam_search(State{first.state, first.logits}, scorer, width, cfg_.max_decode_steps(ids.size()), CharVocab::kEot);
  DecodeResult r = finish(best.symbols, best.log_prob, !best.finished);
  if (cfg_.joint) r.labels = label_symbols(surface, ctx, sent, best.symbols);
  return r;
}

template <typename To, typename From>
void copy_parameters(CatsModel<To>& to, const CatsModel<From>& from) {
  auto dst = to.parameters();
  auto src = from.parameters();
  if (dst.size() != src.size()) throw std::invalid_argument("copy_parameters: parameter count differs");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->size() != src[i]->size()) {
      throw std::invalid_argument("copy_parameters: mismatch at " + src[i]->name);
    }
    for (std::size_t k = 0; k < src[i]->size(); ++k) dst[i]->value[k] = static_cast<To>(src[i]->value[k]);
  }
}

template class CatsModel<float>;
template class CatsModel<double>;
template void copy_parameters<double, float>(CatsModel<double>&, const CatsModel<float>&);
template void copy_parameters<float, double>(CatsModel<float>&, const CatsModel<double>&);
template void copy_parameters<float, float>(CatsModel<float>&, const CatsModel<float>&);

}  // namespace cats
