#include "cats/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cats/log.hpp"

namespace cats {

std::string to_string(Task task) {
  switch (task) {
    case Task::seg: return "seg";
    case Task::pos: return "pos";
    case Task::dep: return "dep";
    case Task::ner: return "ner";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "seg") return Task::seg;
  if (s == "pos") return Task::pos;
  if (s == "dep") return Task::dep;
  if (s == "ner") return Task::ner;
  throw std::invalid_argument("unknown task '" + s + "' (expected seg|pos|dep|ner)");
}

EvalReport make_report(Task task, std::size_t matched, std::size_t predicted, std::size_t gold) {
  EvalReport r;
  r.task = task;
  r.matched = matched;
  r.predicted = predicted;
  r.gold = gold;
  r.precision = predicted == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(predicted);
  r.recall = gold == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(gold);
  r.f1 = (r.precision + r.recall) == 0 ? 0.0 : 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::size_t multiset_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& x : a) ++counts[x];
  std::size_t n = 0;
  for (const auto& y : b) {
    auto it = counts.find(y);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++n;
    }
  }
  return n;
}

namespace {

void check_aligned(const Corpus& pred, const Corpus& gold) {
  if (pred.sentences.size() != gold.sentences.size()) {
    throw EvalError("prediction has " + std::to_string(pred.sentences.size()) + " sentences, gold has " +
                    std::to_string(gold.sentences.size()));
  }
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& p = pred.sentences[i];
    const auto& g = gold.sentences[i];
    if (p.sent_id != g.sent_id) {
      throw EvalError("sentence " + std::to_string(i + 1) + ": prediction '" + p.sent_id + "' vs gold '" +
                      g.sent_id + "'");
    }
    if (p.tokens.size() != g.tokens.size()) {
      throw EvalError("sentence " + g.sent_id + ": prediction has " + std::to_string(p.tokens.size()) +
                      " tokens, gold has " + std::to_string(g.tokens.size()));
    }
  }
}

// Encodes (segment, label) as a single string key; \x1f never occurs in CoNLL-U fields.
std::vector<std::string> labeled_items(const TokenEntry& t, const std::string& sent_id, const char* side) {
  if (!t.has_labels()) {
    throw EvalError(std::string(side) + " sentence " + sent_id + ": token '" + t.surface + "' has no labels");
  }
  std::vector<std::string> out;
  for (std::size_t k = 0; k < t.segments.size(); ++k) out.push_back(t.segments[k] + '\x1f' + t.labels[k]);
  return out;
}

}  // namespace

EvalReport seg_prf(const Corpus& pred, const Corpus& gold) {
  check_aligned(pred, gold);
  std::size_t matched = 0, predicted = 0, gold_n = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& ps = pred.sentences[i];
    const auto& gs = gold.sentences[i];
    for (std::size_t k = 0; k < gs.tokens.size(); ++k) {
      matched += multiset_overlap(ps.tokens[k].segments, gs.tokens[k].segments);
      predicted += ps.tokens[k].segments.size();
      gold_n += gs.tokens[k].segments.size();
    }
  }
  return make_report(Task::seg, matched, predicted, gold_n);
}

EvalReport labeled_seg_f1(const Corpus& pred, const Corpus& gold) {
  check_aligned(pred, gold);
  std::size_t matched = 0, predicted = 0, gold_n = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& ps = pred.sentences[i];
    const auto& gs = gold.sentences[i];
    for (std::size_t k = 0; k < gs.tokens.size(); ++k) {
      const auto p = labeled_items(ps.tokens[k], ps.sent_id, "predicted");
      const auto g = labeled_items(gs.tokens[k], gs.sent_id, "gold");
      matched += multiset_overlap(p, g);
      predicted += p.size();
      gold_n += g.size();
    }
  }
  return make_report(Task::pos, matched, predicted, gold_n);
}

namespace {

struct Triplet {
  std::string form, head, relation;
  bool operator==(const Triplet&) const = default;
};

std::vector<Triplet> triplets(const Sentence& s, const char* side) {
  const auto words = s.words();
  if (s.dep_annotations.size() != words.size() || words.empty()) {
    throw EvalError(std::string(side) + " sentence " + s.sent_id + " has no dependency annotations");
  }
  std::vector<Triplet> out;
  for (const auto& d : s.dep_annotations) {
    out.push_back({d.form, d.head == 0 ? std::string("ROOT") : s.dep_annotations[d.head - 1].form, d.relation});
  }
  return out;
}

}  // namespace

EvalReport aligned_fhr_f1(const Corpus& pred, const Corpus& gold) {
  if (pred.sentences.size() != gold.sentences.size()) {
    throw EvalError("prediction has " + std::to_string(pred.sentences.size()) + " sentences, gold has " +
                    std::to_string(gold.sentences.size()));
  }
  std::size_t matched = 0, predicted = 0, gold_n = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& ps = pred.sentences[i];
    const auto& gs = gold.sentences[i];
    if (ps.sent_id != gs.sent_id) {
      throw EvalError("sentence " + std::to_string(i + 1) + ": prediction '" + ps.sent_id + "' vs gold '" +
                      gs.sent_id + "'");
    }
    const auto pt = triplets(ps, "predicted");
    const auto gt = triplets(gs, "gold");
    const auto ops = align_sequences(ps.words(), gs.words());
    for (const auto& op : ops) {
      if ((op.kind == EditKind::match || op.kind == EditKind::substitute) && pt[op.pred_index] == gt[op.gold_index]) {
        ++matched;
      }
    }
    predicted += pt.size();
    gold_n += gt.size();
  }
  return make_report(Task::dep, matched, predicted, gold_n);
}

namespace {

std::vector<std::string> entity_spans(const Sentence& s, const char* side) {
  std::vector<std::string> spans;
  std::string surface, type;
  bool open = false;
  auto close = [&] {
    if (open) spans.push_back(surface + '\x1f' + type);
    open = false;
    surface.clear();
    type.clear();
  };
  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& t : s.tokens) {
    if (!t.has_labels()) {
      throw EvalError(std::string(side) + " sentence " + s.sent_id + ": token '" + t.surface + "' has no labels");
    }
    for (std::size_t k = 0; k < t.segments.size(); ++k) items.emplace_back(t.segments[k], t.labels[k]);
  }
  for (const auto& [form, tag] : items) {
    if (tag == "O") {
      close();
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || std::string("BIES").find(tag[0]) == std::string::npos) {
      throw EvalError(std::string(side) + " sentence " + s.sent_id + ": unknown BIOSE tag '" + tag + "'");
    }
    char kind = tag[0];
    const std::string ty = tag.substr(2);
    if ((kind == 'I' || kind == 'E') && (!open || type != ty)) {
      log_warning(std::string(side) + " sentence " + s.sent_id + ": '" + tag + "' without an open " + ty +
                  " span; treated as B-" + ty);
      kind = 'B';
    }
    switch (kind) {
      case 'B':
        close();
        open = true;
        surface = form;
        type = ty;
        break;
      case 'I':
        surface += form;
        break;
      case 'E':
        surface += form;
        close();
        break;
      case 'S':
        close();
        spans.push_back(form + '\x1f' + ty);
        break;
    }
  }
  close();
  return spans;
}

}  // namespace

EvalReport ner_span_f1(const Corpus& pred, const Corpus& gold) {
  check_aligned(pred, gold);
  std::size_t matched = 0, predicted = 0, gold_n = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto p = entity_spans(pred.sentences[i], "predicted");
    const auto g = entity_spans(gold.sentences[i], "gold");
    matched += multiset_overlap(p, g);
    predicted += p.size();
    gold_n += g.size();
  }
  return make_report(Task::ner, matched, predicted, gold_n);
}

EvalReport evaluate(Task task, const Corpus& pred, const Corpus& gold) {
  switch (task) {
    case Task::seg: return seg_prf(pred, gold);
    case Task::pos: return labeled_seg_f1(pred, gold);
    case Task::dep: return aligned_fhr_f1(pred, gold);
    case Task::ner: return ner_span_f1(pred, gold);
  }
  throw EvalError("unknown task");
}

std::string format_report(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "task %s\nP %.4f\nR %.4f\nF1 %.4f\nmatched %zu\npredicted %zu\ngold %zu\n",
                to_string(r.task).c_str(), r.precision, r.recall, r.f1, r.matched, r.predicted, r.gold);
  return buf;
}

std::string report_key_values(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "task=%s precision=%.6f recall=%.6f f1=%.6f matched=%zu predicted=%zu gold=%zu\n",
                to_string(r.task).c_str(), r.precision, r.recall, r.f1, r.matched, r.predicted, r.gold);
  return buf;
}

ErrorBreakdown& ErrorBreakdown::operator+=(const ErrorBreakdown& o) {
  over_seg_prefix += o.over_seg_prefix;
  under_seg_prefix += o.under_seg_prefix;
  over_seg_suffix += o.over_seg_suffix;
  under_seg_suffix += o.under_seg_suffix;
  model_artifacts += o.model_artifacts;
  return *this;
}

ErrorBreakdown classify_token_errors(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  ErrorBreakdown b;
  if (pred == gold) return b;

  std::u32string pc, gc;
  std::vector<std::size_t> pred_bounds, gold_bounds;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (k > 0) pred_bounds.push_back(pc.size());
    pc += utf8_decode(pred[k]);
  }
  std::size_t stem_start = 0, stem_len = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (k > 0) gold_bounds.push_back(gc.size());
    const auto seg = utf8_decode(gold[k]);
    if (seg.size() > stem_len) {
      stem_len = seg.size();
      stem_start = gc.size();
    }
    gc += seg;
  }

  const auto ops = align_sequences(pc, gc);
  bool artifact = false;
  // Gold offset at which each pred character is consumed.
  std::vector<std::size_t> gold_at_pred(pc.size() + 1, gc.size());
  std::size_t gpos = 0;
  for (const auto& op : ops) {
    if (op.kind != EditKind::match) artifact = true;
    if (op.kind != EditKind::insertion) gold_at_pred[op.pred_index] = gpos;
    if (op.kind != EditKind::deletion) ++gpos;
  }
  if (artifact) b.model_artifacts = 1;

  std::vector<std::size_t> mapped;
  for (std::size_t pb : pred_bounds) mapped.push_back(gold_at_pred[pb]);
  std::sort(mapped.begin(), mapped.end());
  std::vector<std::size_t> gb = gold_bounds;
  std::sort(gb.begin(), gb.end());

  std::vector<std::size_t> over, under;
  std::set_difference(mapped.begin(), mapped.end(), gb.begin(), gb.end(), std::back_inserter(over));
  std::set_difference(gb.begin(), gb.end(), mapped.begin(), mapped.end(), std::back_inserter(under));

  // Offsets strictly before the stem midpoint count as prefix boundaries.
  const auto is_prefix = [&](std::size_t off) { return 2 * off < 2 * stem_start + stem_len; };
  for (std::size_t o : over) (is_prefix(o) ? b.over_seg_prefix : b.over_seg_suffix) += 1;
  for (std::size_t u : under) (is_prefix(u) ? b.under_seg_prefix : b.under_seg_suffix) += 1;
  return b;
}

ErrorBreakdown analyze_errors(const Corpus& pred, const Corpus& gold, std::size_t sample_size, std::uint64_t seed) {
  check_aligned(pred, gold);
  std::vector<std::size_t> idx(gold.sentences.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (sample_size < idx.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(sample_size);
    std::sort(idx.begin(), idx.end());
  }
  ErrorBreakdown total;
  for (std::size_t i : idx) {
    const auto& ps = pred.sentences[i];
    const auto& gs = gold.sentences[i];
    for (std::size_t k = 0; k < gs.tokens.size(); ++k) {
      total += classify_token_errors(ps.tokens[k].segments, gs.tokens[k].segments);
    }
  }
  return total;
}

std::string format_breakdown(const ErrorBreakdown& b) {
  const std::size_t total = b.total();
  auto line = [&](const char* name, std::size_t n) {
    const double pct = total == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(total);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s\t%.1f%% (%zu)\n", name, pct, n);
    return std::string(buf);
  };
  std::string out;
  out += line("Over-seg. prefix", b.over_seg_prefix);
  out += line("Under-seg. prefix", b.under_seg_prefix);
  out += line("Over-seg. suffix", b.over_seg_suffix);
  out += line("Under-seg. suffix", b.under_seg_suffix);
  out += line("Model artifacts", b.model_artifacts);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "Total errors\t%.1f%% (%zu)\n", total == 0 ? 0.0 : 100.0, total);
  out += buf;
  return out;
}

}  // namespace cats
