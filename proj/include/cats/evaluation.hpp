#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cats/corpus.hpp"

namespace cats {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { seg, pos, dep, ner };
std::string to_string(Task task);
Task parse_task(const std::string& s);

struct EvalReport {
  Task task = Task::seg;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

EvalReport make_report(Task task, std::size_t matched, std::size_t predicted, std::size_t gold);

// Size of the multiset intersection of two string bags.
std::size_t multiset_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Segment multisets per token, micro-averaged over the corpus.
EvalReport seg_prf(const Corpus& pred, const Corpus& gold);
// As seg_prf over (segment, label) pairs.
EvalReport labeled_seg_f1(const Corpus& pred, const Corpus& gold);
// (form, head form | ROOT, relation) triplets over edit-distance aligned words.
EvalReport aligned_fhr_f1(const Corpus& pred, const Corpus& gold);
// (concatenated span surface, entity type) from BIOSE tags over segments.
EvalReport ner_span_f1(const Corpus& pred, const Corpus& gold);

EvalReport evaluate(Task task, const Corpus& pred, const Corpus& gold);

// Human-readable ("F1 1.0000") and flat key=value renderings.
std::string format_report(const EvalReport& r);
std::string report_key_values(const EvalReport& r);

enum class EditKind { match, substitute, deletion, insertion };

// deletion consumes a pred element only, insertion a gold element only.
struct EditOp {
  EditKind kind;
  std::size_t pred_index;
  std::size_t gold_index;
};

// Minimum edit distance alignment (match 0, substitute 1, indel 1). Among
// optimal alignments, at each position a match is preferred, then a
// substitution, then a deletion, then an insertion; indels therefore land
// as far left as possible.
template <typename Seq>
std::vector<EditOp> align_sequences(const Seq& pred, const Seq& gold) {
  const std::size_t n = pred.size(), m = gold.size();
  std::vector<std::size_t> d((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t j = m + 1; j-- > 0;) {
      if (i == n) {
        at(i, j) = m - j;
      } else if (j == m) {
        at(i, j) = n - i;
      } else {
        const std::size_t diag = at(i + 1, j + 1) + (pred[i] == gold[j] ? 0 : 1);
        at(i, j) = std::min({diag, at(i + 1, j) + 1, at(i, j + 1) + 1});
      }
    }
  }
  std::vector<EditOp> ops;
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && pred[i] == gold[j] && at(i, j) == at(i + 1, j + 1)) {
      ops.push_back({EditKind::match, i++, j++});
    } else if (i < n && j < m && at(i, j) == at(i + 1, j + 1) + 1) {
      ops.push_back({EditKind::substitute, i++, j++});
    } else if (i < n && at(i, j) == at(i + 1, j) + 1) {
      ops.push_back({EditKind::deletion, i++, j});
    } else {
      ops.push_back({EditKind::insertion, i, j++});
    }
  }
  return ops;
}

struct ErrorBreakdown {
  std::size_t over_seg_prefix = 0;
  std::size_t under_seg_prefix = 0;
  std::size_t over_seg_suffix = 0;
  std::size_t under_seg_suffix = 0;
  std::size_t model_artifacts = 0;

  std::size_t total() const {
    return over_seg_prefix + under_seg_prefix + over_seg_suffix + under_seg_suffix + model_artifacts;
  }
  ErrorBreakdown& operator+=(const ErrorBreakdown& o);
  bool operator==(const ErrorBreakdown&) const = default;
};

// Error events of a single token; all zero when pred == gold.
ErrorBreakdown classify_token_errors(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Classifies every mismatching token of a seeded sample of sentences
// (all sentences when sample_size >= corpus size).
ErrorBreakdown analyze_errors(const Corpus& pred, const Corpus& gold, std::size_t sample_size = 100,
                              std::uint64_t seed = 1);

// One "<category>\t<pct>% (<count>)" line per category plus the total.
std::string format_breakdown(const ErrorBreakdown& b);

}  // namespace cats
