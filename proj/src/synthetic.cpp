#include "cats/synthetic.hpp"

#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cats {
namespace {

constexpr const char* kAmbiguousLabel = "PROPN";

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

bool starts_with(const std::string& s, const std::string& p) {
  return s.size() > p.size() && s.compare(0, p.size(), p) == 0;
}
bool ends_with(const std::string& s, const std::string& p) {
  return s.size() > p.size() && s.compare(s.size() - p.size(), p.size(), p) == 0;
}

}  // namespace

std::vector<Stem> synthetic_lexicon(std::uint64_t lexicon_seed, std::size_t n_stems) {
  std::mt19937_64 rng(lexicon_seed);
  std::set<std::string> seen;
  std::vector<Stem> out;
  while (out.size() < n_stems) {
    std::string s;
    const std::size_t len = pick(rng, 3, 4);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + pick(rng, 0, 9)));
    if (s.rfind(kAmbiguousPrefix, 0) == 0 || s.rfind(kTriggerWord, 0) == 0) continue;
    if (!seen.insert(s).second) continue;
    out.push_back({s, out.size() % 2 == 0 ? "NOUN" : "VERB"});
  }
  return out;
}

bool is_ambiguous_token(const std::string& surface) { return starts_with(surface, kAmbiguousPrefix); }

Sentence analyze_synthetic(const std::vector<std::string>& surfaces, const std::vector<Stem>& lexicon,
                           const std::string& sent_id) {
  std::unordered_map<std::string, std::string> cls;
  for (const auto& s : lexicon) cls.emplace(s.form, s.label);
  auto label_of = [&](const std::string& stem) {
    auto it = cls.find(stem);
    return it == cls.end() ? std::string("NOUN") : it->second;
  };

  Sentence s;
  s.sent_id = sent_id;
  bool trigger_seen = false;
  std::size_t word = 1;
  for (const auto& surf : surfaces) {
    TokenEntry t;
    t.surface = surf;
    if (surf == kTriggerWord) {
      t.segments = {surf};
      t.labels = {"PART"};
    } else if (is_ambiguous_token(surf)) {
      if (trigger_seen) {
        t.segments = {kAmbiguousPrefix, surf.substr(2)};
        t.labels = {"ADP", label_of(surf.substr(2))};
      } else {
        t.segments = {surf};
        t.labels = {kAmbiguousLabel};
      }
    } else if (starts_with(surf, kPrefix)) {
      t.segments = {kPrefix, surf.substr(2)};
      t.labels = {"CCONJ", label_of(surf.substr(2))};
    } else if (ends_with(surf, kSuffix)) {
      t.segments = {surf.substr(0, surf.size() - 2), kSuffix};
      t.labels = {label_of(surf.substr(0, surf.size() - 2)), "PRON"};
    } else {
      t.segments = {surf};
      t.labels = {label_of(surf)};
    }
    t.char_span = {word, word + t.segments.size() - 1};
    word += t.segments.size();
    if (surf == kTriggerWord) trigger_seen = true;
    s.tokens.push_back(std::move(t));
  }
  return s;
}

SyntheticCorpus generate_synthetic(const SynthConfig& cfg) {
  const auto lexicon = synthetic_lexicon(cfg.lexicon_seed, cfg.n_stems);
  std::mt19937_64 rng(cfg.seed);
  SyntheticCorpus out;
  out.corpus.split_tag = cfg.split;

  auto stem = [&] { return lexicon[pick(rng, 0, lexicon.size() - 1)].form; };
  auto filler = [&] {
    const std::size_t kind = pick(rng, 0, 3);
    if (kind == 2) return std::string(kPrefix) + stem();
    if (kind == 3) return stem() + kSuffix;
    return stem();
  };

  for (std::size_t n = 0; n < cfg.n_sentences; ++n) {
    const std::size_t len = pick(rng, 3, 6);
    std::vector<std::string> words(len);
    std::size_t amb = len, trigger = len;
    if (coin(rng, 0.8)) {
      if (coin(rng, 0.5)) {
        amb = pick(rng, 1, len - 1);
        trigger = pick(rng, 0, amb - 1);
      } else {
        amb = pick(rng, 0, len - 1);
        if (amb + 1 < len && coin(rng, 0.5)) trigger = pick(rng, amb + 1, len - 1);
      }
    } else if (coin(rng, 0.5)) {
      trigger = pick(rng, 0, len - 1);
    }
    for (std::size_t i = 0; i < len; ++i) {
      if (i == amb) {
        words[i] = std::string(kAmbiguousPrefix) + stem();
      } else if (i == trigger) {
        words[i] = kTriggerWord;
      } else {
        words[i] = filler();
      }
    }
    const std::string id = cfg.id_prefix + "-" + std::to_string(n + 1);
    Sentence s = analyze_synthetic(words, lexicon, id);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out.manifest.push_back(
          {id, i, is_ambiguous_token(s.tokens[i].surface), s.tokens[i].segments.size() > 1});
    }
    out.corpus.sentences.push_back(std::move(s));
  }
  return out;
}

void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows) {
  for (const auto& r : rows) {
    out << r.sent_id << '\t' << r.token_index << '\t' << (r.ambiguous ? 1 : 0) << '\t'
        << (r.gold_split ? 1 : 0) << '\n';
  }
}

std::vector<ManifestRow> read_manifest(std::istream& in) {
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestRow r;
    int amb = 0, split = 0;
    if (!(std::getline(ls, r.sent_id, '\t') && ls >> r.token_index >> amb >> split)) {
      throw ParseError(line_no, "malformed manifest row");
    }
    r.ambiguous = amb != 0;
    r.gold_split = split != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace cats
