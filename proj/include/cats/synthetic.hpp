#pragma once

// Seeded generator of a toy agglutinative language whose "ba"+stem tokens
// are segmented only when the trigger word "gi" occurs earlier in the
// sentence. Stems are drawn over the letters a-j; the fixed morphemes
// ("ba", "ko", "ta", "gi") are not stems.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cats/corpus.hpp"

namespace cats {

struct SynthConfig {
  std::size_t n_sentences = 100;
  std::uint64_t seed = 1;
  // The lexicon is drawn from its own seed so that corpora generated with
  // different sentence seeds share stems.
  std::uint64_t lexicon_seed = 2021;
  std::size_t n_stems = 24;
  std::string id_prefix = "syn";
  Split split = Split::train;
};

struct ManifestRow {
  std::string sent_id;
  std::size_t token_index = 0;
  bool ambiguous = false;
  bool gold_split = false;
  bool operator==(const ManifestRow&) const = default;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<ManifestRow> manifest;
};

inline constexpr const char* kTriggerWord = "gi";
inline constexpr const char* kAmbiguousPrefix = "ba";
inline constexpr const char* kPrefix = "ko";
inline constexpr const char* kSuffix = "ta";

struct Stem {
  std::string form;
  std::string label;  // NOUN or VERB
};

std::vector<Stem> synthetic_lexicon(std::uint64_t lexicon_seed, std::size_t n_stems);

// Gold analysis of a sentence of surface tokens under the generator's rules.
// Stems missing from the lexicon are labelled NOUN.
Sentence analyze_synthetic(const std::vector<std::string>& surfaces, const std::vector<Stem>& lexicon,
                           const std::string& sent_id = "s1");

bool is_ambiguous_token(const std::string& surface);

SyntheticCorpus generate_synthetic(const SynthConfig& cfg);

void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(std::istream& in);

}  // namespace cats
