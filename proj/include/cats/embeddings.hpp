#pragma once

// Per-token context vectors in four flavours: all-zero, static lookup,
// a trainable sentence-level BiLSTM over frozen static vectors, and
// externally exported contextual vectors keyed by sentence position.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cats/corpus.hpp"
#include "cats/graph.hpp"
#include "cats/optim.hpp"

namespace cats {

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal that reads back to the same float.
std::string format_float(float v);
float parse_float(std::string_view s);

class StaticTable {
 public:
  StaticTable() = default;
  explicit StaticTable(std::size_t dim) : dim_(dim) {}

  // Later insertions of an existing key overwrite it.
  void set(const std::string& key, std::span<const float> row);
  // Recomputes the UNK row as the elementwise mean of all rows.
  void finalize();

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  std::span<const float> row(const std::string& key) const;  // UNK row when absent
  std::span<const float> unk() const { return unk_; }
  const std::vector<std::string>& keys() const { return keys_; }
  std::span<const float> data() const { return rows_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> rows_;
  std::vector<float> unk_;
  std::unordered_map<std::string, std::size_t> index_;
};

StaticTable read_static_table(std::istream& in);
StaticTable load_static_table(const std::string& path);
void write_static_table(std::ostream& out, const StaticTable& table);

// Deterministic random vectors for every surface form in a corpus. Used as
// the frozen input of the rnn contextualizer when no pretrained table is given.
StaticTable random_static_table(const Corpus& corpus, std::size_t dim, std::uint64_t seed);

class VectorStore {
 public:
  static constexpr long kSentenceIndex = -1;

  VectorStore() = default;
  explicit VectorStore(std::size_t dim) : dim_(dim) {}

  void put(const std::string& sent_id, long token_index, std::vector<float> v);
  const std::vector<float>* find(const std::string& sent_id, long token_index) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool has_sentence_vectors() const { return sentence_records_ > 0; }

  struct Record {
    std::string sent_id;
    long token_index;
    std::vector<float> values;
  };
  const std::vector<Record>& records() const { return records_; }

 private:
  std::size_t dim_ = 0;
  std::vector<Record> records_;
  std::map<std::pair<std::string, long>, std::size_t> index_;
  std::size_t sentence_records_ = 0;
};

VectorStore read_vector_store(std::istream& in);
VectorStore load_vector_store(const std::string& path);
void write_vector_store(std::ostream& out, const VectorStore& store);

enum class ContextMode { zeros, static_table, rnn, external };

std::string to_string(ContextMode mode);
ContextMode parse_context_mode(const std::string& s);

template <typename T>
class ContextProvider {
 public:
  struct GraphContext {
    std::vector<nn::Var> tokens;
    nn::Var sentence{};
  };

  static ContextProvider zeros(std::size_t dim) {
    ContextProvider p;
    p.mode_ = ContextMode::zeros;
    p.dim_ = dim;
    return p;
  }

  static ContextProvider static_vectors(StaticTable table) {
    ContextProvider p;
    p.mode_ = ContextMode::static_table;
    p.dim_ = table.dim();
    p.table_ = std::move(table);
    return p;
  }

  // Output width is 2 * hidden (forward state || backward state).
  static ContextProvider rnn(StaticTable frozen, std::size_t hidden, std::uint64_t seed) {
    ContextProvider p;
    p.mode_ = ContextMode::rnn;
    p.hidden_ = hidden;
    p.dim_ = 2 * hidden;
    p.fwd_ = nn::make_lstm<T>("ctx.fwd", frozen.dim(), hidden);
    p.bwd_ = nn::make_lstm<T>("ctx.bwd", frozen.dim(), hidden);
    p.table_ = std::move(frozen);
    std::mt19937_64 rng(seed);
    nn::init_lstm(p.fwd_, rng);
    nn::init_lstm(p.bwd_, rng);
    return p;
  }

  static ContextProvider external(VectorStore store) {
    ContextProvider p;
    p.mode_ = ContextMode::external;
    p.dim_ = store.dim();
    p.store_ = std::move(store);
    return p;
  }

  ContextMode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t sentence_dim() const { return dim_; }
  const std::optional<StaticTable>& table() const { return table_; }
  const std::optional<VectorStore>& store() const { return store_; }
  void set_store(VectorStore store) {
    if (mode_ != ContextMode::external) throw EmbeddingError("set_store: provider is not external");
    if (store.dim() != dim_) {
      throw EmbeddingError("set_store: store width " + std::to_string(store.dim()) +
                           " does not match provider width " + std::to_string(dim_));
    }
    store_ = std::move(store);
  }

  // Trainable parameters (only the rnn contextualizer has any).
  std::vector<nn::Parameter<T>*> trainable() {
    if (mode_ != ContextMode::rnn) return {};
    return {&fwd_.w, &fwd_.u, &fwd_.b, &bwd_.w, &bwd_.u, &bwd_.b};
  }
  nn::LstmParams<T>& forward_lstm() { return fwd_; }
  nn::LstmParams<T>& backward_lstm() { return bwd_; }

  // Builds every token vector of the sentence (and the sentence vector) as
  // graph nodes; rnn mode routes gradients into the contextualizer.
  GraphContext contextualize(nn::Graph<T>& g, const Sentence& s, bool need_sentence = false) {
    GraphContext out;
    const std::size_t n = s.tokens.size();
    switch (mode_) {
      case ContextMode::zeros: {
        nn::Var z = g.zeros(1, dim_);
        out.tokens.assign(n, z);
        out.sentence = z;
        break;
      }
      case ContextMode::static_table: {
        require_table();
        std::vector<T> mean(dim_, T(0));
        for (const auto& t : s.tokens) {
          auto r = table_->row(t.surface);
          std::vector<T> v(r.begin(), r.end());
          for (std::size_t j = 0; j < dim_; ++j) mean[j] += v[j];
          out.tokens.push_back(g.constant(1, dim_, std::move(v)));
        }
        for (T& m : mean) m /= static_cast<T>(std::max<std::size_t>(n, 1));
        out.sentence = g.constant(1, dim_, std::move(mean));
        break;
      }
      case ContextMode::rnn: {
        require_table();
        if (n == 0) {
          out.sentence = g.zeros(1, dim_);
          break;
        }
        std::vector<nn::Var> xs;
        for (const auto& t : s.tokens) {
          auto r = table_->row(t.surface);
          xs.push_back(g.constant(1, table_->dim(), std::vector<T>(r.begin(), r.end())));
        }
        std::vector<nn::Var> hf(n), hb(n);
        nn::Var h = g.zeros(1, hidden_), c = h;
        for (std::size_t i = 0; i < n; ++i) {
          std::tie(h, c) = nn::lstm_cell(g, xs[i], h, c, fwd_);
          hf[i] = h;
        }
        h = g.zeros(1, hidden_);
        c = h;
        for (std::size_t i = n; i-- > 0;) {
          std::tie(h, c) = nn::lstm_cell(g, xs[i], h, c, bwd_);
          hb[i] = h;
        }
        for (std::size_t i = 0; i < n; ++i) out.tokens.push_back(g.concat({hf[i], hb[i]}, 1));
        out.sentence = g.concat({hf[n - 1], hb[0]}, 1);
        break;
      }
      case ContextMode::external: {
        if (!store_) throw EmbeddingError("external provider has no vector store loaded");
        for (std::size_t i = 0; i < n; ++i) {
          const auto* v = store_->find(s.sent_id, static_cast<long>(i));
          if (!v) {
            throw EmbeddingError("no contextual vector for (" + s.sent_id + ", " + std::to_string(i) + ")");
          }
          out.tokens.push_back(g.constant(1, dim_, std::vector<T>(v->begin(), v->end())));
        }
        if (const auto* sv = store_->find(s.sent_id, VectorStore::kSentenceIndex)) {
          out.sentence = g.constant(1, dim_, std::vector<T>(sv->begin(), sv->end()));
        } else if (need_sentence) {
          throw EmbeddingError("no sentence vector for (" + s.sent_id + ", -1)");
        } else {
          out.sentence = g.zeros(1, dim_);
        }
        break;
      }
    }
    return out;
  }

  std::vector<T> vector_for(const Sentence& s, std::size_t token_index) const {
    if (token_index >= s.tokens.size()) {
      throw std::out_of_range("vector_for: token " + std::to_string(token_index) + " of sentence " +
                              s.sent_id + " with " + std::to_string(s.tokens.size()) + " tokens");
    }
    if (mode_ == ContextMode::zeros) return std::vector<T>(dim_, T(0));
    if (mode_ == ContextMode::external) {
      if (!store_) throw EmbeddingError("external provider has no vector store loaded");
      const auto* v = store_->find(s.sent_id, static_cast<long>(token_index));
      if (!v) {
        throw EmbeddingError("no contextual vector for (" + s.sent_id + ", " +
                             std::to_string(token_index) + ")");
      }
      return {v->begin(), v->end()};
    }
    nn::Graph<T> g(false);
    auto ctx = const_cast<ContextProvider*>(this)->contextualize(g, s);
    return g.copy_value(ctx.tokens[token_index]);
  }

  std::vector<T> sentence_vector(const Sentence& s) const {
    if (mode_ == ContextMode::external) {
      if (!store_) throw EmbeddingError("external provider has no vector store loaded");
      const auto* v = store_->find(s.sent_id, VectorStore::kSentenceIndex);
      if (!v) throw EmbeddingError("no sentence vector for (" + s.sent_id + ", -1)");
      return {v->begin(), v->end()};
    }
    nn::Graph<T> g(false);
    auto ctx = const_cast<ContextProvider*>(this)->contextualize(g, s);
    return g.copy_value(ctx.sentence);
  }

 private:
  void require_table() const {
    if (!table_) throw EmbeddingError(to_string(mode_) + " provider has no static table loaded");
  }

  ContextMode mode_ = ContextMode::zeros;
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::optional<StaticTable> table_;
  std::optional<VectorStore> store_;
  nn::LstmParams<T> fwd_, bwd_;
};

}  // namespace cats
