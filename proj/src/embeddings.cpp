#include "cats/embeddings.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cats/log.hpp"

namespace cats {

std::string format_float(float v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_float: conversion failed");
  return std::string(buf, p);
}

float parse_float(std::string_view s) {
  float v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("not a float: '" + std::string(s) + "'");
  }
  return v;
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view chomp(const std::string& raw) {
  std::string_view line(raw);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

void StaticTable::set(const std::string& key, std::span<const float> row) {
  if (row.size() != dim_) {
    throw EmbeddingError("static row for '" + key + "' has width " + std::to_string(row.size()) +
                         ", table width is " + std::to_string(dim_));
  }
  if (auto it = index_.find(key); it != index_.end()) {
    std::copy(row.begin(), row.end(), rows_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
    return;
  }
  index_.emplace(key, keys_.size());
  keys_.push_back(key);
  rows_.insert(rows_.end(), row.begin(), row.end());
}

void StaticTable::finalize() {
  unk_.assign(dim_, 0.0f);
  if (keys_.empty()) return;
  std::vector<double> acc(dim_, 0.0);
  for (std::size_t r = 0; r < keys_.size(); ++r)
    for (std::size_t j = 0; j < dim_; ++j) acc[j] += rows_[r * dim_ + j];
  for (std::size_t j = 0; j < dim_; ++j) unk_[j] = static_cast<float>(acc[j] / static_cast<double>(keys_.size()));
}

std::span<const float> StaticTable::row(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return unk_;
  return std::span<const float>(rows_).subspan(it->second * dim_, dim_);
}

StaticTable read_static_table(std::istream& in) {
  std::string raw;
  if (!std::getline(in, raw)) throw ParseError(1, "static vectors: missing header");
  auto header = split_spaces(chomp(raw));
  std::size_t count = 0, dim = 0;
  if (header.size() != 2 || std::from_chars(header[0].data(), header[0].data() + header[0].size(), count).ec != std::errc() ||
      std::from_chars(header[1].data(), header[1].data() + header[1].size(), dim).ec != std::errc() || dim == 0) {
    throw ParseError(1, "static vectors: header must be '<count> <dim>'");
  }
  StaticTable table(dim);
  std::size_t line_no = 1, rows = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto fields = split_spaces(chomp(raw));
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      throw ParseError(line_no, "static vectors: expected " + std::to_string(dim) + " values, found " +
                                    std::to_string(fields.size() - 1));
    }
    std::string key(fields[0]);
    std::vector<float> row(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      try {
        row[j] = parse_float(fields[j + 1]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, e.what());
      }
    }
    if (table.contains(key)) log_warning("static vectors: duplicate key '" + key + "' at line " +
                                         std::to_string(line_no) + "; last occurrence wins");
    table.set(key, row);
    ++rows;
  }
  if (rows != count) {
    log_warning("static vectors: header declares " + std::to_string(count) + " rows, file has " +
                std::to_string(rows));
  }
  table.finalize();
  return table;
}

StaticTable load_static_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open static vectors " + path);
  return read_static_table(in);
}

void write_static_table(std::ostream& out, const StaticTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (const auto& key : table.keys()) {
    out << key;
    for (float v : table.row(key)) out << ' ' << format_float(v);
    out << '\n';
  }
}

StaticTable random_static_table(const Corpus& corpus, std::size_t dim, std::uint64_t seed) {
  StaticTable table(dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> row(dim);
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens) {
      if (table.contains(t.surface)) continue;
      for (float& v : row) v = dist(rng);
      table.set(t.surface, row);
    }
  }
  table.finalize();
  return table;
}

void VectorStore::put(const std::string& sent_id, long token_index, std::vector<float> v) {
  if (v.size() != dim_) {
    throw EmbeddingError("vector for (" + sent_id + ", " + std::to_string(token_index) + ") has width " +
                         std::to_string(v.size()) + ", store width is " + std::to_string(dim_));
  }
  if (token_index < kSentenceIndex) {
    throw EmbeddingError("token index " + std::to_string(token_index) + " is invalid");
  }
  auto key = std::make_pair(sent_id, token_index);
  if (auto it = index_.find(key); it != index_.end()) {
    records_[it->second].values = std::move(v);
    return;
  }
  index_.emplace(std::move(key), records_.size());
  if (token_index == kSentenceIndex) ++sentence_records_;
  records_.push_back({sent_id, token_index, std::move(v)});
}

const std::vector<float>* VectorStore::find(const std::string& sent_id, long token_index) const {
  auto it = index_.find({sent_id, token_index});
  return it == index_.end() ? nullptr : &records_[it->second].values;
}

VectorStore read_vector_store(std::istream& in) {
  std::string raw;
  if (!std::getline(in, raw)) throw EmbeddingError("CTXV1: empty file");
  auto header = split_spaces(chomp(raw));
  std::size_t dim = 0;
  if (header.size() != 2 || header[0] != "CTXV1") {
    throw EmbeddingError("CTXV1: unknown magic/version in header '" + std::string(chomp(raw)) + "'");
  }
  if (std::from_chars(header[1].data(), header[1].data() + header[1].size(), dim).ec != std::errc() || dim == 0) {
    throw EmbeddingError("CTXV1: bad dimension '" + std::string(header[1]) + "'");
  }
  VectorStore store(dim);
  std::size_t line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = chomp(raw);
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) throw ParseError(line_no, "CTXV1: expected sent_id<TAB>index<TAB>values");
    std::string sent_id(line.substr(0, t1));
    auto idx_text = line.substr(t1 + 1, t2 - t1 - 1);
    long idx = 0;
    if (std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx).ec != std::errc()) {
      throw ParseError(line_no, "CTXV1: bad token index '" + std::string(idx_text) + "'");
    }
    auto fields = split_spaces(line.substr(t2 + 1));
    if (fields.size() != dim) {
      throw EmbeddingError("CTXV1 line " + std::to_string(line_no) + ": width " +
                           std::to_string(fields.size()) + " does not match header width " + std::to_string(dim));
    }
    std::vector<float> v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      try {
        v[j] = parse_float(fields[j]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_no, e.what());
      }
    }
    store.put(sent_id, idx, std::move(v));
  }
  return store;
}

VectorStore load_vector_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EmbeddingError("cannot open contextual vectors " + path);
  return read_vector_store(in);
}

void write_vector_store(std::ostream& out, const VectorStore& store) {
  out << "CTXV1 " << store.dim() << '\n';
  for (const auto& r : store.records()) {
    out << r.sent_id << '\t' << r.token_index << '\t';
    for (std::size_t j = 0; j < r.values.size(); ++j) {
      if (j) out << ' ';
      out << format_float(r.values[j]);
    }
    out << '\n';
  }
}

std::string to_string(ContextMode mode) {
  switch (mode) {
    case ContextMode::zeros: return "zeros";
    case ContextMode::static_table: return "static";
    case ContextMode::rnn: return "rnn";
    case ContextMode::external: return "external";
  }
  return "?";
}

ContextMode parse_context_mode(const std::string& s) {
  if (s == "zeros") return ContextMode::zeros;
  if (s == "static") return ContextMode::static_table;
  if (s == "rnn") return ContextMode::rnn;
  if (s == "external") return ContextMode::external;
  throw std::invalid_argument("unknown embeddings mode '" + s + "' (expected zeros|static|rnn|external)");
}

}  // namespace cats
