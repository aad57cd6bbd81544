#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cats/checkpoint.hpp"
#include "cats/corpus.hpp"
#include "cats/embeddings.hpp"
#include "cats/evaluation.hpp"
#include "cats/model.hpp"

namespace cats {

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DevMetric { seg_f1, labeled_f1 };

struct StepLog {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0;
  double loss_seg = 0;
  double loss_tag = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  double lambda = 0.2;  // only used by joint models
  std::uint64_t seed = 1;
  std::optional<DevMetric> dev_metric;  // default: labeled_f1 for joint models, else seg_f1
  std::optional<std::size_t> patience;
  double clip_norm = 5.0;
  std::size_t threads = 1;  // dev decoding fan-out
  std::function<void(const StepLog&)> on_step;
};

// 40 epochs below 5,000 training sentences, otherwise 20.
std::size_t default_epochs(std::size_t n_train_sentences);

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_loss_seg = 0;
  double train_loss_tag = 0;  // 0 unless joint
  double dev_seg_f1 = 0;
  std::optional<double> dev_labeled_f1;
  double dev_metric = 0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  double baseline_dev_metric = 0;  // initial model, before any update
  std::size_t best_epoch = 0;      // 0 = the initial model
  double best_dev_metric = 0;
  double wall_seconds = 0;
};

void write_train_report(std::ostream& out, const TrainReport& report, const Metadata& metadata = {});

struct Example {
  std::size_t sentence = 0;
  std::size_t token = 0;
};

std::vector<Example> collect_examples(const Corpus& corpus);

struct Batch {
  std::vector<Example> items;
  std::vector<std::vector<int>> targets;  // PAD-padded to a common width
  std::vector<std::vector<bool>> mask;    // false on PAD
};

// Deterministic shuffle keyed by (seed, epoch), then consecutive slices.
std::vector<Batch> make_batches(const Corpus& corpus, const std::vector<Example>& examples, const CharVocab& vocab,
                                std::size_t batch_size, std::uint64_t seed, std::size_t epoch);

struct BatchLoss {
  nn::Var loss;
  double loss_value = 0;
  double seg_value = 0;
  double tag_value = 0;
  std::size_t seg_positions = 0;
  std::size_t tag_positions = 0;
};

// Builds the batch objective: per-position mean cross-entropy for segments,
// and for joint models lambda * L_seg + (1 - lambda) * L_tag.
BatchLoss batch_loss(nn::Graph<float>& g, CatsModel<float>& model, ContextProvider<float>& provider,
                     const Corpus& corpus, const Batch& batch, double lambda);

TrainReport train(CatsModel<float>& model, ContextProvider<float>& provider, const Corpus& train_corpus,
                  const Corpus& dev_corpus, const TrainConfig& cfg);

struct Prediction {
  Corpus corpus;
  std::vector<Example> truncated;
};

// Decodes every token (greedy when beam_width == 0, else beam search).
// Sentences are distributed over threads and merged in input order.
Prediction predict_corpus(CatsModel<float>& model, ContextProvider<float>& provider, const Corpus& input,
                          std::size_t beam_width = 0, std::size_t threads = 1);

struct LambdaRun {
  double lambda = 0;
  TrainReport report;
};

struct LambdaSearch {
  double best_lambda = 0;
  std::vector<LambdaRun> runs;
};

using ModelFactory = std::function<std::pair<CatsModel<float>, ContextProvider<float>>()>;

// One model per grid value; best by dev labeled-F1, ties to the smaller value.
LambdaSearch tune_lambda(const std::vector<double>& grid, const ModelFactory& factory, const Corpus& train_corpus,
                         const Corpus& dev_corpus, TrainConfig cfg);

}  // namespace cats
