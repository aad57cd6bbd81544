#include "cats/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <thread>

#include "cats/log.hpp"
#include "cats/optim.hpp"

namespace cats {

std::size_t default_epochs(std::size_t n_train_sentences) { return n_train_sentences < 5000 ? 40 : 20; }

std::vector<Example> collect_examples(const Corpus& corpus) {
  std::vector<Example> out;
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s)
    for (std::size_t t = 0; t < corpus.sentences[s].tokens.size(); ++t) out.push_back({s, t});
  return out;
}

std::vector<Batch> make_batches(const Corpus& corpus, const std::vector<Example>& examples, const CharVocab& vocab,
                                std::size_t batch_size, std::uint64_t seed, std::size_t epoch) {
  if (examples.empty()) throw std::invalid_argument("make_batches: no examples");
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be positive");
  std::vector<Example> order = examples;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    b.items.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t width = 0;
    for (const auto& e : b.items) {
      b.targets.push_back(target_string(corpus.sentences[e.sentence].tokens[e.token], vocab));
      width = std::max(width, b.targets.back().size());
    }
    for (auto& t : b.targets) {
      std::vector<bool> m(width, false);
      std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(t.size()), true);
      t.resize(width, CharVocab::kPad);
      b.mask.push_back(std::move(m));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

BatchLoss batch_loss(nn::Graph<float>& g, CatsModel<float>& model, ContextProvider<float>& provider,
                     const Corpus& corpus, const Batch& batch, double lambda) {
  const auto& mc = model.config();
  std::map<std::size_t, ContextProvider<float>::GraphContext> contexts;
  std::vector<nn::Var> seg, tag;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const auto& ex = batch.items[i];
    const Sentence& s = corpus.sentences[ex.sentence];
    auto it = contexts.find(ex.sentence);
    if (it == contexts.end()) {
      it = contexts.emplace(ex.sentence, provider.contextualize(g, s, mc.use_sentence_vector)).first;
    }
    const TokenEntry& entry = s.tokens[ex.token];
    if (mc.joint && !entry.has_labels()) {
      throw std::invalid_argument("joint training: token '" + entry.surface + "' in " + s.sent_id + " has no labels");
    }
    std::vector<int> target = batch.targets[i];
    for (std::size_t k = 0; k < target.size(); ++k)
      if (!batch.mask[i][k]) target[k] = CharVocab::kPad;
    const auto surface = model.chars().encode(entry.surface);
    const auto labels = mc.joint ? model.label_ids(entry) : std::vector<int>{};
    std::optional<nn::Var> sent;
    if (mc.use_sentence_vector) sent = it->second.sentence;
    auto terms = model.loss_terms(g, surface, target, labels, it->second.tokens[ex.token], sent);
    seg.insert(seg.end(), terms.seg.begin(), terms.seg.end());
    tag.insert(tag.end(), terms.tag.begin(), terms.tag.end());
  }
  BatchLoss out;
  out.seg_positions = seg.size();
  out.tag_positions = tag.size();
  nn::Var l_seg = g.scale(g.add_n(seg), 1.0f / static_cast<float>(seg.size()));
  out.seg_value = g.scalar(l_seg);
  if (mc.joint) {
    nn::Var l_tag = g.scale(g.add_n(tag), 1.0f / static_cast<float>(tag.size()));
    out.tag_value = g.scalar(l_tag);
    out.loss = combine_losses(g, l_seg, l_tag, lambda);
  } else {
    out.loss = l_seg;
  }
  out.loss_value = g.scalar(out.loss);
  return out;
}

Prediction predict_corpus(CatsModel<float>& model, ContextProvider<float>& provider, const Corpus& input,
                          std::size_t beam_width, std::size_t threads) {
  const auto& mc = model.config();
  const std::size_t n = input.sentences.size();
  std::vector<Sentence> out(n);
  std::vector<std::vector<Example>> truncated(n);

  auto work = [&](std::size_t i) {
    const Sentence& s = input.sentences[i];
    Sentence r;
    r.sent_id = s.sent_id;
    if (s.tokens.empty()) {
      out[i] = std::move(r);
      return;
    }
    nn::Graph<float> g(false);
    auto ctx = provider.contextualize(g, s, mc.use_sentence_vector);
    const auto sent = g.copy_value(ctx.sentence);
    std::size_t word = 1;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const auto cv = g.copy_value(ctx.tokens[t]);
      const std::string& surface = s.tokens[t].surface;
      DecodeResult d = beam_width == 0 ? model.greedy_decode(surface, cv, sent)
                                       : model.beam_decode(surface, cv, beam_width, sent);
      if (d.truncated) truncated[i].push_back({i, t});
      TokenEntry e;
      e.surface = surface;
      e.segments = std::move(d.segments);
      e.labels = std::move(d.labels);
      if (e.labels.size() != e.segments.size()) e.labels.clear();
      e.char_span = {word, word + e.segments.size() - (e.segments.empty() ? 0 : 1)};
      word += e.segments.size();
      r.tokens.push_back(std::move(e));
    }
    out[i] = std::move(r);
  };

  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += threads) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  Prediction p;
  p.corpus.split_tag = input.split_tag;
  p.corpus.sentences = std::move(out);
  for (auto& v : truncated) p.truncated.insert(p.truncated.end(), v.begin(), v.end());
  return p;
}

namespace {

struct DevScore {
  double seg_f1 = 0;
  std::optional<double> labeled_f1;
};

DevScore score_dev(CatsModel<float>& model, ContextProvider<float>& provider, const Corpus& dev, std::size_t threads) {
  DevScore s;
  Prediction p = predict_corpus(model, provider, strip_analyses(dev), 0, threads);
  s.seg_f1 = seg_prf(p.corpus, dev).f1;
  if (model.config().joint && !dev.sentences.empty()) {
    // Untrained models may emit nothing for a token; those score as unlabeled misses.
    std::size_t matched = 0, predicted = 0, gold = 0;
    for (std::size_t i = 0; i < dev.sentences.size(); ++i) {
      for (std::size_t k = 0; k < dev.sentences[i].tokens.size(); ++k) {
        const auto& pt = p.corpus.sentences[i].tokens[k];
        const auto& gt = dev.sentences[i].tokens[k];
        std::vector<std::string> a, b;
        for (std::size_t j = 0; j < pt.segments.size(); ++j)
          a.push_back(pt.segments[j] + '\x1f' + (pt.has_labels() ? pt.labels[j] : std::string()));
        for (std::size_t j = 0; j < gt.segments.size(); ++j)
          b.push_back(gt.segments[j] + '\x1f' + (gt.has_labels() ? gt.labels[j] : std::string()));
        matched += multiset_overlap(a, b);
        predicted += a.size();
        gold += b.size();
      }
    }
    s.labeled_f1 = make_report(Task::pos, matched, predicted, gold).f1;
  }
  return s;
}

std::vector<nn::Parameter<float>*> all_parameters(CatsModel<float>& model, ContextProvider<float>& provider) {
  auto ps = model.parameters();
  auto cs = provider.trainable();
  ps.insert(ps.end(), cs.begin(), cs.end());
  return ps;
}

std::vector<std::vector<float>> snapshot(const std::vector<nn::Parameter<float>*>& ps) {
  std::vector<std::vector<float>> out;
  for (const auto* p : ps) out.push_back(p->value);
  return out;
}

void restore(const std::vector<nn::Parameter<float>*>& ps, const std::vector<std::vector<float>>& values) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

}  // namespace

TrainReport train(CatsModel<float>& model, ContextProvider<float>& provider, const Corpus& train_corpus,
                  const Corpus& dev_corpus, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const bool joint = model.config().joint;
  if (joint && !(cfg.lambda > 0.0 && cfg.lambda < 1.0)) {
    throw std::invalid_argument("train: lambda must lie in (0,1) for joint models");
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  const DevMetric metric = cfg.dev_metric.value_or(joint ? DevMetric::labeled_f1 : DevMetric::seg_f1);
  if (metric == DevMetric::labeled_f1 && !joint) {
    throw std::invalid_argument("train: labeled_f1 dev metric requires a joint model");
  }
  const bool has_dev = dev_corpus.token_count() > 0;
  auto pick = [&](const DevScore& s) { return metric == DevMetric::labeled_f1 ? s.labeled_f1.value_or(0) : s.seg_f1; };

  TrainReport report;
  if (cfg.epochs == 0) {
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }
  const auto examples = collect_examples(train_corpus);
  if (examples.empty()) throw std::invalid_argument("train: training corpus has no tokens");

  auto params = all_parameters(model, provider);
  nn::Adam<float> adam(params, {cfg.learning_rate});
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  if (model.config().dropout > 0) model.set_dropout_rng(&dropout_rng);

  report.baseline_dev_metric = has_dev ? pick(score_dev(model, provider, dev_corpus, cfg.threads)) : 0.0;
  report.best_dev_metric = report.baseline_dev_metric;
  report.best_epoch = 0;
  auto best = snapshot(params);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train_corpus, examples, model.chars(), cfg.batch_size, cfg.seed, epoch);
    double loss_sum = 0, seg_sum = 0, tag_sum = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      nn::zero_grads(params);
      nn::Graph<float> g(false);
      BatchLoss bl = batch_loss(g, model, provider, train_corpus, batches[b], cfg.lambda);
      if (!std::isfinite(bl.loss_value)) {
        model.set_dropout_rng(nullptr);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "non-finite loss at epoch %zu, batch %zu (lr %g)", epoch, b + 1,
                      cfg.learning_rate);
        throw TrainingAborted(buf);
      }
      g.backward(bl.loss);
      nn::clip_grad_norm(params, cfg.clip_norm);
      adam.step();
      loss_sum += bl.loss_value;
      seg_sum += bl.seg_value;
      tag_sum += bl.tag_value;
      if (cfg.on_step) cfg.on_step({epoch, b + 1, bl.loss_value, bl.seg_value, bl.tag_value});
    }
    EpochRow row;
    row.epoch = epoch;
    const auto nb = static_cast<double>(batches.size());
    row.train_loss = loss_sum / nb;
    row.train_loss_seg = seg_sum / nb;
    row.train_loss_tag = tag_sum / nb;
    if (has_dev) {
      model.set_dropout_rng(nullptr);
      const DevScore s = score_dev(model, provider, dev_corpus, cfg.threads);
      if (model.config().dropout > 0) model.set_dropout_rng(&dropout_rng);
      row.dev_seg_f1 = s.seg_f1;
      row.dev_labeled_f1 = s.labeled_f1;
      row.dev_metric = pick(s);
    }
    report.rows.push_back(row);
    char buf[200];
    std::snprintf(buf, sizeof(buf), "epoch %zu train_loss %.6f dev_seg_f1 %.4f", epoch, row.train_loss, row.dev_seg_f1);
    log_info(buf);

    if (!has_dev || row.dev_metric > report.best_dev_metric) {
      report.best_dev_metric = row.dev_metric;
      report.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (cfg.patience && ++since_best >= *cfg.patience) {
      log_info("early stop: no dev improvement for " + std::to_string(*cfg.patience) + " epochs");
      break;
    }
  }
  model.set_dropout_rng(nullptr);
  restore(params, best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_train_report(std::ostream& out, const TrainReport& report, const Metadata& metadata) {
  for (const auto& [k, v] : metadata) out << "# " << k << '=' << v << '\n';
  out << "# best_epoch=" << report.best_epoch << '\n';
  char buf[200];
  std::snprintf(buf, sizeof(buf), "# baseline_dev=%.6f\n# best_dev=%.6f\n", report.baseline_dev_metric,
                report.best_dev_metric);
  out << buf;
  out << "epoch\ttrain_loss\ttrain_loss_seg\ttrain_loss_tag\tdev_seg_f1\tdev_labeled_f1\n";
  for (const auto& r : report.rows) {
    if (r.dev_labeled_f1) {
      std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n", r.epoch, r.train_loss, r.train_loss_seg,
                    r.train_loss_tag, r.dev_seg_f1, *r.dev_labeled_f1);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t%.6f\t-\n", r.epoch, r.train_loss, r.train_loss_seg,
                    r.train_loss_tag, r.dev_seg_f1);
    }
    out << buf;
  }
}

LambdaSearch tune_lambda(const std::vector<double>& grid, const ModelFactory& factory, const Corpus& train_corpus,
                         const Corpus& dev_corpus, TrainConfig cfg) {
  if (grid.empty()) throw std::invalid_argument("tune_lambda: empty grid");
  for (double l : grid)
    if (!(l > 0.0 && l < 1.0)) throw std::invalid_argument("tune_lambda: grid values must lie in (0,1)");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  LambdaSearch out;
  double best = -1;
  cfg.dev_metric = DevMetric::labeled_f1;
  for (double l : sorted) {
    auto [model, provider] = factory();
    cfg.lambda = l;
    TrainReport r = train(model, provider, train_corpus, dev_corpus, cfg);
    if (r.best_dev_metric > best) {
      best = r.best_dev_metric;
      out.best_lambda = l;
    }
    out.runs.push_back({l, std::move(r)});
  }
  return out;
}

}  // namespace cats
