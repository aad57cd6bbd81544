#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cats/checkpoint.hpp"
#include "cats/corpus.hpp"
#include "cats/evaluation.hpp"
#include "cats/synthetic.hpp"
#include "cats/trainer.hpp"

namespace py = pybind11;
using namespace cats;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["task"] = to_string(r.task);
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["matched"] = r.matched;
  d["predicted"] = r.predicted;
  d["gold"] = r.gold;
  return d;
}

py::dict breakdown_dict(const ErrorBreakdown& b) {
  py::dict d;
  d["over_seg_prefix"] = b.over_seg_prefix;
  d["under_seg_prefix"] = b.under_seg_prefix;
  d["over_seg_suffix"] = b.over_seg_suffix;
  d["under_seg_suffix"] = b.under_seg_suffix;
  d["model_artifacts"] = b.model_artifacts;
  return d;
}

// A loaded checkpoint. Decoding runs without the GIL.
class Segmenter {
 public:
  Segmenter(const std::string& path, const std::string& ctx_vectors) : ck_(load_checkpoint(path)) {
    if (ck_.provider.mode() == ContextMode::external) {
      if (ctx_vectors.empty()) throw std::invalid_argument("this model uses external vectors; pass ctx_vectors");
      ck_.provider.set_store(load_vector_store(ctx_vectors));
    }
  }

  std::string mode() const { return to_string(ck_.provider.mode()); }
  bool joint() const { return ck_.model.config().joint; }

  std::string predict(const std::string& conllu, std::size_t beam, std::size_t threads) {
    const Corpus input = strip_analyses(parse_conllu_string(conllu));
    Prediction p;
    {
      py::gil_scoped_release nogil;
      p = predict_corpus(ck_.model, ck_.provider, input, beam, threads);
    }
    return to_conllu_string(p.corpus);
  }

  // Segments of each token of one sentence.
  std::vector<std::vector<std::string>> segment(const std::vector<std::string>& tokens, const std::string& sent_id,
                                                std::size_t beam) {
    Corpus c;
    Sentence s;
    s.sent_id = sent_id;
    for (std::size_t i = 0; i < tokens.size(); ++i) s.tokens.push_back({tokens[i], {tokens[i]}, {}, {i + 1, i + 1}});
    c.sentences.push_back(std::move(s));
    Prediction p;
    {
      py::gil_scoped_release nogil;
      p = predict_corpus(ck_.model, ck_.provider, c, beam, 1);
    }
    std::vector<std::vector<std::string>> out;
    for (const auto& t : p.corpus.sentences[0].tokens) out.push_back(t.segments);
    return out;
  }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_cats, m) {
  m.doc() = "Contextualized token-to-word segmentation";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<EmbeddingError>(m, "EmbeddingError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<EvalError>(m, "EvalError", PyExc_ValueError);

  m.def(
      "evaluate",
      [](const std::string& pred, const std::string& gold, const std::string& task) {
        return report_dict(evaluate(parse_task(task), parse_conllu_string(pred), parse_conllu_string(gold)));
      },
      py::arg("pred"), py::arg("gold"), py::arg("task") = "seg", "Score CoNLL-U text against gold CoNLL-U text.");

  m.def(
      "token_errors",
      [](const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
        return breakdown_dict(classify_token_errors(pred, gold));
      },
      py::arg("pred"), py::arg("gold"));

  m.def(
      "analyze",
      [](const std::string& pred, const std::string& gold, std::size_t sample, std::uint64_t seed) {
        return breakdown_dict(analyze_errors(parse_conllu_string(pred), parse_conllu_string(gold), sample, seed));
      },
      py::arg("pred"), py::arg("gold"), py::arg("sample") = 100, py::arg("seed") = 1);

  m.def(
      "synthesize",
      [](std::size_t n, std::uint64_t seed) {
        SynthConfig sc;
        sc.n_sentences = n;
        sc.seed = seed;
        return to_conllu_string(generate_synthetic(sc).corpus);
      },
      py::arg("n"), py::arg("seed") = 1, "Synthetic ambiguity corpus as CoNLL-U text.");

  m.def(
      "load_vectors",
      [](const std::string& path) {
        const VectorStore s = load_vector_store(path);
        py::dict d;
        for (const auto& r : s.records()) d[py::make_tuple(r.sent_id, r.token_index)] = r.values;
        return py::make_tuple(s.dim(), d);
      },
      py::arg("path"), "(dim, {(sent_id, token_index): values}) from a CTXV1 file; index -1 is the sentence vector.");

  py::class_<Segmenter>(m, "Segmenter")
      .def(py::init<const std::string&, const std::string&>(), py::arg("path"), py::arg("ctx_vectors") = "")
      .def_property_readonly("mode", &Segmenter::mode)
      .def_property_readonly("joint", &Segmenter::joint)
      .def("predict", &Segmenter::predict, py::arg("conllu"), py::arg("beam") = 0, py::arg("threads") = 1)
      .def("segment", &Segmenter::segment, py::arg("tokens"), py::arg("sent_id") = "s1", py::arg("beam") = 0);
}
