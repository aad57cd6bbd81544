#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cats/corpus.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;
using cats::run_cli;

namespace {

const std::string kFixtures = CATS_FIXTURES;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cats_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const std::vector<std::string> kTiny{"--d-char", "4", "--d-enc", "4", "--d-dec", "6", "--d-att", "4", "--ctx-dim", "3"};

std::vector<std::string> train_args(const TempDir& d, std::vector<std::string> extra) {
  std::vector<std::string> a{"train", "--train", d / "train.conllu", "--dev", d / "dev.conllu"};
  a.insert(a.end(), kTiny.begin(), kTiny.end());
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

void make_data(const TempDir& d) {
  REQUIRE(cli({"synth", "--out", d / "train.conllu", "--n", "20", "--seed", "1"}).code == 0);
  REQUIRE(cli({"synth", "--out", d / "dev.conllu", "--n", "5", "--seed", "2", "--prefix", "dev"}).code == 0);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"eval", "--pred", "x"}).code == 2);
  CHECK(cli({"eval", "--pred", "x", "--gold", "y", "--task", "lemma"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("eval on identical files") {
  const std::string f = kFixtures + "/bslm.conllu";
  auto r = cli({"eval", "--pred", f, "--gold", f});
  CHECK(r.code == 0);
  CHECK(r.out.find("F1 1.0000") != std::string::npos);
  CHECK(r.err.find("[config] task=seg") != std::string::npos);
  CHECK(cli({"eval", "--pred", f, "--gold", f, "--task", "dep"}).out.find("F1 1.0000") != std::string::npos);
  CHECK(cli({"eval", "--pred", f, "--gold", "/nonexistent.conllu"}).code == 1);
}

TEST_CASE("analyze prints the breakdown") {
  auto r = cli({"analyze", "--pred", kFixtures + "/errors_pred.conllu", "--gold", kFixtures + "/errors_gold.conllu"});
  CHECK(r.code == 0);
  CHECK(r.out.find("Under-seg. suffix\t20.0% (4)") != std::string::npos);
}

TEST_CASE("synth is deterministic and embeds its config") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "a.conllu", "--n", "30", "--seed", "4"}).code == 0);
  REQUIRE(cli({"synth", "--out", d / "a2.conllu", "--n", "30", "--seed", "4", "--manifest", d / "a.conllu.manifest.tsv"})
              .code == 0);
  const std::string a = slurp(d / "a.conllu");
  CHECK(a.find("cats.seed = 4") != std::string::npos);
  // only the out path differs
  std::string b = slurp(d / "a2.conllu");
  const auto pos = b.find("a2.conllu");
  REQUIRE(pos != std::string::npos);
  b.replace(pos, 9, "a.conllu");
  CHECK(a == b);
  CHECK(fs::exists(d / "a.conllu.manifest.tsv"));
}

TEST_CASE("train: defaults, config files and mode checks") {
  TempDir d;
  make_data(d);
  SUBCASE("defaults are echoed") {
    auto r = cli(train_args(d, {"--epochs", "0"}));
    CHECK(r.code == 0);
    CHECK(r.err.find("[config] lr=0.001\n") != std::string::npos);
    CHECK(r.err.find("[config] batch-size=128\n") != std::string::npos);
    CHECK(r.err.find("[config] embeddings=rnn\n") != std::string::npos);
    CHECK(r.out.find("# lr=0.001") != std::string::npos);
  }
  SUBCASE("config file values, overridden by flags") {
    std::ofstream(d / "run.cfg") << "# comment\nlr=0.01\nbatch-size = 7\n";
    auto r = cli(train_args(d, {"--config", d / "run.cfg", "--epochs", "0", "--batch-size", "9"}));
    CHECK(r.code == 0);
    CHECK(r.err.find("[config] lr=0.01\n") != std::string::npos);
    CHECK(r.err.find("[config] batch-size=9\n") != std::string::npos);
  }
  SUBCASE("unknown config key") {
    std::ofstream(d / "bad.cfg") << "learning-rate=0.01\n";
    CHECK(cli(train_args(d, {"--config", d / "bad.cfg", "--epochs", "0"})).code == 2);
  }
  SUBCASE("mode-dependent inputs") {
    CHECK(cli(train_args(d, {"--embeddings", "external", "--epochs", "0"})).code == 2);
    CHECK(cli(train_args(d, {"--embeddings", "static", "--epochs", "0"})).code == 2);
    CHECK(cli(train_args(d, {"--embeddings", "bert"})).code == 2);
  }
  SUBCASE("a missing training file is a runtime failure") {
    CHECK(cli({"train", "--train", d / "nope.conllu", "--dev", d / "dev.conllu", "--epochs", "0"}).code == 1);
  }
}

TEST_CASE("train, predict and eval round trip") {
  TempDir d;
  make_data(d);
  auto t = cli(train_args(d, {"--embeddings", "zeros", "--joint", "--epochs", "1", "--batch-size", "16", "--save",
                              d / "m.cats", "--report", d / "report.tsv"}));
  REQUIRE(t.code == 0);
  CHECK(slurp(d / "report.tsv") == t.out);
  CHECK(t.out.find("epoch\ttrain_loss") != std::string::npos);

  auto p = cli({"predict", "--model", d / "m.cats", "--input", d / "dev.conllu", "--output", d / "pred.conllu"});
  REQUIRE(p.code == 0);
  const std::string pred = slurp(d / "pred.conllu");
  CHECK(pred.find("cats.model-digest = ") != std::string::npos);
  const auto parsed = cats::read_conllu_file(d / "pred.conllu");
  CHECK(parsed.sentences.size() == 5);

  CHECK(cli({"eval", "--pred", d / "pred.conllu", "--gold", d / "dev.conllu"}).code == 0);
  CHECK(cli({"eval", "--pred", d / "pred.conllu", "--gold", d / "dev.conllu", "--task", "pos"}).code == 0);

  SUBCASE("beam decoding runs too") {
    CHECK(cli({"predict", "--model", d / "m.cats", "--input", d / "dev.conllu", "--beam", "3"}).code == 0);
  }
  SUBCASE("empty input gives empty output") {
    std::ofstream(d / "empty.conllu") << "";
    auto e = cli({"predict", "--model", d / "m.cats", "--input", d / "empty.conllu"});
    CHECK(e.code == 0);
    CHECK(e.out.empty());
  }
  SUBCASE("a broken model file") {
    std::ofstream(d / "bad.cats") << "not a model";
    CHECK(cli({"predict", "--model", d / "bad.cats", "--input", d / "dev.conllu"}).code == 1);
  }
}

TEST_CASE("external models need their vectors at predict time") {
  TempDir d;
  const std::string gold = kFixtures + "/bslm.conllu", vec = kFixtures + "/bslm.ctxv";
  auto t = cli({"train", "--train", gold, "--dev", gold, "--embeddings", "external", "--ctx-vectors", vec, "--epochs",
                "1", "--d-char", "4", "--d-enc", "4", "--d-dec", "6", "--d-att", "4", "--save", d / "ext.cats"});
  REQUIRE(t.code == 0);
  CHECK(cli({"predict", "--model", d / "ext.cats", "--input", gold}).code == 2);
  CHECK(cli({"predict", "--model", d / "ext.cats", "--input", gold, "--ctx-vectors", vec}).code == 0);
  // wrong width
  std::ofstream(d / "w3.ctxv") << "CTXV1 3\nhe-1\t0\t0 0 0\nhe-2\t0\t0 0 0\nhe-2\t1\t0 0 0\n";
  CHECK(cli({"predict", "--model", d / "ext.cats", "--input", gold, "--ctx-vectors", d / "w3.ctxv"}).code == 1);
}
