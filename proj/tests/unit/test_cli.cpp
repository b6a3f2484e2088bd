#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evade/cli.hpp"

using namespace evade;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Workspace {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "evade_cli_test";

  Workspace() {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::ofstream text(dir / "story.txt");
    for (int i = 0; i < 20; ++i) {
      text << "The cat sat on the mat. A dog ran far away from the house. Birds sang in the morning light.\n";
    }
  }
  ~Workspace() { std::filesystem::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code_for(ErrorKind::Config) == kExitUsage);
  CHECK(exit_code_for(ErrorKind::Timeout) == kExitScorer);
  CHECK(exit_code_for(ErrorKind::Network) == kExitScorer);
  CHECK(exit_code_for(ErrorKind::ProtocolError) == kExitScorer);
  CHECK(exit_code_for(ErrorKind::HttpStatus) == kExitScorer);
  CHECK(exit_code_for(ErrorKind::Io) == kExitData);
  CHECK(exit_code_for(ErrorKind::EmptyText) == kExitData);
}

TEST_CASE("usage errors") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"generate", "--no-such-flag"}).code == kExitUsage);
  CHECK(run({"generate", "--temperature", "5", "--model", "/nonexistent"}).code == kExitUsage);
  CHECK(run({"reward"}).code == kExitUsage);
}

TEST_CASE("missing model file is a data error") {
  const auto r = run({"generate", "--model", "/nonexistent/lm.bin"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("/nonexistent/lm.bin") != std::string::npos);
}

TEST_CASE("ingest, train and generate") {
  const Workspace ws;
  auto r = run({"ingest", "--input", ws.path("story.txt"), "--output", ws.path("corpus.jsonl"), "--label", "human"});
  REQUIRE(r.code == kExitOk);
  r = run({"train-lm", "--corpus", ws.path("corpus.jsonl"), "--output", ws.path("lm.bin"), "--order", "3"});
  REQUIRE(r.code == kExitOk);
  r = run({"generate", "--model", ws.path("lm.bin"), "--prompt", "", "--strategy", "nucleus", "--top-p", "0.95",
           "--temperature", "1.0"});
  CHECK(r.code == kExitOk);
  CHECK(lines(r.out) == 1);
  const auto again = run({"generate", "--model", ws.path("lm.bin"), "--prompt", "", "--strategy", "nucleus",
                          "--top-p", "0.95", "--temperature", "1.0"});
  CHECK(again.out == r.out);
  r = run({"generate", "--model", ws.path("lm.bin"), "--prompt", "The cat", "--count", "4", "--seed", "3"});
  CHECK(lines(r.out) == 4);
  r = run({"generate", "--model", ws.path("lm.bin"), "--prompt", "The", "--strategy", "greedy"});
  CHECK(r.out == "cat sat on the mat.\n");
}

TEST_CASE("seed precedence: flag over environment over config file") {
  const Workspace ws;
  REQUIRE(run({"ingest", "--input", ws.path("story.txt"), "--output", ws.path("corpus.jsonl")}).code == 0);
  REQUIRE(run({"train-lm", "--corpus", ws.path("corpus.jsonl"), "--output", ws.path("lm.bin")}).code == 0);
  { std::ofstream(ws.dir / "run.cfg") << "global.seed = 1\n"; }
  auto gen = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"generate", "--model", ws.path("lm.bin"), "--count", "6", "--max-tokens", "12"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args).out;
  };
  const auto cfg1 = gen({"--config", ws.path("run.cfg")});
  const auto flag1 = gen({"--seed", "1"});
  const auto flag2 = gen({"--seed", "2"});
  CHECK(cfg1 == flag1);
  CHECK(flag1 != flag2);
  ::setenv("EVADE_SEED", "2", 1);
  CHECK(gen({"--config", ws.path("run.cfg")}) == flag2);
  CHECK(gen({"--config", ws.path("run.cfg"), "--seed", "1"}) == flag1);
  ::setenv("EVADE_SEED", "bad", 1);
  CHECK(run({"generate", "--model", ws.path("lm.bin")}).code == kExitUsage);
  ::unsetenv("EVADE_SEED");
}

TEST_CASE("unreachable remote scorer exits 3 naming the endpoint") {
  const Workspace ws;
  {
    std::ofstream cfg(ws.dir / "remote.cfg");
    for (const char* task : {"detect", "similarity", "coherence", "logloss", "infill"}) {
      cfg << "scorers." << task << ".backend = remote\n";
      cfg << "scorers." << task << ".endpoint = http://127.0.0.1:1/score\n";
      cfg << "scorers." << task << ".timeout_ms = 500\n";
    }
  }
  const auto r = run({"paraphrase", "--config", ws.path("remote.cfg"), "--text",
                      "the quick brown fox jumps over the lazy dog and then runs back home to rest a while ."});
  CHECK(r.code == kExitScorer);
  CHECK(r.err.find("127.0.0.1:1") != std::string::npos);
}

TEST_CASE("reward score prints every rule") {
  const Workspace ws;
  REQUIRE(run({"ingest", "--input", ws.path("story.txt"), "--output", ws.path("corpus.jsonl"), "--label", "human"})
              .code == 0);
  REQUIRE(run({"train-lm", "--corpus", ws.path("corpus.jsonl"), "--output", ws.path("lm.bin")}).code == 0);
  {
    std::ofstream labeled(ws.dir / "labeled.jsonl");
    labeled << "{\"id\":\"h1\",\"label\":\"human\",\"text\":\"The cat sat on the mat.\"}\n";
    labeled << "{\"id\":\"h2\",\"label\":\"human\",\"text\":\"Birds sang in the morning light.\"}\n";
    labeled << "{\"id\":\"m1\",\"label\":\"machine\",\"text\":\"the the the dog dog.\"}\n";
    labeled << "{\"id\":\"m2\",\"label\":\"machine\",\"text\":\"dog ran ran far far.\"}\n";
  }
  REQUIRE(run({"detect", "--method", "nb", "--train", ws.path("labeled.jsonl"), "--detector",
               ws.path("detector.json")})
              .code == 0);
  const auto r = run({"reward", "score", "--model", ws.path("lm.bin"), "--detector", ws.path("detector.json"),
                      "--reference", ws.path("corpus.jsonl"), "--query", "where is the cat", "--text",
                      "The cat sat on the mat."});
  CHECK(r.code == kExitOk);
  for (const char* field : {"special_chars", "repetition", "acceptability", "dictionary", "emoji_ratio", "emoji_count",
                            "query_repetition", "special_tokens", "same_start", "number_start", "unknown_chars",
                            "detector", "combined"}) {
    CHECK(r.out.find(std::string("\"") + field + "\"") != std::string::npos);
  }
}

TEST_CASE("help text matches the goldens") {
  const std::vector<std::vector<std::string>> commands = {
      {"ingest"}, {"train-lm"}, {"generate"}, {"grid"},     {"detect"},          {"reward", "score"},
      {"adapt"},  {"paraphrase"}, {"trainset"}, {"recursion-report"}};
  const bool update = std::getenv("EVADE_UPDATE_GOLDEN") != nullptr;
  for (auto args : commands) {
    std::string name = args.back();
    args.push_back("--help");
    const auto r = run(args);
    CAPTURE(name);
    CHECK(r.code == kExitOk);
    const std::filesystem::path golden = std::filesystem::path(EVADE_GOLDEN_DIR) / ("help_" + name + ".txt");
    if (update) {
      std::filesystem::create_directories(golden.parent_path());
      std::ofstream(golden, std::ios::binary) << r.out;
      continue;
    }
    REQUIRE(std::filesystem::exists(golden));
    CHECK(r.out == slurp(golden));
  }
}
