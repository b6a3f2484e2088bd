#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/scorers.hpp"
#include "stub_server.hpp"

using namespace evade;
using nlohmann::json;

namespace {

std::shared_ptr<const RemoteScorerClient> client_for(const stub::Server& s, ScorerTask task, int timeout_ms = 2000) {
  ScorerBinding b;
  b.task = task;
  b.backend = Backend::Remote;
  b.endpoint = s.endpoint();
  b.timeout_ms = timeout_ms;
  return std::make_shared<const RemoteScorerClient>(b);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("request bodies are byte-exact") {
  const std::vector<std::string> texts = {"a", "b"};
  CHECK(RemoteScorerClient::request_body("req-1", ScorerTask::Detect, texts, {}, 0) ==
        R"({"id":"req-1","task":"detect","texts":["a","b"]})");
  CHECK(RemoteScorerClient::request_body("r", ScorerTask::Coherence, texts, {}, 0) ==
        R"({"id":"r","task":"coherence","texts":["a","b"]})");
  CHECK(RemoteScorerClient::request_body("r", ScorerTask::LogLoss, texts, {}, 0) ==
        R"({"id":"r","task":"logloss","texts":["a","b"]})");
  const std::vector<TextPair> pairs = {{"x", "y"}};
  CHECK(RemoteScorerClient::request_body("r", ScorerTask::Similarity, {}, pairs, 0) ==
        R"({"id":"r","task":"similarity","pairs":[["x","y"]]})");
  const std::vector<std::string> masked = {"a ⟨mask⟩ c"};
  CHECK(RemoteScorerClient::request_body("r", ScorerTask::Infill, masked, {}, 3) ==
        R"({"id":"r","task":"infill","masked":["a ⟨mask⟩ c"],"n_candidates":3})");
}

TEST_CASE("round trip for every task") {
  stub::Server server([](const json& req) { return stub::constant_scores(req, 0.37); });
  const std::vector<std::string> texts = {"one", "two"};
  CHECK(RemoteDetector(client_for(server, ScorerTask::Detect)).p_machine(texts) == std::vector<double>{0.37, 0.37});
  CHECK(RemoteCoherence(client_for(server, ScorerTask::Coherence))("x") == 0.37);
  CHECK(RemoteLogLoss(client_for(server, ScorerTask::LogLoss)).log_loss(texts).size() == 2);
  CHECK(RemoteSimilarity(client_for(server, ScorerTask::Similarity))("a", "b") == 0.37);
  const std::vector<std::string> masked = {"a ⟨mask⟩ c", "⟨mask⟩ d"};
  const auto fills = RemoteInfill(client_for(server, ScorerTask::Infill)).infill(masked, 2);
  CHECK(fills == std::vector<std::vector<std::string>>{{"a x c"}, {"x d"}});

  const auto bodies = server.bodies();
  REQUIRE(bodies.size() == 5);
  const auto first = json::parse(bodies[0]);
  CHECK(first["task"] == "detect");
  CHECK(first["texts"] == json::array({"one", "two"}));
  CHECK_FALSE(first.contains("pairs"));
  CHECK_FALSE(first.contains("masked"));
  CHECK(json::parse(bodies[3]).contains("pairs"));
  CHECK(json::parse(bodies[4])["n_candidates"] == 2);
}

TEST_CASE("stub returning two verdicts for two texts") {
  stub::Server server([](const json& req) {
    return stub::Reply{200, json{{"id", req["id"]}, {"scores", {0.1, 0.9}}}.dump(), 0};
  });
  const std::vector<std::string> texts = {"a", "b"};
  CHECK(client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts) == std::vector<double>{0.1, 0.9});
}

TEST_CASE("protocol errors") {
  const std::vector<std::string> texts = {"a", "b"};
  {
    stub::Server server([](const json& req) {
      return stub::Reply{200, json{{"id", req["id"]}, {"scores", {0.5}}}.dump(), 0};
    });
    CHECK(kind_of([&] { client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts); }) ==
          ErrorKind::ProtocolError);
    const std::vector<std::string> masked = {"⟨mask⟩", "⟨mask⟩"};
    CHECK(kind_of([&] { client_for(server, ScorerTask::Infill)->infill(masked, 1); }) == ErrorKind::ProtocolError);
  }
  {
    stub::Server server([](const json& req) {
      return stub::Reply{200, json{{"id", req["id"]}, {"scores", {0.5, 1.5}}}.dump(), 0};
    });
    CHECK(kind_of([&] { client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts); }) ==
          ErrorKind::ProtocolError);
  }
  {
    stub::Server server([](const json&) { return stub::Reply{200, R"({"id":"other","scores":[0,0]})", 0}; });
    CHECK(kind_of([&] { client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts); }) ==
          ErrorKind::ProtocolError);
  }
  {
    stub::Server server([](const json&) { return stub::Reply{200, "not json", 0}; });
    CHECK(kind_of([&] { client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts); }) ==
          ErrorKind::ProtocolError);
  }
  {
    stub::Server server([](const json& req) { return stub::Reply{200, json{{"id", req["id"]}}.dump(), 0}; });
    CHECK(kind_of([&] { client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, texts); }) ==
          ErrorKind::ProtocolError);
  }
}

TEST_CASE("http status and timeout") {
  {
    stub::Server server([](const json&) { return stub::Reply{503, "busy", 0}; });
    try {
      client_for(server, ScorerTask::Detect)->scores(ScorerTask::Detect, std::vector<std::string>{"a"});
      FAIL("expected HttpStatus");
    } catch (const HttpStatusError& e) {
      CHECK(e.status() == 503);
      CHECK(e.kind() == ErrorKind::HttpStatus);
    }
  }
  {
    stub::Server server([](const json& req) {
      auto r = stub::constant_scores(req, 0.5);
      r.delay_ms = 600;
      return r;
    });
    CHECK(kind_of([&] {
            client_for(server, ScorerTask::Detect, 200)->scores(ScorerTask::Detect, std::vector<std::string>{"a"});
          }) == ErrorKind::Timeout);
  }
}

TEST_CASE("unreachable endpoint and bad URLs") {
  ScorerBinding b;
  b.backend = Backend::Remote;
  b.endpoint = "http://127.0.0.1:1/score";
  b.timeout_ms = 500;
  const RemoteScorerClient c(b);
  try {
    c.scores(ScorerTask::Detect, std::vector<std::string>{"a"});
    FAIL("expected a network error");
  } catch (const Error& e) {
    CHECK((e.kind() == ErrorKind::Network || e.kind() == ErrorKind::Timeout));
    CHECK(std::string(e.what()).find("http://127.0.0.1:1/score") != std::string::npos);
  }
  b.endpoint = "ftp://x";
  CHECK_THROWS_AS(RemoteScorerClient{b}, Error);
}
