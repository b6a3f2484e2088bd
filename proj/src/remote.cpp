#include <atomic>
#include <chrono>
#include <cmath>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/scorers.hpp"

namespace evade {

namespace {

using ordered_json = nlohmann::ordered_json;

std::atomic<std::uint64_t> g_request_counter{0};

[[noreturn]] void protocol_error(const std::string& endpoint, const std::string& what) {
  fail(ErrorKind::ProtocolError, endpoint + ": " + what);
}

}  // namespace

RemoteScorerClient::RemoteScorerClient(ScorerBinding binding) : binding_(std::move(binding)) {
  binding_.validate();
  require(binding_.backend == Backend::Remote, ErrorKind::InvalidArgument, "binding is not remote");
  static const std::regex url(R"(^(?:http://)?([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  require(std::regex_match(binding_.endpoint, m, url), ErrorKind::InvalidArgument,
          "unsupported endpoint '" + binding_.endpoint + "' (expected http://host[:port][/path])");
  host_ = m[1].str();
  port_ = m[2].matched ? std::stoi(m[2].str()) : 80;
  path_ = m[3].matched && m[3].str() != "/" ? m[3].str() : "/score";
}

std::string RemoteScorerClient::next_id() const {
  return "req-" + std::to_string(g_request_counter.fetch_add(1) + 1);
}

std::string RemoteScorerClient::request_body(const std::string& id, ScorerTask task,
                                             std::span<const std::string> texts, std::span<const TextPair> pairs,
                                             std::size_t n_candidates) {
  ordered_json body;
  body["id"] = id;
  body["task"] = std::string(to_string(task));
  switch (task) {
    case ScorerTask::Detect:
    case ScorerTask::Coherence:
    case ScorerTask::LogLoss:
      body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
      break;
    case ScorerTask::Similarity: {
      ordered_json arr = ordered_json::array();
      for (const auto& [a, b] : pairs) arr.push_back(ordered_json::array({a, b}));
      body["pairs"] = std::move(arr);
      break;
    }
    case ScorerTask::Infill:
      body["masked"] = std::vector<std::string>(texts.begin(), texts.end());
      body["n_candidates"] = n_candidates;
      break;
  }
  return body.dump();
}

std::string RemoteScorerClient::post(const std::string& body) const {
  httplib::Client client(host_, port_);
  const auto sec = binding_.timeout_ms / 1000;
  const auto usec = (binding_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path_, body, "application/json");
  if (!res) {
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= binding_.timeout_ms * 9 / 10)) {
      fail(ErrorKind::Timeout, binding_.endpoint + ": no reply within " + std::to_string(binding_.timeout_ms) + " ms");
    }
    fail(ErrorKind::Network, binding_.endpoint + ": " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpStatusError(res->status, binding_.endpoint + ": HTTP status " + std::to_string(res->status));
  }
  return res->body;
}

namespace {

nlohmann::json parse_reply(const std::string& endpoint, const std::string& body, const std::string& id) {
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    protocol_error(endpoint, "reply is not JSON");
  }
  if (!reply.is_object()) protocol_error(endpoint, "reply is not an object");
  if (!reply.contains("id") || !reply["id"].is_string()) protocol_error(endpoint, "reply lacks \"id\"");
  if (reply["id"].get<std::string>() != id) protocol_error(endpoint, "reply id does not match request id");
  return reply;
}

struct Range {
  double lo;
  double hi;
};

Range range_of(ScorerTask task) {
  switch (task) {
    case ScorerTask::Detect:
    case ScorerTask::Coherence: return {0.0, 1.0};
    case ScorerTask::Similarity: return {-1.0, 1.0};
    case ScorerTask::LogLoss: return {0.0, INFINITY};
    case ScorerTask::Infill: break;
  }
  return {-INFINITY, INFINITY};
}

std::vector<double> decode_scores(const std::string& endpoint, const nlohmann::json& reply, std::size_t expected,
                                  ScorerTask task) {
  if (!reply.contains("scores") || !reply["scores"].is_array()) protocol_error(endpoint, "reply lacks \"scores\"");
  const auto& arr = reply["scores"];
  if (arr.size() != expected) {
    protocol_error(endpoint, "expected " + std::to_string(expected) + " scores, got " + std::to_string(arr.size()));
  }
  const Range r = range_of(task);
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number()) protocol_error(endpoint, "score is not a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < r.lo || x > r.hi) {
      protocol_error(endpoint, "score " + std::to_string(x) + " outside the range of task " +
                                   std::string(to_string(task)));
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

std::vector<double> RemoteScorerClient::scores(ScorerTask task, std::span<const std::string> texts) const {
  require(task == ScorerTask::Detect || task == ScorerTask::Coherence || task == ScorerTask::LogLoss,
          ErrorKind::InvalidArgument, "scores() serves detect, coherence and logloss");
  const std::string id = next_id();
  const auto reply = parse_reply(binding_.endpoint, post(request_body(id, task, texts, {}, 0)), id);
  return decode_scores(binding_.endpoint, reply, texts.size(), task);
}

std::vector<double> RemoteScorerClient::pair_scores(std::span<const TextPair> pairs) const {
  const std::string id = next_id();
  const auto reply =
      parse_reply(binding_.endpoint, post(request_body(id, ScorerTask::Similarity, {}, pairs, 0)), id);
  return decode_scores(binding_.endpoint, reply, pairs.size(), ScorerTask::Similarity);
}

std::vector<std::vector<std::string>> RemoteScorerClient::infill(std::span<const std::string> masked,
                                                                 std::size_t n_candidates) const {
  const std::string id = next_id();
  const auto reply =
      parse_reply(binding_.endpoint, post(request_body(id, ScorerTask::Infill, masked, {}, n_candidates)), id);
  if (!reply.contains("candidates") || !reply["candidates"].is_array()) {
    protocol_error(binding_.endpoint, "reply lacks \"candidates\"");
  }
  const auto& arr = reply["candidates"];
  if (arr.size() != masked.size()) {
    protocol_error(binding_.endpoint, "expected " + std::to_string(masked.size()) + " candidate lists, got " +
                                          std::to_string(arr.size()));
  }
  std::vector<std::vector<std::string>> out;
  for (const auto& list : arr) {
    if (!list.is_array()) protocol_error(binding_.endpoint, "candidate list is not an array");
    std::vector<std::string> fills;
    for (const auto& c : list) {
      if (!c.is_string()) protocol_error(binding_.endpoint, "candidate is not a string");
      fills.push_back(c.get<std::string>());
    }
    out.push_back(std::move(fills));
  }
  return out;
}

std::vector<double> RemoteDetector::p_machine(std::span<const std::string> texts) const {
  return client_->scores(ScorerTask::Detect, texts);
}

std::vector<double> RemoteSimilarity::similarity(std::span<const TextPair> pairs) const {
  return client_->pair_scores(pairs);
}

std::vector<double> RemoteCoherence::coherence(std::span<const std::string> texts) const {
  return client_->scores(ScorerTask::Coherence, texts);
}

std::vector<double> RemoteLogLoss::log_loss(std::span<const std::string> texts) const {
  return client_->scores(ScorerTask::LogLoss, texts);
}

std::vector<std::vector<std::string>> RemoteInfill::infill(std::span<const std::string> masked,
                                                           std::size_t n_candidates,
                                                           std::span<const std::vector<std::string>>) const {
  return client_->infill(masked, n_candidates);
}

}  // namespace evade
