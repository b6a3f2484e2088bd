#include "evade/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade {

namespace {

void append_id(std::string& key, TokenId id) {
  char buf[sizeof(TokenId)];
  std::memcpy(buf, &id, sizeof id);
  key.append(buf, sizeof buf);
}

std::string pack(std::span<const TokenId> ids) {
  std::string key;
  key.reserve(ids.size() * sizeof(TokenId));
  for (TokenId id : ids) append_id(key, id);
  return key;
}

std::vector<TokenId> unpack(std::string_view key) {
  std::vector<TokenId> ids(key.size() / sizeof(TokenId));
  std::memcpy(ids.data(), key.data(), ids.size() * sizeof(TokenId));
  return ids;
}

}  // namespace

NgramModel::NgramModel(std::shared_ptr<const Vocabulary> vocab, int order, double alpha)
    : vocab_(std::move(vocab)), order_(order), alpha_(alpha) {
  require(order >= 1 && order <= 6, ErrorKind::InvalidArgument, "order must be in [1, 6]");
  require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::InvalidArgument, "alpha must be > 0");
}

NgramModel NgramModel::train(std::span<const Document> docs, int order, double alpha, std::uint64_t min_count) {
  require(!docs.empty(), ErrorKind::EmptyCorpus, "cannot train on an empty corpus");
  return train(docs, build_vocab(docs, min_count), order, alpha);
}

NgramModel NgramModel::train(std::span<const Document> docs, Vocabulary vocab, int order, double alpha) {
  require(!docs.empty(), ErrorKind::EmptyCorpus, "cannot train on an empty corpus");
  NgramModel model(std::make_shared<const Vocabulary>(std::move(vocab)), order, alpha);
  std::vector<TokenId> seq;
  for (const auto& doc : docs) {
    const auto toks = tokenize(doc.text());
    if (toks.empty()) continue;
    seq.clear();
    seq.push_back(Vocabulary::kBos);
    for (const auto& t : toks) seq.push_back(model.vocab_->id(t));
    seq.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      const std::size_t max_len = std::min<std::size_t>(order - 1, i);
      for (std::size_t len = 0; len <= max_len; ++len) {
        model.add_count(std::span(seq).subspan(i - len, len), seq[i], 1);
      }
    }
  }
  require(!model.ngrams_.empty(), ErrorKind::EmptyCorpus, "no document survives tokenization");
  model.finalize();
  return model;
}

void NgramModel::add_count(std::span<const TokenId> context, TokenId token, std::uint64_t count) {
  std::string key = pack(context);
  append_id(key, token);
  ngrams_[key] += static_cast<std::uint32_t>(count);
}

void NgramModel::finalize() {
  contexts_.clear();
  for (const auto& [key, count] : ngrams_) {
    const std::string ctx = key.substr(0, key.size() - sizeof(TokenId));
    TokenId token;
    std::memcpy(&token, key.data() + ctx.size(), sizeof token);
    Node& node = contexts_[ctx];
    node.total += count;
    node.followers.push_back({token, count});
  }
  for (auto& [ctx, node] : contexts_) {
    std::sort(node.followers.begin(), node.followers.end(), [](const Follower& a, const Follower& b) {
      return a.count != b.count ? a.count > b.count : a.token < b.token;
    });
  }
}

NgramModel::ContextView NgramModel::lookup(std::span<const TokenId> context) const {
  std::size_t len = std::min<std::size_t>(order_ - 1, context.size());
  for (;; --len) {
    const auto suffix = context.subspan(context.size() - len, len);
    if (auto it = contexts_.find(pack(suffix)); it != contexts_.end() && it->second.total > 0) {
      return {it->second.followers, it->second.total, len};
    }
    if (len == 0) break;
  }
  return {};
}

std::uint64_t NgramModel::count_of(std::span<const TokenId> context, TokenId token) const {
  std::string key = pack(context);
  append_id(key, token);
  auto it = ngrams_.find(key);
  return it == ngrams_.end() ? 0 : it->second;
}

std::vector<double> NgramModel::next_distribution(std::span<const TokenId> context) const {
  const ContextView view = lookup(context);
  const double v = static_cast<double>(vocab_size());
  const double denom = static_cast<double>(view.total) + alpha_ * v;
  std::vector<double> probs(vocab_size(), alpha_ / denom);
  for (const auto& f : view.followers) probs[f.token] = (static_cast<double>(f.count) + alpha_) / denom;
  return probs;
}

double NgramModel::prob(std::span<const TokenId> context, TokenId token) const {
  const ContextView view = lookup(context);
  const auto suffix = context.subspan(context.size() - view.length, view.length);
  const double c = static_cast<double>(count_of(suffix, token));
  return (c + alpha_) / (static_cast<double>(view.total) + alpha_ * static_cast<double>(vocab_size()));
}

double NgramModel::log_prob(std::span<const TokenId> context, TokenId token) const {
  return std::log(prob(context, token));
}

std::vector<TokenId> NgramModel::encode(std::string_view text) const {
  const auto toks = tokenize(text);
  return vocab_->encode(toks);
}

double NgramModel::sentence_log_prob(std::span<const TokenId> tokens) const {
  std::vector<TokenId> seq;
  seq.reserve(tokens.size() + 1);
  seq.push_back(Vocabulary::kBos);
  double total = 0.0;
  for (TokenId t : tokens) {
    total += log_prob(seq, t);
    seq.push_back(t);
  }
  return total;
}

NgramModel::Score NgramModel::score(std::string_view text) const {
  Score s;
  for (const auto& sentence : split_sentences(text)) {
    const auto ids = encode(sentence);
    s.log_prob += sentence_log_prob(ids);
    s.tokens += ids.size();
  }
  return s;
}

double NgramModel::log_loss(std::string_view text) const {
  const Score s = score(text);
  require(s.tokens > 0, ErrorKind::EmptyText, "log_loss needs at least one token");
  return -s.log_prob / static_cast<double>(s.tokens);
}

void NgramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  nlohmann::json header;
  header["order"] = order_;
  header["alpha"] = alpha_;
  header["vocab"] = vocab_->tokens();
  std::vector<std::uint64_t> counts(vocab_->size());
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = vocab_->count(static_cast<TokenId>(i));
  header["counts"] = counts;
  out << header.dump() << '\n';

  std::vector<const std::pair<const std::string, std::uint32_t>*> rows;
  rows.reserve(ngrams_.size());
  for (const auto& kv : ngrams_) rows.push_back(&kv);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
    return a->first.size() != b->first.size() ? a->first.size() < b->first.size() : a->first < b->first;
  });
  for (const auto* row : rows) {
    const auto ids = unpack(row->first);
    nlohmann::json line;
    nlohmann::json ctx = nlohmann::json::array();
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) ctx.push_back(vocab_->token(ids[i]));
    line["context"] = std::move(ctx);
    line["token"] = vocab_->token(ids.back());
    line["count"] = row->second;
    out << line.dump() << '\n';
  }
}

NgramModel NgramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Io, "empty model file " + path.string());
  try {
    const auto header = nlohmann::json::parse(line);
    const auto tokens = header.at("vocab").get<std::vector<std::string>>();
    const auto counts = header.value("counts", std::vector<std::uint64_t>(tokens.size(), 0));
    require(tokens.size() >= Vocabulary::kReserved && tokens[0] == kUnkToken && tokens[1] == kBosToken &&
                tokens[2] == kEosToken,
            ErrorKind::Io, "model vocabulary lacks reserved tokens");
    Vocabulary vocab;
    for (std::size_t i = 0; i < tokens.size(); ++i) vocab.add(tokens[i], i < counts.size() ? counts[i] : 0);
    NgramModel model(std::make_shared<const Vocabulary>(std::move(vocab)), header.at("order").get<int>(),
                     header.at("alpha").get<double>());
    std::vector<TokenId> ctx;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto row = nlohmann::json::parse(line);
      ctx.clear();
      for (const auto& t : row.at("context")) {
        const auto id = model.vocab_->find(t.get<std::string>());
        require(id.has_value(), ErrorKind::Io, "model context token not in vocabulary");
        ctx.push_back(*id);
      }
      require(ctx.size() < static_cast<std::size_t>(model.order_), ErrorKind::Io, "context longer than order - 1");
      const auto token = model.vocab_->find(row.at("token").get<std::string>());
      require(token.has_value(), ErrorKind::Io, "model token not in vocabulary");
      model.add_count(ctx, *token, row.at("count").get<std::uint64_t>());
    }
    require(!model.ngrams_.empty(), ErrorKind::Io, "model file has no counts");
    model.finalize();
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed model file: ") + e.what());
  }
}

}  // namespace evade
