#include "evade/naive_bayes.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/parallel.hpp"

namespace evade {

Metrics compute_metrics(std::span<const Label> truth, std::span<const Label> predicted) {
  require(truth.size() == predicted.size(), ErrorKind::InvalidArgument, "label vectors differ in length");
  require(!truth.empty(), ErrorKind::InvalidArgument, "no labels");
  Metrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i] == Label::Machine;
    const bool guess = predicted[i] == Label::Machine;
    if (actual && guess) ++m.tp;
    else if (!actual && guess) ++m.fp;
    else if (!actual && !guess) ++m.tn;
    else ++m.fn;
  }
  const auto n = static_cast<double>(truth.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

NaiveBayesModel NaiveBayesModel::train(std::span<const Document> docs, double alpha, double threshold) {
  require(alpha > 0.0, ErrorKind::InvalidArgument, "alpha must be > 0");
  require(threshold > 0.0 && threshold < 1.0, ErrorKind::InvalidArgument, "threshold must be in (0, 1)");
  std::size_t n_human = 0;
  std::size_t n_machine = 0;
  for (const auto& d : docs) {
    if (d.label() == Label::Human) ++n_human;
    if (d.label() == Label::Machine) ++n_machine;
  }
  require(n_human > 0 && n_machine > 0, ErrorKind::MissingClass, "training needs both human and machine documents");

  std::vector<Document> labeled;
  for (const auto& d : docs) {
    if (d.label() != Label::Unlabeled) labeled.push_back(d);
  }
  NaiveBayesModel model;
  model.vocab_ = std::make_shared<const Vocabulary>(build_vocab(labeled, 1));
  model.alpha_ = alpha;
  model.threshold_ = threshold;
  const auto total = static_cast<double>(n_human + n_machine);
  model.log_prior_human_ = std::log(static_cast<double>(n_human) / total);
  model.log_prior_machine_ = std::log(static_cast<double>(n_machine) / total);

  const std::size_t v = model.vocab_->size();
  std::vector<double> count_h(v, 0.0);
  std::vector<double> count_m(v, 0.0);
  double sum_h = 0.0;
  double sum_m = 0.0;
  for (const auto& d : labeled) {
    auto& counts = d.label() == Label::Human ? count_h : count_m;
    double& sum = d.label() == Label::Human ? sum_h : sum_m;
    for (const auto& t : tokenize(d.text())) {
      counts[model.vocab_->id(t)] += 1.0;
      sum += 1.0;
    }
  }
  const auto features = static_cast<double>(model.feature_count());
  model.ll_human_.assign(v, 0.0);
  model.ll_machine_.assign(v, 0.0);
  for (std::size_t i = Vocabulary::kReserved; i < v; ++i) {
    model.ll_human_[i] = std::log((count_h[i] + alpha) / (sum_h + alpha * features));
    model.ll_machine_[i] = std::log((count_m[i] + alpha) / (sum_m + alpha * features));
  }
  return model;
}

double NaiveBayesModel::log_prior(Label label) const {
  require(label != Label::Unlabeled, ErrorKind::InvalidArgument, "no prior for unlabeled");
  return label == Label::Human ? log_prior_human_ : log_prior_machine_;
}

double NaiveBayesModel::log_likelihood(Label label, std::string_view token) const {
  require(label != Label::Unlabeled, ErrorKind::InvalidArgument, "no likelihood for unlabeled");
  const TokenId id = vocab_->id(token);
  return label == Label::Human ? ll_human_[id] : ll_machine_[id];
}

DetectionVerdict NaiveBayesModel::predict(std::string_view text) const {
  const auto toks = tokenize(text);
  require(!toks.empty(), ErrorKind::EmptyText, "cannot classify empty text");
  // Reserved slots hold 0, so out-of-vocabulary tokens carry no evidence.
  double log_odds = log_prior_machine_ - log_prior_human_;
  for (const auto& t : toks) {
    const TokenId id = vocab_->id(t);
    log_odds += ll_machine_[id] - ll_human_[id];
  }
  DetectionVerdict v;
  v.score = log_odds;
  v.p_machine = 1.0 / (1.0 + std::exp(-log_odds));
  v.label = v.p_machine >= threshold_ ? Label::Machine : Label::Human;
  return v;
}

std::vector<DetectionVerdict> NaiveBayesModel::predict_batch(std::span<const std::string> texts) const {
  std::vector<DetectionVerdict> out(texts.size());
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slot.run([&] { out[i] = predict(texts[i]); });
  }
  slot.rethrow();
  return out;
}

std::vector<DetectionVerdict> NaiveBayesModel::predict_batch_serial(std::span<const std::string> texts) const {
  std::vector<DetectionVerdict> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(predict(t));
  return out;
}

Metrics NaiveBayesModel::evaluate(std::span<const Document> docs) const {
  std::vector<std::string> texts;
  std::vector<Label> truth;
  bool has_human = false;
  bool has_machine = false;
  for (const auto& d : docs) {
    if (d.label() == Label::Unlabeled) continue;
    texts.push_back(d.text());
    truth.push_back(d.label());
    has_human |= d.label() == Label::Human;
    has_machine |= d.label() == Label::Machine;
  }
  require(has_human && has_machine, ErrorKind::MissingClass, "evaluation needs both classes");
  const auto verdicts = predict_batch(texts);
  std::vector<Label> predicted;
  predicted.reserve(verdicts.size());
  for (const auto& v : verdicts) predicted.push_back(v.label);
  return compute_metrics(truth, predicted);
}

void NaiveBayesModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "evade-nb-1";
  j["alpha"] = alpha_;
  j["threshold"] = threshold_;
  j["log_prior_human"] = log_prior_human_;
  j["log_prior_machine"] = log_prior_machine_;
  std::vector<std::string> tokens(vocab_->tokens().begin() + Vocabulary::kReserved, vocab_->tokens().end());
  std::vector<std::uint64_t> counts;
  for (std::size_t i = Vocabulary::kReserved; i < vocab_->size(); ++i) counts.push_back(vocab_->count(i));
  j["tokens"] = tokens;
  j["counts"] = counts;
  j["ll_human"] = std::vector<double>(ll_human_.begin() + Vocabulary::kReserved, ll_human_.end());
  j["ll_machine"] = std::vector<double>(ll_machine_.begin() + Vocabulary::kReserved, ll_machine_.end());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump() << '\n';
}

NaiveBayesModel NaiveBayesModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
  require(j.value("format", "") == "evade-nb-1", ErrorKind::Io, path.string() + ": not a Naive Bayes model");
  try {
    NaiveBayesModel m;
    m.alpha_ = j.at("alpha").get<double>();
    m.threshold_ = j.at("threshold").get<double>();
    m.log_prior_human_ = j.at("log_prior_human").get<double>();
    m.log_prior_machine_ = j.at("log_prior_machine").get<double>();
    const auto tokens = j.at("tokens").get<std::vector<std::string>>();
    const auto counts = j.at("counts").get<std::vector<std::uint64_t>>();
    const auto ll_h = j.at("ll_human").get<std::vector<double>>();
    const auto ll_m = j.at("ll_machine").get<std::vector<double>>();
    require(counts.size() == tokens.size() && ll_h.size() == tokens.size() && ll_m.size() == tokens.size(),
            ErrorKind::Io, path.string() + ": array lengths differ");
    Vocabulary vocab;
    for (std::size_t i = 0; i < tokens.size(); ++i) vocab.add(tokens[i], counts[i]);
    require(vocab.size() == tokens.size() + Vocabulary::kReserved, ErrorKind::Io,
            path.string() + ": duplicate tokens");
    m.vocab_ = std::make_shared<const Vocabulary>(std::move(vocab));
    m.ll_human_.assign(Vocabulary::kReserved, 0.0);
    m.ll_machine_.assign(Vocabulary::kReserved, 0.0);
    m.ll_human_.insert(m.ll_human_.end(), ll_h.begin(), ll_h.end());
    m.ll_machine_.insert(m.ll_machine_.end(), ll_m.begin(), ll_m.end());
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

}  // namespace evade
