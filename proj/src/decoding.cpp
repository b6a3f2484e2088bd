#include "evade/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evade/compact_dist.hpp"
#include "evade/error.hpp"
#include "evade/parallel.hpp"

namespace evade {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Greedy: return "greedy";
    case Strategy::Random: return "random";
    case Strategy::TopK: return "top_k";
    case Strategy::Nucleus: return "nucleus";
    case Strategy::Typical: return "typical";
  }
  return "random";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "greedy") return Strategy::Greedy;
  if (s == "random") return Strategy::Random;
  if (s == "top_k" || s == "top-k" || s == "topk") return Strategy::TopK;
  if (s == "nucleus" || s == "top_p" || s == "top-p") return Strategy::Nucleus;
  if (s == "typical") return Strategy::Typical;
  fail(ErrorKind::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

void GenerationConfig::validate() const {
  if (!(temperature > 0.0)) fail(ErrorKind::ZeroTemperature, "temperature must be > 0");
  require(temperature <= 2.0, ErrorKind::InvalidArgument, "temperature must be <= 2");
  require(top_k >= 1, ErrorKind::InvalidArgument, "top_k must be >= 1");
  require(top_p > 0.0 && top_p <= 1.0, ErrorKind::InvalidArgument, "top_p must be in (0, 1]");
  require(typical_mass > 0.0 && typical_mass <= 1.0, ErrorKind::InvalidArgument, "typical_mass must be in (0, 1]");
  require(max_tokens >= 1, ErrorKind::InvalidArgument, "max_tokens must be >= 1");
}

void check_distribution(std::span<const double> d) {
  require(!d.empty(), ErrorKind::InvalidArgument, "empty distribution");
  double sum = 0.0;
  for (double p : d) {
    require(p >= 0.0 && std::isfinite(p), ErrorKind::InvalidArgument, "distribution has a negative or non-finite entry");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::InvalidArgument, "distribution does not sum to 1");
}

namespace {

TokenDistribution normalized(TokenDistribution d) {
  const double sum = std::accumulate(d.begin(), d.end(), 0.0);
  for (double& p : d) p /= sum;
  return d;
}

// Indices ordered by probability descending, index ascending.
std::vector<std::size_t> descending_order(std::span<const double> d) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  return order;
}

TokenDistribution keep_only(std::span<const double> d, std::span<const std::size_t> keep) {
  TokenDistribution out(d.size(), 0.0);
  for (std::size_t i : keep) out[i] = d[i];
  return normalized(std::move(out));
}

}  // namespace

TokenDistribution apply_temperature(std::span<const double> d, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::ZeroTemperature, "temperature must be > 0");
  check_distribution(d);
  double max_log = -INFINITY;
  for (double p : d) {
    if (p > 0.0) max_log = std::max(max_log, std::log(p));
  }
  TokenDistribution out(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) out[i] = std::exp((std::log(d[i]) - max_log) / tau);
  }
  return normalized(std::move(out));
}

TokenDistribution truncate_top_k(std::span<const double> d, std::size_t k) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  check_distribution(d);
  if (k >= d.size()) return TokenDistribution(d.begin(), d.end());
  const auto order = descending_order(d);
  return keep_only(d, std::span(order).first(k));
}

TokenDistribution truncate_nucleus(std::span<const double> d, double p) {
  require(p > 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "p must be in (0, 1]");
  check_distribution(d);
  const auto order = descending_order(d);
  double cum = 0.0;
  std::size_t n = 0;
  while (n < order.size()) {
    cum += d[order[n]];
    ++n;
    if (cum >= p - 1e-12) break;
  }
  return keep_only(d, std::span(order).first(n));
}

TokenDistribution truncate_typical(std::span<const double> d, double mass) {
  require(mass > 0.0 && mass <= 1.0, ErrorKind::InvalidArgument, "mass must be in (0, 1]");
  check_distribution(d);
  double entropy = 0.0;
  for (double p : d) {
    if (p > 0.0) entropy -= p * std::log(p);
  }
  // Deviations are compared on a 1e-9 grid so analytically equal values tie.
  std::vector<std::pair<long long, std::size_t>> keyed;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    keyed.emplace_back(std::llround(std::abs(-std::log(d[i]) - entropy) * 1e9), i);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> keep;
  double cum = 0.0;
  for (const auto& [key, i] : keyed) {
    keep.push_back(i);
    cum += d[i];
    if (cum >= mass - 1e-12) break;
  }
  return keep_only(d, keep);
}

TokenDistribution truncate(std::span<const double> d, const GenerationConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::TopK: return truncate_top_k(d, cfg.top_k);
    case Strategy::Nucleus: return truncate_nucleus(d, cfg.top_p);
    case Strategy::Typical: return truncate_typical(d, cfg.typical_mass);
    case Strategy::Greedy:
    case Strategy::Random: break;
  }
  return TokenDistribution(d.begin(), d.end());
}

std::size_t argmax(std::span<const double> d) {
  require(!d.empty(), ErrorKind::InvalidArgument, "empty distribution");
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

std::size_t sample_index(std::span<const double> d, double u) {
  const auto order = descending_order(d);
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  const double target = u * total;
  double cum = 0.0;
  std::size_t last = order.front();
  for (std::size_t i : order) {
    if (d[i] <= 0.0) break;
    cum += d[i];
    last = i;
    if (target < cum) return i;
  }
  return last;
}

bool LogitBias::is_identity() const noexcept {
  return temperature_offset == 0.0 && std::all_of(bias.begin(), bias.end(), [](double b) { return b == 0.0; });
}

double effective_temperature(double tau, const LogitBias* bias) {
  if (bias == nullptr) return tau;
  return std::clamp(tau + bias->temperature_offset, 0.05, 2.0);
}

namespace {

constexpr TokenId kGenerationMasked[] = {Vocabulary::kUnk, Vocabulary::kBos};

std::vector<TokenId> with_bos(std::span<const TokenId> prompt) {
  std::vector<TokenId> seq;
  seq.reserve(prompt.size() + 64);
  seq.push_back(Vocabulary::kBos);
  seq.insert(seq.end(), prompt.begin(), prompt.end());
  return seq;
}

}  // namespace

std::vector<TokenId> generate_ids(const NgramModel& model, std::span<const TokenId> prompt, const GenerationConfig& cfg,
                                  const LogitBias* bias, Rng& rng) {
  cfg.validate();
  const double tau = effective_temperature(cfg.temperature, bias);
  std::vector<TokenId> seq = with_bos(prompt);
  std::vector<TokenId> out;
  while (out.size() < cfg.max_tokens) {
    CompactDist d = CompactDist::build(model, seq, kGenerationMasked, bias, tau);
    TokenId next;
    if (cfg.strategy == Strategy::Greedy) {
      next = d.argmax();
    } else {
      d.truncate(cfg);
      next = d.sample(uniform01(rng));
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

std::vector<TokenId> generate_ids_dense(const NgramModel& model, std::span<const TokenId> prompt,
                                        const GenerationConfig& cfg, const LogitBias* bias, Rng& rng) {
  cfg.validate();
  const double tau = effective_temperature(cfg.temperature, bias);
  std::vector<TokenId> seq = with_bos(prompt);
  std::vector<TokenId> out;
  while (out.size() < cfg.max_tokens) {
    TokenDistribution d = model.next_distribution(seq);
    for (TokenId m : kGenerationMasked) d[m] = 0.0;
    if (bias != nullptr) {
      for (std::size_t j = 0; j < bias->bias.size() && Vocabulary::kReserved + j < d.size(); ++j) {
        d[Vocabulary::kReserved + j] *= std::exp(bias->bias[j]);
      }
    }
    d = apply_temperature(normalized(std::move(d)), tau);
    TokenId next;
    if (cfg.strategy == Strategy::Greedy) {
      next = static_cast<TokenId>(argmax(d));
    } else {
      d = truncate(d, cfg);
      next = static_cast<TokenId>(sample_index(d, uniform01(rng)));
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

namespace {

std::string render(const NgramModel& model, std::span<const TokenId> ids) {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (TokenId id : ids) toks.push_back(model.vocab().token(id));
  return detokenize(toks);
}

}  // namespace

std::string generate(const NgramModel& model, std::string_view prompt, const GenerationConfig& cfg,
                     const LogitBias* bias) {
  Rng rng(cfg.seed);
  const auto prompt_ids = model.encode(prompt);
  return render(model, generate_ids(model, prompt_ids, cfg, bias, rng));
}

std::vector<std::string> generate_batch(const NgramModel& model, std::span<const std::string> prompts,
                                        const GenerationConfig& cfg, const LogitBias* bias) {
  cfg.validate();
  std::vector<std::string> out(prompts.size());
  const auto n = static_cast<std::ptrdiff_t>(prompts.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slot.run([&] {
      Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
      const auto prompt_ids = model.encode(prompts[i]);
      out[i] = render(model, generate_ids(model, prompt_ids, cfg, bias, rng));
    });
  }
  slot.rethrow();
  return out;
}

std::vector<std::string> generate_batch_serial(const NgramModel& model, std::span<const std::string> prompts,
                                               const GenerationConfig& cfg, const LogitBias* bias) {
  cfg.validate();
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Rng rng(mix_seed(cfg.seed, i));
    const auto prompt_ids = model.encode(prompts[i]);
    out.push_back(render(model, generate_ids(model, prompt_ids, cfg, bias, rng)));
  }
  return out;
}

}  // namespace evade
