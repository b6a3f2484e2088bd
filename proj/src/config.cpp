#include "evade/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "evade/error.hpp"
#include "evade/text.hpp"

namespace evade {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size() && !v.empty(), ErrorKind::Config,
          std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size() && !v.empty(), ErrorKind::Config,
          std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size() && !v.empty(), ErrorKind::Config,
          std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(ErrorKind::Config, std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

// Rethrows library validation errors as configuration errors.
template <class F>
auto as_config(std::string_view key, F f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    fail(ErrorKind::Config, std::string(key) + ": " + e.what());
  }
}

std::vector<Key> schema(AppConfig& c, const std::filesystem::path& base) {
  std::vector<Key> k;
  auto dbl = [&](std::string name, double& ref) {
    k.push_back({name, [&ref] { return num(ref); }, [&ref, name](std::string_view v) { ref = to_double(name, v); }});
  };
  auto size = [&](std::string name, std::size_t& ref) {
    k.push_back({name, [&ref] { return std::to_string(ref); },
                 [&ref, name](std::string_view v) { ref = static_cast<std::size_t>(to_uint(name, v)); }});
  };
  auto u64 = [&](std::string name, std::uint64_t& ref) {
    k.push_back({name, [&ref] { return std::to_string(ref); }, [&ref, name](std::string_view v) { ref = to_uint(name, v); }});
  };
  auto integer = [&](std::string name, int& ref) {
    k.push_back({name, [&ref] { return std::to_string(ref); }, [&ref, name](std::string_view v) { ref = to_int(name, v); }});
  };
  auto flag = [&](std::string name, bool& ref) {
    k.push_back({name, [&ref] { return std::string(ref ? "true" : "false"); },
                 [&ref, name](std::string_view v) { ref = to_bool(name, v); }});
  };
  auto path = [&](std::string name, std::filesystem::path& ref) {
    k.push_back({name, [&ref] { return ref.string(); }, [&ref, base](std::string_view v) {
                   std::filesystem::path p{std::string(v)};
                   ref = p.is_relative() && !base.empty() ? base / p : p;
                 }});
  };

  // The global seed is applied before every other key, see parse_config.
  u64("global.seed", c.seed);
  size("global.jobs", c.jobs);

  path("paths.corpus", c.paths.corpus);
  path("paths.models", c.paths.models);
  path("paths.outputs", c.paths.outputs);

  integer("lm.order", c.lm.order);
  dbl("lm.alpha", c.lm.alpha);
  u64("lm.min_count", c.lm.min_count);

  dbl("detector.alpha", c.detector.alpha);
  dbl("detector.threshold", c.detector.threshold);

  for (auto task : {ScorerTask::Detect, ScorerTask::Similarity, ScorerTask::Coherence, ScorerTask::LogLoss,
                    ScorerTask::Infill}) {
    auto& b = c.scorers[static_cast<std::size_t>(task)];
    const std::string prefix = "scorers." + std::string(to_string(task)) + ".";
    const std::string name = prefix + "backend";
    k.push_back({name, [&b] { return std::string(to_string(b.backend)); },
                 [&b, name](std::string_view v) { b.backend = as_config(name, [&] { return parse_backend(v); }); }});
    k.push_back({prefix + "endpoint", [&b] { return b.endpoint; }, [&b](std::string_view v) { b.endpoint = v; }});
    integer(prefix + "timeout_ms", b.timeout_ms);
  }
  dbl("coherence.sharpness", c.coherence_sharpness);

  auto& g = c.generation;
  k.push_back({"generation.strategy", [&g] { return std::string(to_string(g.strategy)); }, [&g](std::string_view v) {
                 g.strategy = as_config("generation.strategy", [&] { return parse_strategy(v); });
               }});
  dbl("generation.temperature", g.temperature);
  size("generation.top_k", g.top_k);
  dbl("generation.top_p", g.top_p);
  dbl("generation.typical_mass", g.typical_mass);
  size("generation.max_tokens", g.max_tokens);
  u64("generation.seed", g.seed);

  auto& r = c.reward;
  dbl("reward.special_char_threshold", r.special_char_threshold);
  integer("reward.repetition_start", r.repetition_start);
  integer("reward.repetition_max", r.repetition_max);
  dbl("reward.acceptability_threshold", r.acceptability_threshold);
  dbl("reward.dictionary_threshold", r.dictionary_threshold);
  dbl("reward.emoji_ratio_threshold", r.emoji_ratio_threshold);
  integer("reward.emoji_count_threshold", r.emoji_count_threshold);
  dbl("reward.emoji_count_step", r.emoji_count_step);
  dbl("reward.query_overlap_threshold", r.query_overlap_threshold);
  integer("reward.special_token_allowance", r.special_token_allowance);
  dbl("reward.special_token_step", r.special_token_step);
  dbl("reward.batch_start_low", r.batch_start_low);
  dbl("reward.batch_start_high", r.batch_start_high);
  dbl("reward.unknown_char_base", r.unknown_char_base);
  dbl("reward.unknown_char_step", r.unknown_char_step);
  dbl("reward.evasion_scale", r.evasion_scale);
  flag("reward.raw_logit", r.raw_logit);
  k.push_back({"reward.special_token_markers", [&r] { return join(r.special_token_markers, [](auto& s) { return s; }); },
               [&r](std::string_view v) { r.special_token_markers = split_list(v); }});
  k.push_back({"reward.unknown_chars", [&r] { return text::encode_utf8(r.unknown_chars); },
               [&r](std::string_view v) { r.unknown_chars = text::decode_utf8(v); }});

  auto& l = c.loop;
  size("loop.iterations", l.iterations);
  size("loop.population_size", l.population_size);
  dbl("loop.elite_fraction", l.elite_fraction);
  size("loop.batch_size", l.batch_size);
  dbl("loop.kl_weight", l.kl_weight);
  size("loop.bias_size", l.bias_size);
  dbl("loop.bias_cap", l.bias_cap);
  dbl("loop.bias_scale", l.bias_scale);
  dbl("loop.temperature_scale", l.temperature_scale);
  dbl("loop.scale_decay", l.scale_decay);
  size("loop.plateau_window", l.plateau_window);
  dbl("loop.plateau_tolerance", l.plateau_tolerance);
  size("loop.probe_count", l.probe_count);

  auto& gr = c.grid;
  k.push_back({"grid.temperatures", [&gr] { return join(gr.temperatures, num); }, [&gr](std::string_view v) {
                 gr.temperatures.clear();
                 for (const auto& s : split_list(v)) gr.temperatures.push_back(to_double("grid.temperatures", s));
               }});
  k.push_back({"grid.strategies",
               [&gr] { return join(gr.strategies, [](Strategy s) { return std::string(to_string(s)); }); },
               [&gr](std::string_view v) {
                 gr.strategies.clear();
                 for (const auto& s : split_list(v)) {
                   gr.strategies.push_back(as_config("grid.strategies", [&] { return parse_strategy(s); }));
                 }
               }});
  k.push_back({"grid.sample_sizes", [&gr] { return join(gr.sample_sizes, [](std::size_t n) { return std::to_string(n); }); },
               [&gr](std::string_view v) {
                 gr.sample_sizes.clear();
                 for (const auto& s : split_list(v)) {
                   gr.sample_sizes.push_back(static_cast<std::size_t>(to_uint("grid.sample_sizes", s)));
                 }
               }});
  size("grid.replications", gr.replications);
  dbl("grid.nb_alpha", gr.nb_alpha);

  auto& p = c.paraphrase;
  dbl("paraphrase.mask_budget", p.mask_budget);
  size("paraphrase.mask_samples", p.mask_samples);
  size("paraphrase.fills_per_plan", p.fills_per_plan);
  dbl("paraphrase.similarity_threshold", p.similarity_threshold);
  dbl("paraphrase.coherence_threshold", p.coherence_threshold);
  dbl("paraphrase.coherence_delta", p.coherence_delta);
  k.push_back({"paraphrase.gazetteer",
               [&p] {
                 std::vector<std::string> words(p.gazetteer.begin(), p.gazetteer.end());
                 std::sort(words.begin(), words.end());
                 return join(words, [](auto& s) { return s; });
               },
               [&p](std::string_view v) {
                 p.gazetteer.clear();
                 for (const auto& s : split_list(v)) {
                   if (!s.empty()) p.gazetteer.insert(text::case_fold(s));
                 }
               }});

  auto& z = c.zero_shot;
  size("zero_shot.n_perturbations", z.n_perturbations);
  dbl("zero_shot.mask_fraction", z.mask_fraction);
  dbl("zero_shot.threshold", z.threshold);
  flag("zero_shot.per_token_mean", z.per_token_mean);
  return k;
}

}  // namespace

AppConfig::AppConfig() {
  for (auto task : {ScorerTask::Detect, ScorerTask::Similarity, ScorerTask::Coherence, ScorerTask::LogLoss,
                    ScorerTask::Infill}) {
    scorers[static_cast<std::size_t>(task)].task = task;
  }
  grid.generation = generation;
  set_seed(seed);
}

void AppConfig::set_seed(std::uint64_t s) {
  seed = s;
  generation.seed = s;
  loop.seed = s;
  grid.seed = s;
  paraphrase.seed = s;
  zero_shot.seed = s;
}

void AppConfig::validate() const {
  as_config("paths.corpus", [&] {
    require(paths.corpus.empty() || std::filesystem::exists(paths.corpus), ErrorKind::Config,
            "paths.corpus: " + paths.corpus.string() + " does not exist");
    return 0;
  });
  require(lm.order >= 1 && lm.order <= 8, ErrorKind::Config, "lm.order must be in [1, 8]");
  require(lm.alpha > 0.0, ErrorKind::Config, "lm.alpha must be > 0");
  require(detector.alpha > 0.0, ErrorKind::Config, "detector.alpha must be > 0");
  require(detector.threshold > 0.0 && detector.threshold < 1.0, ErrorKind::Config,
          "detector.threshold must be in (0, 1)");
  require(coherence_sharpness > 0.0, ErrorKind::Config, "coherence.sharpness must be > 0");
  for (const auto& b : scorers) as_config("scorers." + std::string(to_string(b.task)), [&] { b.validate(); return 0; });
  as_config("generation", [&] { generation.validate(); return 0; });
  as_config("reward", [&] { reward.validate(); return 0; });
  as_config("loop", [&] { loop.validate(); return 0; });
  as_config("grid", [&] { grid.validate(); return 0; });
  as_config("paraphrase", [&] { paraphrase.validate(); return 0; });
  as_config("zero_shot", [&] { zero_shot.validate(); return 0; });
}

AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  std::map<std::string, std::pair<std::string, std::size_t>> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    require(eq != std::string_view::npos, ErrorKind::Config, where + ": expected 'section.key = value'");
    const std::string key(trim(line.substr(0, eq)));
    require(key.find('.') != std::string::npos, ErrorKind::Config, where + ": key '" + key + "' has no section");
    const bool fresh = entries.emplace(key, std::pair{std::string(trim(line.substr(eq + 1))), line_no}).second;
    require(fresh, ErrorKind::Config, where + ": key '" + key + "' repeated");
  }

  AppConfig cfg;
  auto keys = schema(cfg, base_dir);
  std::map<std::string, const Key*> by_name;
  for (const auto& k : keys) by_name[k.name] = &k;
  for (const auto& [name, value] : entries) {
    require(by_name.count(name) > 0, ErrorKind::Config,
            "line " + std::to_string(value.second) + ": unknown key '" + name + "'");
  }
  if (auto it = entries.find("global.seed"); it != entries.end()) {
    by_name["global.seed"]->set(it->second.first);
    cfg.set_seed(cfg.seed);
  }
  for (const auto& [name, value] : entries) {
    if (name != "global.seed") by_name[name]->set(value.first);
  }
  cfg.grid.generation = cfg.generation;
  cfg.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Config, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void set_config_value(AppConfig& cfg, std::string_view key, std::string_view value,
                      const std::filesystem::path& base_dir) {
  for (const auto& k : schema(cfg, base_dir)) {
    if (k.name != key) continue;
    k.set(trim(value));
    if (key == "global.seed") cfg.set_seed(cfg.seed);
    if (key.starts_with("generation.")) cfg.grid.generation = cfg.generation;
    return;
  }
  fail(ErrorKind::Config, "unknown key '" + std::string(key) + "'");
}

std::string dump_config(const AppConfig& cfg) {
  AppConfig copy = cfg;
  std::string out;
  for (const auto& k : schema(copy, {})) out += k.name + " = " + k.get() + "\n";
  return out;
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("EVADE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return to_uint("EVADE_SEED", trim(v));
}

}  // namespace evade
