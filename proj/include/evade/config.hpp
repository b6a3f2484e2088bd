#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "evade/decoding.hpp"
#include "evade/evasion.hpp"
#include "evade/experiments.hpp"
#include "evade/paraphrase.hpp"
#include "evade/reward.hpp"
#include "evade/scorers.hpp"
#include "evade/zero_shot.hpp"

namespace evade {

struct PathConfig {
  std::filesystem::path corpus;   // JSONL corpus; must exist when set
  std::filesystem::path models = "models";
  std::filesystem::path outputs = "outputs";
};

struct LmConfig {
  int order = 3;
  double alpha = 1e-5;
  std::uint64_t min_count = 1;
};

struct DetectorConfig {
  double alpha = 1.0;
  double threshold = 0.5;
};

struct AppConfig {
  PathConfig paths;
  LmConfig lm;
  DetectorConfig detector;
  /// One binding per scorer task, indexed by ScorerTask.
  std::array<ScorerBinding, 5> scorers;
  double coherence_sharpness = 0.25;
  GenerationConfig generation;
  RewardConfig reward;
  LoopConfig loop;
  GridSpec grid;
  ParaphraseConfig paraphrase;
  PerturbationConfig zero_shot;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;  // 0 leaves the OpenMP default

  AppConfig();

  const ScorerBinding& binding(ScorerTask task) const { return scorers[static_cast<std::size_t>(task)]; }
  /// Copies `seed` into every component seed.
  void set_seed(std::uint64_t s);
  void validate() const;
};

/// Parses `section.key = value` lines. Blank lines and lines starting with
/// '#' are skipped. Unknown or repeated keys throw ErrorKind::Config.
/// Relative paths resolve against `base_dir`.
AppConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
AppConfig load_config(const std::filesystem::path& path);

/// Sets one key as if it appeared in a config file; global.seed also
/// reseeds every component. Call validate() afterwards.
void set_config_value(AppConfig& cfg, std::string_view key, std::string_view value,
                      const std::filesystem::path& base_dir = {});

/// Every key with its current value, in schema order; parse_config of the
/// result reproduces the configuration.
std::string dump_config(const AppConfig& cfg);

/// EVADE_SEED when set and well-formed; throws Config when malformed.
std::optional<std::uint64_t> seed_from_env();

}  // namespace evade
