#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "evade/config.hpp"
#include "evade/error.hpp"
#include "evade/ngram.hpp"
#include "evade/paraphrase.hpp"
#include "evade/scorers.hpp"

namespace evade {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitScorer = 3 };

int exit_code_for(ErrorKind kind);

/// Scorer instances built from the configured bindings.
struct ScorerSet {
  std::shared_ptr<const DetectorScorer> detector;
  std::shared_ptr<const SimilarityScorer> similarity;
  std::shared_ptr<const CoherenceScorer> coherence;
  std::shared_ptr<const LogLossScorer> log_loss;
  std::shared_ptr<const InfillScorer> infill;

  ParaphraseScorers paraphrase() const;
};

/// Inputs the local backends draw on. A local binding whose input is missing
/// throws InvalidArgument.
struct ScorerInputs {
  std::shared_ptr<const NgramModel> lm;
  std::vector<std::string> reference;
  std::shared_ptr<const NaiveBayesModel> detector;
};

/// Builds the scorers for `tasks` only; the rest stay null.
ScorerSet make_scorers(const AppConfig& cfg, const ScorerInputs& inputs, std::span<const ScorerTask> tasks);

/// Runs one command line (argv[0] excluded) and returns the exit code.
/// Diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Entry point used by the executable.
int dispatch(int argc, const char* const* argv);

}  // namespace evade
