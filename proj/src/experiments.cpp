#include "evade/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/rng.hpp"
#include "evade/text.hpp"

namespace evade {

void check_disjoint(const DataSplit& split) {
  std::unordered_map<std::string, int> owner;
  const std::vector<Document>* parts[] = {&split.generator, &split.detector, &split.evaluation};
  for (int p = 0; p < 3; ++p) {
    for (const auto& d : *parts[p]) {
      auto [it, inserted] = owner.emplace(d.id(), p);
      require(inserted || it->second == p, ErrorKind::InvalidArgument,
              "document '" + d.id() + "' appears in two splits");
    }
  }
}

DataSplit split_corpus(std::span<const Document> docs, double generator_fraction, double detector_fraction,
                       std::uint64_t seed) {
  require(generator_fraction >= 0.0 && detector_fraction >= 0.0 && generator_fraction + detector_fraction <= 1.0,
          ErrorKind::InvalidArgument, "split fractions must be >= 0 and sum to at most 1");
  std::vector<std::size_t> idx(docs.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  const auto n = static_cast<double>(docs.size());
  const auto n_gen = static_cast<std::size_t>(std::floor(generator_fraction * n));
  const auto n_det = static_cast<std::size_t>(std::floor(detector_fraction * n));
  DataSplit s;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Document& d = docs[idx[k]];
    if (k < n_gen) {
      s.generator.push_back(d);
    } else if (k < n_gen + n_det) {
      s.detector.push_back(d);
    } else {
      s.evaluation.push_back(d);
    }
  }
  check_disjoint(s);
  return s;
}

void GridSpec::validate() const {
  require(!temperatures.empty() && !strategies.empty() && !sample_sizes.empty(), ErrorKind::Config,
          "grid needs temperatures, strategies and sample sizes");
  for (double t : temperatures) require(t > 0.0 && t <= 2.0, ErrorKind::Config, "grid temperatures must be in (0, 2]");
  for (auto n : sample_sizes) require(n >= 100, ErrorKind::Config, "grid sample sizes must be >= 100");
  require(replications >= 1, ErrorKind::Config, "replications must be >= 1");
  require(nb_alpha > 0.0, ErrorKind::Config, "nb_alpha must be > 0");
  GenerationConfig g = generation;
  g.temperature = 1.0;
  g.validate();
}

namespace {

struct GridTask {
  std::size_t cell;
  std::size_t rep;
};

Metrics grid_run(std::span<const Document> human, const NgramModel& lm, const GridSpec& spec, const GridCell& cell,
                 std::size_t rep) {
  const std::size_t n = cell.sample_size;
  require(human.size() >= n, ErrorKind::InvalidArgument,
          "grid needs " + std::to_string(n) + " human documents, got " + std::to_string(human.size()));
  // Replication r shares its human sample and generation seed across every
  // temperature and strategy.
  const std::uint64_t rep_seed = mix_seed(mix_seed(spec.seed, rep), n);
  std::vector<std::size_t> idx(human.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(rep_seed, 1));
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);

  GenerationConfig g = spec.generation;
  g.strategy = cell.strategy;
  g.temperature = cell.temperature;
  g.seed = mix_seed(rep_seed, 2);
  const std::vector<std::string> prompts(n);
  std::vector<std::string> machine;
  for (auto& t : generate_batch_serial(lm, prompts, g)) {
    if (!tokenize(t).empty()) machine.push_back(std::move(t));
  }
  const std::size_t k = std::min(machine.size(), n);
  require(k >= 2, ErrorKind::InvalidArgument, "generator produced fewer than two non-empty texts");
  const std::size_t half = k / 2;
  std::vector<Document> train;
  std::vector<Document> test;
  for (std::size_t i = 0; i < k; ++i) {
    auto& part = i < half ? train : test;
    part.emplace_back("machine:" + std::to_string(i), machine[i], Label::Machine);
    part.push_back(human[idx[i]].relabeled(Label::Human));
  }
  const auto nb = NaiveBayesModel::train(train, spec.nb_alpha);
  return nb.evaluate(test);
}

std::vector<GridCell> grid_cells(const GridSpec& spec) {
  std::vector<GridCell> cells;
  for (auto n : spec.sample_sizes) {
    for (auto s : spec.strategies) {
      for (double t : spec.temperatures) {
        GridCell c;
        c.temperature = t;
        c.strategy = s;
        c.sample_size = n;
        cells.push_back(c);
      }
    }
  }
  return cells;
}

void average_into(GridCell& cell, std::span<const Metrics> runs) {
  Metrics m;
  for (const auto& r : runs) {
    m.accuracy += r.accuracy;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.tp += r.tp;
    m.fp += r.fp;
    m.tn += r.tn;
    m.fn += r.fn;
  }
  const auto k = static_cast<double>(runs.size());
  m.accuracy /= k;
  m.precision /= k;
  m.recall /= k;
  m.f1 /= k;
  cell.metrics = m;
}

}  // namespace

std::vector<GridCell> run_grid(std::span<const Document> human, const NgramModel& lm, const GridSpec& spec) {
  spec.validate();
  auto cells = grid_cells(spec);
  const std::size_t reps = spec.replications;
  std::vector<Metrics> runs(cells.size() * reps);
  const auto n = static_cast<std::ptrdiff_t>(runs.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    slot.run([&] { runs[k] = grid_run(human, lm, spec, cells[k / reps], k % reps); });
  }
  slot.rethrow();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    average_into(cells[c], std::span<const Metrics>(runs).subspan(c * reps, reps));
  }
  return cells;
}

std::vector<GridCell> run_grid_serial(std::span<const Document> human, const NgramModel& lm, const GridSpec& spec) {
  spec.validate();
  auto cells = grid_cells(spec);
  for (auto& cell : cells) {
    std::vector<Metrics> runs;
    for (std::size_t r = 0; r < spec.replications; ++r) runs.push_back(grid_run(human, lm, spec, cell, r));
    average_into(cell, runs);
  }
  return cells;
}

namespace {

std::vector<std::string> word_stream(std::span<const Document> docs) {
  std::vector<std::string> out;
  for (const auto& d : docs) {
    for (const auto& t : tokenize(d.text())) {
      if (text::is_word(t)) out.push_back(text::case_fold(t));
    }
  }
  return out;
}

std::vector<double> log_word_probs(std::span<const std::string> words) {
  std::unordered_map<std::string_view, std::size_t> counts;
  for (const auto& w : words) ++counts[w];
  const auto n = static_cast<double>(words.size());
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(std::log(static_cast<double>(counts[w]) / n));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DistributionReport distribution_report(std::span<const Document> human, std::span<const Document> machine,
                                       std::size_t quantiles, std::size_t bins) {
  require(quantiles >= 1 && bins >= 1, ErrorKind::InvalidArgument, "quantiles and bins must be >= 1");
  auto hw = word_stream(human);
  auto mw = word_stream(machine);
  const std::size_t n = std::min(hw.size(), mw.size());
  require(n >= 1000, ErrorKind::InvalidArgument,
          "distribution report needs at least 1000 word tokens per corpus, got " + std::to_string(n));
  hw.resize(n);
  mw.resize(n);
  const auto hp = log_word_probs(hw);
  const auto mp = log_word_probs(mw);

  DistributionReport r;
  for (std::size_t j = 0; j < quantiles; ++j) {
    const double level = (static_cast<double>(j) + 0.5) / static_cast<double>(quantiles);
    const auto at = std::min(n - 1, static_cast<std::size_t>(level * static_cast<double>(n)));
    r.quantiles.push_back({level, hp[at], mp[at]});
    r.gap += std::abs(hp[at] - mp[at]);
  }
  r.gap /= static_cast<double>(quantiles);

  const double lo = std::min(hp.front(), mp.front());
  const double hi = std::max(hp.back(), mp.back());
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  r.density.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    r.density[b].lo = lo + width * static_cast<double>(b);
    r.density[b].hi = b + 1 == bins ? std::max(hi, lo + width) : lo + width * static_cast<double>(b + 1);
  }
  auto bin_of = [&](double v) {
    return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, (v - lo) / width)));
  };
  const double unit = 1.0 / static_cast<double>(n);
  for (double v : hp) r.density[bin_of(v)].human += unit;
  for (double v : mp) r.density[bin_of(v)].machine += unit;
  return r;
}

BeforeAfter before_after_report(const DetectorScorer& detector, const NgramModel& model, const GeneratorParams& adapted,
                                std::span<const std::string> prompts, std::span<const std::string> human,
                                const GenerationConfig& generation) {
  const GeneratorParams identity{std::vector<double>(adapted.token_bias.size(), 0.0), 0.0};
  BeforeAfter r;
  r.before = detector_metrics(detector, rollout(model, identity, prompts, generation), human);
  r.after = detector_metrics(detector, rollout(model, adapted, prompts, generation), human);
  return r;
}

namespace {

std::vector<RecursionRow> aggregate(const std::vector<std::vector<TrajectoryStep>>& trajectories,
                                    std::size_t iterations) {
  std::vector<RecursionRow> rows(iterations + 1);
  for (std::size_t i = 0; i <= iterations; ++i) rows[i].iteration = i;
  for (const auto& t : trajectories) {
    for (std::size_t i = 0; i <= iterations; ++i) {
      rows[i].detection_rate += t[i].detected ? 1.0 : 0.0;
      rows[i].acceptability += t[i].coherence;
      rows[i].similarity += t[i].similarity;
    }
  }
  const auto n = static_cast<double>(trajectories.size());
  for (auto& r : rows) {
    r.detection_rate /= n;
    r.acceptability /= n;
    r.similarity /= n;
  }
  return rows;
}

ParaphraseConfig item_config(const ParaphraseConfig& cfg, std::size_t i) {
  ParaphraseConfig c = cfg;
  c.seed = mix_seed(cfg.seed, i);
  return c;
}

}  // namespace

std::vector<RecursionRow> recursion_report(std::span<const std::string> texts, std::size_t iterations,
                                           const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                           const DetectFn& detect) {
  require(!texts.empty(), ErrorKind::InvalidArgument, "recursion report needs texts");
  std::vector<std::vector<TrajectoryStep>> traj(texts.size());
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    slot.run([&] { traj[k] = recursive_paraphrase(texts[k], iterations, scorers, item_config(cfg, k), detect); });
  }
  slot.rethrow();
  return aggregate(traj, iterations);
}

std::vector<RecursionRow> recursion_report_serial(std::span<const std::string> texts, std::size_t iterations,
                                                  const ParaphraseScorers& scorers, const ParaphraseConfig& cfg,
                                                  const DetectFn& detect) {
  require(!texts.empty(), ErrorKind::InvalidArgument, "recursion report needs texts");
  std::vector<std::vector<TrajectoryStep>> traj;
  for (std::size_t k = 0; k < texts.size(); ++k) {
    traj.push_back(recursive_paraphrase(texts[k], iterations, scorers, item_config(cfg, k), detect));
  }
  return aggregate(traj, iterations);
}

ZeroShotCalibration calibrate_zero_shot(const NgramModel& lm, std::span<const std::string> human,
                                        std::span<const std::string> machine, const PerturbationConfig& cfg) {
  std::vector<double> scores;
  std::vector<Label> labels;
  auto add = [&](std::span<const std::string> texts, Label label) {
    for (const auto& t : texts) {
      try {
        scores.push_back(detect_zero_shot(lm, t, cfg).normalized_discrepancy);
        labels.push_back(label);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TooShort && e.kind() != ErrorKind::InsufficientMaskable) throw;
      }
    }
  };
  add(human, Label::Human);
  add(machine, Label::Machine);
  ZeroShotCalibration c;
  c.used = scores.size();
  c.threshold = calibrate_threshold(scores, labels);
  c.auroc = auroc(scores, labels);
  c.balanced_accuracy = balanced_accuracy(scores, labels, c.threshold);
  return c;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  out << header << '\n';
  return out;
}

}  // namespace

void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells) {
  auto out = open_csv(path, "temperature,strategy,sample_size,accuracy,precision,recall,f1");
  for (const auto& c : cells) {
    out << num(c.temperature) << ',' << to_string(c.strategy) << ',' << c.sample_size << ',' << num(c.metrics.accuracy)
        << ',' << num(c.metrics.precision) << ',' << num(c.metrics.recall) << ',' << num(c.metrics.f1) << '\n';
  }
}

void write_qq_csv(const std::filesystem::path& path, const DistributionReport& report) {
  auto out = open_csv(path, "level,human,machine");
  for (const auto& q : report.quantiles) out << num(q.level) << ',' << num(q.human) << ',' << num(q.machine) << '\n';
}

void write_density_csv(const std::filesystem::path& path, const DistributionReport& report) {
  auto out = open_csv(path, "bin_lo,bin_hi,human,machine");
  for (const auto& b : report.density) {
    out << num(b.lo) << ',' << num(b.hi) << ',' << num(b.human) << ',' << num(b.machine) << '\n';
  }
}

void write_before_after_csv(const std::filesystem::path& path, const BeforeAfter& report) {
  auto out = open_csv(path, "phase,accuracy,precision,recall,f1");
  auto row = [&](const char* phase, const Metrics& m) {
    out << phase << ',' << num(m.accuracy) << ',' << num(m.precision) << ',' << num(m.recall) << ',' << num(m.f1)
        << '\n';
  };
  row("before", report.before);
  row("after", report.after);
}

void write_recursion_csv(const std::filesystem::path& path, std::span<const RecursionRow> rows) {
  auto out = open_csv(path, "iteration,detection_rate,acceptability,similarity");
  for (const auto& r : rows) {
    out << r.iteration << ',' << num(r.detection_rate) << ',' << num(r.acceptability) << ',' << num(r.similarity)
        << '\n';
  }
}

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows) {
  auto out = open_csv(path, "iteration,mean_reward,best_reward,detector_f1,kl");
  for (const auto& r : rows) {
    out << r.iteration << ',' << num(r.mean_reward) << ',' << num(r.best_reward) << ',' << num(r.detector_f1) << ','
        << num(r.kl) << '\n';
  }
}

}  // namespace evade
