#include "evade/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evade/corpus.hpp"
#include "evade/decoding.hpp"
#include "evade/evasion.hpp"
#include "evade/experiments.hpp"
#include "evade/naive_bayes.hpp"
#include "evade/reward.hpp"
#include "evade/zero_shot.hpp"

namespace evade {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kExitUsage;
    case ErrorKind::Timeout:
    case ErrorKind::Network:
    case ErrorKind::ProtocolError:
    case ErrorKind::HttpStatus:
      return kExitScorer;
    default:
      return kExitData;
  }
}

ParaphraseScorers ScorerSet::paraphrase() const {
  ParaphraseScorers s;
  s.infill = infill.get();
  s.similarity = similarity.get();
  s.coherence = coherence.get();
  s.log_loss = log_loss.get();
  return s;
}

ScorerSet make_scorers(const AppConfig& cfg, const ScorerInputs& inputs, std::span<const ScorerTask> tasks) {
  ScorerSet set;
  auto need_lm = [&](ScorerTask t) {
    require(inputs.lm != nullptr, ErrorKind::InvalidArgument,
            "local " + std::string(to_string(t)) + " scorer needs a language model");
  };
  auto need_reference = [&](ScorerTask t) {
    require(!inputs.reference.empty(), ErrorKind::InvalidArgument,
            "local " + std::string(to_string(t)) + " scorer needs reference texts");
  };
  for (auto task : tasks) {
    const auto& b = cfg.binding(task);
    if (b.backend == Backend::Remote) {
      auto client = std::make_shared<const RemoteScorerClient>(b);
      switch (task) {
        case ScorerTask::Detect: set.detector = std::make_shared<RemoteDetector>(client); break;
        case ScorerTask::Similarity: set.similarity = std::make_shared<RemoteSimilarity>(client); break;
        case ScorerTask::Coherence: set.coherence = std::make_shared<RemoteCoherence>(client); break;
        case ScorerTask::LogLoss: set.log_loss = std::make_shared<RemoteLogLoss>(client); break;
        case ScorerTask::Infill: set.infill = std::make_shared<RemoteInfill>(client); break;
      }
      continue;
    }
    switch (task) {
      case ScorerTask::Detect:
        require(inputs.detector != nullptr, ErrorKind::InvalidArgument, "local detect scorer needs a detector model");
        set.detector = std::make_shared<NaiveBayesDetector>(inputs.detector);
        break;
      case ScorerTask::Similarity:
        need_reference(task);
        set.similarity = std::make_shared<TfidfSimilarity>(inputs.reference);
        break;
      case ScorerTask::Coherence:
        need_lm(task);
        need_reference(task);
        set.coherence = std::make_shared<LmCoherence>(inputs.lm, inputs.reference, cfg.coherence_sharpness);
        break;
      case ScorerTask::LogLoss:
        need_lm(task);
        set.log_loss = std::make_shared<LmLogLoss>(inputs.lm);
        break;
      case ScorerTask::Infill:
        need_lm(task);
        set.infill = std::make_shared<LmInfill>(inputs.lm);
        break;
    }
  }
  return set;
}

namespace {

bool is_jsonl(const std::filesystem::path& p) { return p.extension() == ".jsonl"; }

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// JSONL datasets keep their labels; plain text becomes one human document
/// per non-blank line.
std::vector<Document> load_docs(const std::filesystem::path& path) {
  if (is_jsonl(path)) return read_jsonl(path);
  return read_text_lines(path, path.stem().string());
}

std::vector<std::string> texts_of(std::span<const Document> docs) {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.text());
  return out;
}

std::vector<std::string> load_texts(const std::filesystem::path& path) { return texts_of(load_docs(path)); }

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

std::ofstream open_out(const std::filesystem::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write " + p.string());
  return out;
}

/// Writes to `path` when given, otherwise to `fallback`.
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(fallback);
    return;
  }
  auto out = open_out(path);
  body(out);
}

nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  j["fn"] = m.fn;
  return j;
}

std::shared_ptr<const NgramModel> load_lm(const std::filesystem::path& path) {
  return std::make_shared<const NgramModel>(NgramModel::load(path));
}

/// Options shared by every subcommand plus the per-command config overrides.
struct Command {
  CLI::App* app = nullptr;
  std::string config;
  std::string seed;
  std::string jobs;
  std::vector<std::pair<CLI::Option*, std::string>> keys;  // option -> config key
  std::deque<std::string> values;  // stable addresses for CLI11
  std::function<int(const AppConfig&, std::ostream&)> run;

  void add_common() {
    app->add_option("--config", config, "Config file (flat section.key = value)");
    app->add_option("--seed", seed, "Global seed; overrides EVADE_SEED and the config file");
    app->add_option("--jobs", jobs, "Maximum worker threads");
  }

  /// Flag whose value is written into config key `key` when given.
  void bind(const std::string& flag, const std::string& key, const std::string& help) {
    values.emplace_back();
    keys.emplace_back(app->add_option(flag, values.back(), help), key);
  }

  void bind_generation() {
    bind("--strategy", "generation.strategy", "greedy, random, top_k, nucleus or typical");
    bind("--temperature", "generation.temperature", "Sampling temperature in (0, 2]");
    bind("--top-k", "generation.top_k", "k for top_k sampling");
    bind("--top-p", "generation.top_p", "p for nucleus sampling");
    bind("--typical-mass", "generation.typical_mass", "Mass for typical sampling");
    bind("--max-tokens", "generation.max_tokens", "Maximum generated tokens");
  }

  AppConfig resolve() const {
    AppConfig cfg = config.empty() ? AppConfig() : load_config(config);
    if (!seed.empty()) {
      set_config_value(cfg, "global.seed", seed);
    } else if (auto env = seed_from_env()) {
      cfg.set_seed(*env);
    }
    if (!jobs.empty()) set_config_value(cfg, "global.jobs", jobs);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].first->count() > 0) set_config_value(cfg, keys[i].second, values[i]);
    }
    cfg.validate();
    return cfg;
  }
};

std::filesystem::path or_default(const std::string& given, const std::filesystem::path& fallback) {
  return given.empty() ? fallback : std::filesystem::path(given);
}

std::filesystem::path lm_path(const std::string& given, const AppConfig& cfg) {
  return or_default(given, cfg.paths.models / "lm.bin");
}

std::filesystem::path detector_path(const std::string& given, const AppConfig& cfg) {
  return or_default(given, cfg.paths.models / "detector.json");
}

std::filesystem::path corpus_path(const std::string& given, const AppConfig& cfg, const char* what) {
  const auto p = or_default(given, cfg.paths.corpus);
  require(!p.empty(), ErrorKind::Config, std::string(what) + " not given and paths.corpus is unset");
  return p;
}

/// Loads only what the local bindings among `tasks` need.
ScorerInputs gather_inputs(const AppConfig& cfg, std::span<const ScorerTask> tasks, std::shared_ptr<const NgramModel> lm,
                           const std::function<std::filesystem::path()>& lm_file,
                           const std::function<std::filesystem::path()>& reference_file,
                           const std::function<std::filesystem::path()>& detector_file) {
  ScorerInputs in;
  bool want_lm = false;
  bool want_ref = false;
  bool want_det = false;
  for (auto t : tasks) {
    if (cfg.binding(t).backend == Backend::Remote) continue;
    want_lm |= t == ScorerTask::Coherence || t == ScorerTask::LogLoss || t == ScorerTask::Infill;
    want_ref |= t == ScorerTask::Similarity || t == ScorerTask::Coherence;
    want_det |= t == ScorerTask::Detect;
  }
  in.lm = std::move(lm);
  if (want_lm && !in.lm) in.lm = load_lm(lm_file());
  if (want_ref) in.reference = load_texts(reference_file());
  if (want_det) in.detector = std::make_shared<const NaiveBayesModel>(NaiveBayesModel::load(detector_file()));
  return in;
}

// ------------------------------------------------------------------ commands

void add_ingest(Command& c) {
  auto inputs = std::make_shared<std::vector<std::string>>();
  auto output = std::make_shared<std::string>();
  auto unit = std::make_shared<std::string>("sentences");
  auto label = std::make_shared<std::string>();
  auto source = std::make_shared<std::string>();
  auto policy = std::make_shared<FilterPolicy>();
  c.app->add_option("--input", *inputs, "Text or .jsonl files")->required();
  c.app->add_option("--output", *output, "Output .jsonl corpus")->required();
  c.app->add_option("--unit", *unit, "Documents per text file: lines or sentences")->capture_default_str();
  c.app->add_option("--label", *label, "Label for every document: human, machine or unlabeled");
  c.app->add_option("--source", *source, "Source name for a single text input (default: file stem)");
  c.app->add_option("--min-chars", policy->min_chars, "Drop documents shorter than this")->capture_default_str();
  c.app->add_option("--max-chars", policy->max_chars, "Drop documents longer than this")->capture_default_str();
  c.app->add_flag("--dedupe", policy->dedupe, "Drop repeated texts");
  c.app->add_flag("--latin", policy->require_latin_majority, "Keep documents whose letters are mostly Latin");
  c.app->add_option("--max-per-source", policy->max_docs_per_source, "Cap on documents per source (0: none)")
      ->capture_default_str();
  c.run = [=](const AppConfig&, std::ostream& out) {
    require(*unit == "lines" || *unit == "sentences", ErrorKind::Config, "--unit must be lines or sentences");
    require(source->empty() || inputs->size() == 1, ErrorKind::Config, "--source needs exactly one --input");
    std::vector<Document> docs;
    for (const auto& in : *inputs) {
      const std::filesystem::path p(in);
      std::vector<Document> part;
      if (is_jsonl(p)) {
        part = read_jsonl(p);
      } else {
        const std::string name = source->empty() ? p.stem().string() : *source;
        part = *unit == "lines" ? read_text_lines(p, name) : read_text_sentences(p, name);
      }
      docs.insert(docs.end(), part.begin(), part.end());
    }
    if (!label->empty()) {
      const Label l = parse_label(*label);
      for (auto& d : docs) d = d.relabeled(l);
    }
    const auto kept = filter_corpus(docs, *policy);
    ensure_parent(*output);
    write_jsonl(*output, kept);
    out << "read " << docs.size() << " documents, kept " << kept.size() << ", wrote " << *output << '\n';
    return 0;
  };
}

void add_train_lm(Command& c) {
  auto corpus = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  c.app->add_option("--corpus", *corpus, "Training corpus (default: paths.corpus)");
  c.app->add_option("--output", *output, "Model file (default: <paths.models>/lm.bin)");
  c.bind("--order", "lm.order", "n-gram order");
  c.bind("--alpha", "lm.alpha", "Add-alpha smoothing constant");
  c.bind("--min-count", "lm.min_count", "Minimum token count for the vocabulary");
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto docs = load_docs(corpus_path(*corpus, cfg, "--corpus"));
    const auto lm = NgramModel::train(docs, cfg.lm.order, cfg.lm.alpha, cfg.lm.min_count);
    const auto path = lm_path(*output, cfg);
    ensure_parent(path);
    lm.save(path);
    out << "trained order-" << lm.order() << " model on " << docs.size() << " documents, vocabulary "
        << lm.vocab_size() << ", wrote " << path.string() << '\n';
    return 0;
  };
}

void add_generate(Command& c) {
  auto model = std::make_shared<std::string>();
  auto prompt = std::make_shared<std::string>();
  auto prompts = std::make_shared<std::string>();
  auto count = std::make_shared<std::size_t>(1);
  auto output = std::make_shared<std::string>();
  c.app->add_option("--model", *model, "Language model (default: <paths.models>/lm.bin)");
  c.app->add_option("--prompt", *prompt, "Prompt text; empty for free generation");
  c.app->add_option("--prompts", *prompts, "File with one prompt per line");
  c.app->add_option("--count", *count, "Generations for --prompt")->capture_default_str();
  c.app->add_option("--output", *output, "Output file (default: stdout)");
  c.bind_generation();
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto lm = load_lm(lm_path(*model, cfg));
    const auto list = prompts->empty() ? std::vector<std::string>(*count, *prompt) : read_lines(*prompts);
    const auto texts = generate_batch(*lm, list, cfg.generation);
    emit(*output, out, [&](std::ostream& o) {
      for (const auto& t : texts) o << t << '\n';
    });
    return 0;
  };
}

void add_grid(Command& c) {
  auto model = std::make_shared<std::string>();
  auto human = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto qq_temperature = std::make_shared<double>(1.0);
  auto qq_samples = std::make_shared<std::size_t>(1000);
  c.app->add_option("--model", *model, "Language model (default: <paths.models>/lm.bin)");
  c.app->add_option("--human", *human, "Human documents (default: paths.corpus)");
  c.app->add_option("--out", *out_dir, "Output directory (default: paths.outputs)");
  c.bind("--temperatures", "grid.temperatures", "Comma-separated temperatures");
  c.bind("--strategies", "grid.strategies", "Comma-separated strategies");
  c.bind("--sample-sizes", "grid.sample_sizes", "Comma-separated sample sizes");
  c.bind("--replications", "grid.replications", "Replications per cell");
  c.bind("--max-tokens", "generation.max_tokens", "Maximum generated tokens");
  c.app->add_option("--qq-temperature", *qq_temperature, "Temperature for qq.csv and density.csv")
      ->capture_default_str();
  c.app->add_option("--qq-samples", *qq_samples, "Random-sampling generations for qq.csv")->capture_default_str();
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto lm = load_lm(lm_path(*model, cfg));
    const auto docs = load_docs(corpus_path(*human, cfg, "--human"));
    const auto dir = or_default(*out_dir, cfg.paths.outputs);
    const auto cells = run_grid(docs, *lm, cfg.grid);
    write_grid_csv(dir / "grid.csv", cells);

    GenerationConfig g = cfg.generation;
    g.strategy = Strategy::Random;
    g.temperature = *qq_temperature;
    g.seed = mix_seed(cfg.seed, 7);
    std::vector<Document> machine;
    const auto texts = generate_batch(*lm, std::vector<std::string>(*qq_samples), g);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      machine.emplace_back("machine:" + std::to_string(i), texts[i], Label::Machine);
    }
    const auto report = distribution_report(docs, machine);
    write_qq_csv(dir / "qq.csv", report);
    write_density_csv(dir / "density.csv", report);
    for (const auto& cell : cells) {
      out << "tau=" << cell.temperature << " strategy=" << to_string(cell.strategy) << " n=" << cell.sample_size
          << " accuracy=" << cell.metrics.accuracy << " f1=" << cell.metrics.f1 << '\n';
    }
    out << "log-quantile gap at tau=" << *qq_temperature << ": " << report.gap << '\n';
    return 0;
  };
}

void add_detect(Command& c) {
  CLI::App* app = c.app;
  auto method = std::make_shared<std::string>("nb");
  auto train = std::make_shared<std::string>();
  auto evaluate_file = std::make_shared<std::string>();
  auto input = std::make_shared<std::string>();
  auto text = std::make_shared<std::string>();
  auto detector = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  c.app->add_option("--method", *method, "nb or zero-shot")->capture_default_str();
  c.app->add_option("--train", *train, "Labeled .jsonl: train (nb) or calibrate (zero-shot)");
  c.app->add_option("--evaluate", *evaluate_file, "Labeled .jsonl to score");
  c.app->add_option("--input", *input, "Texts to classify (.jsonl or one per line)");
  c.app->add_option("--text", *text, "Single text to classify");
  c.app->add_option("--detector", *detector, "Naive Bayes model (default: <paths.models>/detector.json)");
  c.app->add_option("--model", *model, "Language model for zero-shot (default: <paths.models>/lm.bin)");
  c.app->add_option("--output", *output, "Output file for verdicts (default: stdout)");
  c.bind("--alpha", "detector.alpha", "Naive Bayes smoothing constant");
  c.bind("--threshold", "detector.threshold", "Naive Bayes decision threshold on P(machine)");
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    require(*method == "nb" || *method == "zero-shot", ErrorKind::Config, "--method must be nb or zero-shot");
    require(!train->empty() || !evaluate_file->empty() || !input->empty() || app->count("--text") > 0,
            ErrorKind::Config, "detect needs --train, --evaluate, --input or --text");
    std::vector<std::pair<std::string, std::string>> items;  // id, text
    if (!input->empty()) {
      const auto docs = load_docs(*input);
      for (const auto& d : docs) items.emplace_back(d.id(), d.text());
    }
    if (app->count("--text") > 0) items.emplace_back("text", *text);

    if (*method == "nb") {
      std::shared_ptr<const NaiveBayesModel> nb;
      const auto path = detector_path(*detector, cfg);
      if (!train->empty()) {
        nb = std::make_shared<const NaiveBayesModel>(
            NaiveBayesModel::train(load_docs(*train), cfg.detector.alpha, cfg.detector.threshold));
        ensure_parent(path);
        nb->save(path);
        nlohmann::ordered_json j;
        j["model"] = path.string();
        j["features"] = nb->feature_count();
        out << j.dump() << '\n';
      }
      if (!nb && cfg.binding(ScorerTask::Detect).backend == Backend::Local &&
          (!evaluate_file->empty() || !items.empty())) {
        nb = std::make_shared<const NaiveBayesModel>(NaiveBayesModel::load(path));
      }
      if (!evaluate_file->empty()) {
        require(nb != nullptr, ErrorKind::Config, "--evaluate needs a local detector");
        out << metrics_json(nb->evaluate(load_docs(*evaluate_file))).dump() << '\n';
      }
      if (!items.empty()) {
        ScorerInputs in;
        in.detector = nb;
        const ScorerTask task = ScorerTask::Detect;
        const auto scorers = make_scorers(cfg, in, std::span(&task, 1));
        std::vector<std::string> texts;
        for (const auto& [id, t] : items) texts.push_back(t);
        const auto p = scorers.detector->p_machine(texts);
        emit(*output, out, [&](std::ostream& o) {
          for (std::size_t i = 0; i < items.size(); ++i) {
            nlohmann::ordered_json j;
            j["id"] = items[i].first;
            j["p_machine"] = p[i];
            j["label"] = to_string(p[i] >= cfg.detector.threshold ? Label::Machine : Label::Human);
            o << j.dump() << '\n';
          }
        });
      }
      return 0;
    }

    const auto lm = load_lm(lm_path(*model, cfg));
    PerturbationConfig zs = cfg.zero_shot;
    if (!train->empty()) {
      std::vector<std::string> human;
      std::vector<std::string> machine;
      for (const auto& d : load_docs(*train)) {
        if (d.label() == Label::Human) human.push_back(d.text());
        if (d.label() == Label::Machine) machine.push_back(d.text());
      }
      const auto cal = calibrate_zero_shot(*lm, human, machine, zs);
      zs.threshold = cal.threshold;
      nlohmann::ordered_json j;
      j["threshold"] = cal.threshold;
      j["auroc"] = cal.auroc;
      j["balanced_accuracy"] = cal.balanced_accuracy;
      j["used"] = cal.used;
      out << j.dump() << '\n';
    }
    if (!evaluate_file->empty()) {
      std::vector<Label> truth;
      std::vector<Label> predicted;
      for (const auto& d : load_docs(*evaluate_file)) {
        if (d.label() == Label::Unlabeled) continue;
        try {
          predicted.push_back(detect_zero_shot(*lm, d.text(), zs).label);
          truth.push_back(d.label());
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::TooShort && e.kind() != ErrorKind::InsufficientMaskable) throw;
        }
      }
      out << metrics_json(compute_metrics(truth, predicted)).dump() << '\n';
    }
    emit(items.empty() ? std::string() : *output, out, [&](std::ostream& o) {
      for (const auto& [id, t] : items) {
        const auto v = detect_zero_shot(*lm, t, zs);
        nlohmann::ordered_json j;
        j["id"] = id;
        j["discrepancy"] = v.discrepancy;
        j["normalized_discrepancy"] = v.normalized_discrepancy;
        j["label"] = to_string(v.label);
        o << j.dump() << '\n';
      }
    });
    return 0;
  };
}

struct EngineFiles {
  std::string model;
  std::string detector;
  std::string reference;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Language model (default: <paths.models>/lm.bin)");
    app->add_option("--detector", detector, "Naive Bayes model (default: <paths.models>/detector.json)");
    app->add_option("--reference", reference, "Reference corpus for dictionary and scorers (default: paths.corpus)");
  }
};

struct Engine {
  ScorerSet scorers;
  std::shared_ptr<const RewardEngine> reward;
};

Engine make_engine(const AppConfig& cfg, const EngineFiles& f, std::shared_ptr<const NgramModel> lm) {
  const std::array tasks{ScorerTask::Detect, ScorerTask::Coherence};
  const auto ref_path = corpus_path(f.reference, cfg, "--reference");
  const auto inputs = gather_inputs(
      cfg, tasks, std::move(lm), [&] { return lm_path(f.model, cfg); }, [&] { return ref_path; },
      [&] { return detector_path(f.detector, cfg); });
  Engine e;
  e.scorers = make_scorers(cfg, inputs, tasks);
  e.reward = std::make_shared<const RewardEngine>(cfg.reward, e.scorers.detector, e.scorers.coherence,
                                                  build_dictionary(load_docs(ref_path)));
  return e;
}

void add_reward(Command& c) {
  CLI::App* app = c.app;
  c.app->require_subcommand(0, 0);
  auto query = std::make_shared<std::string>();
  auto text = std::make_shared<std::string>();
  auto batch = std::make_shared<std::string>();
  auto files = std::make_shared<EngineFiles>();
  c.app->add_option("--query", *query, "Query the response answers");
  c.app->add_option("--text", *text, "Response text");
  c.app->add_option("--batch", *batch, "JSONL file of {\"query\", \"text\"} objects scored as one batch");
  files->add(c.app);
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    std::vector<std::string> queries;
    std::vector<std::string> responses;
    if (!batch->empty()) {
      std::size_t n = 0;
      for (const auto& line : read_lines(*batch)) {
        ++n;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
          queries.push_back(j.value("query", ""));
          responses.push_back(j.contains("text") ? j.at("text").get<std::string>() : j.at("response").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorKind::InvalidArgument, *batch + " line " + std::to_string(n) + ": " + e.what());
        }
      }
    } else {
      require(app->count("--text") > 0, ErrorKind::Config, "reward score needs --text or --batch");
      queries.push_back(*query);
      responses.push_back(*text);
    }
    const auto engine = make_engine(cfg, *files, nullptr);
    for (const auto& r : engine.reward->score_batch(queries, responses)) out << r.to_json().dump() << '\n';
    return 0;
  };
}

nlohmann::ordered_json params_json(const GeneratorParams& p) {
  nlohmann::ordered_json j;
  j["temperature_offset"] = p.temperature_offset;
  j["token_bias"] = p.token_bias;
  return j;
}

void add_adapt(Command& c) {
  auto files = std::make_shared<EngineFiles>();
  auto prompts = std::make_shared<std::string>();
  auto human = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto eval_rollouts = std::make_shared<std::size_t>(200);
  files->add(c.app);
  c.app->add_option("--prompts", *prompts, "Prompt pool, one per line (default: free generation)");
  c.app->add_option("--human", *human, "Human texts for detector F1 (default: paths.corpus)");
  c.app->add_option("--out", *out_dir, "Output directory (default: paths.outputs)");
  c.app->add_option("--eval-rollouts", *eval_rollouts, "Rollouts per detector F1 measurement")->capture_default_str();
  c.bind("--iterations", "loop.iterations", "Maximum iterations");
  c.bind("--population", "loop.population_size", "Candidates per iteration");
  c.bind("--batch-size", "loop.batch_size", "Rollouts per candidate");
  c.bind("--kl-weight", "loop.kl_weight", "Weight of the divergence penalty");
  c.bind_generation();
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto lm = load_lm(lm_path(files->model, cfg));
    const auto engine = make_engine(cfg, *files, lm);
    AdaptSetup setup;
    setup.model = lm.get();
    setup.engine = engine.reward.get();
    setup.generation = cfg.generation;
    if (!prompts->empty()) setup.prompts = read_lines(*prompts);
    auto human_texts = load_texts(corpus_path(*human, cfg, "--human"));
    if (human_texts.size() > *eval_rollouts) human_texts.resize(*eval_rollouts);
    setup.human_eval = human_texts;
    setup.eval_rollouts = *eval_rollouts;
    const auto result = adapt(setup, cfg.loop);

    const auto dir = or_default(*out_dir, cfg.paths.outputs);
    write_history_csv(dir / "history.csv", result.history);
    {
      auto o = open_out(dir / "params.json");
      o << params_json(result.params).dump() << '\n';
    }
    std::vector<std::string> eval_prompts(*eval_rollouts);
    if (!setup.prompts.empty()) {
      for (std::size_t i = 0; i < eval_prompts.size(); ++i) eval_prompts[i] = setup.prompts[i % setup.prompts.size()];
    }
    GenerationConfig g = cfg.generation;
    g.seed = mix_seed(cfg.seed, 6);
    const auto report = before_after_report(*engine.scorers.detector, *lm, result.params, eval_prompts, human_texts, g);
    write_before_after_csv(dir / "before_after.csv", report);

    const auto final_texts = rollout(*lm, result.params, eval_prompts, g);
    const auto rewards = evaluate(final_texts, eval_prompts, *engine.reward);
    {
      auto o = open_out(dir / "training_log.jsonl");
      for (std::size_t i = 0; i < final_texts.size(); ++i) {
        nlohmann::ordered_json j;
        j["query"] = eval_prompts[i];
        j["response"] = final_texts[i];
        j["reward"] = rewards[i].combined;
        o << j.dump() << '\n';
      }
    }
    out << "iterations " << result.history.size() << ", best fitness " << result.best_fitness << '\n';
    out << "detector f1 before " << report.before.f1 << ", after " << report.after.f1 << '\n';
    out << "rule violations " << count_violations(rewards) << "/" << rewards.size() << '\n';
    return 0;
  };
}

const std::array<ScorerTask, 4> kParaphraseTasks{ScorerTask::Infill, ScorerTask::Similarity, ScorerTask::Coherence,
                                                 ScorerTask::LogLoss};

ScorerSet paraphrase_scorers(const AppConfig& cfg, const std::string& model, const std::string& reference,
                             std::shared_ptr<const NgramModel> lm) {
  const auto inputs = gather_inputs(
      cfg, kParaphraseTasks, std::move(lm), [&] { return lm_path(model, cfg); },
      [&] { return corpus_path(reference, cfg, "--reference"); }, [] { return std::filesystem::path(); });
  return make_scorers(cfg, inputs, kParaphraseTasks);
}

void add_paraphrase(Command& c) {
  CLI::App* app = c.app;
  auto text = std::make_shared<std::string>();
  auto input = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>();
  auto reference = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  c.app->add_option("--text", *text, "Text to paraphrase");
  c.app->add_option("--input", *input, "Texts to paraphrase, one per line");
  c.app->add_option("--model", *model, "Language model (default: <paths.models>/lm.bin)");
  c.app->add_option("--reference", *reference, "Reference corpus for local scorers (default: paths.corpus)");
  c.app->add_option("--output", *output, "Output file (default: stdout)");
  c.bind("--mask-budget", "paraphrase.mask_budget", "Largest masked share of a sentence");
  c.bind("--similarity-threshold", "paraphrase.similarity_threshold", "Minimum similarity to the original");
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    require(!input->empty() || app->count("--text") > 0, ErrorKind::Config, "paraphrase needs --text or --input");
    const auto texts = input->empty() ? std::vector<std::string>{*text} : read_lines(*input);
    const auto scorers = paraphrase_scorers(cfg, *model, *reference, nullptr);
    emit(*output, out, [&](std::ostream& o) {
      for (std::size_t i = 0; i < texts.size(); ++i) {
        ParaphraseConfig p = cfg.paraphrase;
        p.seed = mix_seed(cfg.paraphrase.seed, i);
        o << paraphrase_text(texts[i], scorers.paraphrase(), p) << '\n';
      }
    });
    return 0;
  };
}

void add_trainset(Command& c) {
  auto questions = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>();
  auto reference = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  c.app->add_option("--questions", *questions, "Questions, one per line")->required();
  c.app->add_option("--model", *model, "Language model (default: <paths.models>/lm.bin)");
  c.app->add_option("--reference", *reference, "Reference corpus for local scorers (default: paths.corpus)");
  c.app->add_option("--output", *output, "Output .jsonl (default: <paths.outputs>/trainset.jsonl)");
  c.bind_generation();
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto lm = load_lm(lm_path(*model, cfg));
    const auto scorers = paraphrase_scorers(cfg, *model, *reference, lm);
    const auto qs = read_lines(*questions);
    const auto pairs = build_trainset(qs, *lm, cfg.generation, scorers.paraphrase(), cfg.paraphrase);
    const auto path = or_default(*output, cfg.paths.outputs / "trainset.jsonl");
    auto o = open_out(path);
    for (const auto& p : pairs) o << p.to_json().dump() << '\n';
    out << "wrote " << pairs.size() << " pairs to " << path.string() << '\n';
    return 0;
  };
}

void add_recursion(Command& c) {
  auto questions = std::make_shared<std::string>();
  auto human = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>();
  auto reference = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto iterations = std::make_shared<std::size_t>(10);
  auto calibration = std::make_shared<std::size_t>(200);
  auto prompt_tokens = std::make_shared<std::size_t>(3);
  c.app->add_option("--questions", *questions, "Prompts whose answers are paraphrased, one per line")->required();
  c.app->add_option("--human", *human, "Held-out human texts for detector calibration")->required();
  c.app->add_option("--model", *model, "Language model (default: <paths.models>/lm.bin)");
  c.app->add_option("--reference", *reference, "Reference corpus for local scorers (default: paths.corpus)");
  c.app->add_option("--out", *out_dir, "Output directory (default: paths.outputs)");
  c.app->add_option("--iterations", *iterations, "Paraphrase rounds")->capture_default_str();
  c.app->add_option("--calibration-size", *calibration, "Human texts used for calibration")->capture_default_str();
  c.app->add_option("--prompt-tokens", *prompt_tokens, "Leading tokens of a human text used as a calibration prompt")
      ->capture_default_str();
  c.bind_generation();
  c.run = [=](const AppConfig& cfg, std::ostream& out) {
    const auto lm = load_lm(lm_path(*model, cfg));
    const auto scorers = paraphrase_scorers(cfg, *model, *reference, lm);
    const auto answers = generate_batch(*lm, read_lines(*questions), cfg.generation);

    auto human_texts = load_texts(*human);
    if (human_texts.size() > *calibration) human_texts.resize(*calibration);
    std::vector<std::string> cal_prompts;
    for (const auto& t : human_texts) {
      auto toks = tokenize(t);
      toks.resize(std::min(toks.size(), *prompt_tokens));
      cal_prompts.push_back(join_tokens(toks));
    }
    GenerationConfig g = cfg.generation;
    g.seed = mix_seed(cfg.seed, 11);
    const auto machine = generate_batch(*lm, cal_prompts, g);
    const auto cal = calibrate_zero_shot(*lm, human_texts, machine, cfg.zero_shot);
    PerturbationConfig zs = cfg.zero_shot;
    zs.threshold = cal.threshold;
    const DetectFn detect = [&](const std::string& t) {
      try {
        return detect_zero_shot(*lm, t, zs).label == Label::Machine;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TooShort && e.kind() != ErrorKind::InsufficientMaskable) throw;
        return false;
      }
    };
    const auto rows = recursion_report(answers, *iterations, scorers.paraphrase(), cfg.paraphrase, detect);
    const auto dir = or_default(*out_dir, cfg.paths.outputs);
    write_recursion_csv(dir / "recursion.csv", rows);
    out << "zero-shot threshold " << cal.threshold << ", auroc " << cal.auroc << '\n';
    for (const auto& r : rows) {
      out << "iteration " << r.iteration << ": detection " << r.detection_rate << ", acceptability " << r.acceptability
          << ", similarity " << r.similarity << '\n';
    }
    return 0;
  };
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection and evasion of machine-generated text with n-gram models.", "evade"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& about, void (*setup)(Command&),
                  CLI::App* parent = nullptr) {
    auto cmd = std::make_unique<Command>();
    cmd->app = (parent ? parent : &app)->add_subcommand(name, about);
    cmd->add_common();
    setup(*cmd);
    commands.push_back(std::move(cmd));
    return commands.back().get();
  };
  make("ingest", "Read text or JSONL files into a filtered JSONL corpus", add_ingest);
  make("train-lm", "Train an n-gram language model", add_train_lm);
  make("generate", "Generate text from a language model", add_generate);
  make("grid", "Detector accuracy over temperatures and decoding strategies", add_grid);
  make("detect", "Train, evaluate or apply a detector", add_detect);
  auto* reward = app.add_subcommand("reward", "Reward shaping tools");
  reward->require_subcommand(1);
  make("score", "Score responses with every reward rule", add_reward, reward);
  make("adapt", "Adapt a generator against the detector", add_adapt);
  make("paraphrase", "Paraphrase texts by masked infilling", add_paraphrase);
  make("trainset", "Build paraphrase training pairs from generated answers", add_trainset);
  make("recursion-report", "Detection rate under repeated paraphrasing", add_recursion);

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Command* chosen = nullptr;
  for (auto& cmd : commands) {
    if (cmd->app->parsed()) chosen = cmd.get();
  }
  if (chosen == nullptr) {
    err << app.help();
    return kExitUsage;
  }
  try {
    const AppConfig cfg = chosen->resolve();
    if (cfg.jobs > 0) omp_set_num_threads(static_cast<int>(cfg.jobs));
    return chosen->run(cfg, out);
  } catch (const Error& e) {
    err << "evade: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "evade: " << e.what() << '\n';
    return kExitData;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace evade
