// contextfed: command-line entry point.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
// Errors print one line, "error: <message>", on stderr.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "contextfed/dutycycle.hpp"
#include "contextfed/embed.hpp"
#include "contextfed/error.hpp"
#include "contextfed/experiment.hpp"
#include "contextfed/json_io.hpp"
#include "contextfed/synth.hpp"
#include "contextfed/textprep.hpp"

namespace cf = contextfed;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

// "id<TAB>text" or bare text (id = 1-based line number).
std::pair<std::string, std::string> split_id(const std::string& line, std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos) return {"L" + std::to_string(line_no), line};
  return {line.substr(0, tab), line.substr(tab + 1)};
}

cf::TokenList words(const std::string& s) {
  cf::TokenList out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct SynthArgs {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::size_t users = 0;
  int days = 0;
  double signal_strength = -1.0;
};

int cmd_synth(const SynthArgs& a) {
  cf::CohortSpec spec;
  if (!a.config.empty()) {
    auto cfg = cf::load_experiment_config(a.config);
    spec = cfg.cohort;
  }
  if (a.users) spec.num_users = a.users;
  if (a.days) spec.days = a.days;
  if (a.signal_strength >= 0.0) spec.signal_strength = a.signal_strength;
  spec.rng_seed = a.seed;
  try {
    cf::synth::validate(spec);
  } catch (const cf::Error& e) {
    throw cf::ConfigError(std::string("cohort: ") + e.what());
  }
  cf::synth::save_cohort(cf::synth::generate_cohort(spec), a.out);
  return 0;
}

struct PrepArgs {
  std::string in, out, data_dir = CONTEXTFED_DATA_DIR, dictionary;
  bool autocorrect = false;
};

int cmd_prep(const PrepArgs& a) {
  auto cfg = cf::textprep::PrepConfig::load_defaults(a.data_dir);
  if (a.autocorrect) {
    cfg.autocorrect_enabled = true;
    for (const auto& w : lines_of(cf::read_file(a.dictionary))) {
      if (!w.empty()) cfg.dictionary.insert(w);
    }
  }
  cf::textprep::validate(cfg);
  std::string out;
  for (const auto& line : lines_of(cf::read_file(a.in))) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) out += line.substr(0, tab + 1);
    out += cf::textprep::join(cf::textprep::clean_text(tab == std::string::npos ? line : line.substr(tab + 1), cfg));
    out += '\n';
  }
  cf::write_file(a.out, out);
  return 0;
}

struct EmbedArgs {
  std::string mode = "hash", in, out;
  int dim = cf::embed::kDefaultDim;
  std::uint64_t seed = 7;
};

int cmd_embed(const EmbedArgs& a) {
  if (a.dim < 1) throw cf::ConfigError("--dim must be positive");
  std::vector<std::pair<std::string, cf::TokenList>> rows;
  std::size_t n = 0;
  for (const auto& line : lines_of(cf::read_file(a.in))) {
    ++n;
    if (line.empty()) continue;
    auto [id, text] = split_id(line, n);
    rows.emplace_back(id, words(text));
  }
  std::unique_ptr<cf::embed::Embedder> embedder;
  if (a.mode == "hash") {
    embedder = std::make_unique<cf::embed::HashEmbedder>(a.dim, a.seed);
  } else if (a.mode == "tfidf") {
    std::vector<cf::TokenList> corpus;
    for (const auto& r : rows) corpus.push_back(r.second);
    embedder = std::make_unique<cf::embed::TfidfEmbedder>(cf::embed::tfidf_fit(corpus, static_cast<std::size_t>(a.dim)));
  } else {
    throw cf::ConfigError("--mode must be hash or tfidf");
  }
  cf::EmbeddingStore store;
  for (const auto& [id, tokens] : rows) store.add(id, embedder->embed(tokens, id));
  if (!store.dim) store.dim = embedder->dim();
  cf::embed::save_embeddings(store, a.out);
  return 0;
}

struct SamplesArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_samples(const SamplesArgs& a) {
  const auto cfg = cf::load_experiment_config(a.config);
  const std::uint64_t seed = a.seed_set ? a.seed : cfg.seeds.front();
  std::string out;
  for (const auto& c : cf::list_experiment_chunks(cfg, cf::cohort_for_seed(cfg, seed))) {
    out += c.sample_id + "\t" + cf::textprep::join(c.tokens) + "\n";
  }
  cf::write_file(a.out, out);
  return 0;
}

struct DutyArgs {
  std::string timeline, out, language = "en";
};

int cmd_dutycycle(const DutyArgs& a) {
  const auto timeline = cf::dutycycle::parse_timeline_csv(cf::read_file(a.timeline));
  const auto detectors = cf::dutycycle::oracle_detectors(timeline, a.language);
  cf::write_file(a.out, cf::dutycycle::trace_json(cf::dutycycle::simulate(timeline, detectors, a.language)));
  return 0;
}

struct RunArgs {
  std::string config, out;
  unsigned threads = 0;
};

int cmd_run(const RunArgs& a) {
  auto cfg = cf::load_experiment_config(a.config);
  if (a.threads) cfg.threads = a.threads;
  const std::string dir = a.out.empty() ? cfg.output_dir : a.out;
  if (dir.empty()) throw cf::ConfigError("no output directory: pass --out or set output_dir");
  cfg.output_dir = dir;
  const auto report = cf::run_experiment(cfg);
  cf::write_outputs(report, cfg, dir);
  std::printf("%s %s %s: %.4f +- %.4f over %zu seeds, %zu folds\n", report.method.c_str(), report.task.c_str(),
              report.metric_name.c_str(), report.overall.mean, report.overall.std, report.seeds.size(),
              report.fold_count);
  return 0;
}

int cmd_validate(const std::string& path) {
  cf::load_experiment_config(path);
  std::printf("ok\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated context-aware mental-health model simulator"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic cohort (JSON lines)");
  s->add_option("--seed", synth.seed, "Cohort seed");
  s->add_option("--out", synth.out, "Output file")->required();
  s->add_option("--config", synth.config, "Take cohort settings from an experiment config");
  s->add_option("--users", synth.users, "Number of users");
  s->add_option("--days", synth.days, "Days per user");
  s->add_option("--signal-strength", synth.signal_strength, "Latent-state share of the signal-word rate");

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "Clean keyboard text, one line per input line");
  p->add_option("--in", prep.in, "Raw text file (optionally id<TAB>text)")->required();
  p->add_option("--out", prep.out, "Token file")->required();
  p->add_option("--data-dir", prep.data_dir, "Directory with abbreviations.tsv and emoji.tsv");
  p->add_option("--dictionary", prep.dictionary, "Word list enabling autocorrect");
  p->callback([&] { prep.autocorrect = !prep.dictionary.empty(); });

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "Embed token lines into an embedding file");
  e->add_option("--mode", emb.mode, "hash or tfidf");
  e->add_option("--in", emb.in, "Token file (optionally id<TAB>tokens)")->required();
  e->add_option("--out", emb.out, "Embedding file")->required();
  e->add_option("--dim", emb.dim, "Dimension (tfidf: vocabulary size)");
  e->add_option("--seed", emb.seed, "Hash seed");

  SamplesArgs samples;
  auto* sm = app.add_subcommand("samples", "List the text chunks a run embeds (id<TAB>text)");
  sm->add_option("--config", samples.config, "Experiment config")->required();
  sm->add_option("--out", samples.out, "Output file")->required();
  auto* seed_opt = sm->add_option("--seed", samples.seed, "Experiment seed (default: first configured)");

  DutyArgs duty;
  auto* d = app.add_subcommand("dutycycle", "Simulate duty-cycled speech collection");
  d->add_option("--timeline", duty.timeline, "CSV: minute,conversation,idle,charging")->required();
  d->add_option("--out", duty.out, "Trace JSON")->required();
  d->add_option("--language", duty.language, "User language");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run an experiment and write its report");
  r->add_option("--config", run.config, "Experiment config")->required();
  r->add_option("--out", run.out, "Output directory (overrides output_dir)");
  r->add_option("--threads", run.threads, "Fold workers");

  std::string validate_path;
  auto* v = app.add_subcommand("validate-config", "Check an experiment config");
  v->add_option("--config", validate_path, "Experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::string msg = ex.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (p->parsed()) return cmd_prep(prep);
    if (e->parsed()) return cmd_embed(emb);
    if (sm->parsed()) {
      samples.seed_set = seed_opt->count() > 0;
      return cmd_samples(samples);
    }
    if (d->parsed()) return cmd_dutycycle(duty);
    if (r->parsed()) return cmd_run(run);
    if (v->parsed()) return cmd_validate(validate_path);
  } catch (const cf::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
