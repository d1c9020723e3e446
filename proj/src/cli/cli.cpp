// SPDX-License-Identifier: Apache-2.0
#include "vlg/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlg/data/synthetic.hpp"
#include "vlg/errors.hpp"
#include "vlg/eval/protocols.hpp"
#include "vlg/numerics/gradcheck.hpp"
#include "vlg/retrieval/retrieval.hpp"
#include "vlg/training/gradient_suite.hpp"
#include "vlg/training/trainer.hpp"

namespace vlg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kManifestFile = "manifest.jsonl";
constexpr const char* kEmbeddingsFile = "embeddings.jsonl";
constexpr const char* kTextFile = "text_corpus.txt";
constexpr const char* kSpecFile = "synthetic.json";

// Everything a config file can set.
struct Settings {
  data::SyntheticSpec synthetic;
  text::LMConfig lm;
  text::PretrainConfig pretrain;
  vision::EncoderConfig encoder;
  train::TrainConfig train;
  retrieval::GenerationConfig generation;
  eval::ProtocolSpec protocol;
};

// Overlays `patch` on `target`, rejecting keys the type does not have.
template <typename T>
void overlay(T& target, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  json merged = target;
  for (const auto& [key, value] : patch.items()) {
    if (!merged.contains(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
    merged[key] = value;
  }
  try {
    target = merged.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value in config section '" + where + "': " + e.what());
  }
}

template <typename T>
bool has_key(const T& config, const std::string& key) {
  const json j = config;
  return j.contains(key);
}

// Sections are named after the configs; bare top-level keys go to every one
// of train, generation and protocol that has a field of that name.
void apply_config_file(Settings& s, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("cannot open config " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  for (const auto& [key, value] : root.items()) {
    if (key == "synthetic") overlay(s.synthetic, value, key);
    else if (key == "lm") overlay(s.lm, value, key);
    else if (key == "pretrain") overlay(s.pretrain, value, key);
    else if (key == "encoder") overlay(s.encoder, value, key);
    else if (key == "train") overlay(s.train, value, key);
    else if (key == "generation") overlay(s.generation, value, key);
    else if (key == "protocol") overlay(s.protocol, value, key);
    else {
      bool used = false;
      const json one{{key, value}};
      if (has_key(s.train, key)) overlay(s.train, one, "train"), used = true;
      if (has_key(s.generation, key)) overlay(s.generation, one, "generation"), used = true;
      if (has_key(s.protocol, key)) overlay(s.protocol, one, "protocol"), used = true;
      if (!used) throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

void set_seed(Settings& s, std::uint64_t seed) {
  s.synthetic.seed = seed;
  s.lm.seed = seed;
  s.pretrain.seed = seed;
  s.encoder.seed = seed;
  s.train.seed = seed;
  s.generation.seed = seed;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void require_dir(const fs::path& dir) {
  if (dir.empty()) throw ContractError("--data is required");
  if (!fs::is_directory(dir)) throw MissingAssetError("data directory " + dir.string() + " does not exist");
}

data::DatasetManifest load_manifest(const fs::path& dir) {
  require_dir(dir);
  return data::DatasetManifest::load(dir / kManifestFile);
}

vision::EmbeddingStore load_store(const fs::path& dir) {
  require_dir(dir);
  return vision::EmbeddingStore::load(dir / kEmbeddingsFile);
}

std::string protocol_name(const std::string& flag) {
  if (flag.rfind("story_retrieval_", 0) == 0) return flag;
  return "story_retrieval_" + flag;
}

// A checkpoint together with the data it reads images from.
struct LoadedModel {
  train::TrainingState state;
  vision::EmbeddingStore store;
  ground::ImageLookup images;

  ground::GroundedModel model() const { return state.model(images); }
};

std::unique_ptr<LoadedModel> load_model(const fs::path& checkpoint, const fs::path& data_dir) {
  if (checkpoint.empty()) throw ContractError("--checkpoint is required");
  auto loaded = std::make_unique<LoadedModel>(LoadedModel{train::load_checkpoint(checkpoint), load_store(data_dir), {}});
  loaded->images = train::store_lookup(loaded->state.encoder, loaded->store);
  return loaded;
}

retrieval::RetrievalIndex index_for(const fs::path& index_path, const data::DatasetManifest& manifest,
                                    const LoadedModel& loaded) {
  if (!index_path.empty()) return retrieval::RetrievalIndex::load(index_path);
  return retrieval::index_build(manifest.records, loaded.images, loaded.state.adapters);
}

class Reporter {
 public:
  Reporter(std::ostream& out, const fs::path& path) : out_(out), path_(path) {}

  void emit(const nlohmann::ordered_json& report) const {
    const std::string text = report.dump(2) + "\n";
    if (path_.empty()) {
      out_ << text;
      return;
    }
    std::ofstream f(path_, std::ios::binary);
    if (!f) throw MissingAssetError("cannot write " + path_.string());
    f << text;
  }

 private:
  std::ostream& out_;
  fs::path path_;
};

struct Options {
  std::optional<std::uint64_t> seed;
  std::string config;
  int precision = 64;
  std::string out;

  std::string data;
  std::string lm;
  std::string checkpoint;
  std::string metrics;
  std::string index;
  std::string split;
  std::string prompt;
  std::string protocol;
  std::vector<std::size_t> ks;
  bool all_images = false;
  bool resume = false;
  std::optional<std::size_t> candidates;

  // train overrides
  std::optional<std::size_t> steps, batch_size, k, q, checkpoint_every;
  std::optional<double> lr, p_concat, lambda_c, lambda_r, tau_init, max_grad_norm;
  std::optional<std::uint64_t> warmup_steps;
  bool unfreeze_lm = false, disable_ret = false, retrieval_concat = false, embed_lm = false;

  std::optional<std::size_t> pretrain_steps, grad_seeds;
  std::optional<double> tolerance;
};

class Runner {
 public:
  Runner(Options& o, std::ostream& out, std::ostream& err, std::istream& in)
      : o_(o), out_(out), err_(err), in_(in), reporter_(out, o.out) {}

  void prepare() {
    if (!o_.config.empty()) apply_config_file(s_, o_.config);
    if (o_.seed) set_seed(s_, *o_.seed);
    num::set_precision(o_.precision == 32 ? num::Precision::k32 : num::Precision::k64);
  }

  int synth_data() {
    if (o_.data.empty()) throw ContractError("--data is required");
    s_.synthetic.validate();
    const auto corpus = data::generate_synthetic_corpus(s_.synthetic);
    const fs::path dir = o_.data;
    fs::create_directories(dir);
    corpus.manifest.save(dir / kManifestFile);
    corpus.store.save(dir / kEmbeddingsFile);
    {
      std::ofstream f(dir / kTextFile, std::ios::binary);
      for (const auto& line : corpus.text_corpus) f << line << "\n";
    }
    {
      std::ofstream f(dir / kSpecFile, std::ios::binary);
      f << json(s_.synthetic).dump(2) << "\n";
    }
    nlohmann::ordered_json report;
    report["data"] = dir.string();
    report["records"] = corpus.manifest.records.size();
    report["images"] = corpus.store.size();
    report["text_lines"] = corpus.text_corpus.size();
    report["synthetic"] = json(s_.synthetic);
    reporter_.emit(report);
    return kOk;
  }

  int pretrain_lm() {
    if (o_.lm.empty()) throw ContractError("--lm is required");
    if (o_.pretrain_steps) s_.pretrain.steps = *o_.pretrain_steps;
    data::SyntheticCorpus corpus;
    corpus.manifest = load_manifest(o_.data);
    corpus.text_corpus = read_lines(fs::path(o_.data) / kTextFile);
    const auto vocab = data::corpus_vocabulary(corpus);
    auto lm_config = s_.lm;
    lm_config.vocab_size = vocab.size();
    const auto lm = text::pretrain_lm(corpus.text_corpus, vocab, lm_config, s_.pretrain);
    text::save_lm(o_.lm, lm, vocab);
    nlohmann::ordered_json report;
    report["lm"] = o_.lm;
    report["vocab_size"] = vocab.size();
    report["config"] = json(lm_config);
    report["pretrain"] = json(s_.pretrain);
    reporter_.emit(report);
    return kOk;
  }

  int train() {
    if (o_.checkpoint.empty()) throw ContractError("--checkpoint is required");
    const auto manifest = load_manifest(o_.data);
    const auto store = load_store(o_.data);
    const auto records = manifest.filter_split("train").records;
    if (records.empty()) throw DataError("manifest has no train split");

    train::TrainingState state = [&] {
      if (o_.resume && fs::exists(o_.checkpoint)) return train::load_checkpoint(o_.checkpoint);
      if (o_.lm.empty()) throw ContractError("--lm is required");
      auto encoder = s_.encoder;
      encoder.out_dim = store.dim();
      const auto lm_path = fs::absolute(o_.lm).lexically_normal();
      return train::TrainingState::create(train_config(), text::load_lm(lm_path), lm_path.string(), encoder);
    }();
    if (o_.resume && o_.steps) state.config.steps = *o_.steps;

    train::LoopOptions loop;
    loop.metrics_path = o_.metrics;
    loop.checkpoint_path = o_.checkpoint;
    std::optional<train::StepReport> last;
    loop.on_step = [&](const train::StepReport& r) { last = r; };
    train::train_loop(state, records, store, loop);
    save_checkpoint(o_.checkpoint, state);

    nlohmann::ordered_json report;
    report["steps"] = state.step;
    report["checkpoint"] = o_.checkpoint;
    report["final"] = last ? train::metrics_line(*last) : nlohmann::ordered_json(nullptr);
    report["frozen"] = train::verify_frozen(state, state.initial_digests).summary();
    reporter_.emit(report);
    return kOk;
  }

  int eval_story() {
    const auto manifest = load_manifest(o_.data);
    const auto loaded = load_model(o_.checkpoint, o_.data);
    const auto stories = manifest.filter_split(split_or("story"));
    const auto index = index_for(o_.index, stories, *loaded);
    auto spec = protocol_spec();
    if (!o_.protocol.empty()) spec.name = protocol_name(o_.protocol);
    spec.validate();
    reporter_.emit(eval::run_story_protocol(spec, stories, loaded->model(), index).to_json());
    return kOk;
  }

  int eval_sweep() {
    const auto manifest = load_manifest(o_.data);
    const auto loaded = load_model(o_.checkpoint, o_.data);
    const auto stories = manifest.filter_split(split_or("story"));
    const auto index = index_for(o_.index, stories, *loaded);
    auto spec = protocol_spec();
    spec.name = "context_sweep";
    spec.validate();
    reporter_.emit(eval::run_context_sweep(spec, stories, loaded->model(), index).to_json());
    return kOk;
  }

  int eval_dialogue() {
    const auto manifest = load_manifest(o_.data);
    const auto loaded = load_model(o_.checkpoint, o_.data);
    const auto dialogues = manifest.filter_split(split_or("dialogue"));
    const auto index = index_for(o_.index, dialogues, *loaded);
    eval::DialogueOptions options;
    options.ks = protocol_spec().ks;
    if (o_.candidates) options.expected_candidates = *o_.candidates;
    const auto [it2t, t2i] = eval::run_dialogue_protocols(dialogues, loaded->model(), index, options);
    nlohmann::ordered_json report;
    report["dialogue_it2t"] = it2t.to_json();
    report["dialogue_t2i"] = t2i.to_json();
    reporter_.emit(report);
    return kOk;
  }

  int index() {
    if (o_.index.empty()) throw ContractError("--index is required");
    const auto manifest = load_manifest(o_.data);
    const auto loaded = load_model(o_.checkpoint, o_.data);
    const auto records = o_.split.empty() ? manifest : manifest.filter_split(o_.split);
    const auto built = retrieval::index_build(records.records, loaded->images, loaded->state.adapters);
    built.save(o_.index);
    nlohmann::ordered_json report;
    report["index"] = o_.index;
    report["size"] = built.size();
    report["dim"] = built.dim();
    reporter_.emit(report);
    return kOk;
  }

  int generate() {
    const auto manifest = load_manifest(o_.data);
    const auto loaded = load_model(o_.checkpoint, o_.data);
    const auto records = o_.split.empty() ? manifest : manifest.filter_split(o_.split);
    const auto index = index_for(o_.index, records, *loaded);
    s_.generation.validate();
    const auto model = loaded->model();
    auto run_one = [&](const data::InterleavedSequence& prompt) {
      return data::to_json(retrieval::generate_interleaved(model, prompt, s_.generation, index));
    };

    if (!o_.prompt.empty()) {
      std::ifstream f(o_.prompt);
      if (!f) throw MissingAssetError("cannot open prompt " + o_.prompt);
      json j;
      try {
        j = json::parse(f);
      } catch (const json::parse_error& e) {
        throw FormatError("prompt is not valid JSON: " + std::string(e.what()));
      }
      nlohmann::ordered_json report;
      report["prompt"] = data::to_json(data::interleaved_from_json(j));
      report["output"] = run_one(data::interleaved_from_json(j));
      reporter_.emit(report);
      return kOk;
    }

    // REPL: a line starting with '[' or '{' is a sequence, otherwise plain text.
    for (std::string line; std::getline(in_, line);) {
      if (line.empty()) continue;
      try {
        data::InterleavedSequence prompt;
        if (line.front() == '[' || line.front() == '{') prompt = data::interleaved_from_json(json::parse(line));
        else prompt.add_text(line);
        out_ << run_one(prompt).dump() << "\n" << std::flush;
      } catch (const json::parse_error& e) {
        err_ << "error: " << e.what() << "\n";
      } catch (const NumericError&) {
        throw;
      } catch (const Error& e) {
        err_ << "error: " << e.what() << "\n";
      }
    }
    return kOk;
  }

  int grad_check() {
    num::set_precision(num::Precision::k64);  // finite differences need 64-bit
    const double tol = o_.tolerance.value_or(1e-4);
    const std::uint64_t first = o_.seed.value_or(0);
    const std::size_t n = o_.grad_seeds.value_or(1);
    if (n == 0) throw ContractError("--seeds must be positive");
    nlohmann::ordered_json report;
    report["tolerance"] = tol;
    report["seeds"] = nlohmann::ordered_json::array();
    double worst = 0;
    bool passed = true;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = train::end_to_end_gradient_check(first + i, tol);
      nlohmann::ordered_json entry = r.to_json();
      entry["ops"] = nlohmann::ordered_json::object();
      for (const auto& op : num::op_gradient_suite(first + i)) {
        entry["ops"][op.op] = op.report.max_rel_error;
        worst = std::max(worst, op.report.max_rel_error);
        passed = passed && op.report.passed(tol);
      }
      worst = std::max(worst, r.max_rel_error());
      passed = passed && r.passed();
      report["seeds"].push_back(entry);
    }
    report["max_rel_error"] = worst;
    report["passed"] = passed;
    std::ostringstream line;
    line << "max relative error " << worst << " (tolerance " << tol << "): " << (passed ? "PASS" : "FAIL");
    if (!o_.out.empty()) reporter_.emit(report);
    out_ << line.str() << "\n";
    return passed ? kOk : kNumeric;
  }

  int verify_frozen() {
    if (o_.checkpoint.empty()) throw ContractError("--checkpoint is required");
    const auto state = train::load_checkpoint(o_.checkpoint);
    const auto r = train::verify_frozen(state, state.initial_digests);
    nlohmann::ordered_json report;
    report["passed"] = r.passed;
    report["intentionally_unfrozen"] = r.intentionally_unfrozen;
    report["changed"] = r.changed;
    report["violations"] = r.violations;
    report["summary"] = r.summary();
    reporter_.emit(report);
    if (!r.passed) err_ << r.summary() << "\n";
    return r.passed ? kOk : kFailure;
  }

 private:
  train::TrainConfig train_config() const {
    auto c = s_.train;
    if (o_.steps) c.steps = *o_.steps;
    if (o_.batch_size) c.batch_size = *o_.batch_size;
    if (o_.k) c.k = *o_.k;
    if (o_.q) c.q = *o_.q;
    if (o_.checkpoint_every) c.checkpoint_every = *o_.checkpoint_every;
    if (o_.lr) c.lr = *o_.lr;
    if (o_.p_concat) c.p_concat = *o_.p_concat;
    if (o_.lambda_c) c.lambda_c = *o_.lambda_c;
    if (o_.lambda_r) c.lambda_r = *o_.lambda_r;
    if (o_.tau_init) c.tau_init = *o_.tau_init;
    if (o_.max_grad_norm) c.max_grad_norm = *o_.max_grad_norm;
    if (o_.warmup_steps) c.warmup_steps = *o_.warmup_steps;
    c.unfreeze_lm = c.unfreeze_lm || o_.unfreeze_lm;
    c.disable_ret = c.disable_ret || o_.disable_ret;
    c.retrieval_concat = c.retrieval_concat || o_.retrieval_concat;
    c.embed_lm = c.embed_lm || o_.embed_lm;
    c.validate();
    return c;
  }

  eval::ProtocolSpec protocol_spec() const {
    auto p = s_.protocol;
    if (o_.all_images) p.unseen_only = false;
    if (!o_.ks.empty()) p.ks = o_.ks;
    return p;
  }

  std::string split_or(const std::string& fallback) const { return o_.split.empty() ? fallback : o_.split; }

  Options& o_;
  std::ostream& out_;
  std::ostream& err_;
  std::istream& in_;
  Reporter reporter_;
  Settings s_;
};

void add_data(CLI::App* sc, Options& o, bool required = true) {
  auto* opt = sc->add_option("--data", o.data, "Data directory written by synth-data");
  if (required) opt->required();
}

void add_eval_flags(CLI::App* sc, Options& o) {
  add_data(sc, o);
  sc->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  sc->add_option("--index", o.index, "Prebuilt retrieval index (default: built from the split)");
  sc->add_option("--split", o.split, "Manifest split to evaluate");
  sc->add_option("--ks", o.ks, "Recall cutoffs")->delimiter(',');
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  Options o;
  CLI::App app{"Frozen-LM visual grounding: data, training, retrieval and evaluation", "vlg"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Seed for every seeded component");
  app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--precision", o.precision, "Element width: 32 or 64")->check(CLI::IsMember({32, 64}));
  app.add_option("--out", o.out, "Write the report here instead of standard output");

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic corpus");
  add_data(synth, o);

  auto* pretrain = app.add_subcommand("pretrain-lm", "Pretrain the language model on the text corpus");
  add_data(pretrain, o);
  pretrain->add_option("--lm", o.lm, "Output LM file")->required();
  pretrain->add_option("--steps", o.pretrain_steps, "Pretraining steps");

  auto* train = app.add_subcommand("train", "Train the grounding adapters");
  add_data(train, o);
  train->add_option("--lm", o.lm, "Pretrained LM file");
  train->add_option("--checkpoint", o.checkpoint, "Output checkpoint")->required();
  train->add_option("--metrics", o.metrics, "Per-step metrics log (JSON lines)");
  train->add_flag("--resume", o.resume, "Continue from --checkpoint when it exists");
  train->add_option("--steps", o.steps);
  train->add_option("--batch-size", o.batch_size);
  train->add_option("--lr", o.lr);
  train->add_option("--warmup-steps", o.warmup_steps);
  train->add_option("--p-concat", o.p_concat);
  train->add_option("--lambda-c", o.lambda_c);
  train->add_option("--lambda-r", o.lambda_r);
  train->add_option("--k", o.k, "Visual prefix length");
  train->add_option("--q", o.q, "Retrieval embedding size");
  train->add_option("--tau-init", o.tau_init);
  train->add_option("--max-grad-norm", o.max_grad_norm);
  train->add_option("--checkpoint-every", o.checkpoint_every);
  train->add_flag("--unfreeze-lm", o.unfreeze_lm);
  train->add_flag("--disable-ret", o.disable_ret);
  train->add_flag("--retrieval-concat", o.retrieval_concat);
  train->add_flag("--embed-lm", o.embed_lm);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->require_subcommand(1);
  auto* story = eval->add_subcommand("story", "Contextual story retrieval");
  add_eval_flags(story, o);
  story->add_option("--protocol", o.protocol, "1cap, 5cap or 5cap4img");
  story->add_flag("--all-images", o.all_images, "Keep the story's context images in the pool");
  auto* dialogue = eval->add_subcommand("dialogue", "Dialogue answer ranking and image retrieval");
  add_eval_flags(dialogue, o);
  dialogue->add_option("--candidates", o.candidates, "Expected candidates per dialogue (0: any)");
  auto* sweep = eval->add_subcommand("sweep", "Story retrieval over captions x images");
  add_eval_flags(sweep, o);
  sweep->add_flag("--all-images", o.all_images, "Keep the story's context images in the pool");

  auto* index = app.add_subcommand("index", "Build and save a retrieval index");
  add_data(index, o);
  index->add_option("--checkpoint", o.checkpoint)->required();
  index->add_option("--index", o.index, "Output index file")->required();
  index->add_option("--split", o.split, "Only this manifest split");

  auto* generate = app.add_subcommand("generate", "Interleaved generation; reads REPL lines without --prompt");
  add_data(generate, o);
  generate->add_option("--checkpoint", o.checkpoint)->required();
  generate->add_option("--index", o.index);
  generate->add_option("--split", o.split, "Only index this manifest split");
  generate->add_option("--prompt", o.prompt, "Interleaved sequence JSON file");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the training objectives");
  grad->add_option("--seeds", o.grad_seeds, "Number of consecutive seeds starting at --seed");
  grad->add_option("--tolerance", o.tolerance);

  auto* frozen = app.add_subcommand("verify-frozen", "Check that only the adapters changed");
  frozen->add_option("--checkpoint", o.checkpoint)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    for (std::size_t i = 0; i < args.size(); ++i) {
      const auto& a = args[i];
      if (a == "--seed" || a == "--config" || a == "--precision" || a == "--out") {
        ++i;
      } else if (a.empty() || a.front() != '-') {
        if (app.get_subcommands([&](CLI::App* sc) { return sc->get_name() == a; }).empty()) {
          message = "unknown subcommand '" + a + "'";
        }
        break;
      }
    }
    err << "error: " << message << "\n\n" << app.help();
    return kFailure;
  }

  try {
    Runner r(o, out, err, in);
    r.prepare();
    if (*synth) return r.synth_data();
    if (*pretrain) return r.pretrain_lm();
    if (*train) return r.train();
    if (*story) return r.eval_story();
    if (*dialogue) return r.eval_dialogue();
    if (*sweep) return r.eval_sweep();
    if (*index) return r.index();
    if (*generate) return r.generate();
    if (*grad) return r.grad_check();
    if (*frozen) return r.verify_frozen();
    err << app.help();
    return kFailure;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace vlg::cli
