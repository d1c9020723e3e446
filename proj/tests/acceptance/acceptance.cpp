// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion. Expensive artifacts
// (pretrained LMs, trained checkpoints) are cached under --work, keyed by
// their configuration and this executable's build.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <json.hpp>

#include "vlg/data/examples.hpp"
#include "vlg/data/synthetic.hpp"
#include "vlg/errors.hpp"
#include "vlg/eval/protocols.hpp"
#include "vlg/grounding/adapters.hpp"
#include "vlg/numerics/gradcheck.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"
#include "vlg/retrieval/retrieval.hpp"
#include "vlg/training/gradient_suite.hpp"
#include "vlg/training/trainer.hpp"

using namespace vlg;
namespace fs = std::filesystem;
using BigFloat = boost::multiprecision::cpp_bin_float_50;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_work = "acceptance_work";

// Changes whenever the executable is relinked, so caches never outlive code.
std::string build_stamp() {
  const auto t = fs::last_write_time("/proc/self/exe").time_since_epoch().count();
  return std::to_string(t);
}

fs::path cached(const std::string& stem, const json& key, const std::string& ext) {
  fs::create_directories(g_work);
  const auto h = std::hash<std::string>{}(key.dump() + build_stamp());
  std::ostringstream name;
  name << stem << "_" << std::hex << h << ext;
  return g_work / name.str();
}

// ---------------------------------------------------------------- worlds

struct World {
  data::SyntheticCorpus corpus;
  text::LoadedLM lm;
  std::string lm_path;
};

World make_world(const data::SyntheticSpec& spec, text::LMConfig lc, const text::PretrainConfig& pc) {
  auto corpus = data::generate_synthetic_corpus(spec);
  const auto vocab = data::corpus_vocabulary(corpus);
  lc.vocab_size = vocab.size();
  const auto path = cached("lm", json{{"spec", spec}, {"lm", lc}, {"pretrain", pc}}, ".bin");
  if (!fs::exists(path)) {
    std::cerr << "  pretraining LM (" << pc.steps << " steps) -> " << path.string() << "\n";
    const auto lm = text::pretrain_lm(corpus.text_corpus, vocab, lc, pc);
    text::save_lm(path, lm, vocab);
  }
  return World{std::move(corpus), text::load_lm(path), fs::absolute(path).string()};
}

// The story corpus used by the freezing and property criteria.
text::LMConfig story_lm_config() {
  text::LMConfig lc;
  lc.max_len = 128;
  return lc;
}

text::PretrainConfig story_pretrain_config() {
  text::PretrainConfig pc;
  pc.steps = 1500;
  return pc;
}

const World& story_world() {
  static const World w = make_world(data::SyntheticSpec{}, story_lm_config(), story_pretrain_config());
  return w;
}

train::TrainingState fresh_state(const World& w, const train::TrainConfig& tc) {
  vision::EncoderConfig ec;
  ec.out_dim = w.corpus.store.dim();
  return train::TrainingState::create(tc, w.lm, w.lm_path, ec);
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_where;
  std::size_t checks = 0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& c : num::op_gradient_suite(seed)) {
      ++checks;
      ok = ok && c.report.entries > 0 && c.report.passed(1e-4);
      if (c.report.max_rel_error > worst) {
        worst = c.report.max_rel_error;
        worst_where = c.op + " seed " + std::to_string(seed);
      }
    }
    const auto e2e = train::end_to_end_gradient_check(seed, 1e-4);
    for (const auto& c : e2e.checks) {
      ++checks;
      if (c.report.max_rel_error > worst) {
        worst = c.report.max_rel_error;
        worst_where = c.loss + " seed " + std::to_string(seed);
      }
    }
    ok = ok && e2e.passed() && e2e.checks.size() == 3;
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300;
  return {ok, std::to_string(checks) + " checks over 10 seeds, max rel error " + fmt(worst) + " (" + worst_where +
                  "), " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome freezing_invariant() {
  const auto& w = story_world();
  const auto t0 = std::chrono::steady_clock::now();
  train::TrainConfig tc;  // default flags
  tc.steps = 500;
  auto state = fresh_state(w, tc);
  const auto before = state.digests();
  bool finite = true;
  train::LoopOptions loop;
  loop.on_step = [&](const train::StepReport& r) {
    finite = finite && std::isfinite(r.l) && std::isfinite(r.l_c) && std::isfinite(r.l_t2i) && std::isfinite(r.l_i2t);
  };
  const auto records = w.corpus.manifest.filter_split("train").records;
  train::train_loop(state, records, w.corpus.store, loop);
  const auto path = g_work / "freezing_checkpoint.bin";
  train::save_checkpoint(path, state);
  const auto restored = train::load_checkpoint(path);
  const auto after = restored.digests();

  std::size_t frozen_same = 0, frozen_total = 0;
  std::vector<std::string> changed;
  for (const auto& [name, d] : before) {
    const bool frozen = name.rfind("lm/", 0) == 0 || name.rfind("encoder/", 0) == 0;
    if (frozen) {
      ++frozen_total;
      if (after.at(name) == d) ++frozen_same;
    }
    if (after.at(name) != d) changed.push_back(name);
  }
  const auto report = train::verify_frozen(restored, restored.initial_digests);
  const double secs = seconds_since(t0);
  const bool ok = finite && frozen_same == frozen_total && frozen_total > 0 && changed.size() == 5 &&
                  std::all_of(changed.begin(), changed.end(),
                              [](const std::string& n) { return n.rfind("adapters/", 0) == 0; }) &&
                  report.passed && restored.initial_digests == before && after.size() == before.size() && secs < 300;
  std::string names;
  for (const auto& n : changed) names += (names.empty() ? "" : ",") + n.substr(n.find('/') + 1);
  return {ok, std::to_string(frozen_same) + "/" + std::to_string(frozen_total) + " frozen digests identical, " +
                  std::to_string(changed.size()) + " tensors changed (" + names + "), losses finite: " +
                  (finite ? "yes" : "no") + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 3

double oracle_infonce(const num::Tensor& a, const num::Tensor& b, double tau) {
  const std::size_t n = a.dim(0), q = a.dim(1);
  BigFloat total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<BigFloat> s(n);
    for (std::size_t j = 0; j < n; ++j) {
      BigFloat dot = 0;
      for (std::size_t c = 0; c < q; ++c) dot += BigFloat(a[i * q + c]) * BigFloat(b[j * q + c]);
      s[j] = dot / BigFloat(tau);
    }
    BigFloat z = 0;
    for (const auto& v : s) z += boost::multiprecision::exp(v);
    total += boost::multiprecision::log(z) - s[i];
  }
  return static_cast<double>(total / n);
}

Outcome loss_oracles() {
  num::Rng rng(3);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8), q = 2 + rng.below(8);
    const auto t = num::l2_normalize_rows(num::normal_tensor({n, q}, rng, 1.0));
    const auto im = num::l2_normalize_rows(num::normal_tensor({n, q}, rng, 1.0));
    const double tau = std::exp(rng.uniform(std::log(0.02), std::log(5.0)));
    const auto lt = num::Tensor::scalar(std::log(tau));
    worst = std::max(worst, std::abs(ground::infonce_t2i(t, im, lt).item() - oracle_infonce(t, im, tau)));
    worst = std::max(worst, std::abs(ground::infonce_i2t(im, t, lt).item() - oracle_infonce(im, t, tau)));
  }

  // With every token embedding (and so every logit) zero, the model is uniform.
  const std::vector<std::string> lines{"a red cat", "the blue dog", "a green bird on a mat"};
  const auto vocab = text::Vocabulary::build(lines);
  text::LMConfig lc;
  lc.layers = 2;
  lc.heads = 2;
  lc.d_model = lc.hidden_dim = 8;
  lc.ffn_dim = 16;
  lc.vocab_size = vocab.size();
  lc.max_len = 32;
  text::TransformerLM lm(lc);
  for (auto& x : lm.parameter("tok_emb").data()) x = 0.0;
  ground::AdapterConfig ac;
  ac.q = 4;
  ac.m = 5;
  ac.d = 8;
  auto adapters = ground::GroundingAdapters::init(ac, lm);
  for (auto& x : adapters.ret_embedding.data()) x = 0.0;
  std::map<std::string, num::Tensor> images;
  std::vector<ground::MixedSequence> batch;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string id = "img" + std::to_string(i);
    images[id] = num::normal_tensor({5}, rng, 1.0);
    data::CaptionedImage r{id, lines[i], id, "train", {}, {}, {}};
    batch.push_back(data::build_caption_example(r, vocab).sequence);
    tokens += vocab.tokenize(lines[i]).size() + 1;
  }
  const ground::ImageLookup lookup = [&](const std::string& id) { return images.at(id); };
  const double ln_v = std::log(static_cast<double>(vocab.size()));
  const double per_token = ground::captioning_loss(lm, adapters, batch, lookup).item();
  const double summed = ground::captioning_loss(lm, adapters, batch, lookup, ground::CaptionReduction::kSum).item();
  const double uniform_err = std::max(std::abs(per_token - ln_v),
                                      std::abs(summed * static_cast<double>(lines.size()) / tokens - ln_v));
  const bool ok = worst < 1e-10 && uniform_err < 1e-10;
  return {ok, "InfoNCE max |diff| " + fmt(worst) + " over 20 matrices x 2 directions, uniform-model |L_c - ln V| " +
                  fmt(uniform_err)};
}

// ---------------------------------------------------------------- 4

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  data::SyntheticSpec spec;
  spec.n_pairs = 32;
  spec.n_stories = 0;
  spec.n_dialogues = 0;
  spec.short_caption_fraction = 0;
  text::LMConfig lc;
  lc.max_len = 64;
  text::PretrainConfig pc;
  pc.steps = 200;
  const auto w = make_world(spec, lc, pc);

  train::TrainConfig tc;
  tc.steps = 2000;
  tc.batch_size = 32;
  tc.lr = 3e-3;
  auto state = fresh_state(w, tc);
  const auto records = w.corpus.manifest.filter_split("train").records;
  const auto images = train::store_lookup(state.encoder, w.corpus.store);
  const auto examples = train::build_examples(state, records);

  std::optional<std::uint64_t> reached;
  train::InBatchRecall at_reach, last;
  train::LoopOptions loop;
  // Checked every 50 steps; the run stops once the target is met.
  loop.on_step = [&](const train::StepReport& r) {
    if ((r.step + 1) % 50 != 0) return;
    last = train::in_batch_recall(state, examples, images);
    if (last.t2i_r1 == 1.0 && last.i2t_r1 == 1.0 && last.l_t2i < 0.05 && last.l_i2t < 0.05) {
      reached = r.step + 1;
      at_reach = last;
      state.config.steps = state.step;
    }
  };
  train::train_loop(state, records, w.corpus.store, loop);
  const double secs = seconds_since(t0);
  if (!reached) {
    return {false, "not reached in 2000 steps; last check R@1 " + fmt(last.t2i_r1) + "/" + fmt(last.i2t_r1) +
                       ", losses " + fmt(last.l_t2i) + "/" + fmt(last.l_i2t) + ", " + fmt(secs, 3) + " s"};
  }
  return {secs < 900, "reached at step " + std::to_string(*reached) + ": R@1 t2i/i2t " + fmt(at_reach.t2i_r1) + "/" +
                          fmt(at_reach.i2t_r1) + ", InfoNCE " + fmt(at_reach.l_t2i) + "/" + fmt(at_reach.l_i2t) +
                          ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 5

std::vector<num::Real> random_unit(num::Rng& rng, std::size_t q) {
  std::vector<num::Real> v(q);
  num::Real s = 0;
  for (auto& x : v) {
    x = rng.normal();
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

Outcome retrieval_exactness() {
  num::Rng rng(5);
  const std::size_t q = 32;
  retrieval::RetrievalIndex index(q);
  for (int i = 0; i < 500; ++i) index.add("img" + std::to_string(i), random_unit(rng, q));
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto query = random_unit(rng, q);
    const std::size_t k = trial % 10 == 0 ? 500 : 1 + rng.below(50);
    std::vector<std::pair<num::Real, std::size_t>> all;
    for (std::size_t i = 0; i < index.size(); ++i) {
      num::Real s = 0;
      for (std::size_t j = 0; j < q; ++j) s += index.vector(i)[j] * query[j];
      all.emplace_back(-s, i);
    }
    std::sort(all.begin(), all.end());
    const auto got = retrieval::index_topk(index, query, k);
    bool same = got.size() == std::min(k, all.size());
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].id == index.ids()[all[i].second] && got[i].score == -all[i].first;
    }
    if (!same) ++mismatches;
  }
  return {mismatches == 0, std::to_string(1000 - mismatches) + "/1000 queries identical to the exhaustive scan"};
}

// ---------------------------------------------------------------- 6, 7

struct StoryScores {
  double r1_1cap = 0, r1_5cap = 0, r1_5cap4img = 0;
};

train::TrainConfig story_train_config(std::uint64_t seed, bool disable_ret) {
  train::TrainConfig tc;
  tc.steps = 3000;
  tc.lr = 3e-3;
  tc.seed = seed;
  tc.disable_ret = disable_ret;
  return tc;
}

StoryScores story_scores(std::uint64_t seed, bool disable_ret) {
  const auto& w = story_world();
  const auto tc = story_train_config(seed, disable_ret);
  const auto path = cached("story", json{{"train", tc}, {"lm", w.lm_path}}, ".json");
  if (fs::exists(path)) {
    const auto j = json::parse(std::ifstream(path));
    return {j.at("1cap"), j.at("5cap"), j.at("5cap4img")};
  }
  std::cerr << "  training " << (disable_ret ? "disable_ret" : "default") << " seed " << seed << "\n";
  auto state = fresh_state(w, tc);
  const auto records = w.corpus.manifest.filter_split("train").records;
  train::train_loop(state, records, w.corpus.store);
  const auto images = train::store_lookup(state.encoder, w.corpus.store);
  const auto model = state.model(images);
  const auto stories = w.corpus.manifest.filter_split("story");
  const auto index = retrieval::index_build(stories.records, images, state.adapters);
  StoryScores s;
  json j;
  for (const auto& [name, slot] : {std::pair<std::string, double*>{"1cap", &s.r1_1cap}, {"5cap", &s.r1_5cap},
                                   {"5cap4img", &s.r1_5cap4img}}) {
    eval::ProtocolSpec spec;
    spec.name = "story_retrieval_" + name;
    const auto report = eval::run_story_protocol(spec, stories, model, index);
    *slot = report.recall_at(1);
    j[name] = *slot;
    j[name + "_report"] = report.to_json();
  }
  std::ofstream(path) << j.dump(2) << "\n";
  return s;
}

constexpr std::uint64_t kPropertySeeds[] = {0, 1, 2};

Outcome context_helps() {
  const auto t0 = std::chrono::steady_clock::now();
  double one = 0, full = 0, five = 0;
  std::string per_seed;
  for (const auto seed : kPropertySeeds) {
    const auto s = story_scores(seed, false);
    one += s.r1_1cap / 3;
    five += s.r1_5cap / 3;
    full += s.r1_5cap4img / 3;
    per_seed += " " + fmt(s.r1_1cap) + "/" + fmt(s.r1_5cap4img);
  }
  const double secs = seconds_since(t0);
  const bool ok = full > one && full >= 1.2 * one && secs < 1800;
  return {ok, "mean R@1 5cap4img " + fmt(full) + " vs 1cap " + fmt(one) + " (5cap " + fmt(five) +
                  "); per seed 1cap/5cap4img:" + per_seed + ", " + fmt(secs, 3) + " s"};
}

Outcome ret_ablation() {
  double with_ret = 0, without = 0;
  std::string per_seed;
  for (const auto seed : kPropertySeeds) {
    const auto a = story_scores(seed, false);
    const auto b = story_scores(seed, true);
    with_ret += a.r1_5cap4img / 3;
    without += b.r1_5cap4img / 3;
    per_seed += " " + fmt(a.r1_5cap4img) + "/" + fmt(b.r1_5cap4img);
  }
  return {without < with_ret, "mean 5cap4img R@1 default " + fmt(with_ret) + " vs disable_ret " + fmt(without) +
                                  "; per seed default/disable_ret:" + per_seed};
}

// ---------------------------------------------------------------- 8

Outcome perplexity_ranking() {
  const auto& w = story_world();
  auto state = fresh_state(w, train::TrainConfig{});
  const auto images = train::store_lookup(state.encoder, w.corpus.store);
  const auto model = state.model(images);
  std::size_t records = 0, identical = 0;
  for (const auto* r : w.corpus.manifest.dialogues()) {
    ++records;
    data::InterleavedSequence ctx;
    ctx.add_image(r->image_id);
    for (const auto& round : r->dialogue->rounds) ctx.add_text(round);
    const auto& cands = r->dialogue->candidates;
    const auto ranked = retrieval::rank_answers_by_perplexity(model, ctx, cands);

    // Brute force: one full likelihood evaluation per candidate.
    num::NoGradScope ng;
    const auto enc = data::encode_interleaved(ctx, state.vocab, state.adapters.config.k, false);
    const auto prefix = ground::embed_sequence(state.lm, state.adapters, enc, images);
    std::vector<std::pair<num::Real, std::size_t>> oracle;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const auto ids = state.vocab.tokenize(cands[c]);
      const auto ll = text::log_likelihood(state.lm, ids, prefix, state.adapters.ret_embedding).item();
      oracle.emplace_back(std::exp(-ll / static_cast<num::Real>(ids.size())), c);
    }
    std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    bool same = ranked.size() == oracle.size();
    for (std::size_t i = 0; same && i < ranked.size(); ++i) same = ranked[i] == oracle[i].second;
    if (same) ++identical;
  }
  return {records == 100 && identical == records,
          std::to_string(identical) + "/" + std::to_string(records) + " dialogue rankings identical to the oracle"};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Outcome determinism() {
  const fs::path root = g_work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({"synthetic": {"n_pairs": 200, "n_stories": 20, "n_dialogues": 10},
    "pretrain": {"steps": 40},
    "train": {"batch_size": 16}})";
  auto sh = [&](const std::string& args) {
    const std::string cmd = std::string(VLG_CLI) + " --seed 11 --precision 64 --config " + config.string() + " " +
                            args + " > /dev/null 2>> " + (root / "stderr.txt").string();
    return std::system(cmd.c_str());
  };
  const std::string data = (root / "data").string(), lm = (root / "lm.bin").string();
  if (sh("synth-data --data " + data) != 0 || sh("pretrain-lm --data " + data + " --lm " + lm) != 0) {
    return {false, "setup failed: " + slurp(root / "stderr.txt")};
  }
  for (const std::string run : {"a", "b"}) {
    const auto dir = root / run;
    fs::create_directories(dir);
    if (sh("train --data " + data + " --lm " + lm + " --steps 60 --checkpoint " + (dir / "ck.bin").string() +
           " --metrics " + (dir / "metrics.jsonl").string()) != 0 ||
        sh("--out " + (dir / "sweep.json").string() + " eval sweep --data " + data + " --checkpoint " +
           (dir / "ck.bin").string()) != 0) {
      return {false, "run " + run + " failed: " + slurp(root / "stderr.txt")};
    }
  }
  const auto ma = slurp(root / "a" / "metrics.jsonl"), mb = slurp(root / "b" / "metrics.jsonl");
  const auto sa = slurp(root / "a" / "sweep.json"), sb = slurp(root / "b" / "sweep.json");
  const auto ca = slurp(root / "a" / "ck.bin"), cb = slurp(root / "b" / "ck.bin");
  const bool ok = !ma.empty() && !sa.empty() && ma == mb && sa == sb && ca == cb;
  return {ok, "metrics " + std::to_string(ma.size()) + " B " + (ma == mb ? "identical" : "DIFFER") + ", sweep " +
                  std::to_string(sa.size()) + " B " + (sa == sb ? "identical" : "DIFFER") + ", checkpoint " +
                  (ca == cb ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------- 10

bool layout_ok(const data::TrainingExample& ex, const text::Vocabulary& v, std::size_t k) {
  const auto& s = ex.sequence;
  if (s.scored.size() != s.tokens.size() || ex.ret_positions.size() != ex.segments() ||
      s.prefixes.size() != ex.segments() || ex.retrieval_supervised.size() != ex.segments()) {
    return false;
  }
  if (ex.ret_positions.back() != s.size() - 1) return false;
  for (std::size_t i = 0; i < ex.segments(); ++i) {
    const auto p = s.prefixes[i].position;
    for (std::size_t j = 0; j < k; ++j) {
      if (s.tokens[p + j] != ground::kPrefixSlot || s.scored[p + j]) return false;
    }
    if (p + k > ex.ret_positions[i] || s.tokens[ex.ret_positions[i]] != v.ret()) return false;
    if (i > 0 && p <= ex.ret_positions[i - 1]) return false;
  }
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (s.scored[t] != (s.tokens[t] != ground::kPrefixSlot)) return false;
  }
  // Only the last segment's read-out is supervised by default.
  for (std::size_t i = 0; i < ex.segments(); ++i) {
    if (ex.retrieval_supervised[i] != (i + 1 == ex.segments())) return false;
  }
  return true;
}

Outcome augmentation() {
  data::SyntheticSpec spec;
  spec.n_pairs = 200;
  spec.n_stories = 0;
  spec.n_dialogues = 0;
  spec.n_text_stories = 0;
  const auto corpus = data::generate_synthetic_corpus(spec);
  const auto vocab = data::corpus_vocabulary(corpus);
  std::size_t bad = 0, checked = 0;
  std::string freqs;
  for (const std::size_t k : {1u, 3u}) {
    std::vector<data::TrainingExample> examples;
    for (const auto& r : corpus.manifest.records) examples.push_back(data::build_caption_example(r, vocab, {k, true}));
    num::Rng rng(10);
    std::size_t joined = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto a = rng.below(examples.size());
      auto b = rng.below(examples.size() - 1);
      if (b >= a) ++b;
      const auto ex = data::concat_augment(examples[b], examples[a], rng, 0.5);
      joined += ex.segments() == 2 ? 1 : 0;
      ++checked;
      if (!layout_ok(ex, vocab, k)) ++bad;
    }
    const double freq = static_cast<double>(joined) / 10000.0;
    freqs += (freqs.empty() ? "" : ", ") + fmt(freq);
    if (freq < 0.48 || freq > 0.52) {
      return {false, "concatenation frequency " + fmt(freq) + " at k=" + std::to_string(k)};
    }
    // The trainer's own batches.
    train::TrainConfig tc;
    tc.k = k;
    for (std::uint64_t t = 0; t < 20; ++t) {
      for (const auto& ex : train::scheduled_batch(tc, examples, t)) {
        ++checked;
        if (!layout_ok(ex, vocab, k)) ++bad;
      }
    }
  }
  return {bad == 0, "frequency in [0.48, 0.52] for k=1 and k=3 (" + freqs + "), layout violations " +
                      std::to_string(bad) + "/" + std::to_string(checked)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = g_work.string();
  app.add_option("--criterion", only, "Run only these criteria (1-10)");
  app.add_option("--work", work, "Cache directory for LMs and trained models");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  num::set_precision(num::Precision::k64);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "freezing invariant", freezing_invariant},
      {3, "loss oracles", loss_oracles},
      {4, "overfit convergence", overfit},
      {5, "retrieval exactness", retrieval_exactness},
      {6, "context helps", context_helps},
      {7, "[RET] ablation", ret_ablation},
      {8, "perplexity ranking", perplexity_ranking},
      {9, "determinism", determinism},
      {10, "augmentation statistics", augmentation},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
