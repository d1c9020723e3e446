// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vlg/data/synthetic.hpp"
#include "vlg/errors.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/tape.hpp"
#include "vlg/training/trainer.hpp"
#include "vlg/training/gradient_suite.hpp"

using namespace vlg;
using namespace vlg::train;
namespace fs = std::filesystem;

namespace {

struct World {
  data::SyntheticCorpus corpus;
  data::DatasetManifest train_split;
  text::LoadedLM lm;
  vision::EncoderConfig encoder;
};

World make_world() {
  data::SyntheticSpec spec;
  spec.n_pairs = 24;
  spec.n_stories = 0;
  spec.n_dialogues = 0;
  spec.n_text_stories = 0;
  spec.dim = 12;
  auto corpus = data::generate_synthetic_corpus(spec);
  auto vocab = data::corpus_vocabulary(corpus);
  text::LMConfig lc;
  lc.layers = 1;
  lc.heads = 2;
  lc.d_model = lc.hidden_dim = 16;
  lc.ffn_dim = 32;
  lc.vocab_size = vocab.size();
  lc.max_len = 32;
  lc.seed = 3;
  vision::EncoderConfig ec;
  ec.out_dim = 12;
  auto split = corpus.manifest.filter_split("train");
  return World{std::move(corpus), std::move(split), text::LoadedLM{vocab, text::TransformerLM(lc)}, ec};
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.steps = 3;
  c.q = 8;
  c.warmup_steps = 2;
  c.lr = 1e-2;
  return c;
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("vlg_train_" + name); }

std::string read(const fs::path& p) { return num::read_file(p); }

}  // namespace

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.caption_reduction = ground::CaptionReduction::kSum;
  c.unfreeze_lm = true;
  nlohmann::json j = c;
  auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(TrainConfig{}.lr, 3e-4);
  EXPECT_EQ(TrainConfig{}.p_concat, 0.5);
}

TEST(TrainStep, NullObjectiveLeavesParameters) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.lambda_c = 0;
  cfg.lambda_r = 0;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  const auto before = state.digests();
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto examples = build_examples(state, w.train_split.records);
  auto report = train_step(state, scheduled_batch(cfg, examples, 0), images);
  EXPECT_EQ(report.grad_norm, 0.0);
  EXPECT_EQ(state.digests(), before);
  EXPECT_EQ(state.step, 1u);
}

TEST(TrainStep, RetEmbeddingMovesAndOnlyAdaptersChange) {
  auto w = make_world();
  auto cfg = small_config();
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  const auto before = state.digests();
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto examples = build_examples(state, w.train_split.records);
  auto report = train_step(state, scheduled_batch(cfg, examples, 0), images);
  EXPECT_GT(report.grad_norms.at("adapters/ret_embedding"), 0.0);
  EXPECT_EQ(report.grad_norms.size(), 5u);
  auto after = state.digests();
  EXPECT_NE(after.at("adapters/ret_embedding"), before.at("adapters/ret_embedding"));
  auto frozen = verify_frozen(state, before);
  EXPECT_TRUE(frozen.passed) << frozen.summary();
  EXPECT_FALSE(frozen.intentionally_unfrozen);
  EXPECT_EQ(frozen.changed.size(), 5u);
  for (const auto& name : frozen.changed) EXPECT_EQ(name.rfind("adapters/", 0), 0u) << name;
  EXPECT_EQ(state.lm.digest(), w.lm.lm.digest());
}

TEST(TrainStep, ReportedLossMatchesRecomputation) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.lambda_c = 0.7;
  cfg.lambda_r = 1.3;
  cfg.p_concat = 1.0;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto examples = build_examples(state, w.train_split.records);
  auto batch = scheduled_batch(cfg, examples, 0);

  // Independent evaluation with the public building blocks, before the update.
  double l_c, l_t2i, l_i2t;
  {
    num::NoGradScope ng;
    std::vector<ground::MixedSequence> seqs;
    std::vector<num::Tensor> t_rows, i_rows;
    for (const auto& ex : batch) {
      seqs.push_back(ex.sequence);
      ASSERT_EQ(ex.segments(), 2u);
      auto view = data::retrieval_view(ex, 1, state.vocab, false);
      t_rows.push_back(ground::text_retrieval_embedding(state.lm, state.adapters, view, images));
      i_rows.push_back(ground::image_retrieval_embedding(state.adapters, images(ex.sequence.prefixes[1].image_id)));
    }
    l_c = ground::captioning_loss(state.lm, state.adapters, seqs, images).item();
    auto t = num::stack(t_rows), v = num::stack(i_rows);
    l_t2i = ground::infonce_t2i(t, v, state.adapters.log_tau).item();
    l_i2t = ground::infonce_i2t(v, t, state.adapters.log_tau).item();
  }
  auto r = train_step(state, batch, images);
  EXPECT_NEAR(r.l_c, l_c, 1e-12);
  EXPECT_NEAR(r.l_t2i, l_t2i, 1e-12);
  EXPECT_NEAR(r.l_i2t, l_i2t, 1e-12);
  EXPECT_LT(std::abs(r.l - (0.7 * l_c + 1.3 * (l_t2i + l_i2t))), 1e-10);
}

TEST(TrainStep, RejectsSmallBatchAndNonFiniteLoss) {
  auto w = make_world();
  auto cfg = small_config();
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto examples = build_examples(state, w.train_split.records);
  EXPECT_THROW(train_step(state, std::span(examples).first(1), images), ContractError);
  state.adapters.w_c[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_step(state, std::span(examples).first(4), images);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_"), std::string::npos) << e.what();
  }
  auto big = cfg;
  big.batch_size = 64;
  EXPECT_THROW(scheduled_batch(big, examples, 0), ContractError);
}

TEST(TrainLoop, ZeroStepsGivesInitialization) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.steps = 0;
  cfg.embed_lm = true;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  const auto fresh = make_checkpoint(state).serialize();
  const auto ckpt = temp("zero.ckpt"), log = temp("zero.jsonl");
  train_loop(state, w.train_split.records, w.corpus.store, {log, ckpt, {}});
  EXPECT_EQ(read(ckpt), fresh);
  EXPECT_EQ(read(log), "");
  auto loaded = load_checkpoint(ckpt);
  EXPECT_EQ(loaded.step, 0u);
  EXPECT_EQ(loaded.digests(), loaded.initial_digests);
  auto report = verify_frozen(loaded, loaded.initial_digests);
  EXPECT_TRUE(report.passed);
  EXPECT_TRUE(report.changed.empty());
  fs::remove(ckpt);
  fs::remove(log);
}

TEST(TrainLoop, DeterministicAndMetricsLog) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.steps = 5;
  cfg.embed_lm = true;
  std::string ckpt_bytes[2], log_bytes[2];
  for (int run = 0; run < 2; ++run) {
    auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
    const auto ckpt = temp("det.ckpt"), log = temp("det.jsonl");
    train_loop(state, w.train_split.records, w.corpus.store, {log, ckpt, {}});
    ckpt_bytes[run] = read(ckpt);
    log_bytes[run] = read(log);
    fs::remove(ckpt);
    fs::remove(log);
  }
  EXPECT_EQ(ckpt_bytes[0], ckpt_bytes[1]);
  EXPECT_EQ(log_bytes[0], log_bytes[1]);

  std::istringstream lines(log_bytes[0]);
  std::string line;
  std::uint64_t t = 0;
  num::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.warmup_steps = cfg.warmup_steps;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::uint64_t>(), t);
    const double expected = cfg.lr * std::min(1.0, static_cast<double>(t + 1) / static_cast<double>(cfg.warmup_steps));
    EXPECT_DOUBLE_EQ(j.at("lr").get<double>(), expected);
    EXPECT_EQ(j.at("lr").get<double>(), num::scheduled_lr(ac, t));
    for (const char* key : {"L_c", "L_t2i", "L_i2t", "L", "tau"}) EXPECT_TRUE(std::isfinite(j.at(key).get<double>()));
    ++t;
  }
  EXPECT_EQ(t, 5u);
}

TEST(Checkpoint, LoadSaveByteIdenticalBothModes) {
  auto w = make_world();
  const auto lm_path = temp("lm.bin");
  text::save_lm(lm_path, w.lm.lm, w.lm.vocab);
  for (bool embed : {false, true}) {
    auto cfg = small_config();
    cfg.embed_lm = embed;
    auto state = TrainingState::create(cfg, w.lm, lm_path.string(), w.encoder);
    const auto ckpt = temp("rt.ckpt");
    train_loop(state, w.train_split.records, w.corpus.store, {{}, ckpt, {}});
    const auto bytes = read(ckpt);
    auto loaded = load_checkpoint(ckpt);
    const auto again = temp("rt2.ckpt");
    save_checkpoint(again, loaded);
    EXPECT_EQ(read(again), bytes) << "embed=" << embed;
    EXPECT_EQ(loaded.digests(), state.digests());
    EXPECT_EQ(loaded.adam.step, 3u);
    fs::remove(ckpt);
    fs::remove(again);
  }
  // A different LM file behind the same path is refused.
  auto other = w.lm.lm.clone();
  other.parameter("pos_emb")[0] += 1.0;
  auto cfg = small_config();
  auto state = TrainingState::create(cfg, w.lm, lm_path.string(), w.encoder);
  const auto ckpt = temp("swap.ckpt");
  save_checkpoint(ckpt, state);
  text::save_lm(lm_path, other, w.lm.vocab);
  EXPECT_THROW(load_checkpoint(ckpt), FormatError);
  fs::remove(ckpt);
  fs::remove(lm_path);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.steps = 4;
  cfg.embed_lm = true;
  auto full = TrainingState::create(cfg, w.lm, "", w.encoder);
  train_loop(full, w.train_split.records, w.corpus.store);

  auto half_cfg = cfg;
  half_cfg.steps = 2;
  auto half = TrainingState::create(half_cfg, w.lm, "", w.encoder);
  train_loop(half, w.train_split.records, w.corpus.store);
  auto resumed = restore_checkpoint(make_checkpoint(half));
  resumed.config.steps = 4;
  train_loop(resumed, w.train_split.records, w.corpus.store);
  EXPECT_EQ(resumed.digests(), full.digests());
}

TEST(VerifyFrozen, TamperedLmBitIsReported) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.embed_lm = true;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  train_loop(state, w.train_split.records, w.corpus.store);
  auto archive = make_checkpoint(state);
  for (auto& t : archive.tensors) {
    if (t.name == "lm/layers.0.attn.w_q") {
      auto bits = std::bit_cast<std::uint64_t>(t.tensor[5]);
      t.tensor[5] = std::bit_cast<double>(bits ^ 1ULL);
    }
  }
  auto tampered = restore_checkpoint(num::TensorArchive::deserialize(archive.serialize()));
  auto report = verify_frozen(tampered, tampered.initial_digests);
  EXPECT_FALSE(report.passed);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_NE(report.violations[0].find("θ"), std::string::npos);
  EXPECT_NE(report.violations[0].find("lm/layers.0.attn.w_q"), std::string::npos);
  EXPECT_NE(report.summary().find("FAIL"), std::string::npos);
}

TEST(VerifyFrozen, UnfrozenRunIsIntentional) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.unfreeze_lm = true;
  cfg.max_grad_norm = 1.0;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  std::vector<StepReport> reports;
  train_loop(state, w.train_split.records, w.corpus.store, {{}, {}, [&](const StepReport& r) { reports.push_back(r); }});
  EXPECT_GT(reports[0].grad_norms.size(), 5u);
  auto report = verify_frozen(state, state.initial_digests);
  EXPECT_TRUE(report.passed) << report.summary();
  EXPECT_TRUE(report.intentionally_unfrozen);
  EXPECT_GT(report.changed.size(), 5u);
  EXPECT_NE(state.lm.digest(), w.lm.lm.digest());
  // The unfrozen LM travels inside the checkpoint.
  auto back = restore_checkpoint(make_checkpoint(state));
  EXPECT_EQ(back.lm.digest(), state.lm.digest());
}

TEST(ScheduledBatch, DeterministicPartnersOutsideBatch) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.p_concat = 1.0;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  auto examples = build_examples(state, w.train_split.records);
  for (std::uint64_t t = 0; t < 12; ++t) {
    auto a = scheduled_batch(cfg, examples, t), b = scheduled_batch(cfg, examples, t);
    ASSERT_EQ(a.size(), 4u);
    std::set<std::string> own;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].sequence.tokens, b[i].sequence.tokens);
      ASSERT_EQ(a[i].segments(), 2u);
      own.insert(a[i].pair_ids[1]);
    }
    for (const auto& ex : a) EXPECT_EQ(own.count(ex.pair_ids[0]), 0u);
  }
  // Every record appears once per epoch.
  std::multiset<std::string> epoch;
  for (std::uint64_t t = 0; t < 6; ++t) {
    for (const auto& ex : scheduled_batch(cfg, examples, t)) epoch.insert(ex.pair_ids.back());
  }
  EXPECT_EQ(epoch.size(), 24u);
  EXPECT_EQ(std::set<std::string>(epoch.begin(), epoch.end()).size(), 24u);
}

TEST(TrainStep, DisableRetReadsLastCaptionToken) {
  auto w = make_world();
  auto cfg = small_config();
  cfg.disable_ret = true;
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  auto examples = build_examples(state, w.train_split.records);
  for (const auto& ex : examples) {
    for (auto id : ex.sequence.tokens) EXPECT_NE(id, state.vocab.ret());
  }
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto r = train_step(state, scheduled_batch(cfg, examples, 0), images);
  EXPECT_TRUE(std::isfinite(r.l));
}

TEST(InBatchRecall, BoundsAndContract) {
  auto w = make_world();
  auto cfg = small_config();
  auto state = TrainingState::create(cfg, w.lm, "", w.encoder);
  auto images = store_lookup(state.encoder, w.corpus.store);
  auto examples = build_examples(state, w.train_split.records);
  auto r = in_batch_recall(state, std::span(examples).first(8), images);
  EXPECT_GE(r.t2i_r1, 0.0);
  EXPECT_LE(r.t2i_r1, 1.0);
  EXPECT_GT(r.l_t2i, 0.0);
  EXPECT_THROW(in_batch_recall(state, std::span(examples).first(1), images), ContractError);
}

TEST(GradientSuite, EndToEndObjectivesMatchFiniteDifferences) {
  for (std::uint64_t seed : {0u, 7u}) {
    const auto r = end_to_end_gradient_check(seed);
    ASSERT_EQ(r.checks.size(), 3u);
    for (const auto& c : r.checks) {
      EXPECT_GT(c.report.entries, 0u);
      EXPECT_LT(c.report.max_rel_error, 1e-4) << c.loss << " " << c.report.worst;
    }
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.to_json()["passed"], true);
  }
}
