// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "vlg/errors.hpp"
#include "vlg/numerics/gradcheck.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"
#include "vlg/text/transformer.hpp"
#include "vlg/text/vocabulary.hpp"

using namespace vlg;
using namespace vlg::text;
using num::Shape;
using num::Tensor;

namespace {

Vocabulary small_vocab() {
  const std::vector<std::string> lines{"a red cat sat", "the blue dog ran", "a cat ran"};
  return Vocabulary::build(lines);
}

LMConfig small_config(std::size_t vocab_size, std::uint64_t seed = 3) {
  LMConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 8;
  c.hidden_dim = 8;
  c.ffn_dim = 16;
  c.vocab_size = vocab_size;
  c.max_len = 16;
  c.seed = seed;
  return c;
}

// Zeroes every token embedding so all logits are 0.
void make_uniform(TransformerLM& lm) {
  auto& emb = lm.parameter("tok_emb");
  for (auto& x : emb.data()) x = 0.0;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("vlg_text_" + name);
}

}  // namespace

TEST(Tokenize, Basics) {
  auto v = small_vocab();
  EXPECT_TRUE(v.tokenize("").empty());
  auto ret = v.tokenize("[RET]");
  ASSERT_EQ(ret.size(), 1u);
  EXPECT_EQ(ret[0], v.ret());
  EXPECT_EQ(v.ret(), static_cast<TokenId>(v.size()) - 1);
  EXPECT_EQ(v.tokenize("zebra")[0], v.unk());
  const std::string s = "the red dog sat";
  EXPECT_EQ(v.detokenize(v.tokenize(s)), s);
  EXPECT_EQ(v.token(v.bos()), "<s>");
  EXPECT_THROW(v.token(static_cast<TokenId>(v.size())), ContractError);
}

TEST(Vocabulary, FileRoundTripAndValidation) {
  auto v = small_vocab();
  const auto path = temp_path("vocab.txt");
  v.save(path);
  auto w = Vocabulary::load(path);
  EXPECT_EQ(w.tokens(), v.tokens());
  std::filesystem::remove(path);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b"}), FormatError);
  EXPECT_THROW(Vocabulary::from_tokens({"<pad>", "<s>", "</s>", "<unk>", "x", "x", "[RET]"}), FormatError);
  EXPECT_THROW(Vocabulary::load(temp_path("missing.txt")), MissingAssetError);
}

TEST(LMConfig, Validation) {
  auto c = small_config(10);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(10);
  c.hidden_dim = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(10);
  nlohmann::json j = c;
  EXPECT_EQ(j.get<LMConfig>().ffn_dim, c.ffn_dim);
}

TEST(Forward, ShapesAndLength) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size()));
  const TokenId one[] = {v.bos()};
  auto out = lm.forward(lm.embed(one));
  EXPECT_EQ(out.hidden.shape(), (Shape{1, 8}));
  EXPECT_EQ(out.logits.shape(), (Shape{1, v.size()}));
  EXPECT_THROW(lm.forward(Tensor(Shape{17, 8})), ContractError);
  EXPECT_THROW(lm.forward(Tensor(Shape{2, 7})), DimensionError);
}

TEST(Forward, Causality) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size()));
  num::Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t_len = 3 + rng.below(8);
    Tensor x = num::normal_tensor({t_len, 8}, rng, 1.0);
    auto base = lm.forward(x);
    const std::size_t t = 1 + rng.below(t_len - 1);
    Tensor y = x.clone();
    for (std::size_t i = t * 8; i < y.numel(); ++i) y[i] += rng.normal();
    auto pert = lm.forward(y);
    for (std::size_t i = 0; i < t * v.size(); ++i) ASSERT_EQ(base.logits[i], pert.logits[i]);
    for (std::size_t i = 0; i < t * 8; ++i) ASSERT_EQ(base.hidden[i], pert.hidden[i]);
  }
}

TEST(Forward, TiedOutputLayer) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size()));
  num::Rng rng(2);
  Tensor ret = num::normal_tensor({8}, rng, 0.1);
  const std::vector<TokenId> ids{v.bos(), v.id("a"), v.id("cat"), v.ret()};
  auto out = lm.forward(lm.embed(ids, ret), ret);
  Tensor table = lm.token_table(ret);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (std::size_t tok = 0; tok < v.size(); ++tok) {
      double dot = 0;
      for (std::size_t j = 0; j < 8; ++j) dot += out.hidden.at(t, j) * table.at(tok, j);
      EXPECT_NEAR(out.logits.at(t, tok), dot, 1e-12);
    }
  }
  // Same vector feeds the [RET] input row.
  Tensor e = lm.embed(std::span<const TokenId>(&ids[3], 1), ret);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(e[j], ret[j]);
}

TEST(Forward, GoldenLogits) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size(), 1234));
  const std::vector<TokenId> ids{v.bos(), v.id("a"), v.id("red"), v.id("cat")};
  auto out = lm.forward(lm.embed(ids));
  const std::size_t last = (ids.size() - 1) * v.size();
  // Recorded once the causality and gradient checks passed.
  const double golden[] = {-0.013307557166424962, -0.067483382944851372, -0.071227454726879358,
                           0.069953778174658379,  0.027279637629099275,  0.012785477136962207,
                           0.18111026951737733,   0.039056051601071951,  0.037939982427759304,
                           0.16152699444555169,   0.051750976768297915,  0.069274323862204987,
                           0.041554924727068947};
  ASSERT_EQ(std::size(golden), v.size());
  for (std::size_t i = 0; i < std::size(golden); ++i) EXPECT_NEAR(out.logits[last + i], golden[i], 1e-14) << i;
}

TEST(LogLikelihood, UniformModel) {
  const std::vector<std::string> words{"x", "y"};
  auto v = Vocabulary::from_words(words);
  ASSERT_EQ(v.size(), 7u);
  const std::vector<std::string> more{"x", "y", "z"};
  auto v8 = Vocabulary::from_words(more);
  ASSERT_EQ(v8.size(), 8u);
  TransformerLM lm(small_config(8));
  make_uniform(lm);
  Tensor zero_ret(Shape{8});
  const std::vector<TokenId> three{4, 5, 6};
  EXPECT_NEAR(log_likelihood(lm, three, {}, zero_ret).item(), -3 * std::log(8.0), 1e-12);
  const std::vector<TokenId> single{5};
  EXPECT_NEAR(log_likelihood(lm, single, {}, zero_ret).item(), -std::log(8.0), 1e-12);
  EXPECT_THROW(log_likelihood(lm, std::vector<TokenId>{}), ContractError);
}

TEST(LogLikelihood, PerStepOracle) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size(), 9));
  num::Rng rng(4);
  Tensor ret = lm.default_ret_row();
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<TokenId> ids;
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<TokenId>(rng.below(v.size())));
    Tensor prefix;
    if (trial % 2 == 1) prefix = num::normal_tensor({2, 8}, rng, 0.5);

    double oracle = 0;
    for (std::size_t t = 0; t < n; ++t) {
      // Context up to (not including) ids[t], run alone.
      std::vector<Tensor> parts;
      if (prefix.valid()) {
        parts.push_back(prefix);
      } else {
        const TokenId bos = v.bos();
        parts.push_back(lm.embed(std::span<const TokenId>(&bos, 1), ret));
      }
      if (t > 0) parts.push_back(lm.embed(std::span<const TokenId>(ids.data(), t), ret));
      auto out = lm.forward(num::concat_rows(parts), ret);
      const std::size_t last = out.logits.dim(0) - 1;
      double mx = -1e300;
      for (std::size_t j = 0; j < v.size(); ++j) mx = std::max(mx, out.logits.at(last, j));
      double z = 0;
      for (std::size_t j = 0; j < v.size(); ++j) z += std::exp(out.logits.at(last, j) - mx);
      oracle += out.logits.at(last, static_cast<std::size_t>(ids[t])) - mx - std::log(z);
    }
    EXPECT_NEAR(log_likelihood(lm, ids, prefix, ret).item(), oracle, 1e-10);
  }
}

TEST(LastHiddenAt, MatchesForwardRow) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size()));
  const std::vector<TokenId> ids{v.bos(), v.id("blue"), v.id("dog"), v.ret()};
  Tensor ret = lm.default_ret_row();
  Tensor x = lm.embed(ids, ret);
  Tensor h = last_hidden_at(lm, x, 3, ret);
  EXPECT_EQ(h.shape(), (Shape{8}));
  auto out = lm.forward(x, ret);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(h[j], out.hidden.at(3, j));
  EXPECT_THROW(last_hidden_at(lm, x, 4, ret), ContractError);
}

TEST(FrozenLM, GradientReachesPrefixAndRetRow) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size(), 5));
  num::Rng rng(6);
  Tensor prefix = num::normal_tensor({1, 8}, rng, 0.5);
  Tensor ret = num::normal_tensor({8}, rng, 0.1);
  prefix.set_requires_grad(true);
  ret.set_requires_grad(true);
  const std::vector<TokenId> ids{v.id("a"), v.id("cat"), v.ret()};
  const std::vector<num::NamedTensor> params{{"prefix", prefix}, {"ret", ret}};
  auto report = num::check_gradients([&] { return log_likelihood(lm, ids, prefix, ret); }, params);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
  for (const auto& p : lm.parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
}

TEST(Pretrain, ZeroStepsIsInitialization) {
  auto v = small_vocab();
  const std::vector<std::string> corpus{"a red cat sat"};
  PretrainConfig pc;
  pc.steps = 0;
  auto lm = pretrain_lm(corpus, v, small_config(v.size()), pc);
  EXPECT_EQ(lm.digest(), TransformerLM(small_config(v.size())).digest());
  EXPECT_THROW(pretrain_lm(std::vector<std::string>{}, v, small_config(v.size()), pc), ContractError);
}

TEST(Pretrain, LearnsForcedBigram) {
  // "cat" is always followed by "sat"; everything else varies.
  const std::vector<std::string> fillers{"red", "blue", "dog", "the", "ran", "big"};
  std::vector<std::string> corpus;
  num::Rng rng(1);
  for (int i = 0; i < 60; ++i) {
    corpus.push_back(fillers[rng.below(6)] + " cat sat " + fillers[rng.below(6)] + " " + fillers[rng.below(6)]);
  }
  auto v = Vocabulary::build(corpus);
  auto cfg = small_config(v.size());
  cfg.d_model = cfg.hidden_dim = 16;
  cfg.ffn_dim = 32;
  PretrainConfig pc;
  pc.steps = 150;
  pc.batch_size = 8;
  pc.window = 12;
  auto lm = pretrain_lm(corpus, v, cfg, pc);
  for (const auto& p : lm.parameters()) EXPECT_FALSE(p.tensor.requires_grad());

  const std::vector<TokenId> ctx{v.bos(), v.id("red"), v.id("cat")};
  auto out = lm.forward(lm.embed(ctx));
  Tensor probs = num::softmax(num::row(out.logits, 2), 0);
  EXPECT_GT(probs[static_cast<std::size_t>(v.id("sat"))], 0.9);

  auto again = pretrain_lm(corpus, v, cfg, pc);
  EXPECT_EQ(again.digest(), lm.digest());
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size(), 17));
  const auto path = temp_path("lm.bin");
  save_lm(path, lm, v);
  auto loaded = load_lm(path);
  EXPECT_EQ(loaded.lm.digest(), lm.digest());
  EXPECT_EQ(loaded.vocab.tokens(), v.tokens());
  EXPECT_EQ(loaded.lm.to_archive(loaded.vocab).serialize(), lm.to_archive(v).serialize());

  auto archive = num::TensorArchive::load(path);
  archive.tensors[3].tensor[0] += 1.0;
  EXPECT_THROW(TransformerLM::from_archive(archive), FormatError);
  std::filesystem::remove(path);
}

TEST(Clone, IndependentStorage) {
  auto v = small_vocab();
  TransformerLM lm(small_config(v.size()));
  auto copy = lm.clone();
  EXPECT_EQ(copy.digest(), lm.digest());
  copy.parameter("ln_f.bias")[0] = 1.0;
  EXPECT_NE(copy.digest(), lm.digest());
}
