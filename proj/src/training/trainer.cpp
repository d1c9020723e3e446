// SPDX-License-Identifier: Apache-2.0
#include "vlg/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "vlg/errors.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::train {

using num::NamedTensor;
using num::Tensor;

namespace {

constexpr int kFormatVersion = 1;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* reduction_name(ground::CaptionReduction r) {
  return r == ground::CaptionReduction::kSum ? "sum" : "mean";
}

num::AdamConfig adam_config(const TrainConfig& c) {
  num::AdamConfig a;
  a.lr = c.lr;
  a.warmup_steps = c.warmup_steps;
  return a;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

bool is_adapter(const std::string& name) { return name.rfind("adapters/", 0) == 0; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive, got " + std::to_string(lr));
  if (batch_size < 2) throw ConfigError("train: batch size must be at least 2");
  if (lambda_c < 0 || lambda_r < 0) throw ConfigError("train: loss weights must be non-negative");
  if (p_concat < 0 || p_concat > 1) throw ConfigError("train: p_concat must lie in [0, 1]");
  if (max_grad_norm < 0) throw ConfigError("train: max_grad_norm must be non-negative");
  if (k == 0 || q == 0) throw ConfigError("train: k and q must be positive");
  if (!(tau_init > 0)) throw ConfigError("train: tau_init must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"warmup_steps", c.warmup_steps},
                     {"batch_size", c.batch_size},
                     {"steps", c.steps},
                     {"lambda_c", c.lambda_c},
                     {"lambda_r", c.lambda_r},
                     {"p_concat", c.p_concat},
                     {"seed", c.seed},
                     {"unfreeze_lm", c.unfreeze_lm},
                     {"disable_ret", c.disable_ret},
                     {"retrieval_concat", c.retrieval_concat},
                     {"max_grad_norm", c.max_grad_norm},
                     {"caption_reduction", reduction_name(c.caption_reduction)},
                     {"k", c.k},
                     {"q", c.q},
                     {"tau_init", c.tau_init},
                     {"checkpoint_every", c.checkpoint_every},
                     {"embed_lm", c.embed_lm}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.lambda_c = j.value("lambda_c", d.lambda_c);
  c.lambda_r = j.value("lambda_r", d.lambda_r);
  c.p_concat = j.value("p_concat", d.p_concat);
  c.seed = j.value("seed", d.seed);
  c.unfreeze_lm = j.value("unfreeze_lm", d.unfreeze_lm);
  c.disable_ret = j.value("disable_ret", d.disable_ret);
  c.retrieval_concat = j.value("retrieval_concat", d.retrieval_concat);
  c.max_grad_norm = j.value("max_grad_norm", d.max_grad_norm);
  const auto red = j.value("caption_reduction", std::string("mean"));
  if (red != "mean" && red != "sum") throw ConfigError("train: caption_reduction must be mean or sum, got " + red);
  c.caption_reduction = red == "sum" ? ground::CaptionReduction::kSum : ground::CaptionReduction::kMean;
  c.k = j.value("k", d.k);
  c.q = j.value("q", d.q);
  c.tau_init = j.value("tau_init", d.tau_init);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.embed_lm = j.value("embed_lm", d.embed_lm);
}

TrainingState TrainingState::create(const TrainConfig& config, const text::LoadedLM& loaded, std::string lm_source,
                                    const vision::EncoderConfig& encoder) {
  config.validate();
  ground::AdapterConfig ac;
  ac.k = config.k;
  ac.q = config.q;
  ac.m = encoder.out_dim;
  ac.d = loaded.lm.config().hidden_dim;
  ac.tau_init = config.tau_init;
  ac.seed = config.seed;
  auto lm = loaded.lm.clone();
  lm.set_trainable(config.unfreeze_lm);
  auto adapters = ground::GroundingAdapters::init(ac, lm);
  adapters.set_trainable(true);
  TrainingState s{config,  loaded.vocab, std::move(lm), std::move(lm_source), loaded.lm.digest(),
                  vision::VisualEncoder(encoder), std::move(adapters), {}, 0, {}};
  s.adam = num::make_adam_state(adam_config(config), tensors_of(s.trainable()));
  s.initial_digests = s.digests();
  return s;
}

std::vector<NamedTensor> TrainingState::trainable() const {
  std::vector<NamedTensor> out;
  for (const auto& a : adapters.named()) out.push_back({"adapters/" + a.name, a.tensor});
  if (config.unfreeze_lm) {
    for (const auto& p : lm.parameters()) out.push_back({"lm/" + p.name, p.tensor});
  }
  return out;
}

ParameterDigests TrainingState::digests() const {
  ParameterDigests d;
  for (const auto& p : lm.parameters()) d["lm/" + p.name] = num::digest(p);
  for (const auto& p : encoder.parameters()) d["encoder/" + p.name] = num::digest(p);
  for (const auto& a : adapters.named()) d["adapters/" + a.name] = num::digest(a);
  return d;
}

ground::GroundedModel TrainingState::model(ground::ImageLookup images) const {
  return ground::GroundedModel{vocab, lm, adapters, std::move(images), !config.disable_ret};
}

ground::ImageLookup store_lookup(const vision::VisualEncoder& encoder, const vision::EmbeddingStore& store) {
  return [&encoder, &store](const std::string& id) { return vision::encode_image(vision::ImageRef{id}, encoder, store); };
}

BatchLosses batch_losses(const TrainingState& state, std::span<const data::TrainingExample> batch,
                         const ground::ImageLookup& images) {
  if (batch.size() < 2) throw ContractError("batch_losses: batch needs at least 2 examples, got " + std::to_string(batch.size()));
  const auto& lm = state.lm;
  const auto& adapters = state.adapters;
  Tensor caption_sum;
  std::vector<Tensor> text_rows, image_rows;
  for (const auto& ex : batch) {
    auto out = lm.forward(ground::embed_sequence(lm, adapters, ex.sequence, images), adapters.ret_embedding, true);
    Tensor lc = ground::caption_example_loss(out.logits, ex.sequence, state.config.caption_reduction);
    caption_sum = caption_sum.valid() ? num::add(caption_sum, lc) : lc;
    for (std::size_t s = 0; s < ex.segments(); ++s) {
      if (!ex.retrieval_supervised[s]) continue;
      auto view = data::retrieval_view(ex, s, state.vocab, state.config.retrieval_concat);
      auto hidden = lm.forward(ground::embed_sequence(lm, adapters, view, images), adapters.ret_embedding, false).hidden;
      text_rows.push_back(ground::retrieval_from_hidden(adapters, num::row(hidden, view.size() - 1)));
      image_rows.push_back(ground::image_retrieval_embedding(adapters, images(ex.sequence.prefixes[s].image_id)));
    }
  }
  BatchLosses out;
  out.l_c = num::scale(caption_sum, 1.0 / static_cast<num::Real>(batch.size()));
  const Tensor t = num::stack(text_rows), v = num::stack(image_rows);
  out.l_t2i = ground::infonce_t2i(t, v, adapters.log_tau);
  out.l_i2t = ground::infonce_i2t(v, t, adapters.log_tau);
  out.total = ground::total_loss(out.l_c, out.l_t2i, out.l_i2t, {state.config.lambda_c, state.config.lambda_r});
  return out;
}

StepReport train_step(TrainingState& state, std::span<const data::TrainingExample> batch,
                      const ground::ImageLookup& images) {
  if (batch.size() < 2) throw ContractError("train_step: batch needs at least 2 examples, got " + std::to_string(batch.size()));
  const auto& adapters = state.adapters;
  auto params = state.trainable();
  for (auto& p : params) p.tensor.zero_grad();

  StepReport report;
  report.step = state.step;
  report.lr = num::scheduled_lr(state.adam.config, state.adam.step);
  report.tau = adapters.tau();

  num::Tape tape;
  BatchLosses losses;
  {
    num::TapeScope scope(tape);
    losses = batch_losses(state, batch, images);
  }
  const Tensor& loss = losses.total;
  report.l_c = losses.l_c.item();
  report.l_t2i = losses.l_t2i.item();
  report.l_i2t = losses.l_i2t.item();
  report.l = loss.item();
  if (!std::isfinite(report.l)) throw NumericError("train_step: total loss L is not finite at step " + std::to_string(state.step));

  num::backward(tape, loss);
  std::vector<Tensor> grads;
  double total = 0;
  for (const auto& p : params) {
    grads.push_back(p.tensor.grad_tensor());
    double s = 0;
    for (auto g : grads.back().data()) s += g * g;
    if (!std::isfinite(s)) throw NumericError("train_step: gradient of " + p.name + " is not finite");
    report.grad_norms[p.name] = std::sqrt(s);
    total += s;
  }
  report.grad_norm = std::sqrt(total);
  if (state.config.max_grad_norm > 0 && report.grad_norm > state.config.max_grad_norm) {
    const double f = state.config.max_grad_norm / report.grad_norm;
    for (auto& g : grads) {
      for (auto& x : g.data()) x *= f;
    }
  }
  auto tensors = tensors_of(params);
  num::adam_step(state.adam, tensors, grads);
  for (auto& p : params) p.tensor.zero_grad();
  state.adapters.clamp_tau();
  ++state.step;
  return report;
}

std::vector<data::TrainingExample> build_examples(const TrainingState& state,
                                                  std::span<const data::CaptionedImage> records) {
  std::vector<data::TrainingExample> out;
  out.reserve(records.size());
  const data::ExampleOptions opts{state.config.k, !state.config.disable_ret};
  for (const auto& r : records) out.push_back(data::build_caption_example(r, state.vocab, opts));
  return out;
}

std::vector<data::TrainingExample> scheduled_batch(const TrainConfig& config,
                                                   std::span<const data::TrainingExample> examples, std::uint64_t t) {
  const std::size_t n = examples.size();
  if (n < config.batch_size) {
    throw ContractError("training data has " + std::to_string(n) + " examples, fewer than the batch size " +
                        std::to_string(config.batch_size));
  }
  const std::size_t per_epoch = n / config.batch_size;
  const auto epoch = t / per_epoch;
  const auto batches = data::make_batches(n, config.batch_size, mix(config.seed, epoch));
  const auto& rows = batches[t % per_epoch];
  const std::unordered_set<std::size_t> in_batch(rows.begin(), rows.end());

  num::Rng rng(mix(config.seed ^ 0x5bd1e995ULL, t));
  std::vector<data::TrainingExample> out;
  out.reserve(rows.size());
  for (auto i : rows) {
    // Partners come from outside the batch when there is anything outside it,
    // so a concatenated example never repeats another row's image.
    std::size_t partner = i;
    while (partner == i || (n > rows.size() && in_batch.count(partner))) partner = rng.below(n);
    const double coin = rng.uniform();
    out.push_back(data::concat_augment(examples[partner], examples[i], coin, config.p_concat, config.retrieval_concat));
  }
  return out;
}

nlohmann::ordered_json metrics_line(const StepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["L_c"] = r.l_c;
  j["L_t2i"] = r.l_t2i;
  j["L_i2t"] = r.l_i2t;
  j["L"] = r.l;
  j["lr"] = r.lr;
  j["tau"] = r.tau;
  return j;
}

void train_loop(TrainingState& state, std::span<const data::CaptionedImage> records,
                const vision::EmbeddingStore& store, const LoopOptions& options) {
  if (records.empty()) throw DataError("train_loop: no training records");
  const auto examples = build_examples(state, records);
  const auto images = store_lookup(state.encoder, store);
  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    metrics.open(options.metrics_path, std::ios::binary | (state.step > 0 ? std::ios::app : std::ios::trunc));
    if (!metrics) throw Error("cannot write metrics log " + options.metrics_path.string());
  }
  while (state.step < state.config.steps) {
    const auto batch = scheduled_batch(state.config, examples, state.step);
    const auto report = train_step(state, batch, images);
    if (metrics.is_open()) metrics << metrics_line(report).dump() << '\n';
    if (options.on_step) options.on_step(report);
    const auto every = state.config.checkpoint_every;
    if (every > 0 && state.step % every == 0 && state.step < state.config.steps && !options.checkpoint_path.empty()) {
      save_checkpoint(options.checkpoint_path, state);
    }
  }
  if (metrics.is_open()) metrics.flush();
  if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, state);
}

num::TensorArchive make_checkpoint(const TrainingState& state) {
  num::TensorArchive a;
  auto& h = a.header;
  h["kind"] = "checkpoint";
  h["format_version"] = kFormatVersion;
  h["step"] = state.step;
  h["train_config"] = state.config;
  h["vocab"] = state.vocab.tokens();
  const bool embed = state.config.embed_lm || state.config.unfreeze_lm;
  h["lm"] = {{"config", state.lm.config()},
             {"frozen_hash", state.lm_frozen_hash},
             {"source", state.lm_source},
             {"embedded", embed}};
  h["encoder"] = {{"config", state.encoder.config()}, {"frozen_hash", state.encoder.digest()}};
  h["adapters"] = state.adapters.config;
  const auto& ac = state.adam.config;
  h["adam"] = {{"lr", ac.lr},     {"beta1", ac.beta1}, {"beta2", ac.beta2}, {"eps", ac.eps},
               {"warmup_steps", ac.warmup_steps}, {"step", state.adam.step}};
  h["initial_digests"] = state.initial_digests;

  for (const auto& t : state.adapters.named()) a.tensors.push_back({"adapters/" + t.name, t.tensor.clone()});
  const auto params = state.trainable();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.tensors.push_back({"adam/m/" + params[i].name, Tensor(params[i].tensor.shape(), state.adam.first_moment[i])});
    a.tensors.push_back({"adam/v/" + params[i].name, Tensor(params[i].tensor.shape(), state.adam.second_moment[i])});
  }
  if (embed) {
    for (const auto& p : state.lm.parameters()) a.tensors.push_back({"lm/" + p.name, p.tensor.clone()});
  }
  return a;
}

namespace {

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  if (src.shape() != dst.shape()) {
    throw FormatError("checkpoint tensor '" + name + "' has shape " + num::shape_str(src.shape()) + ", expected " +
                      num::shape_str(dst.shape()));
  }
  std::copy(src.data().begin(), src.data().end(), dst.data().begin());
}

}  // namespace

TrainingState restore_checkpoint(const num::TensorArchive& a) {
  const auto& h = a.header;
  if (h.value("kind", "") != "checkpoint") throw FormatError("archive is not a training checkpoint");
  if (h.value("format_version", 0) != kFormatVersion) {
    throw FormatError("unsupported checkpoint format version " + h.value("format_version", nlohmann::json(0)).dump());
  }
  const auto config = h.at("train_config").get<TrainConfig>();
  auto vocab = text::Vocabulary::from_tokens(h.at("vocab").get<std::vector<std::string>>());
  const auto& lh = h.at("lm");
  const auto lm_config = lh.at("config").get<text::LMConfig>();
  const auto frozen_hash = lh.at("frozen_hash").get<std::string>();
  const auto source = lh.at("source").get<std::string>();

  text::TransformerLM lm(lm_config);
  if (lh.at("embedded").get<bool>()) {
    for (const auto& p : lm.parameters()) {
      Tensor dst = p.tensor;
      copy_into(dst, a.get("lm/" + p.name), "lm/" + p.name);
    }
  } else {
    if (source.empty()) throw FormatError("checkpoint neither embeds the language model nor names its file");
    auto loaded = text::load_lm(source);
    if (loaded.lm.digest() != frozen_hash) {
      throw FormatError("language model at " + source + " has θ hash " + loaded.lm.digest() +
                        ", checkpoint expects " + frozen_hash);
    }
    lm = std::move(loaded.lm);
  }
  if (lm.config().vocab_size != vocab.size()) throw FormatError("checkpoint vocabulary disagrees with the LM config");
  lm.set_trainable(config.unfreeze_lm);

  const auto enc_config = h.at("encoder").at("config").get<vision::EncoderConfig>();
  vision::VisualEncoder encoder(enc_config);
  if (encoder.digest() != h.at("encoder").at("frozen_hash").get<std::string>()) {
    throw FormatError("visual encoder rebuilt from seed " + std::to_string(enc_config.seed) +
                      " does not match the recorded φ hash");
  }

  const auto ac = h.at("adapters").get<ground::AdapterConfig>();
  auto adapters = ground::GroundingAdapters::init(ac, lm);
  for (auto& t : adapters.named()) {
    Tensor dst = t.tensor;
    copy_into(dst, a.get("adapters/" + t.name), "adapters/" + t.name);
  }
  adapters.set_trainable(true);

  TrainingState s{config, std::move(vocab), std::move(lm), source, frozen_hash, std::move(encoder),
                  std::move(adapters), {}, h.at("step").get<std::uint64_t>(), {}};
  const auto& ah = h.at("adam");
  num::AdamConfig adam;
  adam.lr = ah.at("lr").get<double>();
  adam.beta1 = ah.at("beta1").get<double>();
  adam.beta2 = ah.at("beta2").get<double>();
  adam.eps = ah.at("eps").get<double>();
  adam.warmup_steps = ah.at("warmup_steps").get<std::uint64_t>();
  const auto params = s.trainable();
  s.adam = num::make_adam_state(adam, tensors_of(params));
  s.adam.step = ah.at("step").get<std::uint64_t>();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = a.get("adam/m/" + params[i].name);
    const auto& v = a.get("adam/v/" + params[i].name);
    if (m.numel() != params[i].tensor.numel() || v.numel() != params[i].tensor.numel()) {
      throw FormatError("checkpoint Adam moments for " + params[i].name + " have the wrong size");
    }
    s.adam.first_moment[i].assign(m.data().begin(), m.data().end());
    s.adam.second_moment[i].assign(v.data().begin(), v.data().end());
  }
  s.initial_digests = h.at("initial_digests").get<ParameterDigests>();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state) { make_checkpoint(state).save(path); }

TrainingState load_checkpoint(const std::filesystem::path& path) {
  return restore_checkpoint(num::TensorArchive::load(path));
}

std::string FrozenReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL");
  if (intentionally_unfrozen) os << " (language model intentionally unfrozen)";
  os << ": " << changed.size() << " tensors changed";
  for (const auto& v : violations) os << "\n  " << v;
  return os.str();
}

FrozenReport verify_frozen(const TrainingState& state, const ParameterDigests& before) {
  FrozenReport r;
  r.intentionally_unfrozen = state.config.unfreeze_lm;
  const auto after = state.digests();
  for (const auto& [name, digest] : after) {
    const auto it = before.find(name);
    if (it == before.end()) {
      r.violations.push_back(name + " has no recorded digest");
      continue;
    }
    if (it->second == digest) continue;
    r.changed.push_back(name);
    if (is_adapter(name)) continue;
    if (name.rfind("lm/", 0) == 0) {
      if (!r.intentionally_unfrozen) r.violations.push_back("θ tensor " + name + " changed");
    } else {
      r.violations.push_back("φ tensor " + name + " changed");
    }
  }
  for (const auto& [name, digest] : before) {
    if (!after.count(name)) r.violations.push_back(name + " is missing after training");
  }
  r.passed = r.violations.empty();
  return r;
}

InBatchRecall in_batch_recall(const TrainingState& state, std::span<const data::TrainingExample> examples,
                              const ground::ImageLookup& images) {
  if (examples.size() < 2) throw ContractError("in_batch_recall: needs at least 2 examples");
  num::NoGradScope no_grad;
  const auto& lm = state.lm;
  const auto& adapters = state.adapters;
  std::vector<Tensor> text_rows, image_rows;
  for (const auto& ex : examples) {
    const auto s = ex.segments() - 1;
    auto view = data::retrieval_view(ex, s, state.vocab, state.config.retrieval_concat);
    auto hidden = lm.forward(ground::embed_sequence(lm, adapters, view, images), adapters.ret_embedding, false).hidden;
    text_rows.push_back(ground::retrieval_from_hidden(adapters, num::row(hidden, view.size() - 1)));
    image_rows.push_back(ground::image_retrieval_embedding(adapters, images(ex.sequence.prefixes[s].image_id)));
  }
  const Tensor t = num::stack(text_rows), v = num::stack(image_rows);
  InBatchRecall out;
  out.l_t2i = ground::infonce_t2i(t, v, adapters.log_tau).item();
  out.l_i2t = ground::infonce_i2t(v, t, adapters.log_tau).item();
  const Tensor s = num::matmul_nt(t, v);
  const std::size_t n = examples.size();
  std::size_t hit_t2i = 0, hit_i2t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_row = 0, best_col = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (s.at(i, j) > s.at(i, best_row)) best_row = j;
      if (s.at(j, i) > s.at(best_col, i)) best_col = j;
    }
    hit_t2i += best_row == i ? 1 : 0;
    hit_i2t += best_col == i ? 1 : 0;
  }
  out.t2i_r1 = static_cast<double>(hit_t2i) / static_cast<double>(n);
  out.i2t_r1 = static_cast<double>(hit_i2t) / static_cast<double>(n);
  return out;
}

}  // namespace vlg::train
