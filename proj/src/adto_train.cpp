// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <random>

#include "internal/hash.hpp"
#include "internal/parallel.hpp"
#include "rubricjudge/adto.hpp"
#include "rubricjudge/error.hpp"

namespace rubricjudge::adto {

using nlohmann::json;

namespace {

// -log sigmoid(z), stable for large |z|.
double neg_log_sigmoid(double z) { return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

double ADTOConfig::beta_for(const std::string& aspect) const {
  auto it = beta.find(aspect);
  return it == beta.end() ? default_beta : it->second;
}

void ADTOConfig::validate() const {
  if (!(default_beta > 0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  for (const auto& [a, b] : beta)
    if (!(b > 0)) throw Error(ErrorCode::InvalidArgument, "beta for " + a + " must be positive");
  if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (blocks < 1) throw Error(ErrorCode::InvalidArgument, "block count must be >= 1");
  if (!(freeze_fraction >= 0.0 && freeze_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "freeze fraction must lie in [0, 1)");
  if (init_scale < 0) throw Error(ErrorCode::InvalidArgument, "init scale must be >= 0");
}

json ADTOConfig::to_json() const {
  return {{"beta", beta},
          {"default_beta", default_beta},
          {"learning_rate", learning_rate},
          {"steps", steps},
          {"batch_size", batch_size},
          {"seed", seed},
          {"freeze_fraction", freeze_fraction},
          {"token_scheme", to_string(scheme)},
          {"blocks", blocks},
          {"init_scale", init_scale},
          {"max_vocab", max_vocab},
          {"optimizer", "gradient_descent"}};
}

ADTOConfig ADTOConfig::from_json(const json& j) {
  ADTOConfig c;
  try {
    if (j.contains("beta")) c.beta = j.at("beta").get<std::map<std::string, double>>();
    c.default_beta = j.value("default_beta", c.default_beta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.freeze_fraction = j.value("freeze_fraction", c.freeze_fraction);
    if (j.contains("token_scheme")) c.scheme = token_scheme_from_string(j.at("token_scheme").get<std::string>());
    c.blocks = j.value("blocks", c.blocks);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.max_vocab = j.value("max_vocab", c.max_vocab);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Objective

EncodedTriplet encode_triplet(const Vocab& vocab, const PreferenceTriplet& t, std::string_view instruction) {
  EncodedTriplet e;
  e.aspect = t.aspect;
  e.chosen = encode_sequence(vocab, t.x, vocab.reward_token(t.aspect, true), instruction, t.y_w);
  e.rejected = encode_sequence(vocab, t.x_rejected.value_or(t.x), vocab.reward_token(t.aspect, false), instruction,
                               t.y_l);
  return e;
}

double margin(const TinyLM& policy, const TinyLM& reference, const EncodedTriplet& t, double beta) {
  const double chosen = log_prob(policy, t.chosen) - log_prob(reference, t.chosen);
  const double rejected = log_prob(policy, t.rejected) - log_prob(reference, t.rejected);
  return beta * (chosen - rejected);
}

namespace {

void check_pair(const TinyLM& policy, const TinyLM& reference, std::size_t batch) {
  if (batch == 0) throw Error(ErrorCode::InvalidArgument, "ADTO: empty batch");
  if (policy.vocab_size() != reference.vocab_size() || policy.block_count() != reference.block_count())
    throw Error(ErrorCode::InvalidArgument, "ADTO: policy and reference shapes differ");
}

}  // namespace

double adto_loss(const TinyLM& policy, const TinyLM& reference, std::span<const EncodedTriplet> batch,
                 const ADTOConfig& cfg) {
  check_pair(policy, reference, batch.size());
  double total = 0.0;
  for (const auto& t : batch) total += neg_log_sigmoid(margin(policy, reference, t, cfg.beta_for(t.aspect)));
  return total / static_cast<double>(batch.size());
}

std::vector<double> adto_gradient(const TinyLM& policy, const TinyLM& reference,
                                  std::span<const EncodedTriplet> batch, const ADTOConfig& cfg) {
  check_pair(policy, reference, batch.size());
  std::vector<double> grad(policy.params().size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& t : batch) {
    const double beta = cfg.beta_for(t.aspect);
    const double z = margin(policy, reference, t, beta);
    // d/dz [-log sigmoid(z)] = sigmoid(z) - 1
    const double coeff = (sigmoid(z) - 1.0) * beta * inv_n;
    accumulate_log_prob_gradient(policy, t.chosen, coeff, grad);
    accumulate_log_prob_gradient(policy, t.rejected, -coeff, grad);
  }
  return grad;
}

std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> params, double eps,
                                         std::span<const std::size_t> coords) {
  if (!(eps > 0)) throw Error(ErrorCode::InvalidArgument, "finite differences: eps must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t k : coords) {
    const double saved = p.at(k);
    p[k] = saved + eps;
    const double plus = f(p);
    p[k] = saved - eps;
    const double minus = f(p);
    p[k] = saved;
    out.push_back((plus - minus) / (2.0 * eps));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::uint64_t aspect_seed(std::uint64_t seed, std::string_view aspect) {
  return detail::Hasher(seed).add("aspect").add(aspect).value();
}

namespace {

struct Cached {
  const EncodedTriplet* triplet;
  double ref_chosen;
  double ref_rejected;
};

struct Evaluation {
  double loss = 0.0;
  double mean_margin = 0.0;
};

// Frozen blocks of the policy equal the reference, so only trainable
// positions enter the log-ratios.
double cached_margin(const TinyLM& policy, const Cached& c, double beta) {
  return beta * ((log_prob_trainable(policy, c.triplet->chosen) - c.ref_chosen) -
                 (log_prob_trainable(policy, c.triplet->rejected) - c.ref_rejected));
}

Evaluation evaluate_all(const TinyLM& policy, const std::vector<Cached>& data, double beta) {
  Evaluation e;
  for (const auto& c : data) {
    const double z = cached_margin(policy, c, beta);
    e.loss += neg_log_sigmoid(z);
    e.mean_margin += z;
  }
  e.loss /= static_cast<double>(data.size());
  e.mean_margin /= static_cast<double>(data.size());
  return e;
}

}  // namespace

AspectTraining train_aspect(const std::vector<EncodedTriplet>& triplets, int vocab_size, const std::string& aspect,
                            const ADTOConfig& cfg) {
  cfg.validate();
  if (triplets.empty()) throw Error(ErrorCode::InvalidArgument, "ADTO: no triplets for aspect " + aspect);
  for (const auto& t : triplets)
    if (t.aspect != aspect) throw Error(ErrorCode::InvalidArgument, "ADTO: triplet of aspect " + t.aspect +
                                                                        " passed to the " + aspect + " model");

  const std::uint64_t seed = aspect_seed(cfg.seed, aspect);
  TinyLM initial = TinyLM::random(vocab_size, cfg.blocks, seed, cfg.init_scale);
  initial.set_trainable(freeze_mask(cfg.blocks, cfg.freeze_fraction));
  const TinyLM& reference = initial;
  TinyLM policy = initial;
  const double beta = cfg.beta_for(aspect);

  std::vector<Cached> data;
  data.reserve(triplets.size());
  for (const auto& t : triplets)
    data.push_back({&t, log_prob_trainable(reference, t.chosen), log_prob_trainable(reference, t.rejected)});

  AspectTraining out{initial, policy, {}};
  auto record = [&](int step) {
    const Evaluation e = evaluate_all(policy, data, beta);
    if (!std::isfinite(e.loss) || !std::isfinite(e.mean_margin))
      throw Error(ErrorCode::Divergence, "aspect " + aspect + " diverged at step " + std::to_string(step));
    out.log.push_back({aspect, step, e.loss, e.mean_margin});
  };
  record(0);

  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());
  std::vector<double> grad(policy.params().size());

  for (int step = 1; step <= cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        cursor = 0;
      }
      const Cached& c = data[order[cursor++]];
      const double z = cached_margin(policy, c, beta);
      const double coeff = (sigmoid(z) - 1.0) * beta / static_cast<double>(batch_size);
      accumulate_log_prob_gradient(policy, c.triplet->chosen, coeff, grad);
      accumulate_log_prob_gradient(policy, c.triplet->rejected, -coeff, grad);
    }
    auto params = policy.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
    record(step);
  }
  out.trained = std::move(policy);
  return out;
}

TrainResult train(const std::vector<PreferenceTriplet>& triplets, const Taxonomy& spec, const ADTOConfig& cfg) {
  cfg.validate();
  std::vector<std::string> aspects;
  for (const auto& a : spec.aspects) aspects.push_back(a.code);
  std::vector<std::string_view> texts;
  for (const auto& a : spec.aspects) texts.push_back(a.instruction);
  for (const auto& t : triplets) {
    if (!spec.find_aspect(t.aspect))
      throw Error(ErrorCode::InvalidArgument, "triplet " + t.sample_ref + " has unknown aspect " + t.aspect);
    texts.push_back(t.x);
    if (t.x_rejected) texts.push_back(*t.x_rejected);
    texts.push_back(t.y_w);
    texts.push_back(t.y_l);
  }
  TrainResult result{Vocab::from_corpus(texts, aspects, cfg.scheme, cfg.max_vocab), {}, {}};

  std::vector<const Aspect*> active;
  std::vector<std::vector<EncodedTriplet>> encoded;
  for (const auto& a : spec.aspects) {
    std::vector<EncodedTriplet> mine;
    for (const auto& t : triplets)
      if (t.aspect == a.code) mine.push_back(encode_triplet(result.vocab, t, a.instruction));
    if (mine.empty()) continue;
    active.push_back(&a);
    encoded.push_back(std::move(mine));
  }

  // Aspects share nothing, so they train concurrently into their own slots.
  std::vector<std::optional<AspectTraining>> runs(active.size());
  std::vector<std::exception_ptr> failures(active.size());
  detail::parallel_for(active.size(), static_cast<int>(active.size()), [&](std::size_t i) {
    try {
      runs[i] = train_aspect(encoded[i], result.vocab.size(), active[i]->code, cfg);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  });
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  for (std::size_t i = 0; i < active.size(); ++i) {
    result.models.emplace(active[i]->code, std::move(runs[i]->trained));
    result.log.insert(result.log.end(), runs[i]->log.begin(), runs[i]->log.end());
  }
  return result;
}

json checkpoint_to_json(const std::string& aspect, const Vocab& vocab, const TinyLM& model, const ADTOConfig& cfg) {
  json j = model.to_json();
  j["aspect"] = aspect;
  j["vocab"] = vocab.to_json();
  j["config"] = cfg.to_json();
  j["config"]["beta_used"] = cfg.beta_for(aspect);
  return j;
}

}  // namespace rubricjudge::adto
