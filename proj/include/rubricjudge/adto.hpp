// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubricjudge/preference.hpp"
#include "rubricjudge/taxonomy.hpp"

/// Attribute-driven token optimization at desk scale: preference
/// optimization of per-aspect judge models whose inputs carry a reward
/// token, run on a tiny transition-matrix language model.
namespace rubricjudge::adto {

enum class TokenScheme {
  PerQuality,  // distinct tokens for the chosen and the rejected side of each aspect
  Shared,      // one token per aspect
};

std::string_view to_string(TokenScheme s) noexcept;
TokenScheme token_scheme_from_string(std::string_view text);

class Vocab {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  /// Specials, then reward tokens for `aspects`, then content tokens in the
  /// given order. Content tokens must not collide with special spellings.
  Vocab(std::vector<std::string> aspects, TokenScheme scheme, const std::vector<std::string>& content);

  /// Keeps the `max_content` most frequent whitespace tokens of `texts`
  /// (ties broken lexicographically); the rest map to UNK.
  static Vocab from_corpus(const std::vector<std::string_view>& texts, std::vector<std::string> aspects,
                           TokenScheme scheme, std::size_t max_content);

  [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] int id(std::string_view token) const;
  [[nodiscard]] const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] TokenScheme scheme() const { return scheme_; }
  [[nodiscard]] const std::vector<std::string>& aspects() const { return aspects_; }
  [[nodiscard]] int first_content_id() const { return first_content_; }
  /// Reward token for the chosen (`chosen = true`) or rejected side. Under
  /// the shared scheme both sides get the same token.
  [[nodiscard]] int reward_token(std::string_view aspect, bool chosen) const;
  [[nodiscard]] bool is_reward_token(int id) const { return id >= kUnk + 1 && id < first_content_; }
  [[nodiscard]] std::vector<int> encode_text(std::string_view text) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> aspects_;
  TokenScheme scheme_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int first_content_ = 0;
};

/// Token ids plus the scored region [scored_begin, ids.size()), and the
/// reward token the scored positions are conditioned on.
struct EncodedSequence {
  std::vector<int> ids;
  std::size_t scored_begin = 0;
  int condition = -1;

  [[nodiscard]] std::size_t scored_length() const { return ids.size() - scored_begin; }
  friend bool operator==(const EncodedSequence&, const EncodedSequence&) = default;
};

/// [BOS, instruction, SEP, x, SEP, reward, SEP, y, EOS]; only y and EOS are
/// scored. Throws Error(InvalidArgument) for an empty y.
EncodedSequence encode_ids(std::span<const int> instruction, std::span<const int> x, int reward_token,
                           std::span<const int> y);
EncodedSequence encode_sequence(const Vocab& vocab, std::string_view x, int reward_token,
                                std::string_view instruction, std::string_view y);

/// L transition blocks of shape V x V. The next-token distribution at
/// position t uses block t mod L:
///   logits = W[prev token] + W[condition token]
/// where the condition row is the sequence's reward token. Blocks play the
/// role of layers for freezing.
class TinyLM {
 public:
  TinyLM(int vocab_size, int blocks);
  /// Parameters uniform in [-scale, scale] from a seeded stream.
  static TinyLM random(int vocab_size, int blocks, std::uint64_t seed, double scale);

  [[nodiscard]] int vocab_size() const { return vocab_; }
  [[nodiscard]] int block_count() const { return blocks_; }
  [[nodiscard]] std::size_t block_stride() const { return static_cast<std::size_t>(vocab_) * vocab_; }
  [[nodiscard]] int block_for_position(std::size_t t) const { return static_cast<int>(t % static_cast<std::size_t>(blocks_)); }

  /// Flattened parameters: block-major, then row-major within a block.
  [[nodiscard]] std::span<double> params() { return weights_; }
  [[nodiscard]] std::span<const double> params() const { return weights_; }
  [[nodiscard]] std::span<const double> row(int block, int token) const;
  [[nodiscard]] std::size_t index(int block, int row, int col) const;

  [[nodiscard]] bool trainable(int block) const { return trainable_.at(static_cast<std::size_t>(block)); }
  [[nodiscard]] const std::vector<bool>& trainable_flags() const { return trainable_; }
  void set_trainable(std::vector<bool> flags);

  [[nodiscard]] nlohmann::json to_json() const;
  static TinyLM from_json(const nlohmann::json& j);

  friend bool operator==(const TinyLM&, const TinyLM&) = default;

 private:
  int vocab_;
  int blocks_;
  std::vector<double> weights_;
  std::vector<bool> trainable_;
};

/// Sum of next-token log-probabilities over the scored region. Always <= 0.
double log_prob(const TinyLM& model, const EncodedSequence& seq);

/// log_prob restricted to positions whose block is trainable. When frozen
/// blocks match a reference model, the log-ratio against that reference
/// only depends on these positions.
double log_prob_trainable(const TinyLM& model, const EncodedSequence& seq);

/// grad += weight * d log_prob / d params, skipping frozen blocks.
void accumulate_log_prob_gradient(const TinyLM& model, const EncodedSequence& seq, double weight,
                                  std::span<double> grad);

/// First ceil(fraction * L) blocks frozen. Throws unless 0 <= fraction < 1.
std::vector<bool> freeze_mask(int blocks, double fraction);

struct ADTOConfig {
  std::map<std::string, double> beta;  // per aspect; missing aspects use default_beta
  double default_beta = 0.5;
  double learning_rate = 0.05;
  int steps = 300;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double freeze_fraction = 0.75;
  TokenScheme scheme = TokenScheme::PerQuality;
  int blocks = 4;
  double init_scale = 0.1;
  std::size_t max_vocab = 256;  // content tokens kept when building a vocab from text

  [[nodiscard]] double beta_for(const std::string& aspect) const;
  /// Throws Error(InvalidArgument) on a non-positive beta or learning rate,
  /// negative steps, a batch size < 1, or a freeze fraction outside [0, 1).
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ADTOConfig from_json(const nlohmann::json& j);
};

struct EncodedTriplet {
  std::string aspect;
  EncodedSequence chosen;
  EncodedSequence rejected;
};

/// Encodes with the aspect's reward tokens; the rejected side uses
/// `x_rejected` when the triplet has one.
EncodedTriplet encode_triplet(const Vocab& vocab, const PreferenceTriplet& t, std::string_view instruction);

/// beta * [(log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l))]
double margin(const TinyLM& policy, const TinyLM& reference, const EncodedTriplet& t, double beta);

/// Mean of -log sigmoid(margin) over the batch, using each triplet's aspect
/// beta. Throws Error(InvalidArgument) for an empty batch.
double adto_loss(const TinyLM& policy, const TinyLM& reference, std::span<const EncodedTriplet> batch,
                 const ADTOConfig& cfg);

/// Analytic gradient of adto_loss over all parameters (flattened like
/// TinyLM::params()); frozen blocks are exactly zero.
std::vector<double> adto_gradient(const TinyLM& policy, const TinyLM& reference,
                                  std::span<const EncodedTriplet> batch, const ADTOConfig& cfg);

/// Central differences (f(p + eps e_k) - f(p - eps e_k)) / 2 eps for each
/// coordinate k in `coords`; returns one estimate per listed coordinate.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> params, double eps,
                                         std::span<const std::size_t> coords);

struct TrainLogEntry {
  std::string aspect;
  int step = 0;  // updates applied so far
  double loss = 0.0;         // over all of the aspect's triplets
  double mean_margin = 0.0;

  friend bool operator==(const TrainLogEntry&, const TrainLogEntry&) = default;
};

struct AspectTraining {
  TinyLM initial;
  TinyLM trained;
  std::vector<TrainLogEntry> log;
};

/// Gradient descent for one aspect on pre-encoded triplets. The reference
/// is the seeded initial policy and stays fixed. Mini-batches come from
/// seeded reshuffled passes over the data. Throws Error(Divergence) naming
/// the step when the loss stops being finite.
AspectTraining train_aspect(const std::vector<EncodedTriplet>& triplets, int vocab_size, const std::string& aspect,
                            const ADTOConfig& cfg);

struct TrainResult {
  Vocab vocab;
  std::map<std::string, TinyLM> models;  // aspects without triplets are absent
  std::vector<TrainLogEntry> log;
};

/// Builds a vocabulary from the triplet texts, then trains one model per
/// aspect of `spec` that has triplets. Aspects never share state.
TrainResult train(const std::vector<PreferenceTriplet>& triplets, const Taxonomy& spec, const ADTOConfig& cfg);

/// Deterministic per-aspect seed derived from the run seed.
std::uint64_t aspect_seed(std::uint64_t seed, std::string_view aspect);

nlohmann::json checkpoint_to_json(const std::string& aspect, const Vocab& vocab, const TinyLM& model,
                                  const ADTOConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic data and gradient verification

/// Vocab of exactly `vocab_size` ids whose content tokens are "w0", "w1", ...
Vocab synthetic_vocab(int vocab_size, const std::vector<std::string>& aspects, TokenScheme scheme);

/// Random triplets over the content tokens of `vocab`. Aspects are assigned
/// round-robin; y_l is y_w with one or two tokens replaced.
std::vector<EncodedTriplet> synthetic_triplets(const Vocab& vocab, int count, std::uint64_t seed);

struct GradCheckOptions {
  int instances = 10;
  int coordinates = 100;  // sampled per instance
  double eps = 1e-5;
  std::uint64_t seed = 1;
  bool break_gradient = false;  // flips the analytic sign as a negative control
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  int instances = 0;
  bool frozen_blocks_zero = true;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-2) per coordinate. The floor
/// keeps near-zero partials from turning rounding noise into large ratios.
double relative_error(double analytic, double numeric);

/// Compares adto_gradient with finite_diff_gradient on seeded random
/// instances (varying V, L, beta, scheme, and freezing).
GradCheckReport gradient_check(const GradCheckOptions& options);

}  // namespace rubricjudge::adto
