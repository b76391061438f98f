// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rubricjudge/adto.hpp"
#include "rubricjudge/error.hpp"

namespace rubricjudge::adto {

using nlohmann::json;

std::string_view to_string(TokenScheme s) noexcept {
  return s == TokenScheme::PerQuality ? "per_quality" : "shared";
}

TokenScheme token_scheme_from_string(std::string_view text) {
  if (text == "per_quality") return TokenScheme::PerQuality;
  if (text == "shared") return TokenScheme::Shared;
  throw Error(ErrorCode::InvalidArgument, "unknown token scheme '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Vocab

namespace {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> aspects, TokenScheme scheme, const std::vector<std::string>& content)
    : aspects_(std::move(aspects)), scheme_(scheme) {
  tokens_ = {"<bos>", "<eos>", "<sep>", "<unk>"};
  for (const auto& a : aspects_) {
    if (scheme_ == TokenScheme::PerQuality) {
      tokens_.push_back("<r:" + a + ":w>");
      tokens_.push_back("<r:" + a + ":l>");
    } else {
      tokens_.push_back("<r:" + a + ">");
    }
  }
  first_content_ = static_cast<int>(tokens_.size());
  for (const auto& t : content) tokens_.push_back(t);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw Error(ErrorCode::InvalidArgument, "vocab: duplicate token '" + tokens_[i] + "'");
  }
}

Vocab Vocab::from_corpus(const std::vector<std::string_view>& texts, std::vector<std::string> aspects,
                         TokenScheme scheme, std::size_t max_content) {
  std::map<std::string, std::size_t> counts;
  for (auto text : texts)
    for (auto& w : split_words(text)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> content;
  for (const auto& [w, n] : ranked) {
    if (content.size() >= max_content) break;
    if (w.size() > 2 && w.front() == '<' && w.back() == '>') continue;  // never shadow specials
    content.push_back(w);
  }
  return Vocab(std::move(aspects), scheme, content);
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

int Vocab::reward_token(std::string_view aspect, bool chosen) const {
  for (std::size_t i = 0; i < aspects_.size(); ++i) {
    if (aspects_[i] != aspect) continue;
    if (scheme_ == TokenScheme::Shared) return kUnk + 1 + static_cast<int>(i);
    return kUnk + 1 + 2 * static_cast<int>(i) + (chosen ? 0 : 1);
  }
  throw Error(ErrorCode::InvalidArgument, "vocab: no reward token for aspect " + std::string(aspect));
}

std::vector<int> Vocab::encode_text(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    const int i = id(w);
    ids.push_back(i < first_content_ ? kUnk : i);
  }
  return ids;
}

json Vocab::to_json() const {
  return {{"aspects", aspects_},
          {"scheme", to_string(scheme_)},
          {"content", std::vector<std::string>(tokens_.begin() + first_content_, tokens_.end())}};
}

Vocab Vocab::from_json(const json& j) {
  try {
    return Vocab(j.at("aspects").get<std::vector<std::string>>(),
                 token_scheme_from_string(j.at("scheme").get<std::string>()),
                 j.at("content").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("vocab: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Encoding

EncodedSequence encode_ids(std::span<const int> instruction, std::span<const int> x, int reward_token,
                           std::span<const int> y) {
  if (y.empty()) throw Error(ErrorCode::InvalidArgument, "encode: empty evaluation text");
  EncodedSequence s;
  s.ids.reserve(instruction.size() + x.size() + y.size() + 6);
  s.ids.push_back(Vocab::kBos);
  s.ids.insert(s.ids.end(), instruction.begin(), instruction.end());
  s.ids.push_back(Vocab::kSep);
  s.ids.insert(s.ids.end(), x.begin(), x.end());
  s.ids.push_back(Vocab::kSep);
  s.ids.push_back(reward_token);
  s.ids.push_back(Vocab::kSep);
  s.scored_begin = s.ids.size();
  s.ids.insert(s.ids.end(), y.begin(), y.end());
  s.ids.push_back(Vocab::kEos);
  s.condition = reward_token;
  return s;
}

EncodedSequence encode_sequence(const Vocab& vocab, std::string_view x, int reward_token,
                                std::string_view instruction, std::string_view y) {
  const auto y_ids = vocab.encode_text(y);
  if (y_ids.empty()) throw Error(ErrorCode::InvalidArgument, "encode: empty evaluation text");
  return encode_ids(vocab.encode_text(instruction), vocab.encode_text(x), reward_token, y_ids);
}

// ---------------------------------------------------------------------------
// TinyLM

TinyLM::TinyLM(int vocab_size, int blocks) : vocab_(vocab_size), blocks_(blocks) {
  if (vocab_size < 2 || blocks < 1) throw Error(ErrorCode::InvalidArgument, "TinyLM: need V >= 2 and L >= 1");
  weights_.assign(static_cast<std::size_t>(blocks) * block_stride(), 0.0);
  trainable_.assign(static_cast<std::size_t>(blocks), true);
}

TinyLM TinyLM::random(int vocab_size, int blocks, std::uint64_t seed, double scale) {
  TinyLM m(vocab_size, blocks);
  std::mt19937_64 rng(seed);
  for (double& w : m.weights_) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    w = scale * (2.0 * u - 1.0);
  }
  return m;
}

std::span<const double> TinyLM::row(int block, int token) const {
  return std::span<const double>(weights_).subspan(index(block, token, 0), static_cast<std::size_t>(vocab_));
}

std::size_t TinyLM::index(int block, int row, int col) const {
  return static_cast<std::size_t>(block) * block_stride() + static_cast<std::size_t>(row) * vocab_ +
         static_cast<std::size_t>(col);
}

void TinyLM::set_trainable(std::vector<bool> flags) {
  if (flags.size() != static_cast<std::size_t>(blocks_))
    throw Error(ErrorCode::InvalidArgument, "TinyLM: trainable flag count must equal block count");
  trainable_ = std::move(flags);
}

json TinyLM::to_json() const {
  json blocks = json::array();
  for (int b = 0; b < blocks_; ++b) {
    auto begin = weights_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(b) * block_stride());
    blocks.push_back(std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(block_stride())));
  }
  return {{"V", vocab_}, {"L", blocks_}, {"blocks", std::move(blocks)}, {"trainable", trainable_}};
}

TinyLM TinyLM::from_json(const json& j) {
  try {
    TinyLM m(j.at("V").get<int>(), j.at("L").get<int>());
    const auto& blocks = j.at("blocks");
    if (blocks.size() != static_cast<std::size_t>(m.blocks_))
      throw Error(ErrorCode::InvalidArgument, "TinyLM: block count mismatch");
    for (int b = 0; b < m.blocks_; ++b) {
      const auto values = blocks.at(static_cast<std::size_t>(b)).get<std::vector<double>>();
      if (values.size() != m.block_stride()) throw Error(ErrorCode::InvalidArgument, "TinyLM: block shape mismatch");
      std::copy(values.begin(), values.end(), m.weights_.begin() + static_cast<std::ptrdiff_t>(b * m.block_stride()));
    }
    m.set_trainable(j.at("trainable").get<std::vector<bool>>());
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("TinyLM: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Log-probabilities

namespace {

// Fills `logits` for position t and returns log-sum-exp.
double position_logits(const TinyLM& model, const EncodedSequence& seq, std::size_t t, std::vector<double>& logits) {
  const int block = model.block_for_position(t);
  const auto prev = model.row(block, seq.ids[t - 1]);
  logits.assign(prev.begin(), prev.end());
  if (seq.condition >= 0) {
    const auto cond = model.row(block, seq.condition);
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += cond[k];
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return mx + std::log(sum);
}

}  // namespace

double log_prob(const TinyLM& model, const EncodedSequence& seq) {
  std::vector<double> logits;
  double total = 0.0;
  for (std::size_t t = std::max<std::size_t>(seq.scored_begin, 1); t < seq.ids.size(); ++t) {
    const double lse = position_logits(model, seq, t, logits);
    total += logits[static_cast<std::size_t>(seq.ids[t])] - lse;
  }
  return total;
}

double log_prob_trainable(const TinyLM& model, const EncodedSequence& seq) {
  std::vector<double> logits;
  double total = 0.0;
  for (std::size_t t = std::max<std::size_t>(seq.scored_begin, 1); t < seq.ids.size(); ++t) {
    if (!model.trainable(model.block_for_position(t))) continue;
    const double lse = position_logits(model, seq, t, logits);
    total += logits[static_cast<std::size_t>(seq.ids[t])] - lse;
  }
  return total;
}

void accumulate_log_prob_gradient(const TinyLM& model, const EncodedSequence& seq, double weight,
                                  std::span<double> grad) {
  std::vector<double> logits;
  const auto V = static_cast<std::size_t>(model.vocab_size());
  for (std::size_t t = std::max<std::size_t>(seq.scored_begin, 1); t < seq.ids.size(); ++t) {
    const int block = model.block_for_position(t);
    if (!model.trainable(block)) continue;
    const double lse = position_logits(model, seq, t, logits);
    const std::size_t prev_base = model.index(block, seq.ids[t - 1], 0);
    const std::size_t cond_base = seq.condition >= 0 ? model.index(block, seq.condition, 0) : 0;
    for (std::size_t k = 0; k < V; ++k) {
      const double target = static_cast<std::size_t>(seq.ids[t]) == k ? 1.0 : 0.0;
      const double g = weight * (target - std::exp(logits[k] - lse));
      grad[prev_base + k] += g;
      if (seq.condition >= 0) grad[cond_base + k] += g;
    }
  }
}

std::vector<bool> freeze_mask(int blocks, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "freeze fraction must lie in [0, 1)");
  // Snap products like 0.75 * 4 that land a rounding error above an integer.
  const double exact = fraction * blocks;
  const double nearest = std::round(exact);
  const int frozen = std::abs(exact - nearest) < 1e-9 ? static_cast<int>(nearest) : static_cast<int>(std::ceil(exact));
  if (frozen >= blocks) throw Error(ErrorCode::InvalidArgument, "freeze fraction leaves no trainable block");
  std::vector<bool> flags(static_cast<std::size_t>(blocks), true);
  for (int b = 0; b < frozen; ++b) flags[static_cast<std::size_t>(b)] = false;
  return flags;
}

}  // namespace rubricjudge::adto
