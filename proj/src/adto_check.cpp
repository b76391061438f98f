// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "internal/hash.hpp"
#include "rubricjudge/adto.hpp"
#include "rubricjudge/error.hpp"

namespace rubricjudge::adto {

Vocab synthetic_vocab(int vocab_size, const std::vector<std::string>& aspects, TokenScheme scheme) {
  const int reserved = 4 + static_cast<int>(aspects.size()) * (scheme == TokenScheme::PerQuality ? 2 : 1);
  if (vocab_size <= reserved)
    throw Error(ErrorCode::InvalidArgument, "synthetic vocab: V=" + std::to_string(vocab_size) +
                                                " leaves no content tokens after " + std::to_string(reserved) +
                                                " reserved ids");
  std::vector<std::string> content;
  for (int i = 0; i < vocab_size - reserved; ++i) content.push_back("w" + std::to_string(i));
  return Vocab(aspects, scheme, content);
}

namespace {

std::vector<int> draw_tokens(std::mt19937_64& rng, int lo, int hi, std::size_t min_len, std::size_t max_len) {
  const std::size_t n = min_len + rng() % (max_len - min_len + 1);
  std::vector<int> out(n);
  for (int& t : out) t = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo));
  return out;
}

// Replaces one or two positions of y with a different token from [lo, hi).
std::vector<int> perturb(std::vector<int> y, std::mt19937_64& rng, int lo, int hi) {
  const std::size_t edits = 1 + rng() % 2;
  for (std::size_t e = 0; e < edits; ++e) {
    const std::size_t at = rng() % y.size();
    const int span = hi - lo;
    if (span < 2) break;
    const int shift = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(span - 1));
    y[at] = lo + (y[at] - lo + shift) % span;
  }
  return y;
}

}  // namespace

std::vector<EncodedTriplet> synthetic_triplets(const Vocab& vocab, int count, std::uint64_t seed) {
  if (vocab.aspects().empty()) throw Error(ErrorCode::InvalidArgument, "synthetic triplets: vocab has no aspects");
  const int lo = vocab.first_content_id();
  const int hi = vocab.size();
  if (hi - lo < 2) throw Error(ErrorCode::InvalidArgument, "synthetic triplets: need at least two content tokens");
  std::mt19937_64 rng(seed);
  std::vector<EncodedTriplet> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const std::string& aspect = vocab.aspects()[static_cast<std::size_t>(i) % vocab.aspects().size()];
    const auto instruction = draw_tokens(rng, lo, hi, 1, 2);
    const auto x = draw_tokens(rng, lo, hi, 2, 4);
    const auto y_w = draw_tokens(rng, lo, hi, 3, 6);
    const auto y_l = perturb(y_w, rng, lo, hi);
    out.push_back({aspect, encode_ids(instruction, x, vocab.reward_token(aspect, true), y_w),
                   encode_ids(instruction, x, vocab.reward_token(aspect, false), y_l)});
  }
  return out;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport gradient_check(const GradCheckOptions& options) {
  if (options.instances < 1 || options.coordinates < 1)
    throw Error(ErrorCode::InvalidArgument, "gradient check: instances and coordinates must be >= 1");
  static constexpr double kBetas[] = {0.1, 0.5, 1.0, 2.0};
  static constexpr double kFreeze[] = {0.0, 0.5};

  GradCheckReport report;
  for (int inst = 0; inst < options.instances; ++inst) {
    std::mt19937_64 rng(detail::Hasher(options.seed).add("gradcheck").add(std::to_string(inst)).value());
    const int V = 5 + static_cast<int>(rng() % 4);
    const int L = 2 + static_cast<int>(rng() % 3);
    const TokenScheme scheme = inst % 2 == 0 ? TokenScheme::PerQuality : TokenScheme::Shared;

    ADTOConfig cfg;
    cfg.default_beta = kBetas[rng() % std::size(kBetas)];
    cfg.scheme = scheme;
    cfg.blocks = L;

    TinyLM policy = TinyLM::random(V, L, rng(), 0.5);
    const TinyLM reference = TinyLM::random(V, L, rng(), 0.5);
    policy.set_trainable(freeze_mask(L, kFreeze[rng() % std::size(kFreeze)]));

    // Raw ids: the model treats every id alike, so specials may appear as content.
    std::vector<EncodedTriplet> batch;
    for (int b = 0; b < 4; ++b) {
      const int chosen_tok = static_cast<int>(rng() % static_cast<std::uint64_t>(V));
      const int rejected_tok =
          scheme == TokenScheme::Shared ? chosen_tok : (chosen_tok + 1) % V;
      const auto instruction = draw_tokens(rng, 0, V, 1, 2);
      const auto x = draw_tokens(rng, 0, V, 1, 3);
      const auto y_w = draw_tokens(rng, 0, V, 2, 5);
      const auto y_l = perturb(y_w, rng, 0, V);
      batch.push_back({"A", encode_ids(instruction, x, chosen_tok, y_w), encode_ids(instruction, x, rejected_tok, y_l)});
    }

    std::vector<double> analytic = adto_gradient(policy, reference, batch, cfg);
    if (options.break_gradient)
      for (double& g : analytic) g = -g;

    std::vector<std::size_t> trainable_coords;
    for (int blk = 0; blk < L; ++blk) {
      const std::size_t base = static_cast<std::size_t>(blk) * policy.block_stride();
      for (std::size_t k = 0; k < policy.block_stride(); ++k) {
        if (policy.trainable(blk))
          trainable_coords.push_back(base + k);
        else if (analytic[base + k] != 0.0)
          report.frozen_blocks_zero = false;
      }
    }
    std::vector<std::size_t> coords;
    for (int c = 0; c < options.coordinates; ++c) coords.push_back(trainable_coords[rng() % trainable_coords.size()]);

    TinyLM probe = policy;
    auto loss_at = [&](std::span<const double> p) {
      std::copy(p.begin(), p.end(), probe.params().begin());
      return adto_loss(probe, reference, batch, cfg);
    };
    const auto numeric = finite_diff_gradient(loss_at, policy.params(), options.eps, coords);
    for (std::size_t c = 0; c < coords.size(); ++c)
      report.max_relative_error = std::max(report.max_relative_error, relative_error(analytic[coords[c]], numeric[c]));
    report.coordinates_checked += coords.size();
    ++report.instances;
  }
  return report;
}

}  // namespace rubricjudge::adto
