// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubricjudge/orchestrator.hpp"
#include "rubricjudge/taxonomy.hpp"

namespace rubricjudge {

enum class Verdict { R1Better, R2Better, Tie };

std::string_view to_string(Verdict v) noexcept;
Verdict verdict_from_scores(int first, int second) noexcept;

/// One sub-aspect of one sample scored by both a human and the model.
/// Verdicts are derived from the scores, so they cannot disagree with them.
struct LabeledPair {
  std::string sample_ref;
  std::string sub_aspect;
  std::array<int, 2> human_scores{};
  std::array<int, 2> model_scores{};

  [[nodiscard]] Verdict human_verdict() const noexcept { return verdict_from_scores(human_scores[0], human_scores[1]); }
  [[nodiscard]] Verdict model_verdict() const noexcept { return verdict_from_scores(model_scores[0], model_scores[1]); }
};

/// Percentages keyed by sub-aspect and by aspect. Groups without data are
/// absent rather than zero.
struct GroupedPercent {
  std::map<std::string, double> sub_aspect;
  std::map<std::string, std::size_t> counts;  // items per sub-aspect
  std::map<std::string, double> aspect;       // unweighted mean of its sub-aspects present

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Three-way exact verdict match rate x100. Throws Error(InvalidArgument)
/// on an empty input or a sub-aspect unknown to `spec`.
GroupedPercent pairwise_accuracy(std::span<const LabeledPair> pairs, const Taxonomy& spec);

/// Product-moment correlation. Error(InvalidArgument) on mismatched sizes or
/// fewer than two points; Error(Undefined) when either side is constant.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// n subjects x k raters, no missing cells.
struct RaterMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> raters;
};

inline constexpr std::string_view kIccForm = "ICC(2,1) two-way random effects, absolute agreement, single rater";

/// ICC(2,1) from two-way ANOVA mean squares:
///   (MSR - MSE) / (MSR + (k-1) MSE + (k/n)(MSC - MSE))
/// Error(InvalidArgument) for n < 2, k < 2 or ragged rows; Error(Undefined)
/// when every cell is equal or the denominator vanishes.
double icc(const RaterMatrix& m);

struct MatchJudgment {
  std::string sample_ref;
  std::string sub_aspect;
  std::string judge;
  bool matched = false;
};

/// Per sub-aspect share of matched rationales x100. Each (sample,
/// sub-aspect) item first averages its judges, so two disagreeing judges
/// give 0.5. Error(InvalidArgument) on empty input or a repeated
/// (sample, sub-aspect, judge).
GroupedPercent reference_match_aggregate(std::span<const MatchJudgment> judgments, const Taxonomy& spec);

struct WinTieLose {
  double win = 0.0;
  double tie = 0.0;
  double lose = 0.0;
  std::size_t samples = 0;
};

/// Per scenario (samples without one fall under "unspecified"), compares the
/// total score of A's first response against B's. Bundles are paired by
/// sample id; unpaired or duplicated ids raise Error(InvalidArgument) listing
/// them, and incomplete bundles raise Error(InvalidArgument).
std::map<std::string, WinTieLose> win_tie_lose(std::span<const EvaluationBundle> a, std::span<const EvaluationBundle> b,
                                               const Taxonomy& spec);

/// hits / count per group; `rate` is empty when the group has no qualifying
/// items.
struct RateGroup {
  std::size_t hits = 0;
  std::size_t count = 0;
  [[nodiscard]] std::optional<double> rate() const {
    if (count == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(count);
  }
};

struct BiasReport {
  std::string probe;   // "position" or "verbosity"
  std::string aspect;
  std::map<std::string, RateGroup> sub_aspect;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Judges every two-response sample in the given and the swapped order and
/// counts, per sub-aspect of `aspect`, how often the verdict (mapped back to
/// the original order, ties included) changes.
BiasReport position_bias_probe(std::span<const Sample> samples, const Taxonomy& spec, const ExpertRegistry& registry,
                               const std::string& aspect = "REL", const RunOptions& options = {});

/// A sample plus human scores per sub-aspect for its two responses.
struct HumanLabeledSample {
  Sample sample;
  std::map<std::string, std::array<int, 2>> human_scores;
};

/// Among (sample, sub-aspect) items where the human strictly prefers the
/// shorter response (length in characters; equal lengths never qualify),
/// the share where the model strictly prefers the longer one.
BiasReport verbosity_bias_probe(std::span<const HumanLabeledSample> samples, const Taxonomy& spec,
                                const ExpertRegistry& registry, const std::string& aspect = "REL",
                                const RunOptions& options = {});

}  // namespace rubricjudge
