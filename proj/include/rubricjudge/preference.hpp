// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubricjudge/orchestrator.hpp"
#include "rubricjudge/taxonomy.hpp"

namespace rubricjudge {

enum class Transform { SwapScores, ShiftScores, SwapRationales, DropReference };

inline constexpr std::array<Transform, 4> kAllTransforms = {Transform::SwapScores, Transform::ShiftScores,
                                                            Transform::SwapRationales, Transform::DropReference};

std::string_view to_string(Transform t) noexcept;
Transform transform_from_string(std::string_view text);

/// A trusted pairwise evaluation restricted to one aspect: for each of the
/// two responses, one evaluation per sub-aspect of that aspect, in rubric
/// order.
struct PositiveEvaluation {
  std::string aspect;
  Sample sample;
  std::array<std::vector<SubAspectEvaluation>, 2> responses;

  [[nodiscard]] bool reference_info_present() const { return sample.reference_info.has_value(); }

  friend bool operator==(const PositiveEvaluation&, const PositiveEvaluation&) = default;
};

/// Throws Error(InvalidArgument) unless the bundle is pairwise and complete
/// for `aspect`.
PositiveEvaluation positive_from_bundle(const EvaluationBundle& bundle, const Taxonomy& spec,
                                        const std::string& aspect);

// Corruptions. Each returns a new evaluation; the input is never modified.

/// S'(R1) = S(R2), S'(R2) = S(R1) on every sub-aspect; rationales kept.
/// Error(NonInformative) when no sub-aspect has differing scores.
PositiveEvaluation swap_scores(const PositiveEvaluation& pos);

enum class ShiftDirection {
  Literal,   // R1 + delta, R2 - delta
  Mirrored,  // R1 - delta, R2 + delta
};

/// Adds delta to one response and subtracts it from the other on every
/// sub-aspect; rationales kept. Error(OutOfRange) if any score would leave
/// the rubric range, Error(InvalidArgument) for delta <= 0.
PositiveEvaluation shift_scores(const PositiveEvaluation& pos, int delta, const Taxonomy& spec,
                                ShiftDirection direction = ShiftDirection::Literal);

/// P'(R1) = P(R2), P'(R2) = P(R1) on every sub-aspect; scores kept.
/// Error(NonInformative) when every sub-aspect has identical rationales.
PositiveEvaluation swap_rationales(const PositiveEvaluation& pos);

/// Same evaluation with the reference information removed.
/// Error(NonApplicable) when there is none.
PositiveEvaluation drop_reference(const PositiveEvaluation& pos);

// Serialization into training text.

/// Aspect instruction, question, both responses, and the reference block
/// when the sample carries one.
std::string serialize_input(const PositiveEvaluation& pos, const Taxonomy& spec);

/// "Evaluation of Response N:" / "<Name> (<CODE>):" / "Analysis:" / "Score:"
/// blocks, the same surface form the judge parser reads. With
/// `cite_reference` the reference information is quoted first.
std::string serialize_evaluation(const PositiveEvaluation& pos, const Taxonomy& spec, bool cite_reference = false);

/// (x, y_w, y_l). For drop_reference the rejected side also has its own
/// input `x_rejected`, which lacks the reference block; otherwise both sides
/// share `x`.
struct PreferenceTriplet {
  std::string x;
  std::optional<std::string> x_rejected;
  std::string y_w;
  std::string y_l;
  std::string aspect;
  Transform transform = Transform::SwapScores;
  std::optional<int> delta;  // signed; present only for shift_scores
  std::string sample_ref;

  friend bool operator==(const PreferenceTriplet&, const PreferenceTriplet&) = default;
};

nlohmann::json triplet_to_json(const PreferenceTriplet& t);
PreferenceTriplet triplet_from_json(const nlohmann::json& j);

/// Inclusion probability of each transform for every (bundle, aspect).
struct TransformMix {
  double swap_scores = 1.0;
  double shift_scores = 1.0;
  double swap_rationales = 1.0;
  double drop_reference = 1.0;

  [[nodiscard]] double weight(Transform t) const;
};

struct PreferenceConfig {
  TransformMix mix;
  std::uint64_t seed = 0;
  bool mirrored = false;             // also emit the mirrored shift
  std::vector<int> delta_domain = {1, 2};
  int max_resamples = 3;             // extra delta draws after an out-of-range one
};

struct PreferenceStats {
  std::map<std::string, std::size_t> emitted;  // per transform name
  std::size_t skipped_bundles = 0;             // not pairwise or incomplete
  std::size_t non_informative = 0;
  std::size_t non_applicable = 0;
  std::size_t out_of_range = 0;
};

/// Seeded schedule, fixed so it can be replayed independently. One
/// std::mt19937_64(seed) stream is consumed in this order:
///   for each bundle (input order; unusable bundles consume nothing)
///     for each aspect (rubric order)
///       for each transform in kAllTransforms order
///         draw u = (next() >> 11) * 2^-53; skip the transform unless u < weight
///         shift_scores: draw delta = domain[next() % |domain|], retrying up
///           to max_resamples more times while out of range; with `mirrored`
///           the same is then repeated for the mirrored direction.
std::vector<PreferenceTriplet> build_preference_dataset(const std::vector<EvaluationBundle>& bundles,
                                                        const Taxonomy& spec, const PreferenceConfig& config,
                                                        PreferenceStats* stats = nullptr);

}  // namespace rubricjudge
