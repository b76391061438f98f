// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rubricjudge {

struct SubAspect {
  std::string code;
  std::string name;
  std::string instruction;
  // Display name and instruction are stand-ins until a rubric config
  // supplies the real wording.
  bool placeholder = false;
};

struct Aspect {
  std::string code;
  std::string name;
  std::string instruction;
  std::vector<SubAspect> sub_aspects;
};

/// Rubric tree: ordered aspects, each with ordered sub-aspects, and the
/// inclusive integer score range shared by every sub-aspect.
///
/// Immutable once built; lookups are linear because rubrics are small.
struct Taxonomy {
  std::vector<Aspect> aspects;
  int score_min = 0;
  int score_max = 5;

  [[nodiscard]] const Aspect* find_aspect(std::string_view code) const;
  [[nodiscard]] const SubAspect* find_sub_aspect(std::string_view code) const;
  /// Parent aspect of a sub-aspect, or nullptr for unknown codes.
  [[nodiscard]] const Aspect* parent_of(std::string_view sub_code) const;
  [[nodiscard]] std::size_t sub_aspect_count() const;
  /// Sub-aspect codes in rubric order, across all aspects.
  [[nodiscard]] std::vector<std::string> sub_aspect_codes() const;
  [[nodiscard]] bool score_in_range(int score) const {
    return score >= score_min && score <= score_max;
  }
};

/// Built-in three-aspect, ten-sub-aspect medical rubric scored 0..5.
Taxonomy default_taxonomy();

struct Violation {
  std::string field;
  std::string message;
};

/// Empty result means the rubric is usable.
std::vector<Violation> validate_taxonomy(const Taxonomy& spec);

struct SubAspectEvaluation {
  std::string sub_aspect;
  int score = 0;
  std::string rationale;

  friend bool operator==(const SubAspectEvaluation&, const SubAspectEvaluation&) = default;
};

enum class EvaluationCheck { Ok, UnknownSubAspect, ScoreOutOfRange, EmptyRationale };

EvaluationCheck validate_evaluation(const SubAspectEvaluation& e, const Taxonomy& spec);
std::string_view to_string(EvaluationCheck check) noexcept;

nlohmann::json taxonomy_to_json(const Taxonomy& spec);
/// Throws Error(InvalidArgument) on structural problems; semantic problems
/// are left to validate_taxonomy.
Taxonomy taxonomy_from_json(const nlohmann::json& doc);
Taxonomy load_taxonomy(const std::filesystem::path& path);

}  // namespace rubricjudge
