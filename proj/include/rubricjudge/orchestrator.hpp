// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubricjudge/error.hpp"
#include "rubricjudge/judge.hpp"
#include "rubricjudge/sample.hpp"
#include "rubricjudge/taxonomy.hpp"

namespace rubricjudge {

// ---------------------------------------------------------------------------
// Decomposition

struct Subtask {
  std::string aspect;
  std::string aspect_name;
  std::string aspect_instruction;
  std::string sub_aspect;
  std::string sub_aspect_name;
  std::string instruction;
};

struct PrimaryTask {
  std::string aspect;
  std::string instruction;
  std::vector<Subtask> subtasks;
};

/// One primary task per aspect, one subtask per sub-aspect, in rubric order.
struct TaskTree {
  std::string sample_id;
  std::vector<PrimaryTask> primary_tasks;

  /// An empty rubric yields an empty (but valid) tree.
  [[nodiscard]] bool empty() const { return primary_tasks.empty(); }
  [[nodiscard]] std::size_t subtask_count() const;
};

TaskTree decompose(const Taxonomy& spec, const Sample& sample);

// ---------------------------------------------------------------------------
// Prompts

/// Plain-text prompt templates with named placeholders:
///   {aspect_name} {aspect_instruction} {sub_aspect_code} {sub_aspect_name}
///   {instruction} {question} {response} {response_1} {response_2}
///   {reference_block} {score_min} {score_max}
/// {reference_block} expands to a "### Reference:" section, or nothing when
/// the sample has no reference information.
struct PromptTemplates {
  std::string pairwise;
  std::string single;

  static PromptTemplates defaults();
  /// Reads pairwise.txt and single.txt from `dir`; a missing file keeps the
  /// default for that mode. Unknown placeholders are rejected.
  static PromptTemplates load(const std::filesystem::path& dir);
};

/// Deterministic prompt for one subtask. `response_index` (1-based) selects
/// the response for single mode; it is ignored for pairwise prompts, which
/// always label responses "Response 1"/"Response 2" in input order.
/// Throws Error(InvalidArgument) for a pairwise prompt on a 1-response sample.
std::string render_prompt(const Subtask& subtask, const Sample& sample, Mode mode, int response_index = 1,
                          const PromptTemplates& templates = PromptTemplates::defaults(), int score_min = 0,
                          int score_max = 5);

// ---------------------------------------------------------------------------
// Judge output parsing

/// Parse or range failure that keeps the offending judge text.
class JudgeOutputError : public Error {
 public:
  JudgeOutputError(ErrorCode code, const std::string& message, std::string raw)
      : Error(code, message), raw_(std::move(raw)) {}
  [[nodiscard]] const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Extracts one (single) or two (pairwise) evaluations from free-form judge
/// text. Each evaluation is a rationale (the text after "Analysis:", or the
/// text since the previous block when that marker is absent) closed by a
/// "Score: <int>" line. "Evaluation of Response N:" headings, when present,
/// decide which response a block belongs to.
///
/// Throws JudgeOutputError with code Parse (missing/extra/non-integer score,
/// empty rationale) or Range (score outside [score_min, score_max]).
std::vector<SubAspectEvaluation> parse_judge_output(const std::string& text, const std::string& sub_aspect,
                                                    Mode mode, int score_min = 0, int score_max = 5);

// ---------------------------------------------------------------------------
// Bundles

struct RawOutput {
  std::string subtask;
  std::string text;

  friend bool operator==(const RawOutput&, const RawOutput&) = default;
};

/// Full evaluation of one sample: for each response, one evaluation per
/// sub-aspect, plus every judge text received (including rejected ones).
struct EvaluationBundle {
  std::string sample_id;
  Mode mode = Mode::Pairwise;
  Sample sample;
  std::vector<std::map<std::string, SubAspectEvaluation>> per_response;
  std::string backend_id;
  std::vector<RawOutput> raw_outputs;

  /// Sum of all sub-aspect scores for one response (0-based index).
  [[nodiscard]] int total_score(std::size_t response) const;

  friend bool operator==(const EvaluationBundle&, const EvaluationBundle&) = default;
};

/// Empty when every sub-aspect of `spec` (or of `aspect` only, when given)
/// appears exactly once per response with a valid evaluation.
std::vector<std::string> completeness_problems(const EvaluationBundle& bundle, const Taxonomy& spec,
                                               const std::optional<std::string>& aspect = std::nullopt);

nlohmann::json bundle_to_json(const EvaluationBundle& bundle);
EvaluationBundle bundle_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Running

/// Aspect code -> expert backend. One backend may serve several aspects.
class ExpertRegistry {
 public:
  ExpertRegistry() = default;
  /// Same backend for every aspect of `spec`.
  ExpertRegistry(const Taxonomy& spec, std::shared_ptr<JudgeBackend> backend);

  void set(const std::string& aspect, std::shared_ptr<JudgeBackend> backend);
  /// Throws Error(InvalidArgument) when no backend is registered.
  [[nodiscard]] JudgeBackend& get(const std::string& aspect) const;
  [[nodiscard]] bool contains(const std::string& aspect) const { return experts_.count(aspect) != 0; }
  /// Aspects of `spec` with no backend.
  [[nodiscard]] std::vector<std::string> missing(const Taxonomy& spec) const;
  /// "REL=mock:7,COR=..." in rubric order.
  [[nodiscard]] std::string describe(const Taxonomy& spec) const;

 private:
  std::map<std::string, std::shared_ptr<JudgeBackend>> experts_;
};

struct RunOptions {
  PromptTemplates templates = PromptTemplates::defaults();
  int workers = 4;
  int max_output_tokens = 1024;
  // Appended to the prompt for the single retry after an unparseable answer.
  std::string retry_suffix =
      "\n\nRespond in the required format: an \"Analysis:\" line with your reasoning followed by a "
      "\"Score:\" line with one integer.";
  // Restrict the run to one aspect (used by the bias probes).
  std::optional<std::string> only_aspect;
};

struct FailedSubtask {
  std::string subtask;
  ErrorCode code;
  std::string message;
};

/// Raised when some subtasks could not be completed. Carries the bundle with
/// whatever did succeed.
class PartialBundleError : public Error {
 public:
  PartialBundleError(std::vector<FailedSubtask> failed, EvaluationBundle partial);
  [[nodiscard]] const std::vector<FailedSubtask>& failed() const noexcept { return failed_; }
  [[nodiscard]] const EvaluationBundle& partial() const noexcept { return partial_; }
  /// True when any failure came from the backend transport (retries
  /// exhausted, permanent HTTP failure) rather than unusable output.
  [[nodiscard]] bool backend_failure() const noexcept;

 private:
  std::vector<FailedSubtask> failed_;
  EvaluationBundle partial_;
};

/// Evaluates every subtask of the rubric with its aspect's expert. Pairwise
/// mode makes one call per subtask; single mode makes one call per subtask
/// per response. Calls may run concurrently; results are merged by
/// (response, sub-aspect), so the bundle does not depend on completion order.
EvaluationBundle run_evaluation(const Sample& sample, const Taxonomy& spec, const ExpertRegistry& registry,
                                Mode mode, const RunOptions& options = {});

/// Judges both responses separately (single mode) and returns one bundle
/// covering both, comparable with a pairwise bundle.
EvaluationBundle single_then_compare(const Sample& sample, const Taxonomy& spec, const ExpertRegistry& registry,
                                     const RunOptions& options = {});

}  // namespace rubricjudge
