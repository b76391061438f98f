// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "internal/parallel.hpp"

namespace rubricjudge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Decomposition

std::size_t TaskTree::subtask_count() const {
  std::size_t n = 0;
  for (const auto& p : primary_tasks) n += p.subtasks.size();
  return n;
}

TaskTree decompose(const Taxonomy& spec, const Sample& sample) {
  TaskTree tree;
  tree.sample_id = sample.id;
  for (const auto& a : spec.aspects) {
    PrimaryTask task{a.code, a.instruction, {}};
    for (const auto& s : a.sub_aspects)
      task.subtasks.push_back({a.code, a.name, a.instruction, s.code, s.name, s.instruction});
    tree.primary_tasks.push_back(std::move(task));
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr const char* kPairwiseTemplate =
    "You are an expert evaluator grading answers to a patient's question against one criterion.\n"
    "### Aspect:\n"
    "{aspect_name}: {aspect_instruction}\n"
    "### Criterion:\n"
    "{sub_aspect_name} ({sub_aspect_code}): {instruction}\n"
    "### Question:\n"
    "{question}\n"
    "### Response 1:\n"
    "{response_1}\n"
    "### Response 2:\n"
    "{response_2}\n"
    "{reference_block}"
    "### Output format:\n"
    "Write \"Evaluation of Response 1:\", then a line starting with \"Analysis:\" explaining your reasoning, "
    "then a line \"Score: N\" with an integer N from {score_min} to {score_max}. Repeat for Response 2.\n";

constexpr const char* kSingleTemplate =
    "You are an expert evaluator grading an answer to a patient's question against one criterion.\n"
    "### Aspect:\n"
    "{aspect_name}: {aspect_instruction}\n"
    "### Criterion:\n"
    "{sub_aspect_name} ({sub_aspect_code}): {instruction}\n"
    "### Question:\n"
    "{question}\n"
    "### Response:\n"
    "{response}\n"
    "{reference_block}"
    "### Output format:\n"
    "Write a line starting with \"Analysis:\" explaining your reasoning, then a line \"Score: N\" with an "
    "integer N from {score_min} to {score_max}.\n";

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> names = {
      "aspect_name", "aspect_instruction", "sub_aspect_code", "sub_aspect_name", "instruction",
      "question",    "response",           "response_1",      "response_2",      "reference_block",
      "score_min",   "score_max"};
  return names;
}

bool is_placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
}

// Calls fn(name, begin, end) for each {identifier} occurrence.
template <class Fn>
void scan_placeholders(const std::string& tmpl, Fn&& fn) {
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
    if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) fn(tmpl.substr(i + 1, j - i - 1), i, j + 1);
  }
}

void check_template(const std::string& tmpl, const std::string& what) {
  scan_placeholders(tmpl, [&](const std::string& name, std::size_t, std::size_t) {
    if (!known_placeholders().count(name))
      throw Error(ErrorCode::InvalidArgument, what + ": unknown placeholder {" + name + "}");
  });
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PromptTemplates PromptTemplates::defaults() { return {kPairwiseTemplate, kSingleTemplate}; }

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::Io, "template directory not found: " + dir.string());
  PromptTemplates t = defaults();
  if (auto p = read_file(dir / "pairwise.txt")) t.pairwise = *p;
  if (auto s = read_file(dir / "single.txt")) t.single = *s;
  check_template(t.pairwise, "pairwise.txt");
  check_template(t.single, "single.txt");
  return t;
}

std::string render_prompt(const Subtask& subtask, const Sample& sample, Mode mode, int response_index,
                          const PromptTemplates& templates, int score_min, int score_max) {
  if (mode == Mode::Pairwise && sample.responses.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "sample " + sample.id + ": pairwise prompt needs two responses");
  if (mode == Mode::Single &&
      (response_index < 1 || static_cast<std::size_t>(response_index) > sample.responses.size()))
    throw Error(ErrorCode::InvalidArgument,
                "sample " + sample.id + ": no response " + std::to_string(response_index));

  const std::map<std::string, std::string> values = {
      {"aspect_name", subtask.aspect_name},
      {"aspect_instruction", subtask.aspect_instruction},
      {"sub_aspect_code", subtask.sub_aspect},
      {"sub_aspect_name", subtask.sub_aspect_name},
      {"instruction", subtask.instruction},
      {"question", sample.question},
      {"response", mode == Mode::Single ? sample.responses[static_cast<std::size_t>(response_index - 1)] : ""},
      {"response_1", sample.responses.size() > 0 ? sample.responses[0] : ""},
      {"response_2", sample.responses.size() > 1 ? sample.responses[1] : ""},
      {"reference_block", sample.reference_info ? "### Reference:\n" + *sample.reference_info + "\n" : ""},
      {"score_min", std::to_string(score_min)},
      {"score_max", std::to_string(score_max)},
  };

  const std::string& tmpl = mode == Mode::Pairwise ? templates.pairwise : templates.single;
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  scan_placeholders(tmpl, [&](const std::string& name, std::size_t begin, std::size_t end) {
    auto it = values.find(name);
    if (it == values.end()) return;
    out.append(tmpl, pos, begin - pos);
    out += it->second;
    pos = end;
  });
  out.append(tmpl, pos, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Drops markdown emphasis around a line so "**Score:** 4" parses like "Score: 4".
std::string strip_emphasis(std::string_view line) {
  std::string out;
  for (char c : line)
    if (c != '*') out += c;
  return trim(out);
}

// Returns the text after "<label>:" when the line starts with it.
std::optional<std::string> after_label(const std::string& line, std::string_view label) {
  const std::string l = lower(line);
  if (l.rfind(label, 0) != 0) return std::nullopt;
  std::size_t i = label.size();
  while (i < l.size() && l[i] == ' ') ++i;
  if (i >= l.size() || l[i] != ':') return std::nullopt;
  return trim(std::string_view(line).substr(i + 1));
}

std::optional<int> response_header(const std::string& line) {
  const std::string l = lower(line);
  const std::string prefix = "evaluation of response";
  if (l.rfind(prefix, 0) != 0) return std::nullopt;
  std::size_t i = prefix.size();
  while (i < l.size() && l[i] == ' ') ++i;
  std::size_t j = i;
  while (j < l.size() && std::isdigit(static_cast<unsigned char>(l[j]))) ++j;
  if (j == i) return std::nullopt;
  const std::string rest = trim(std::string_view(l).substr(j));
  if (!rest.empty() && rest != ":") return std::nullopt;
  return std::stoi(l.substr(i, j - i));
}

// "4", "4/5", "4 out of 5", "4." are accepted; "4.5" and "four" are not.
std::optional<int> parse_score_value(const std::string& value) {
  std::size_t i = 0;
  bool negative = false;
  if (i < value.size() && (value[i] == '-' || value[i] == '+')) negative = value[i++] == '-';
  const std::size_t digits_begin = i;
  while (i < value.size() && std::isdigit(static_cast<unsigned char>(value[i]))) ++i;
  if (i == digits_begin || i - digits_begin > 6) return std::nullopt;
  if (i < value.size() && (value[i] == '.' || value[i] == ',') && i + 1 < value.size() &&
      std::isdigit(static_cast<unsigned char>(value[i + 1])))
    return std::nullopt;
  if (i < value.size() && std::isalpha(static_cast<unsigned char>(value[i]))) return std::nullopt;
  const int v = std::stoi(value.substr(digits_begin, i - digits_begin));
  return negative ? -v : v;
}

}  // namespace

std::vector<SubAspectEvaluation> parse_judge_output(const std::string& text, const std::string& sub_aspect,
                                                    Mode mode, int score_min, int score_max) {
  struct Block {
    std::optional<int> response;
    SubAspectEvaluation eval;
  };
  std::vector<Block> blocks;
  std::optional<int> current_response;
  std::vector<std::string> buffer;

  std::istringstream in(text);
  std::string raw_line;
  while (std::getline(in, raw_line)) {
    const std::string line = strip_emphasis(raw_line);
    if (auto r = response_header(line)) {
      current_response = *r;
      buffer.clear();
      continue;
    }
    if (auto value = after_label(line, "score")) {
      auto score = parse_score_value(*value);
      if (!score)
        throw JudgeOutputError(ErrorCode::Parse, "score line is not an integer: '" + trim(raw_line) + "'", text);
      if (*score < score_min || *score > score_max)
        throw JudgeOutputError(ErrorCode::Range,
                               "score " + std::to_string(*score) + " outside [" + std::to_string(score_min) + ", " +
                                   std::to_string(score_max) + "]",
                               text);
      std::string rationale;
      for (const auto& l : buffer) {
        if (!rationale.empty()) rationale += '\n';
        rationale += l;
      }
      rationale = trim(rationale);
      if (rationale.empty())
        throw JudgeOutputError(ErrorCode::Parse, "score without a rationale", text);
      blocks.push_back({current_response, {sub_aspect, *score, std::move(rationale)}});
      buffer.clear();
      current_response.reset();
      continue;
    }
    if (auto analysis = after_label(line, "analysis")) {
      buffer.clear();
      if (!analysis->empty()) buffer.push_back(*analysis);
      continue;
    }
    buffer.push_back(trim(raw_line));
  }

  const std::size_t expected = mode == Mode::Pairwise ? 2 : 1;
  if (blocks.size() != expected)
    throw JudgeOutputError(ErrorCode::Parse,
                           "expected " + std::to_string(expected) + " Score line(s), found " +
                               std::to_string(blocks.size()),
                           text);

  std::vector<SubAspectEvaluation> out(expected);
  std::vector<bool> filled(expected, false);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const int idx = blocks[k].response.value_or(static_cast<int>(k) + 1);
    if (idx < 1 || static_cast<std::size_t>(idx) > expected || filled[static_cast<std::size_t>(idx - 1)])
      throw JudgeOutputError(ErrorCode::Parse, "unexpected or repeated response label " + std::to_string(idx), text);
    out[static_cast<std::size_t>(idx - 1)] = std::move(blocks[k].eval);
    filled[static_cast<std::size_t>(idx - 1)] = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundles

int EvaluationBundle::total_score(std::size_t response) const {
  int total = 0;
  for (const auto& [code, e] : per_response.at(response)) total += e.score;
  return total;
}

std::vector<std::string> completeness_problems(const EvaluationBundle& bundle, const Taxonomy& spec,
                                               const std::optional<std::string>& aspect) {
  std::vector<std::string> problems;
  if (bundle.mode == Mode::Pairwise && bundle.per_response.size() != 2)
    problems.push_back("pairwise bundle needs two responses");
  if (bundle.per_response.size() != bundle.sample.responses.size())
    problems.push_back("response count differs from the sample");
  std::set<std::string> wanted;
  for (const auto& a : spec.aspects) {
    if (aspect && a.code != *aspect) continue;
    for (const auto& s : a.sub_aspects) wanted.insert(s.code);
  }
  for (std::size_t r = 0; r < bundle.per_response.size(); ++r) {
    const auto& m = bundle.per_response[r];
    for (const auto& code : wanted) {
      auto it = m.find(code);
      if (it == m.end()) {
        problems.push_back("response " + std::to_string(r + 1) + ": missing " + code);
      } else if (auto c = validate_evaluation(it->second, spec); c != EvaluationCheck::Ok) {
        problems.push_back("response " + std::to_string(r + 1) + ": " + code + ": " + std::string(to_string(c)));
      }
    }
    for (const auto& [code, e] : m)
      if (!wanted.count(code)) problems.push_back("response " + std::to_string(r + 1) + ": unexpected " + code);
  }
  return problems;
}

json bundle_to_json(const EvaluationBundle& b) {
  json per_response = json::array();
  for (const auto& m : b.per_response) {
    json entry = json::object();
    for (const auto& [code, e] : m) entry[code] = {{"score", e.score}, {"rationale", e.rationale}};
    per_response.push_back(std::move(entry));
  }
  json raws = json::array();
  for (const auto& r : b.raw_outputs) raws.push_back({{"subtask", r.subtask}, {"text", r.text}});
  return {{"sample_ref", b.sample_id},   {"mode", to_string(b.mode)},
          {"sample", sample_to_json(b.sample)}, {"per_response", std::move(per_response)},
          {"backend_id", b.backend_id}, {"raw_outputs", std::move(raws)}};
}

EvaluationBundle bundle_from_json(const json& j) {
  EvaluationBundle b;
  try {
    b.sample_id = j.at("sample_ref").get<std::string>();
    b.mode = mode_from_string(j.at("mode").get<std::string>());
    b.sample = sample_from_json(j.at("sample"));
    for (const auto& entry : j.at("per_response")) {
      std::map<std::string, SubAspectEvaluation> m;
      for (const auto& [code, e] : entry.items())
        m[code] = {code, e.at("score").get<int>(), e.at("rationale").get<std::string>()};
      b.per_response.push_back(std::move(m));
    }
    b.backend_id = j.value("backend_id", std::string{});
    if (j.contains("raw_outputs"))
      for (const auto& r : j.at("raw_outputs"))
        b.raw_outputs.push_back({r.at("subtask").get<std::string>(), r.at("text").get<std::string>()});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bundle: ") + e.what());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Registry

ExpertRegistry::ExpertRegistry(const Taxonomy& spec, std::shared_ptr<JudgeBackend> backend) {
  for (const auto& a : spec.aspects) experts_[a.code] = backend;
}

void ExpertRegistry::set(const std::string& aspect, std::shared_ptr<JudgeBackend> backend) {
  experts_[aspect] = std::move(backend);
}

JudgeBackend& ExpertRegistry::get(const std::string& aspect) const {
  auto it = experts_.find(aspect);
  if (it == experts_.end() || !it->second)
    throw Error(ErrorCode::InvalidArgument, "no expert backend registered for aspect " + aspect);
  return *it->second;
}

std::vector<std::string> ExpertRegistry::missing(const Taxonomy& spec) const {
  std::vector<std::string> out;
  for (const auto& a : spec.aspects)
    if (!contains(a.code)) out.push_back(a.code);
  return out;
}

std::string ExpertRegistry::describe(const Taxonomy& spec) const {
  std::string out;
  for (const auto& a : spec.aspects) {
    if (!out.empty()) out += ',';
    auto it = experts_.find(a.code);
    out += a.code + "=" + (it != experts_.end() && it->second ? it->second->id() : std::string("?"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

bool is_backend_code(ErrorCode c) {
  return c == ErrorCode::Transient || c == ErrorCode::Permanent || c == ErrorCode::Exhausted;
}

std::string failure_summary(const std::vector<FailedSubtask>& failed) {
  std::string msg = "evaluation incomplete; failed subtasks:";
  for (const auto& f : failed) msg += " " + f.subtask + " (" + std::string(to_string(f.code)) + ")";
  return msg;
}

struct Slot {
  const Subtask* subtask;
  int response_index;  // 0 for pairwise
};

struct SlotResult {
  std::vector<SubAspectEvaluation> evals;
  std::vector<RawOutput> raws;
  std::optional<FailedSubtask> failure;
};

}  // namespace

PartialBundleError::PartialBundleError(std::vector<FailedSubtask> failed, EvaluationBundle partial)
    : Error(ErrorCode::PartialBundle, failure_summary(failed)), failed_(std::move(failed)), partial_(std::move(partial)) {}

bool PartialBundleError::backend_failure() const noexcept {
  return std::any_of(failed_.begin(), failed_.end(), [](const FailedSubtask& f) { return is_backend_code(f.code); });
}

EvaluationBundle run_evaluation(const Sample& sample, const Taxonomy& spec, const ExpertRegistry& registry, Mode mode,
                                const RunOptions& options) {
  validate_sample(sample);
  if (mode == Mode::Pairwise && sample.responses.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "sample " + sample.id + ": pairwise mode needs two responses");
  if (auto missing = registry.missing(spec); !missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += " " + m;
    throw Error(ErrorCode::InvalidArgument, "expert registry is missing aspects:" + list);
  }

  const TaskTree tree = decompose(spec, sample);
  std::vector<Slot> slots;
  const int responses = mode == Mode::Pairwise ? 0 : static_cast<int>(sample.responses.size());
  for (int r = mode == Mode::Pairwise ? 0 : 1; r <= responses; ++r) {
    for (const auto& task : tree.primary_tasks) {
      if (options.only_aspect && task.aspect != *options.only_aspect) continue;
      for (const auto& st : task.subtasks) slots.push_back({&st, r});
    }
  }

  std::vector<SlotResult> results(slots.size());
  detail::parallel_for(slots.size(), options.workers, [&](std::size_t i) {
    const Slot& slot = slots[i];
    SlotResult& res = results[i];
    JudgeRequest req;
    req.sample_id = sample.id;
    req.sub_aspect = slot.subtask->sub_aspect;
    req.mode = mode;
    req.response_index = slot.response_index;
    req.max_output_tokens = options.max_output_tokens;
    const std::string subtask_id = req.subtask_id();
    try {
      req.prompt = render_prompt(*slot.subtask, sample, mode, std::max(1, slot.response_index), options.templates,
                                 spec.score_min, spec.score_max);
      JudgeBackend& backend = registry.get(slot.subtask->aspect);
      for (int attempt = 0; attempt < 2; ++attempt) {
        std::string text = backend.judge(req);
        res.raws.push_back({subtask_id, text});
        try {
          res.evals = parse_judge_output(text, slot.subtask->sub_aspect, mode, spec.score_min, spec.score_max);
          return;
        } catch (const JudgeOutputError& e) {
          if (attempt == 1) {
            res.failure = FailedSubtask{subtask_id, e.code(), e.what()};
            return;
          }
          req.prompt += options.retry_suffix;
        }
      }
    } catch (const Error& e) {
      res.failure = FailedSubtask{subtask_id, e.code(), e.what()};
    } catch (const std::exception& e) {
      res.failure = FailedSubtask{subtask_id, ErrorCode::Data, e.what()};
    }
  });

  EvaluationBundle bundle;
  bundle.sample_id = sample.id;
  bundle.mode = mode;
  bundle.sample = sample;
  bundle.backend_id = registry.describe(spec);
  bundle.per_response.resize(sample.responses.size());
  std::vector<FailedSubtask> failed;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& res = results[i];
    for (auto& raw : res.raws) bundle.raw_outputs.push_back(std::move(raw));
    if (res.failure) {
      failed.push_back(std::move(*res.failure));
      continue;
    }
    if (slots[i].response_index == 0) {
      for (std::size_t r = 0; r < res.evals.size(); ++r)
        bundle.per_response[r][res.evals[r].sub_aspect] = std::move(res.evals[r]);
    } else {
      auto& e = res.evals.front();
      bundle.per_response[static_cast<std::size_t>(slots[i].response_index - 1)][e.sub_aspect] = std::move(e);
    }
  }
  if (!failed.empty()) throw PartialBundleError(std::move(failed), std::move(bundle));

  if (auto problems = completeness_problems(bundle, spec, options.only_aspect); !problems.empty())
    throw Error(ErrorCode::Data, "sample " + sample.id + ": incomplete bundle: " + problems.front());
  return bundle;
}

EvaluationBundle single_then_compare(const Sample& sample, const Taxonomy& spec, const ExpertRegistry& registry,
                                     const RunOptions& options) {
  if (sample.responses.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "sample " + sample.id + ": single-then-compare needs two responses");
  return run_evaluation(sample, spec, registry, Mode::Single, options);
}

}  // namespace rubricjudge
