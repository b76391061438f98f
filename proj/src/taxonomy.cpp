// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/taxonomy.hpp"

#include <fstream>
#include <set>

#include "rubricjudge/error.hpp"

namespace rubricjudge {

using nlohmann::json;

const Aspect* Taxonomy::find_aspect(std::string_view code) const {
  for (const auto& a : aspects)
    if (a.code == code) return &a;
  return nullptr;
}

const SubAspect* Taxonomy::find_sub_aspect(std::string_view code) const {
  for (const auto& a : aspects)
    for (const auto& s : a.sub_aspects)
      if (s.code == code) return &s;
  return nullptr;
}

const Aspect* Taxonomy::parent_of(std::string_view sub_code) const {
  for (const auto& a : aspects)
    for (const auto& s : a.sub_aspects)
      if (s.code == sub_code) return &a;
  return nullptr;
}

std::size_t Taxonomy::sub_aspect_count() const {
  std::size_t n = 0;
  for (const auto& a : aspects) n += a.sub_aspects.size();
  return n;
}

std::vector<std::string> Taxonomy::sub_aspect_codes() const {
  std::vector<std::string> codes;
  for (const auto& a : aspects)
    for (const auto& s : a.sub_aspects) codes.push_back(s.code);
  return codes;
}

namespace {

SubAspect named(std::string code, std::string name, std::string instruction) {
  return {std::move(code), std::move(name), std::move(instruction), false};
}

SubAspect placeholder(const std::string& code, const std::string& aspect_name) {
  return {code, code + " (unnamed criterion)",
          "Rate the response on the " + code + " criterion of " + aspect_name +
              ". Replace this text with the full scoring rule via a rubric config file.",
          true};
}

}  // namespace

Taxonomy default_taxonomy() {
  Taxonomy t;
  t.score_min = 0;
  t.score_max = 5;

  Aspect rel{"REL", "Patient Question Relevance",
             "Judge how well the response answers the patient's actual question and concerns: "
             "is it direct, clear, and appropriate to what was asked?",
             {}};
  rel.sub_aspects = {
      named("CONT", "Context Awareness",
            "Does the response take the context of the question into account and answer what "
            "the patient is actually asking about?"),
      named("COND", "Relevance to Patient's Condition",
            "How directly does the response pertain to the patient's specific medical condition?"),
      named("CONC", "Addressing Multiple Concerns",
            "Does the response cover every concern the patient raised, not only the first one?"),
  };

  Aspect cor{"COR", "Medical Knowledge Correctness",
             "Judge whether the medical information is accurate and consistent with current "
             "knowledge, clinical guidelines, and evidence-based practice.",
             {}};
  cor.sub_aspects = {
      named("ACC", "Factual Accuracy",
            "Are the medical facts stated in the response correct and in line with current "
            "evidence-based practice?"),
      placeholder("INFO", cor.name),
      placeholder("UNC", cor.name),
  };

  Aspect exp{"EXP", "Expression",
             "Judge the clarity and coherence of the response: language, structure, and "
             "presentation should be easy to follow and professional.",
             {}};
  exp.sub_aspects = {
      placeholder("CLAR", exp.name),
      placeholder("LANG", exp.name),
      placeholder("TE", exp.name),
      placeholder("INTE", exp.name),
  };

  t.aspects = {std::move(rel), std::move(cor), std::move(exp)};
  return t;
}

std::vector<Violation> validate_taxonomy(const Taxonomy& spec) {
  std::vector<Violation> out;
  if (spec.score_min >= spec.score_max)
    out.push_back({"score_min/score_max", "empty score range"});

  std::set<std::string> aspect_codes;
  std::set<std::string> sub_codes;
  for (std::size_t i = 0; i < spec.aspects.size(); ++i) {
    const auto& a = spec.aspects[i];
    const std::string where = "aspects[" + std::to_string(i) + "]";
    if (a.code.empty()) out.push_back({where + ".code", "empty code"});
    if (!aspect_codes.insert(a.code).second)
      out.push_back({where + ".code", "duplicate code '" + a.code + "'"});
    if (a.instruction.empty()) out.push_back({where + ".instruction", "empty instruction"});
    if (a.sub_aspects.empty()) out.push_back({where + ".sub_aspects", "aspect has no sub-aspects"});
    for (std::size_t j = 0; j < a.sub_aspects.size(); ++j) {
      const auto& s = a.sub_aspects[j];
      const std::string sw = where + ".sub_aspects[" + std::to_string(j) + "]";
      if (s.code.empty()) out.push_back({sw + ".code", "empty code"});
      if (!sub_codes.insert(s.code).second || aspect_codes.count(s.code) != 0)
        out.push_back({sw + ".code", "duplicate code '" + s.code + "'"});
      if (s.instruction.empty()) out.push_back({sw + ".instruction", "empty instruction"});
    }
  }
  return out;
}

EvaluationCheck validate_evaluation(const SubAspectEvaluation& e, const Taxonomy& spec) {
  if (spec.find_sub_aspect(e.sub_aspect) == nullptr) return EvaluationCheck::UnknownSubAspect;
  if (!spec.score_in_range(e.score)) return EvaluationCheck::ScoreOutOfRange;
  if (e.rationale.empty()) return EvaluationCheck::EmptyRationale;
  return EvaluationCheck::Ok;
}

std::string_view to_string(EvaluationCheck check) noexcept {
  switch (check) {
    case EvaluationCheck::Ok: return "ok";
    case EvaluationCheck::UnknownSubAspect: return "unknown sub-aspect";
    case EvaluationCheck::ScoreOutOfRange: return "score out of range";
    case EvaluationCheck::EmptyRationale: return "empty rationale";
  }
  return "unknown";
}

json taxonomy_to_json(const Taxonomy& spec) {
  json aspects = json::array();
  for (const auto& a : spec.aspects) {
    json subs = json::array();
    for (const auto& s : a.sub_aspects) {
      json sj = {{"code", s.code}, {"name", s.name}, {"instruction", s.instruction}};
      if (s.placeholder) sj["placeholder"] = true;
      subs.push_back(std::move(sj));
    }
    aspects.push_back({{"code", a.code},
                       {"name", a.name},
                       {"instruction", a.instruction},
                       {"sub_aspects", std::move(subs)}});
  }
  return {{"aspects", std::move(aspects)},
          {"score_min", spec.score_min},
          {"score_max", spec.score_max}};
}

namespace {

std::string required_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_string())
    throw Error(ErrorCode::InvalidArgument, where + ": missing string field '" + key + "'");
  return obj.at(key).get<std::string>();
}

}  // namespace

Taxonomy taxonomy_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "taxonomy: expected an object");
  Taxonomy t;
  t.score_min = doc.value("score_min", 0);
  t.score_max = doc.value("score_max", 5);
  if (!doc.contains("aspects") || !doc.at("aspects").is_array())
    throw Error(ErrorCode::InvalidArgument, "taxonomy: 'aspects' must be an array");
  std::size_t i = 0;
  for (const auto& aj : doc.at("aspects")) {
    const std::string where = "aspects[" + std::to_string(i++) + "]";
    Aspect a;
    a.code = required_string(aj, "code", where);
    a.instruction = required_string(aj, "instruction", where);
    a.name = aj.value("name", a.code);
    if (aj.contains("sub_aspects")) {
      if (!aj.at("sub_aspects").is_array())
        throw Error(ErrorCode::InvalidArgument, where + ": 'sub_aspects' must be an array");
      std::size_t j = 0;
      for (const auto& sj : aj.at("sub_aspects")) {
        const std::string sw = where + ".sub_aspects[" + std::to_string(j++) + "]";
        SubAspect s;
        s.code = required_string(sj, "code", sw);
        s.instruction = required_string(sj, "instruction", sw);
        s.name = sj.value("name", s.code);
        s.placeholder = sj.value("placeholder", false);
        a.sub_aspects.push_back(std::move(s));
      }
    }
    t.aspects.push_back(std::move(a));
  }
  return t;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open taxonomy file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return taxonomy_from_json(doc);
}

}  // namespace rubricjudge
