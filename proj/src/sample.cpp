// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/sample.hpp"

#include "rubricjudge/error.hpp"

namespace rubricjudge {

using nlohmann::json;

std::string_view to_string(Mode mode) noexcept {
  return mode == Mode::Pairwise ? "pairwise" : "single";
}

Mode mode_from_string(std::string_view text) {
  if (text == "pairwise") return Mode::Pairwise;
  if (text == "single") return Mode::Single;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + std::string(text) + "'");
}

void validate_sample(const Sample& s) {
  if (s.id.empty()) throw Error(ErrorCode::InvalidArgument, "sample: empty id");
  if (s.question.empty()) throw Error(ErrorCode::InvalidArgument, "sample " + s.id + ": empty question");
  if (s.responses.empty() || s.responses.size() > 2)
    throw Error(ErrorCode::InvalidArgument,
                "sample " + s.id + ": expected 1 or 2 responses, got " + std::to_string(s.responses.size()));
}

json sample_to_json(const Sample& s) {
  json j = {{"id", s.id}, {"question", s.question}, {"responses", s.responses}};
  if (s.reference_info) j["reference_info"] = *s.reference_info;
  if (s.scenario) j["scenario"] = *s.scenario;
  return j;
}

Sample sample_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "sample: expected an object");
  Sample s;
  try {
    s.id = j.at("id").get<std::string>();
    s.question = j.at("question").get<std::string>();
    s.responses = j.at("responses").get<std::vector<std::string>>();
    if (j.contains("reference_info") && !j.at("reference_info").is_null())
      s.reference_info = j.at("reference_info").get<std::string>();
    if (j.contains("scenario") && !j.at("scenario").is_null())
      s.scenario = j.at("scenario").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("sample: ") + e.what());
  }
  validate_sample(s);
  return s;
}

}  // namespace rubricjudge
