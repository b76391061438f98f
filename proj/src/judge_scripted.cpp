// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/error.hpp"
#include "rubricjudge/judge.hpp"
#include "rubricjudge/jsonl.hpp"

namespace rubricjudge {

namespace {

std::string describe(const FixtureKey& k) {
  std::string s = "(" + k.sample_id + ", " + k.sub_aspect + ", " + std::string(to_string(k.mode));
  if (k.response_index > 0) s += ", response " + std::to_string(k.response_index);
  return s + ")";
}

}  // namespace

ScriptedJudge::ScriptedJudge(const std::vector<FixtureRecord>& records, std::string name)
    : name_(std::move(name)) {
  for (const auto& r : records) {
    if (!texts_.emplace(r.key, r.text).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate fixture key " + describe(r.key));
  }
}

ScriptedJudge ScriptedJudge::load(const std::filesystem::path& path) {
  std::vector<FixtureRecord> records;
  jsonl::for_each(path, [&](std::size_t line, const nlohmann::json& j) {
    try {
      FixtureRecord r;
      r.key.sample_id = j.at("sample_id").get<std::string>();
      r.key.sub_aspect = j.at("sub_aspect").get<std::string>();
      r.key.mode = mode_from_string(j.at("mode").get<std::string>());
      r.key.response_index = j.value("response", 0);
      r.text = j.at("text").get<std::string>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return ScriptedJudge(records, "scripted:" + path.filename().string());
}

std::string ScriptedJudge::judge(const JudgeRequest& request) {
  const FixtureKey key{request.sample_id, request.sub_aspect, request.mode, request.response_index};
  auto it = texts_.find(key);
  if (it == texts_.end()) throw Error(ErrorCode::MissingFixture, "no fixture for " + describe(key));
  return it->second;
}

}  // namespace rubricjudge
