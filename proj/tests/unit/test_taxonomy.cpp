// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "rubricjudge/error.hpp"
#include "rubricjudge/taxonomy.hpp"
#include "support/helpers.hpp"

using namespace rubricjudge;

namespace {

bool has_message(const std::vector<Violation>& vs, const std::string& needle) {
  for (const auto& v : vs)
    if (v.message.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("default rubric shape") {
  const Taxonomy t = default_taxonomy();
  REQUIRE(t.aspects.size() == 3);
  CHECK(t.aspects[0].code == "REL");
  CHECK(t.aspects[1].code == "COR");
  CHECK(t.aspects[2].code == "EXP");
  CHECK(t.score_min == 0);
  CHECK(t.score_max == 5);
  CHECK(t.sub_aspect_count() == 10);

  std::set<std::string> rel;
  for (const auto& s : t.find_aspect("REL")->sub_aspects) rel.insert(s.code);
  CHECK(rel == std::set<std::string>{"CONT", "COND", "CONC"});
  CHECK(t.find_aspect("EXP")->sub_aspects.size() == 4);
  CHECK(t.sub_aspect_codes() ==
        std::vector<std::string>{"CONT", "COND", "CONC", "ACC", "INFO", "UNC", "CLAR", "LANG", "TE", "INTE"});
  CHECK(validate_taxonomy(t).empty());
}

TEST_CASE("every sub-aspect has exactly one parent") {
  const Taxonomy t = default_taxonomy();
  for (const auto& a : t.aspects)
    for (const auto& s : a.sub_aspects) {
      REQUIRE(t.parent_of(s.code) != nullptr);
      CHECK(t.parent_of(s.code)->code == a.code);
    }
  CHECK(t.parent_of("NOPE") == nullptr);
  CHECK(t.find_sub_aspect("REL") == nullptr);
}

TEST_CASE("placeholder sub-aspects are flagged") {
  const Taxonomy t = default_taxonomy();
  CHECK_FALSE(t.find_sub_aspect("CONT")->placeholder);
  CHECK_FALSE(t.find_sub_aspect("ACC")->placeholder);
  CHECK(t.find_sub_aspect("INFO")->placeholder);
  CHECK(t.find_sub_aspect("INTE")->placeholder);
}

TEST_CASE("validation catches duplicates and empty ranges") {
  Taxonomy dup = default_taxonomy();
  dup.aspects[1].sub_aspects[0].code = "CONT";
  CHECK(has_message(validate_taxonomy(dup), "duplicate code"));

  Taxonomy flat = default_taxonomy();
  flat.score_max = flat.score_min;
  CHECK(has_message(validate_taxonomy(flat), "empty score range"));

  Taxonomy empty_aspect = default_taxonomy();
  empty_aspect.aspects[2].sub_aspects.clear();
  CHECK(has_message(validate_taxonomy(empty_aspect), "no sub-aspects"));

  CHECK(validate_taxonomy(Taxonomy{}).empty());
}

TEST_CASE("evaluation checks") {
  const Taxonomy t = default_taxonomy();
  CHECK(validate_evaluation({"CONT", 4, "addresses question"}, t) == EvaluationCheck::Ok);
  CHECK(validate_evaluation({"CONT", 6, "x"}, t) == EvaluationCheck::ScoreOutOfRange);
  CHECK(validate_evaluation({"CONT", -1, "x"}, t) == EvaluationCheck::ScoreOutOfRange);
  CHECK(validate_evaluation({"CONT", 3, ""}, t) == EvaluationCheck::EmptyRationale);
  CHECK(validate_evaluation({"XYZ", 3, "x"}, t) == EvaluationCheck::UnknownSubAspect);
  for (int s = -3; s <= 8; ++s)
    CHECK((validate_evaluation({"ACC", s, "r"}, t) == EvaluationCheck::Ok) == (s >= 0 && s <= 5));
}

TEST_CASE("json round trip and file loading") {
  const Taxonomy t = default_taxonomy();
  const auto j = taxonomy_to_json(t);
  const Taxonomy back = taxonomy_from_json(j);
  CHECK(taxonomy_to_json(back) == j);
  CHECK(back.find_sub_aspect("INFO")->placeholder);

  rjtest::TempDir dir("tax");
  rjtest::write_file(dir / "rubric.json", R"({"score_min":1,"score_max":3,
    "aspects":[{"code":"A","instruction":"judge A",
                "sub_aspects":[{"code":"A1","instruction":"one"},{"code":"A2","name":"Two","instruction":"two"}]}]})");
  const Taxonomy custom = load_taxonomy(dir / "rubric.json");
  CHECK(custom.aspects.size() == 1);
  CHECK(custom.sub_aspect_count() == 2);
  CHECK(custom.find_sub_aspect("A1")->name == "A1");
  CHECK(custom.score_min == 1);
  CHECK(validate_taxonomy(custom).empty());

  try {
    (void)load_taxonomy(dir / "missing.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
  CHECK_THROWS_AS(taxonomy_from_json(nlohmann::json::parse(R"({"aspects":[{"code":"A"}]})")), Error);
}

TEST_CASE("default rubric is deterministic") {
  CHECK(taxonomy_to_json(default_taxonomy()) == taxonomy_to_json(default_taxonomy()));
}
