// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <mutex>
#include <set>

#include "rubricjudge/error.hpp"
#include "rubricjudge/jsonl.hpp"
#include "rubricjudge/orchestrator.hpp"
#include "support/helpers.hpp"

using namespace rubricjudge;
using nlohmann::json;

namespace {

std::shared_ptr<JudgeBackend> mock(std::uint64_t seed = 7) { return std::make_shared<MockJudge>(MockOptions{seed}); }

// Records every request and answers with a fixed valid text.
class RecordingJudge final : public JudgeBackend {
 public:
  std::string judge(const JudgeRequest& r) override {
    std::lock_guard lock(mu_);
    requests.push_back(r);
    if (r.mode == Mode::Pairwise) return "Analysis: a\nScore: 3\nAnalysis: b\nScore: 2";
    return "Analysis: one\nScore: 4";
  }
  [[nodiscard]] std::string id() const override { return "recording"; }
  std::vector<JudgeRequest> requests;

 private:
  std::mutex mu_;
};

// Fails to format the first answer for one sub-aspect, then recovers.
class FlakyFormatJudge final : public JudgeBackend {
 public:
  explicit FlakyFormatJudge(std::string sub) : sub_(std::move(sub)) {}
  std::string judge(const JudgeRequest& r) override {
    if (r.sub_aspect == sub_ && calls_++ == 0) return "I think both are fine.";
    return "Analysis: a\nScore: 3\nAnalysis: b\nScore: 2";
  }
  [[nodiscard]] std::string id() const override { return "flaky"; }

 private:
  std::string sub_;
  std::atomic<int> calls_{0};
};

}  // namespace

TEST_CASE("decompose follows the rubric") {
  const Taxonomy spec = default_taxonomy();
  const TaskTree tree = decompose(spec, rjtest::two_response_sample("s1"));
  REQUIRE(tree.primary_tasks.size() == 3);
  CHECK(tree.primary_tasks[0].aspect == "REL");
  CHECK(tree.primary_tasks[0].subtasks.size() == 3);
  CHECK(tree.primary_tasks[1].subtasks.size() == 3);
  CHECK(tree.primary_tasks[2].subtasks.size() == 4);
  CHECK(tree.subtask_count() == 10);
  CHECK(tree.primary_tasks[0].subtasks[0].sub_aspect == "CONT");
  CHECK(tree.sample_id == "s1");

  const TaskTree empty = decompose(Taxonomy{}, rjtest::two_response_sample("s1"));
  CHECK(empty.empty());
  CHECK(empty.subtask_count() == 0);
}

TEST_CASE("prompt rendering") {
  const Taxonomy spec = default_taxonomy();
  Sample s = rjtest::two_response_sample("s1", "Drink water often.", "Take ibuprofen.");
  const Subtask cont = decompose(spec, s).primary_tasks[0].subtasks[0];

  const std::string p = render_prompt(cont, s, Mode::Pairwise);
  CHECK(p.find("Drink water often.") != std::string::npos);
  CHECK(p.find("Take ibuprofen.") != std::string::npos);
  CHECK(p.find(s.question) != std::string::npos);
  CHECK(p.find("### Response 1:") < p.find("### Response 2:"));
  CHECK(p.find("Reference") == std::string::npos);
  CHECK(p == render_prompt(cont, s, Mode::Pairwise));

  s.reference_info = "Fever over three days needs a check-up.";
  const std::string with_ref = render_prompt(cont, s, Mode::Pairwise);
  CHECK(with_ref.find("### Reference:") != std::string::npos);
  CHECK(with_ref.find(*s.reference_info) != std::string::npos);

  const std::string single2 = render_prompt(cont, s, Mode::Single, 2);
  CHECK(single2.find("Take ibuprofen.") != std::string::npos);
  CHECK(single2.find("Drink water often.") == std::string::npos);

  Sample one = s;
  one.responses = {"Only answer."};
  CHECK_THROWS_AS(render_prompt(cont, one, Mode::Pairwise), Error);
  CHECK_NOTHROW(render_prompt(cont, one, Mode::Single, 1));
}

TEST_CASE("templates load from a directory") {
  rjtest::TempDir dir("tmpl");
  rjtest::write_file(dir / "single.txt", "Judge {sub_aspect_code}.\n### Question:\n{question}\n### Response:\n{response}\n");
  const auto t = PromptTemplates::load(dir.path());
  CHECK(t.pairwise == PromptTemplates::defaults().pairwise);
  const Taxonomy spec = default_taxonomy();
  const Sample s = rjtest::two_response_sample("s1");
  const auto& sub = decompose(spec, s).primary_tasks[0].subtasks[1];
  CHECK(render_prompt(sub, s, Mode::Single, 1, t).rfind("Judge COND.", 0) == 0);

  rjtest::write_file(dir / "pairwise.txt", "{no_such_placeholder}");
  CHECK_THROWS_AS(PromptTemplates::load(dir.path()), Error);
}

TEST_CASE("hand-written judge outputs parse as expected") {
  const auto cases = jsonl::read_all(rjtest::fixture("judge_outputs.jsonl"));
  REQUIRE(cases.size() == 20);
  for (const auto& c : cases) {
    CAPTURE(c.at("case").get<int>());
    const std::string text = c.at("text");
    const Mode mode = mode_from_string(c.at("mode").get<std::string>());
    if (c.contains("error")) {
      const ErrorCode want = c.at("error") == "Range" ? ErrorCode::Range : ErrorCode::Parse;
      try {
        (void)parse_judge_output(text, "CONT", mode);
        FAIL("expected a failure");
      } catch (const JudgeOutputError& e) {
        CHECK(e.code() == want);
        CHECK(e.raw_text() == text);
      }
      continue;
    }
    const auto got = parse_judge_output(text, "CONT", mode);
    const auto& want = c.at("expect");
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].sub_aspect == "CONT");
      CHECK(got[i].score == want[i].at("score").get<int>());
      CHECK(got[i].rationale == want[i].at("rationale").get<std::string>());
    }
  }
}

TEST_CASE("score round trip over the rubric range") {
  for (int s = 0; s <= 5; ++s) {
    const auto e = parse_judge_output("Analysis: because.\nScore: " + std::to_string(s), "ACC", Mode::Single);
    CHECK(e.at(0).score == s);
  }
  CHECK_THROWS_AS(parse_judge_output("Analysis: x\nScore: 3", "ACC", Mode::Single, 0, 2), JudgeOutputError);
}

TEST_CASE("mock run gives complete bundles") {
  const Taxonomy spec = default_taxonomy();
  const ExpertRegistry registry(spec, mock());
  const Sample s = rjtest::two_response_sample("s1");

  const auto b = run_evaluation(s, spec, registry, Mode::Pairwise);
  REQUIRE(b.per_response.size() == 2);
  CHECK(b.per_response[0].size() == 10);
  CHECK(b.per_response[1].size() == 10);
  CHECK(completeness_problems(b, spec).empty());
  CHECK(b.raw_outputs.size() == 10);
  CHECK(b.backend_id == "REL=mock:7,COR=mock:7,EXP=mock:7");

  CHECK(run_evaluation(s, spec, registry, Mode::Pairwise) == b);

  RunOptions serial;
  serial.workers = 1;
  CHECK(run_evaluation(s, spec, registry, Mode::Pairwise, serial) == b);

  CHECK(bundle_from_json(bundle_to_json(b)) == b);
}

TEST_CASE("single mode calls once per response and sub-aspect") {
  const Taxonomy spec = default_taxonomy();
  auto rec = std::make_shared<RecordingJudge>();
  const auto b = run_evaluation(rjtest::two_response_sample("s1"), spec, ExpertRegistry(spec, rec), Mode::Single);
  CHECK(rec->requests.size() == 20);
  CHECK(b.mode == Mode::Single);
  CHECK(b.per_response[1].at("TE").score == 4);
  std::set<std::string> ids;
  for (const auto& r : rec->requests) {
    ids.insert(r.subtask_id());
    CHECK(r.temperature == 0.0);
  }
  CHECK(ids.size() == 20);
}

TEST_CASE("experts only see their own aspect") {
  const Taxonomy spec = default_taxonomy();
  auto rel = std::make_shared<RecordingJudge>();
  auto cor = std::make_shared<RecordingJudge>();
  auto exp = std::make_shared<RecordingJudge>();
  ExpertRegistry registry;
  registry.set("REL", rel);
  registry.set("COR", cor);
  registry.set("EXP", exp);
  (void)run_evaluation(rjtest::two_response_sample("s1"), spec, registry, Mode::Pairwise);
  auto subs = [](const RecordingJudge& j) {
    std::set<std::string> out;
    for (const auto& r : j.requests) out.insert(r.sub_aspect);
    return out;
  };
  CHECK(subs(*rel) == std::set<std::string>{"CONT", "COND", "CONC"});
  CHECK(subs(*cor) == std::set<std::string>{"ACC", "INFO", "UNC"});
  CHECK(subs(*exp) == std::set<std::string>{"CLAR", "LANG", "TE", "INTE"});

  ExpertRegistry partial;
  partial.set("REL", rel);
  CHECK(partial.missing(spec) == std::vector<std::string>{"COR", "EXP"});
  CHECK_THROWS_AS(run_evaluation(rjtest::two_response_sample("s1"), spec, partial, Mode::Pairwise), Error);
}

TEST_CASE("missing fixture key yields a partial bundle naming the subtask") {
  const Taxonomy spec = default_taxonomy();
  std::vector<FixtureRecord> records;
  for (const auto& code : spec.sub_aspect_codes()) {
    if (code == "CONC") continue;
    records.push_back({{"s1", code, Mode::Pairwise, 0}, "Analysis: a\nScore: 3\nAnalysis: b\nScore: 2"});
  }
  auto scripted = std::make_shared<ScriptedJudge>(records);
  try {
    (void)run_evaluation(rjtest::two_response_sample("s1"), spec, ExpertRegistry(spec, scripted), Mode::Pairwise);
    FAIL("expected a partial bundle");
  } catch (const PartialBundleError& e) {
    REQUIRE(e.failed().size() == 1);
    CHECK(e.failed()[0].subtask == "s1/CONC/pairwise");
    CHECK(e.failed()[0].code == ErrorCode::MissingFixture);
    CHECK_FALSE(e.backend_failure());
    CHECK(e.partial().per_response[0].size() == 9);
    CHECK(e.partial().per_response[0].count("CONC") == 0);
  }
}

TEST_CASE("unparseable output is retried once") {
  const Taxonomy spec = default_taxonomy();
  auto flaky = std::make_shared<FlakyFormatJudge>("ACC");
  const auto b = run_evaluation(rjtest::two_response_sample("s1"), spec, ExpertRegistry(spec, flaky), Mode::Pairwise);
  CHECK(b.per_response[0].at("ACC").score == 3);
  CHECK(b.raw_outputs.size() == 11);  // the rejected text is kept
}

TEST_CASE("single then compare matches two single runs") {
  const Taxonomy spec = default_taxonomy();
  const ExpertRegistry registry(spec, mock(11));
  const Sample s = rjtest::two_response_sample("s9", "Short answer.", "A considerably longer answer here.");
  const auto both = single_then_compare(s, spec, registry);
  for (int r = 0; r < 2; ++r) {
    Sample alone = s;
    alone.responses = {s.responses[static_cast<std::size_t>(r)]};
    const auto single = run_evaluation(alone, spec, registry, Mode::Single);
    for (const auto& code : spec.sub_aspect_codes())
      CHECK(both.per_response[static_cast<std::size_t>(r)].at(code).score == single.per_response[0].at(code).score);
  }
  Sample one = s;
  one.responses.pop_back();
  CHECK_THROWS_AS(single_then_compare(one, spec, registry), Error);
}

TEST_CASE("only_aspect restricts the run") {
  const Taxonomy spec = default_taxonomy();
  RunOptions opts;
  opts.only_aspect = "REL";
  const auto b = run_evaluation(rjtest::two_response_sample("s1"), spec, ExpertRegistry(spec, mock()), Mode::Pairwise, opts);
  CHECK(b.per_response[0].size() == 3);
  CHECK(completeness_problems(b, spec, std::string("REL")).empty());
  CHECK_FALSE(completeness_problems(b, spec).empty());
}
