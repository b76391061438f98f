// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "rubricjudge/adto.hpp"
#include "rubricjudge/error.hpp"
#include "rubricjudge/jsonl.hpp"
#include "rubricjudge/metrics.hpp"
#include "rubricjudge/pipeline.hpp"
#include "support/helpers.hpp"

using namespace rubricjudge;
using nlohmann::json;
namespace pl = rubricjudge::pipeline;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Data;
}

json evaluate_fixture(const rjtest::TempDir& dir, const std::string& out = "bundles.jsonl") {
  return pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                           {"out", (dir / out).string()},
                           {"backend", {{"kind", "mock"}, {"seed", 7}}}});
}

bool close(const json& got, double want) { return got.is_number() && std::abs(got.get<double>() - want) < 1e-9; }

}  // namespace

TEST_CASE("evaluate writes one bundle per sample") {
  rjtest::TempDir dir("eval");
  const auto s = evaluate_fixture(dir);
  CHECK(s.at("exit_code") == 0);
  CHECK(s.at("bundles") == 10);
  CHECK(rjtest::count_lines(dir / "bundles.jsonl") == 10);
  CHECK(std::filesystem::exists(dir / "bundles.jsonl.config.json"));
  const auto echo = jsonl::read_json_file(dir / "bundles.jsonl.config.json");
  CHECK(echo.at("backend").at("seed") == 7);
  CHECK(echo.at("placeholder_sub_aspects") == nlohmann::json{"INFO", "UNC", "CLAR", "LANG", "TE", "INTE"});
  for (const auto& line : jsonl::read_all(dir / "bundles.jsonl")) {
    const auto b = bundle_from_json(line);
    CHECK(completeness_problems(b, default_taxonomy()).empty());
  }
}

TEST_CASE("evaluate skips a malformed line") {
  rjtest::TempDir dir("eval-bad");
  const auto s = pl::run_evaluate({{"samples", rjtest::fixture("samples_10_malformed.jsonl").string()},
                                   {"out", (dir / "b.jsonl").string()}});
  CHECK(s.at("exit_code") == 1);
  CHECK(s.at("bundles") == 9);
  CHECK(s.at("skipped_lines") == 1);
  CHECK(s.at("errors").dump().find("line 3") != std::string::npos);
}

TEST_CASE("evaluate in single mode") {
  rjtest::TempDir dir("eval-single");
  const auto s = pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                                   {"out", (dir / "b.jsonl").string()},
                                   {"mode", "single"}});
  CHECK(s.at("exit_code") == 0);
  for (const auto& line : jsonl::read_all(dir / "b.jsonl")) CHECK(line.at("mode") == "single");
}

TEST_CASE("evaluate reports a missing fixture as a failed sample") {
  rjtest::TempDir dir("eval-scripted");
  rjtest::write_file(dir / "fx.jsonl", R"({"sample_id":"s01","sub_aspect":"CONT","mode":"pairwise","text":"Analysis: a\nScore: 1\nAnalysis: b\nScore: 2"})"
                                       "\n");
  const auto s = pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                                   {"out", (dir / "b.jsonl").string()},
                                   {"backend", {{"kind", "scripted"}, {"fixture", (dir / "fx.jsonl").string()}}}});
  CHECK(s.at("exit_code") == 1);
  CHECK(s.at("bundles") == 0);
  CHECK(s.at("failed").size() == 10);
}

TEST_CASE("options are validated before work starts") {
  rjtest::TempDir dir("opts");
  CHECK(code_of([&] { (void)pl::run_evaluate({{"samples", "nope.jsonl"}, {"out", (dir / "o").string()}}); }) ==
        ErrorCode::Io);
  CHECK(code_of([&] {
          (void)pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                                  {"out", (dir / "o").string()},
                                  {"colour", "blue"}});
        }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] {
          (void)pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                                  {"out", (dir / "missing-dir" / "o").string()}});
        }) == ErrorCode::Io);
  CHECK(code_of([&] {
          (void)pl::run_evaluate({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                                  {"out", (dir / "o").string()},
                                  {"mode", "triple"}});
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("prefdata needs a seed and is deterministic") {
  rjtest::TempDir dir("pref");
  evaluate_fixture(dir);
  const std::string bundles = (dir / "bundles.jsonl").string();
  CHECK(code_of([&] { (void)pl::run_prefdata({{"bundles", bundles}, {"out", (dir / "t.jsonl").string()}}); }) ==
        ErrorCode::InvalidArgument);

  const auto a = pl::run_prefdata({{"bundles", bundles}, {"out", (dir / "t1.jsonl").string()}, {"seed", 42}});
  const auto b = pl::run_prefdata({{"bundles", bundles}, {"out", (dir / "t2.jsonl").string()}, {"seed", 42}});
  CHECK(a.at("exit_code") == 0);
  CHECK(a.at("triplets").get<int>() > 0);
  CHECK(rjtest::read_file(dir / "t1.jsonl") == rjtest::read_file(dir / "t2.jsonl"));
  CHECK(a.at("emitted") == b.at("emitted"));
  CHECK(rjtest::count_lines(dir / "t1.jsonl") == a.at("triplets").get<std::size_t>());
}

TEST_CASE("train with zero steps writes the initial models") {
  rjtest::TempDir dir("train0");
  evaluate_fixture(dir);
  pl::run_prefdata({{"bundles", (dir / "bundles.jsonl").string()}, {"out", (dir / "t.jsonl").string()}, {"seed", 1}});
  const auto s = pl::run_train({{"triplets", (dir / "t.jsonl").string()},
                                {"out_dir", (dir / "ck").string()},
                                {"seed", 5},
                                {"training", {{"steps", 0}, {"max_vocab", 40}}}});
  CHECK(s.at("exit_code") == 0);
  REQUIRE(s.at("checkpoints").size() == 3);
  for (const auto& aspect : {"REL", "COR", "EXP"}) {
    const auto ck = jsonl::read_json_file(dir / "ck" / (std::string(aspect) + ".json"));
    const auto model = adto::TinyLM::from_json(ck);
    const auto vocab = adto::Vocab::from_json(ck.at("vocab"));
    auto init = adto::TinyLM::random(vocab.size(), 4, adto::aspect_seed(5, aspect), 0.1);
    init.set_trainable(adto::freeze_mask(4, 0.75));
    CHECK(model == init);
    CHECK(ck.at("config").at("beta_used") == 0.5);
  }
  CHECK(rjtest::count_lines(dir / "ck" / "train_log.jsonl") == 3);
  CHECK(std::filesystem::exists(dir / "ck" / "train_log.jsonl.config.json"));

  CHECK(code_of([&] {
          (void)pl::run_train({{"triplets", (dir / "t.jsonl").string()}, {"out_dir", (dir / "ck").string()}});
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("train reruns give identical bytes and lower the loss") {
  rjtest::TempDir dir("train");
  evaluate_fixture(dir);
  pl::run_prefdata({{"bundles", (dir / "bundles.jsonl").string()}, {"out", (dir / "t.jsonl").string()}, {"seed", 1}});
  const json training = {{"steps", 30}, {"max_vocab", 40}, {"learning_rate", 0.5}};
  const auto a = pl::run_train(
      {{"triplets", (dir / "t.jsonl").string()}, {"out_dir", (dir / "a").string()}, {"seed", 3}, {"training", training}});
  const auto b = pl::run_train(
      {{"triplets", (dir / "t.jsonl").string()}, {"out_dir", (dir / "b").string()}, {"seed", 3}, {"training", training}});
  for (const auto& f : {"REL.json", "COR.json", "EXP.json", "train_log.jsonl"})
    CHECK(rjtest::read_file(dir / "a" / f) == rjtest::read_file(dir / "b" / f));
  for (const auto& [aspect, e] : a.at("final").items()) CHECK(e.at("loss").get<double>() < std::log(2.0));
  CHECK(b.at("exit_code") == 0);
}

TEST_CASE("metrics with perfect agreement and with a missing label") {
  rjtest::TempDir dir("metrics");
  evaluate_fixture(dir);
  // Labels copied from the model's own scores.
  {
    jsonl::Writer w(dir / "labels.jsonl");
    for (const auto& line : jsonl::read_all(dir / "bundles.jsonl")) {
      const auto b = bundle_from_json(line);
      json scores = json::object();
      for (const auto& [code, e] : b.per_response[0]) scores[code] = {e.score, b.per_response[1].at(code).score};
      w.write({{"sample_id", b.sample_id}, {"scores", scores}});
    }
  }
  const auto s = pl::run_metrics({{"bundles", (dir / "bundles.jsonl").string()},
                                  {"labels", (dir / "labels.jsonl").string()},
                                  {"out", (dir / "report.json").string()},
                                  {"compare", (dir / "bundles.jsonl").string()}});
  CHECK(s.at("exit_code") == 0);
  const auto report = jsonl::read_json_file(dir / "report.json");
  for (const auto& [sub, v] : report.at("pairwise_accuracy").at("sub_aspect").items()) CHECK(v == 100.0);
  CHECK(report.at("pairwise_accuracy").at("sub_aspect").size() == 10);
  CHECK(close(report.at("correlation").at("overall").at("pearson"), 1.0));
  CHECK(close(report.at("correlation").at("overall").at("icc"), 1.0));
  CHECK(report.at("win_tie_lose").at("consultation").at("tie") == 100.0);
  CHECK(report.at("icc_form") == std::string(kIccForm));
  CHECK(rjtest::read_file(dir / "report.csv").rfind("metric,group,key,value,count\n", 0) == 0);

  // Drop one label line.
  const auto lines = jsonl::read_all(dir / "labels.jsonl");
  {
    jsonl::Writer w(dir / "labels9.jsonl");
    for (std::size_t i = 1; i < lines.size(); ++i) w.write(lines[i]);
  }
  const auto missing = pl::run_metrics({{"bundles", (dir / "bundles.jsonl").string()},
                                        {"labels", (dir / "labels9.jsonl").string()},
                                        {"out", (dir / "r9.json").string()}});
  CHECK(missing.at("exit_code") == 1);
  CHECK(missing.at("unjoined") == json::array({lines[0].at("sample_id")}));
  CHECK_FALSE(std::filesystem::exists(dir / "r9.json"));
}

TEST_CASE("metrics report equals module calls composed by hand") {
  rjtest::TempDir dir("metrics30");
  const Taxonomy spec = default_taxonomy();
  std::mt19937_64 rng(303);
  std::vector<EvaluationBundle> bundles, other;
  std::map<std::string, std::map<std::string, std::array<int, 2>>> labels;
  std::vector<MatchJudgment> matches;
  {
    jsonl::Writer wb(dir / "b.jsonl"), wo(dir / "o.jsonl"), wl(dir / "l.jsonl"), wm(dir / "m.jsonl");
    for (int i = 0; i < 30; ++i) {
      std::vector<int> r1, r2, o1;
      for (int k = 0; k < 10; ++k) {
        r1.push_back(static_cast<int>(rng() % 6));
        r2.push_back(static_cast<int>(rng() % 6));
        o1.push_back(static_cast<int>(rng() % 6));
      }
      const std::string id = "c" + std::to_string(i);
      const std::string scen = i % 2 ? "consultation" : "diagnosis";
      bundles.push_back(rjtest::make_bundle(id, r1, r2, scen));
      other.push_back(rjtest::make_bundle(id, o1, r2, scen));
      wb.write(bundle_to_json(bundles.back()));
      wo.write(bundle_to_json(other.back()));
      json scores = json::object();
      for (const auto& code : spec.sub_aspect_codes()) {
        const std::array<int, 2> h = {static_cast<int>(rng() % 6), static_cast<int>(rng() % 6)};
        labels[id][code] = h;
        scores[code] = {h[0], h[1]};
      }
      wl.write({{"sample_id", id}, {"scores", scores}});
      for (const char* judge : {"p1", "p2"}) {
        matches.push_back({id, spec.sub_aspect_codes()[static_cast<std::size_t>(i) % 10], judge, rng() % 2 == 0});
        wm.write({{"sample_id", id}, {"sub_aspect", matches.back().sub_aspect}, {"judge", judge},
                  {"matched", matches.back().matched}});
      }
    }
  }
  const auto s = pl::run_metrics({{"bundles", (dir / "b.jsonl").string()},
                                  {"labels", (dir / "l.jsonl").string()},
                                  {"out", (dir / "r.json").string()},
                                  {"matches", (dir / "m.jsonl").string()},
                                  {"compare", (dir / "o.jsonl").string()}});
  REQUIRE(s.at("exit_code") == 0);
  const auto report = jsonl::read_json_file(dir / "r.json");

  std::vector<LabeledPair> pairs;
  std::vector<double> h, m;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_aspect;
  for (const auto& b : bundles)
    for (const auto& [code, hs] : labels.at(b.sample_id)) {
      pairs.push_back({b.sample_id, code, hs, {b.per_response[0].at(code).score, b.per_response[1].at(code).score}});
      for (int r = 0; r < 2; ++r) {
        const double hv = hs[static_cast<std::size_t>(r)];
        const double mv = b.per_response[static_cast<std::size_t>(r)].at(code).score;
        h.push_back(hv);
        m.push_back(mv);
        auto& [ah, am] = by_aspect[spec.parent_of(code)->code];
        ah.push_back(hv);
        am.push_back(mv);
      }
    }
  CHECK(report.at("pairs") == 300);
  CHECK(report.at("pairwise_accuracy") == pairwise_accuracy(pairs, spec).to_json());
  CHECK(close(report.at("correlation").at("overall").at("pearson"), pearson(h, m)));
  RaterMatrix all{{}, {}};
  for (std::size_t i = 0; i < h.size(); ++i) all.rows.push_back({h[i], m[i]});
  CHECK(close(report.at("correlation").at("overall").at("icc"), icc(all)));
  for (const auto& [aspect, hm] : by_aspect) {
    CHECK(close(report.at("correlation").at("aspect").at(aspect).at("pearson"), pearson(hm.first, hm.second)));
    CHECK(report.at("correlation").at("aspect").at(aspect).at("n") == hm.first.size());
  }
  CHECK(report.at("reference_match") == reference_match_aggregate(matches, spec).to_json());
  for (const auto& [scen, r] : win_tie_lose(bundles, other, spec)) {
    CHECK(close(report.at("win_tie_lose").at(scen).at("win"), r.win));
    CHECK(close(report.at("win_tie_lose").at(scen).at("lose"), r.lose));
    CHECK(report.at("win_tie_lose").at(scen).at("samples") == r.samples);
  }
}

TEST_CASE("bias runner") {
  rjtest::TempDir dir("bias");
  const auto s = pl::run_bias({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                               {"out", (dir / "bias.json").string()},
                               {"labels", rjtest::fixture("labels_10.jsonl").string()},
                               {"backend", {{"kind", "mock"}, {"position_bias_rate", 1.0}}}});
  CHECK(s.at("exit_code") == 0);
  const auto report = jsonl::read_json_file(dir / "bias.json");
  for (const auto& [sub, g] : report.at("position").at("sub_aspect").items()) CHECK(g.at("rate") == 1.0);
  CHECK(report.at("verbosity").at("aspect") == "REL");
  CHECK(report.at("config").at("probe") == "both");

  CHECK(code_of([&] {
          (void)pl::run_bias({{"samples", rjtest::fixture("samples_10.jsonl").string()},
                              {"out", (dir / "v.json").string()},
                              {"probe", "verbosity"}});
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("gradcheck runner") {
  const auto ok = pl::run_gradcheck(json::object());
  CHECK(ok.at("exit_code") == 0);
  CHECK(ok.at("pass") == true);
  CHECK(ok.at("gating") == true);
  CHECK(ok.at("max_relative_error").get<double>() <= pl::kGradTolerance);

  const auto broken = pl::run_gradcheck({{"break_gradient", true}});
  CHECK(broken.at("exit_code") == 1);
  CHECK(broken.at("pass") == false);

  const auto coarse = pl::run_gradcheck({{"eps", 1e-3}});
  CHECK(coarse.at("gating") == false);
  CHECK(coarse.at("exit_code") == 0);
  CHECK(coarse.at("max_relative_error").get<double>() > ok.at("max_relative_error").get<double>());
}
