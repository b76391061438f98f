// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <random>

#include "rubricjudge/error.hpp"
#include "rubricjudge/preference.hpp"
#include "support/helpers.hpp"

using namespace rubricjudge;

namespace {

PositiveEvaluation one_sub(int s1, int s2, std::string p1 = "a", std::string p2 = "b") {
  PositiveEvaluation pos;
  pos.aspect = "REL";
  pos.sample = rjtest::two_response_sample("p");
  pos.responses[0] = {{"CONT", s1, std::move(p1)}};
  pos.responses[1] = {{"CONT", s2, std::move(p2)}};
  return pos;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Data;
}

// 100 bundles with varied scores; some sub-aspects tie, some sit at the
// bounds, some rationales repeat, every fourth sample has reference info.
std::vector<EvaluationBundle> schedule_bundles(int n) {
  const Taxonomy spec = default_taxonomy();
  std::mt19937_64 rng(1234);
  std::vector<EvaluationBundle> out;
  for (int i = 0; i < n; ++i) {
    std::vector<int> a, b;
    for (int k = 0; k < 10; ++k) {
      a.push_back(static_cast<int>(rng() % 6));
      b.push_back(rng() % 3 == 0 ? a.back() : static_cast<int>(rng() % 6));
    }
    auto bundle = rjtest::make_bundle("b" + std::to_string(i), a, b);
    if (i % 4 == 0) bundle.sample.reference_info = "ref " + std::to_string(i);
    if (i % 5 == 0)
      for (auto& [code, e] : bundle.per_response[1]) e.rationale = bundle.per_response[0].at(code).rationale;
    out.push_back(std::move(bundle));
  }
  return out;
}

}  // namespace

TEST_CASE("swap_scores") {
  const auto neg = swap_scores(one_sub(4, 2));
  CHECK(neg.responses[0][0].score == 2);
  CHECK(neg.responses[1][0].score == 4);
  CHECK(neg.responses[0][0].rationale == "a");
  CHECK(code_of([] { (void)swap_scores(one_sub(3, 3)); }) == ErrorCode::NonInformative);
  const auto pos = one_sub(5, 0);
  CHECK(swap_scores(swap_scores(pos)) == pos);
}

TEST_CASE("shift_scores") {
  const Taxonomy spec = default_taxonomy();
  auto s = shift_scores(one_sub(3, 4), 1, spec);
  CHECK(s.responses[0][0].score == 4);
  CHECK(s.responses[1][0].score == 3);
  s = shift_scores(one_sub(2, 3), 2, spec);
  CHECK(s.responses[0][0].score == 4);
  CHECK(s.responses[1][0].score == 1);
  CHECK(code_of([&] { (void)shift_scores(one_sub(5, 1), 1, spec); }) == ErrorCode::OutOfRange);
  s = shift_scores(one_sub(5, 1), 1, spec, ShiftDirection::Mirrored);
  CHECK(s.responses[0][0].score == 4);
  CHECK(s.responses[1][0].score == 2);
  CHECK(code_of([&] { (void)shift_scores(one_sub(3, 3), 0, spec); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("swap_rationales") {
  const auto neg = swap_rationales(one_sub(4, 2, "a", "b"));
  CHECK(neg.responses[0][0].rationale == "b");
  CHECK(neg.responses[1][0].rationale == "a");
  CHECK(neg.responses[0][0].score == 4);
  CHECK(code_of([] { (void)swap_rationales(one_sub(4, 2, "same", "same")); }) == ErrorCode::NonInformative);
  const auto pos = one_sub(1, 2, "x", "y");
  CHECK(swap_rationales(swap_rationales(pos)) == pos);
}

TEST_CASE("drop_reference removes only the reference block") {
  const Taxonomy spec = default_taxonomy();
  const auto samples = rjtest::synthetic_samples(30, 4);
  int checked = 0;
  for (const auto& s : samples) {
    if (!s.reference_info) {
      PositiveEvaluation pos = one_sub(3, 2);
      pos.sample = s;
      CHECK(code_of([&] { (void)drop_reference(pos); }) == ErrorCode::NonApplicable);
      continue;
    }
    PositiveEvaluation pos = one_sub(3, 2);
    pos.sample = s;
    const auto neg = drop_reference(pos);
    CHECK_FALSE(neg.reference_info_present());
    CHECK(pos.reference_info_present());
    const std::string x = serialize_input(pos, spec);
    const std::string xr = serialize_input(neg, spec);
    const std::string block = "### Reference:\n" + *s.reference_info + "\n";
    const auto at = x.find(block);
    REQUIRE(at != std::string::npos);
    CHECK(x.substr(0, at) + x.substr(at + block.size()) == xr);
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("serialized evaluations follow the judge surface form") {
  const Taxonomy spec = default_taxonomy();
  const auto bundle = rjtest::make_bundle("s1", {4}, {2});
  const auto pos = positive_from_bundle(bundle, spec, "REL");
  const std::string y = serialize_evaluation(pos, spec);
  CHECK(y.find("Evaluation of Response 1:") < y.find("Evaluation of Response 2:"));
  CHECK(y.find("Context Awareness (CONT):") != std::string::npos);
  CHECK(y.find("Score: 4") != std::string::npos);
  CHECK(pos.responses[0].size() == 3);
  CHECK_THROWS_AS(positive_from_bundle(bundle, spec, "XYZ"), Error);
}

TEST_CASE("one bundle gives three triplets per aspect plus drop_reference") {
  const Taxonomy spec = default_taxonomy();
  auto bundle = rjtest::make_bundle("s1", {4, 3}, {2, 1});
  PreferenceConfig cfg;
  cfg.seed = 9;
  PreferenceStats stats;
  auto triplets = build_preference_dataset({bundle}, spec, cfg, &stats);
  CHECK(triplets.size() == 9);
  CHECK(stats.non_applicable == 3);

  bundle.sample.reference_info = "Guideline text.";
  triplets = build_preference_dataset({bundle}, spec, cfg, &stats);
  CHECK(triplets.size() == 12);
  for (const auto& t : triplets) {
    CHECK(t.y_w != t.y_l);
    CHECK(t.sample_ref == "s1");
    CHECK(t.x_rejected.has_value() == (t.transform == Transform::DropReference));
    CHECK(t.delta.has_value() == (t.transform == Transform::ShiftScores));
    CHECK(triplet_from_json(triplet_to_json(t)) == t);
  }

  CHECK(build_preference_dataset({}, spec, cfg).empty());
  CHECK(build_preference_dataset({bundle}, spec, cfg) == build_preference_dataset({bundle}, spec, cfg));
}

TEST_CASE("unusable bundles are skipped") {
  const Taxonomy spec = default_taxonomy();
  auto single = rjtest::make_bundle("s1", {4}, {2});
  single.mode = Mode::Single;
  auto incomplete = rjtest::make_bundle("s2", {4}, {2});
  incomplete.per_response[0].erase("ACC");
  PreferenceStats stats;
  CHECK(build_preference_dataset({single, incomplete}, spec, PreferenceConfig{}, &stats).empty());
  CHECK(stats.skipped_bundles == 2);
}

TEST_CASE("per-transform counts match an independent replay of the schedule") {
  const Taxonomy spec = default_taxonomy();
  const auto bundles = schedule_bundles(100);
  PreferenceConfig cfg;
  cfg.seed = 42;
  cfg.mix = {0.5, 0.5, 0.5, 0.5};

  // Replay: same stream, same consumption order, applicability decided from
  // the raw scores and rationales.
  std::map<std::string, std::size_t> expected = {
      {"swap_scores", 0}, {"shift_scores", 0}, {"swap_rationales", 0}, {"drop_reference", 0}};
  std::mt19937_64 rng(42);
  const int domain[] = {1, 2};
  for (const auto& b : bundles) {
    for (const auto& aspect : spec.aspects) {
      std::vector<std::pair<int, int>> scores;
      bool rationales_differ = false;
      for (const auto& sub : aspect.sub_aspects) {
        const auto& e1 = b.per_response[0].at(sub.code);
        const auto& e2 = b.per_response[1].at(sub.code);
        scores.emplace_back(e1.score, e2.score);
        rationales_differ |= e1.rationale != e2.rationale;
      }
      for (const char* name : {"swap_scores", "shift_scores", "swap_rationales", "drop_reference"}) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (!(u < 0.5)) continue;
        const std::string t = name;
        if (t == "swap_scores") {
          bool differ = false;
          for (auto [a, c] : scores) differ |= a != c;
          if (differ) ++expected[t];
        } else if (t == "swap_rationales") {
          if (rationales_differ) ++expected[t];
        } else if (t == "drop_reference") {
          if (b.sample.reference_info) ++expected[t];
        } else {
          for (int attempt = 0; attempt <= 3; ++attempt) {
            const int d = domain[rng() % 2];
            bool ok = true;
            for (auto [a, c] : scores) ok &= a + d <= 5 && c - d >= 0;
            if (ok) {
              ++expected[t];
              break;
            }
          }
        }
      }
    }
  }

  PreferenceStats stats;
  const auto triplets = build_preference_dataset(bundles, spec, cfg, &stats);
  CHECK(stats.emitted == expected);
  std::size_t total = 0;
  for (const auto& [name, n] : expected) total += n;
  CHECK(triplets.size() == total);
  CHECK(expected.at("shift_scores") > 0);
  CHECK(stats.out_of_range > 0);
}

TEST_CASE("mirrored shift emits both directions") {
  const Taxonomy spec = default_taxonomy();
  const auto bundle = rjtest::make_bundle("s1", {3}, {2});
  PreferenceConfig cfg;
  cfg.mix = {0.0, 1.0, 0.0, 0.0};
  cfg.mirrored = true;
  cfg.delta_domain = {1};
  const auto triplets = build_preference_dataset({bundle}, spec, cfg);
  REQUIRE(triplets.size() == 6);
  CHECK(*triplets[0].delta == 1);
  CHECK(*triplets[1].delta == -1);
}

TEST_CASE("config validation") {
  const Taxonomy spec = default_taxonomy();
  PreferenceConfig cfg;
  cfg.delta_domain = {};
  CHECK_THROWS_AS(build_preference_dataset({}, spec, cfg), Error);
  cfg.delta_domain = {0};
  CHECK_THROWS_AS(build_preference_dataset({}, spec, cfg), Error);
  cfg.delta_domain = {1};
  cfg.mix.swap_scores = 1.5;
  CHECK_THROWS_AS(build_preference_dataset({}, spec, cfg), Error);
}
