// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/preference.hpp"

#include <random>

namespace rubricjudge {

using nlohmann::json;

std::string_view to_string(Transform t) noexcept {
  switch (t) {
    case Transform::SwapScores: return "swap_scores";
    case Transform::ShiftScores: return "shift_scores";
    case Transform::SwapRationales: return "swap_rationales";
    case Transform::DropReference: return "drop_reference";
  }
  return "unknown";
}

Transform transform_from_string(std::string_view text) {
  for (Transform t : kAllTransforms)
    if (to_string(t) == text) return t;
  throw Error(ErrorCode::InvalidArgument, "unknown transform '" + std::string(text) + "'");
}

double TransformMix::weight(Transform t) const {
  switch (t) {
    case Transform::SwapScores: return swap_scores;
    case Transform::ShiftScores: return shift_scores;
    case Transform::SwapRationales: return swap_rationales;
    case Transform::DropReference: return drop_reference;
  }
  return 0.0;
}

PositiveEvaluation positive_from_bundle(const EvaluationBundle& bundle, const Taxonomy& spec,
                                        const std::string& aspect) {
  const Aspect* a = spec.find_aspect(aspect);
  if (!a) throw Error(ErrorCode::InvalidArgument, "unknown aspect " + aspect);
  if (bundle.mode != Mode::Pairwise || bundle.per_response.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "bundle " + bundle.sample_id + " is not pairwise");
  PositiveEvaluation pos;
  pos.aspect = aspect;
  pos.sample = bundle.sample;
  for (std::size_t r = 0; r < 2; ++r) {
    for (const auto& s : a->sub_aspects) {
      auto it = bundle.per_response[r].find(s.code);
      if (it == bundle.per_response[r].end())
        throw Error(ErrorCode::InvalidArgument, "bundle " + bundle.sample_id + " lacks " + s.code);
      if (validate_evaluation(it->second, spec) != EvaluationCheck::Ok)
        throw Error(ErrorCode::InvalidArgument, "bundle " + bundle.sample_id + ": invalid " + s.code);
      pos.responses[r].push_back(it->second);
    }
  }
  return pos;
}

PositiveEvaluation swap_scores(const PositiveEvaluation& pos) {
  PositiveEvaluation out = pos;
  bool differs = false;
  for (std::size_t k = 0; k < out.responses[0].size(); ++k) {
    auto& a = out.responses[0][k].score;
    auto& b = out.responses[1][k].score;
    differs = differs || a != b;
    std::swap(a, b);
  }
  if (!differs) throw Error(ErrorCode::NonInformative, "swap_scores: both responses have equal scores");
  return out;
}

PositiveEvaluation shift_scores(const PositiveEvaluation& pos, int delta, const Taxonomy& spec,
                                ShiftDirection direction) {
  if (delta <= 0) throw Error(ErrorCode::InvalidArgument, "shift_scores: delta must be positive");
  const int signed_delta = direction == ShiftDirection::Literal ? delta : -delta;
  PositiveEvaluation out = pos;
  for (std::size_t k = 0; k < out.responses[0].size(); ++k) {
    auto& a = out.responses[0][k].score;
    auto& b = out.responses[1][k].score;
    a += signed_delta;
    b -= signed_delta;
    if (!spec.score_in_range(a) || !spec.score_in_range(b))
      throw Error(ErrorCode::OutOfRange, "shift_scores: delta " + std::to_string(signed_delta) + " leaves the range on " +
                                             out.responses[0][k].sub_aspect);
  }
  return out;
}

PositiveEvaluation swap_rationales(const PositiveEvaluation& pos) {
  PositiveEvaluation out = pos;
  bool differs = false;
  for (std::size_t k = 0; k < out.responses[0].size(); ++k) {
    auto& a = out.responses[0][k].rationale;
    auto& b = out.responses[1][k].rationale;
    differs = differs || a != b;
    std::swap(a, b);
  }
  if (!differs) throw Error(ErrorCode::NonInformative, "swap_rationales: rationales are identical");
  return out;
}

PositiveEvaluation drop_reference(const PositiveEvaluation& pos) {
  if (!pos.reference_info_present()) throw Error(ErrorCode::NonApplicable, "drop_reference: no reference information");
  PositiveEvaluation out = pos;
  out.sample.reference_info.reset();
  return out;
}

std::string serialize_input(const PositiveEvaluation& pos, const Taxonomy& spec) {
  const Aspect* a = spec.find_aspect(pos.aspect);
  std::string x = "### Instruction:\n" + (a ? a->instruction : pos.aspect) + "\n";
  x += "### Question:\n" + pos.sample.question + "\n";
  for (std::size_t r = 0; r < pos.sample.responses.size(); ++r)
    x += "### Response " + std::to_string(r + 1) + ":\n" + pos.sample.responses[r] + "\n";
  if (pos.sample.reference_info) x += "### Reference:\n" + *pos.sample.reference_info + "\n";
  return x;
}

std::string serialize_evaluation(const PositiveEvaluation& pos, const Taxonomy& spec, bool cite_reference) {
  std::string y;
  if (cite_reference && pos.sample.reference_info) y += "Reference: " + *pos.sample.reference_info + "\n";
  for (std::size_t r = 0; r < 2; ++r) {
    y += "Evaluation of Response " + std::to_string(r + 1) + ":\n";
    for (const auto& e : pos.responses[r]) {
      const SubAspect* s = spec.find_sub_aspect(e.sub_aspect);
      y += (s ? s->name : e.sub_aspect) + " (" + e.sub_aspect + "):\n";
      y += "Analysis: " + e.rationale + "\n";
      y += "Score: " + std::to_string(e.score) + "\n";
    }
  }
  return y;
}

json triplet_to_json(const PreferenceTriplet& t) {
  json j = {{"x", t.x},
            {"y_w", t.y_w},
            {"y_l", t.y_l},
            {"aspect", t.aspect},
            {"transform", to_string(t.transform)},
            {"delta", t.delta ? json(*t.delta) : json(nullptr)},
            {"sample_ref", t.sample_ref}};
  if (t.x_rejected) j["x_rejected"] = *t.x_rejected;
  return j;
}

PreferenceTriplet triplet_from_json(const json& j) {
  PreferenceTriplet t;
  try {
    t.x = j.at("x").get<std::string>();
    t.y_w = j.at("y_w").get<std::string>();
    t.y_l = j.at("y_l").get<std::string>();
    t.aspect = j.at("aspect").get<std::string>();
    t.transform = transform_from_string(j.at("transform").get<std::string>());
    if (j.contains("delta") && !j.at("delta").is_null()) t.delta = j.at("delta").get<int>();
    if (j.contains("x_rejected") && !j.at("x_rejected").is_null()) t.x_rejected = j.at("x_rejected").get<std::string>();
    t.sample_ref = j.value("sample_ref", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("triplet: ") + e.what());
  }
  if (t.y_w == t.y_l) throw Error(ErrorCode::InvalidArgument, "triplet " + t.sample_ref + ": y_w equals y_l");
  if (t.delta.has_value() != (t.transform == Transform::ShiftScores))
    throw Error(ErrorCode::InvalidArgument, "triplet " + t.sample_ref + ": delta must accompany shift_scores only");
  return t;
}

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

PreferenceTriplet make_triplet(const PositiveEvaluation& pos, const PositiveEvaluation& neg, Transform t,
                               std::optional<int> delta, const Taxonomy& spec) {
  PreferenceTriplet out;
  out.aspect = pos.aspect;
  out.transform = t;
  out.delta = delta;
  out.sample_ref = pos.sample.id;
  out.x = serialize_input(pos, spec);
  if (t == Transform::DropReference) {
    out.x_rejected = serialize_input(neg, spec);
    out.y_w = serialize_evaluation(pos, spec, true);
    out.y_l = serialize_evaluation(neg, spec, true);
  } else {
    out.y_w = serialize_evaluation(pos, spec);
    out.y_l = serialize_evaluation(neg, spec);
  }
  if (out.y_w == out.y_l) throw Error(ErrorCode::NonInformative, "corruption left the evaluation unchanged");
  return out;
}

}  // namespace

std::vector<PreferenceTriplet> build_preference_dataset(const std::vector<EvaluationBundle>& bundles,
                                                        const Taxonomy& spec, const PreferenceConfig& config,
                                                        PreferenceStats* stats_out) {
  if (config.delta_domain.empty()) throw Error(ErrorCode::InvalidArgument, "preference: empty delta domain");
  for (int d : config.delta_domain)
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "preference: delta domain must be positive");
  for (Transform t : kAllTransforms) {
    const double w = config.mix.weight(t);
    if (w < 0.0 || w > 1.0) throw Error(ErrorCode::InvalidArgument, "preference: mix weights must lie in [0, 1]");
  }

  PreferenceStats stats;
  for (Transform t : kAllTransforms) stats.emitted[std::string(to_string(t))] = 0;
  std::vector<PreferenceTriplet> out;
  std::mt19937_64 rng(config.seed);

  for (const auto& bundle : bundles) {
    if (bundle.mode != Mode::Pairwise || !completeness_problems(bundle, spec).empty()) {
      ++stats.skipped_bundles;
      continue;
    }
    for (const auto& aspect : spec.aspects) {
      const PositiveEvaluation pos = positive_from_bundle(bundle, spec, aspect.code);
      for (Transform t : kAllTransforms) {
        if (!(unit(rng) < config.mix.weight(t))) continue;
        auto emit = [&](const PositiveEvaluation& neg, std::optional<int> delta) {
          out.push_back(make_triplet(pos, neg, t, delta, spec));
          ++stats.emitted[std::string(to_string(t))];
        };
        try {
          switch (t) {
            case Transform::SwapScores: emit(swap_scores(pos), std::nullopt); break;
            case Transform::SwapRationales: emit(swap_rationales(pos), std::nullopt); break;
            case Transform::DropReference: emit(drop_reference(pos), std::nullopt); break;
            case Transform::ShiftScores: {
              std::vector<ShiftDirection> directions = {ShiftDirection::Literal};
              if (config.mirrored) directions.push_back(ShiftDirection::Mirrored);
              for (ShiftDirection dir : directions) {
                bool done = false;
                for (int attempt = 0; attempt <= config.max_resamples && !done; ++attempt) {
                  const int delta = config.delta_domain[rng() % config.delta_domain.size()];
                  try {
                    emit(shift_scores(pos, delta, spec, dir), dir == ShiftDirection::Literal ? delta : -delta);
                    done = true;
                  } catch (const Error& e) {
                    if (e.code() != ErrorCode::OutOfRange) throw;
                  }
                }
                if (!done) ++stats.out_of_range;
              }
              break;
            }
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::NonInformative)
            ++stats.non_informative;
          else if (e.code() == ErrorCode::NonApplicable)
            ++stats.non_applicable;
          else
            throw;
        }
      }
    }
  }
  if (stats_out) *stats_out = stats;
  return out;
}

}  // namespace rubricjudge
