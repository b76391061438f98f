// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "rubricjudge/error.hpp"

namespace rubricjudge {

using nlohmann::json;

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::R1Better: return "R1_better";
    case Verdict::R2Better: return "R2_better";
    case Verdict::Tie: return "tie";
  }
  return "unknown";
}

Verdict verdict_from_scores(int first, int second) noexcept {
  if (first > second) return Verdict::R1Better;
  if (first < second) return Verdict::R2Better;
  return Verdict::Tie;
}

json GroupedPercent::to_json() const {
  return {{"sub_aspect", sub_aspect}, {"counts", counts}, {"aspect", aspect}};
}

namespace {

void fill_aspect_means(GroupedPercent& g, const Taxonomy& spec) {
  for (const auto& a : spec.aspects) {
    double sum = 0.0;
    int present = 0;
    for (const auto& s : a.sub_aspects) {
      auto it = g.sub_aspect.find(s.code);
      if (it == g.sub_aspect.end()) continue;
      sum += it->second;
      ++present;
    }
    if (present > 0) g.aspect[a.code] = sum / present;
  }
}

void require_sub_aspect(const Taxonomy& spec, const std::string& code, const std::string& where) {
  if (!spec.find_sub_aspect(code))
    throw Error(ErrorCode::InvalidArgument, where + ": unknown sub-aspect '" + code + "'");
}

}  // namespace

GroupedPercent pairwise_accuracy(std::span<const LabeledPair> pairs, const Taxonomy& spec) {
  if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "pairwise accuracy: no pairs");
  std::map<std::string, std::size_t> hits;
  GroupedPercent g;
  for (const auto& p : pairs) {
    require_sub_aspect(spec, p.sub_aspect, "pairwise accuracy");
    ++g.counts[p.sub_aspect];
    if (p.human_verdict() == p.model_verdict()) ++hits[p.sub_aspect];
  }
  for (const auto& [sub, n] : g.counts) g.sub_aspect[sub] = 100.0 * static_cast<double>(hits[sub]) / static_cast<double>(n);
  fill_aspect_means(g, spec);
  return g;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::InvalidArgument, "pearson: length mismatch");
  if (xs.size() < 2) throw Error(ErrorCode::InvalidArgument, "pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::Undefined, "pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double icc(const RaterMatrix& m) {
  const std::size_t n = m.rows.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "icc: need at least two subjects");
  const std::size_t k = m.rows.front().size();
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "icc: need at least two raters");
  for (const auto& r : m.rows)
    if (r.size() != k) throw Error(ErrorCode::InvalidArgument, "icc: ragged rater matrix");

  double grand = 0.0;
  std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      row_mean[i] += m.rows[i][j];
      col_mean[j] += m.rows[i][j];
      grand += m.rows[i][j];
    }
  const double nk = static_cast<double>(n * k);
  grand /= nk;
  for (double& r : row_mean) r /= static_cast<double>(k);
  for (double& c : col_mean) c /= static_cast<double>(n);

  double ss_total = 0.0, ss_rows = 0.0, ss_cols = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) ss_total += (m.rows[i][j] - grand) * (m.rows[i][j] - grand);
  for (double r : row_mean) ss_rows += static_cast<double>(k) * (r - grand) * (r - grand);
  for (double c : col_mean) ss_cols += static_cast<double>(n) * (c - grand) * (c - grand);
  if (ss_total == 0.0) throw Error(ErrorCode::Undefined, "icc: all cells are equal");
  const double ss_error = std::max(ss_total - ss_rows - ss_cols, 0.0);

  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  const double msr = ss_rows / (dn - 1.0);
  const double msc = ss_cols / (dk - 1.0);
  const double mse = ss_error / ((dn - 1.0) * (dk - 1.0));
  const double denom = msr + (dk - 1.0) * mse + (dk / dn) * (msc - mse);
  if (denom == 0.0) throw Error(ErrorCode::Undefined, "icc: zero denominator");
  return (msr - mse) / denom;
}

GroupedPercent reference_match_aggregate(std::span<const MatchJudgment> judgments, const Taxonomy& spec) {
  if (judgments.empty()) throw Error(ErrorCode::InvalidArgument, "reference match: no judgments");
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  // (sample, sub) -> (matched, judges)
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> items;
  for (const auto& j : judgments) {
    require_sub_aspect(spec, j.sub_aspect, "reference match");
    if (!seen.emplace(j.sample_ref, j.sub_aspect, j.judge).second)
      throw Error(ErrorCode::InvalidArgument, "reference match: repeated judgment for " + j.sample_ref + "/" +
                                                  j.sub_aspect + " by " + j.judge);
    auto& [matched, judges] = items[{j.sample_ref, j.sub_aspect}];
    matched += j.matched ? 1 : 0;
    ++judges;
  }
  std::map<std::string, double> sums;
  GroupedPercent g;
  for (const auto& [key, v] : items) {
    sums[key.second] += static_cast<double>(v.first) / static_cast<double>(v.second);
    ++g.counts[key.second];
  }
  for (const auto& [sub, n] : g.counts) g.sub_aspect[sub] = 100.0 * sums[sub] / static_cast<double>(n);
  fill_aspect_means(g, spec);
  return g;
}

std::map<std::string, WinTieLose> win_tie_lose(std::span<const EvaluationBundle> a, std::span<const EvaluationBundle> b,
                                               const Taxonomy& spec) {
  auto index = [&](std::span<const EvaluationBundle> side, const char* name) {
    std::map<std::string, const EvaluationBundle*> out;
    for (const auto& bundle : side) {
      if (!out.emplace(bundle.sample_id, &bundle).second)
        throw Error(ErrorCode::InvalidArgument, std::string("win/tie/lose: duplicate sample ") + bundle.sample_id +
                                                    " in " + name);
      const auto problems = completeness_problems(bundle, spec);
      if (!problems.empty())
        throw Error(ErrorCode::InvalidArgument, "win/tie/lose: bundle " + bundle.sample_id + " is incomplete (" +
                                                    problems.front() + ")");
    }
    return out;
  };
  const auto ia = index(a, "A");
  const auto ib = index(b, "B");
  std::vector<std::string> unpaired;
  for (const auto& [id, _] : ia)
    if (!ib.count(id)) unpaired.push_back(id);
  for (const auto& [id, _] : ib)
    if (!ia.count(id)) unpaired.push_back(id);
  if (!unpaired.empty()) {
    std::string list;
    for (const auto& id : unpaired) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::InvalidArgument, "win/tie/lose: unpaired samples: " + list);
  }

  struct Tally {
    std::size_t win = 0, tie = 0, lose = 0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& [id, ba] : ia) {
    const EvaluationBundle* bb = ib.at(id);
    const int sa = ba->total_score(0);
    const int sb = bb->total_score(0);
    auto& t = tallies[ba->sample.scenario.value_or("unspecified")];
    if (sa > sb)
      ++t.win;
    else if (sa == sb)
      ++t.tie;
    else
      ++t.lose;
  }
  std::map<std::string, WinTieLose> out;
  for (const auto& [scenario, t] : tallies) {
    const double n = static_cast<double>(t.win + t.tie + t.lose);
    out[scenario] = {100.0 * static_cast<double>(t.win) / n, 100.0 * static_cast<double>(t.tie) / n,
                     100.0 * static_cast<double>(t.lose) / n, t.win + t.tie + t.lose};
  }
  return out;
}

json BiasReport::to_json() const {
  json groups = json::object();
  for (const auto& [sub, g] : sub_aspect) {
    const auto r = g.rate();
    groups[sub] = {{"hits", g.hits}, {"count", g.count}, {"rate", r ? json(*r) : json(nullptr)}};
  }
  return {{"probe", probe}, {"aspect", aspect}, {"sub_aspect", std::move(groups)}};
}

namespace {

const Aspect& probe_aspect(const Taxonomy& spec, const std::string& aspect) {
  const Aspect* a = spec.find_aspect(aspect);
  if (!a) throw Error(ErrorCode::InvalidArgument, "bias probe: unknown aspect " + aspect);
  return *a;
}

void require_pair(const Sample& s) {
  if (s.responses.size() != 2)
    throw Error(ErrorCode::InvalidArgument, "bias probe: sample " + s.id + " does not have two responses");
}

}  // namespace

BiasReport position_bias_probe(std::span<const Sample> samples, const Taxonomy& spec, const ExpertRegistry& registry,
                               const std::string& aspect, const RunOptions& options) {
  const Aspect& a = probe_aspect(spec, aspect);
  RunOptions opts = options;
  opts.only_aspect = aspect;
  BiasReport report{"position", aspect, {}};
  for (const auto& s : a.sub_aspects) report.sub_aspect[s.code];

  for (const auto& sample : samples) {
    require_pair(sample);
    Sample swapped = sample;
    std::swap(swapped.responses[0], swapped.responses[1]);
    const EvaluationBundle original = run_evaluation(sample, spec, registry, Mode::Pairwise, opts);
    const EvaluationBundle reversed = run_evaluation(swapped, spec, registry, Mode::Pairwise, opts);
    for (const auto& s : a.sub_aspects) {
      const Verdict before =
          verdict_from_scores(original.per_response[0].at(s.code).score, original.per_response[1].at(s.code).score);
      // reversed.per_response[1] judged the original first response
      const Verdict after =
          verdict_from_scores(reversed.per_response[1].at(s.code).score, reversed.per_response[0].at(s.code).score);
      auto& g = report.sub_aspect[s.code];
      ++g.count;
      if (before != after) ++g.hits;
    }
  }
  return report;
}

BiasReport verbosity_bias_probe(std::span<const HumanLabeledSample> samples, const Taxonomy& spec,
                                const ExpertRegistry& registry, const std::string& aspect,
                                const RunOptions& options) {
  const Aspect& a = probe_aspect(spec, aspect);
  RunOptions opts = options;
  opts.only_aspect = aspect;
  BiasReport report{"verbosity", aspect, {}};
  for (const auto& s : a.sub_aspects) report.sub_aspect[s.code];

  for (const auto& item : samples) {
    require_pair(item.sample);
    const std::size_t len0 = item.sample.responses[0].size();
    const std::size_t len1 = item.sample.responses[1].size();
    if (len0 == len1) continue;
    const int longer = len0 > len1 ? 0 : 1;

    std::vector<const SubAspect*> qualifying;
    for (const auto& s : a.sub_aspects) {
      auto it = item.human_scores.find(s.code);
      if (it == item.human_scores.end()) continue;
      const auto [h0, h1] = it->second;
      const bool prefers_shorter = longer == 0 ? h1 > h0 : h0 > h1;
      if (prefers_shorter) qualifying.push_back(&s);
    }
    if (qualifying.empty()) continue;  // no backend calls for samples that cannot count

    const EvaluationBundle bundle = run_evaluation(item.sample, spec, registry, Mode::Pairwise, opts);
    for (const SubAspect* s : qualifying) {
      const int m_long = bundle.per_response[static_cast<std::size_t>(longer)].at(s->code).score;
      const int m_short = bundle.per_response[static_cast<std::size_t>(1 - longer)].at(s->code).score;
      auto& g = report.sub_aspect[s->code];
      ++g.count;
      if (m_long > m_short) ++g.hits;
    }
  }
  return report;
}

}  // namespace rubricjudge
