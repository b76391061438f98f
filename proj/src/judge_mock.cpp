// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "internal/hash.hpp"
#include "rubricjudge/judge.hpp"

namespace rubricjudge {

std::string JudgeRequest::subtask_id() const {
  std::string id = sample_id + "/" + sub_aspect + "/" + std::string(to_string(mode));
  if (response_index > 0) id += "/" + std::to_string(response_index);
  return id;
}

namespace {

// Splits a prompt on "### <Heading>:" lines. Section bodies keep their
// internal newlines but lose surrounding blank lines.
std::map<std::string, std::string> split_sections(const std::string& prompt) {
  std::map<std::string, std::string> sections;
  std::istringstream in(prompt);
  std::string line;
  std::string current;
  std::string body;
  auto flush = [&] {
    if (current.empty()) return;
    auto first = body.find_first_not_of("\n");
    auto last = body.find_last_not_of("\n");
    sections[current] = first == std::string::npos ? "" : body.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    if (line.rfind("### ", 0) == 0 && !line.empty() && line.back() == ':') {
      flush();
      current = line.substr(4, line.size() - 5);
      body.clear();
    } else if (!current.empty()) {
      body += line;
      body += '\n';
    }
  }
  flush();
  return sections;
}

std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

struct Scored {
  int score;
  std::string rationale;
};

Scored score_response(const MockOptions& o, const std::string& sub, const std::string& question,
                      const std::string& response) {
  const auto h = detail::Hasher(o.seed).add("score").add(sub).add(question).add(response).value();
  const int span = o.score_max - o.score_min + 1;
  const int score = o.score_min + static_cast<int>(h % static_cast<std::uint64_t>(span));
  std::string rationale = fmt::format("Mock assessment of {} for a {}-word response (digest {:08x}).",
                                      sub, word_count(response), static_cast<std::uint32_t>(h >> 32));
  return {score, std::move(rationale)};
}

// Forces a strict preference for the response at index `winner`.
void force_preference(int& a, int& b, bool first_wins, const MockOptions& o) {
  int& w = first_wins ? a : b;
  int& l = first_wins ? b : a;
  if (w < l) std::swap(w, l);
  if (w == l) {
    if (w < o.score_max)
      ++w;
    else
      --l;
  }
}

std::string block(const Scored& s) {
  return fmt::format("Analysis: {}\nScore: {}\n", s.rationale, s.score);
}

}  // namespace

std::string mock_judge(const JudgeRequest& request, const MockOptions& o) {
  const auto sections = split_sections(request.prompt);
  const auto get = [&](const char* key) -> const std::string* {
    auto it = sections.find(key);
    return it == sections.end() ? nullptr : &it->second;
  };
  const std::string* question = get("Question");
  const std::string empty;
  const std::string& q = question ? *question : empty;

  const std::string* r1 = get("Response 1");
  const std::string* r2 = get("Response 2");
  if (request.mode == Mode::Pairwise && r1 && r2) {
    Scored a = score_response(o, request.sub_aspect, q, *r1);
    Scored b = score_response(o, request.sub_aspect, q, *r2);
    const std::string& lo = std::min(*r1, *r2);
    const std::string& hi = std::max(*r1, *r2);
    const double u_pos =
        detail::Hasher(o.seed).add("position").add(request.sub_aspect).add(q).add(lo).add(hi).unit();
    const double u_verb =
        detail::Hasher(o.seed).add("verbosity").add(request.sub_aspect).add(q).add(lo).add(hi).unit();
    if (u_pos < o.position_bias_rate) {
      force_preference(a.score, b.score, true, o);
    } else if (u_verb < o.verbosity_bias_rate && r1->size() != r2->size()) {
      force_preference(a.score, b.score, r1->size() > r2->size(), o);
    }
    return "Evaluation of Response 1:\n" + block(a) + "Evaluation of Response 2:\n" + block(b);
  }

  const std::string* single = get("Response");
  if (!single) single = r1;
  if (single) return block(score_response(o, request.sub_aspect, q, *single));
  return block(score_response(o, request.sub_aspect, "", request.prompt));
}

std::string MockJudge::id() const {
  std::string id = "mock:" + std::to_string(options_.seed);
  if (options_.position_bias_rate > 0) id += fmt::format(":pos={}", options_.position_bias_rate);
  if (options_.verbosity_bias_rate > 0) id += fmt::format(":verb={}", options_.verbosity_bias_rate);
  return id;
}

}  // namespace rubricjudge
