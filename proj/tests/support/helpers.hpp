// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rubricjudge/orchestrator.hpp"
#include "rubricjudge/sample.hpp"
#include "rubricjudge/taxonomy.hpp"

namespace rjtest {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(RJ_FIXTURES) / name; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("rjtest-" + tag + "-" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const fs::path& path() const { return path_; }
  [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

inline rubricjudge::Sample two_response_sample(const std::string& id, const std::string& r1 = "Rest and fluids.",
                                               const std::string& r2 = "See a doctor if the fever lasts.") {
  rubricjudge::Sample s;
  s.id = id;
  s.question = "I have had a fever for two days, what should I do?";
  s.responses = {r1, r2};
  return s;
}

// Samples whose texts vary with `i`; every third carries reference info.
inline std::vector<rubricjudge::Sample> synthetic_samples(int n, std::uint64_t seed = 3) {
  static const char* kWords[] = {"rest", "fluids", "fever", "doctor", "dose", "pain", "sleep", "test",
                                 "blood", "heart", "diet", "walk", "clinic", "scan", "rash", "cough"};
  std::mt19937_64 rng(seed);
  auto text = [&](int words) {
    std::string out;
    for (int w = 0; w < words; ++w) {
      if (w) out += ' ';
      out += kWords[rng() % 16];
    }
    return out;
  };
  std::vector<rubricjudge::Sample> out;
  for (int i = 0; i < n; ++i) {
    rubricjudge::Sample s;
    s.id = "q" + std::to_string(i);
    s.question = "Question " + std::to_string(i) + ": " + text(6) + "?";
    s.responses = {text(4 + static_cast<int>(rng() % 12)), text(4 + static_cast<int>(rng() % 12))};
    if (s.responses[0] == s.responses[1]) s.responses[1] += " indeed";
    if (i % 3 == 0) s.reference_info = "Reference: " + text(5);
    s.scenario = i % 2 ? "consultation" : "diagnosis";
    out.push_back(std::move(s));
  }
  return out;
}

// Bundle with explicit scores for every sub-aspect of the default rubric.
inline rubricjudge::EvaluationBundle make_bundle(const std::string& id, const std::vector<int>& r1,
                                                 const std::vector<int>& r2,
                                                 const std::optional<std::string>& scenario = std::nullopt) {
  const auto spec = rubricjudge::default_taxonomy();
  const auto codes = spec.sub_aspect_codes();
  rubricjudge::EvaluationBundle b;
  b.sample_id = id;
  b.sample = two_response_sample(id);
  b.sample.scenario = scenario;
  b.backend_id = "test";
  b.per_response.resize(2);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    b.per_response[0][codes[i]] = {codes[i], r1[i % r1.size()], "first " + codes[i]};
    b.per_response[1][codes[i]] = {codes[i], r2[i % r2.size()], "second " + codes[i]};
  }
  return b;
}

}  // namespace rjtest
