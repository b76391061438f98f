// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubricjudge/sample.hpp"

namespace rubricjudge {

struct JudgeRequest {
  std::string prompt;
  std::string sample_id;
  std::string sub_aspect;
  Mode mode = Mode::Pairwise;
  // 1-based index of the judged response for single-mode calls, 0 for pairwise.
  int response_index = 0;
  // Greedy decoding unless a caller overrides it.
  double temperature = 0.0;
  int max_output_tokens = 512;

  [[nodiscard]] std::string subtask_id() const;
};

/// Text in, text out. Failures are reported as Error with code Transient,
/// Permanent, Exhausted (or MissingFixture for the scripted backend).
/// Implementations must tolerate concurrent calls.
class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string judge(const JudgeRequest& request) = 0;
  [[nodiscard]] virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Mock

struct MockOptions {
  std::uint64_t seed = 0;
  // Fraction of response pairs (per sub-aspect) on which the mock always
  // prefers whichever response is shown first.
  double position_bias_rate = 0.0;
  // Fraction of response pairs on which the mock always prefers the longer
  // response. Position bias wins when both fire.
  double verbosity_bias_rate = 0.0;
  int score_min = 0;
  int score_max = 5;
};

/// Deterministic stand-in judge.
///
/// Each response is scored from a hash of (seed, sub-aspect, question,
/// response text), so a verdict does not depend on presentation order or on
/// whether the responses were shown together or one at a time. Bias knobs
/// are bucketed by a hash of the unordered response pair, which makes the
/// biased subset a fixed property of the pair rather than of the call.
///
/// The prompt must use the "### Question:" / "### Response N:" section
/// headings of the default templates; otherwise the whole prompt is hashed.
std::string mock_judge(const JudgeRequest& request, const MockOptions& options);

class MockJudge final : public JudgeBackend {
 public:
  explicit MockJudge(MockOptions options) : options_(options) {}
  std::string judge(const JudgeRequest& request) override { return mock_judge(request, options_); }
  [[nodiscard]] std::string id() const override;
  [[nodiscard]] const MockOptions& options() const { return options_; }

 private:
  MockOptions options_;
};

// ---------------------------------------------------------------------------
// Scripted (fixture replay)

struct FixtureKey {
  std::string sample_id;
  std::string sub_aspect;
  Mode mode = Mode::Pairwise;
  int response_index = 0;

  auto operator<=>(const FixtureKey&) const = default;
};

struct FixtureRecord {
  FixtureKey key;
  std::string text;
};

class ScriptedJudge final : public JudgeBackend {
 public:
  /// Throws Error(InvalidArgument) on a duplicate key.
  explicit ScriptedJudge(const std::vector<FixtureRecord>& records, std::string name = "scripted");
  /// Reads line-delimited {sample_id, sub_aspect, mode, text[, response]}.
  static ScriptedJudge load(const std::filesystem::path& path);

  /// Throws Error(MissingFixture) for unknown keys.
  std::string judge(const JudgeRequest& request) override;
  [[nodiscard]] std::string id() const override { return name_; }
  [[nodiscard]] std::size_t size() const { return texts_.size(); }

 private:
  std::map<FixtureKey, std::string> texts_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Remote

enum class WireSchema {
  Minimal,         // POST {prompt, temperature, max_tokens} -> {text}
  ChatCompletion,  // POST {model, messages, temperature, max_tokens} -> choices[0].message.content
};

struct RemoteOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/generate
  std::string auth_env;  // name of the environment variable holding a bearer token
  double timeout_s = 60.0;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_in_flight = 4;
  WireSchema schema = WireSchema::Minimal;
  std::string model;  // only sent with ChatCompletion
};

/// HTTP judge client. Timeouts, connection failures, 429 and 5xx are
/// retried after waits of base, 2 base, 4 base, ...; other 4xx fail at once.
/// At most max_retries + 1 requests are made per call.
class RemoteJudge final : public JudgeBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit RemoteJudge(RemoteOptions options, Sleeper sleeper = {});

  std::string judge(const JudgeRequest& request) override;
  [[nodiscard]] std::string id() const override;

 private:
  std::string attempt_once(const std::string& body, const std::string& token, int attempt);

  RemoteOptions options_;
  Sleeper sleep_;
  std::string scheme_host_port_;
  std::string path_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

// ---------------------------------------------------------------------------
// Configuration

struct BackendConfig {
  enum class Kind { Mock, Scripted, Remote };
  Kind kind = Kind::Mock;
  MockOptions mock;
  std::filesystem::path fixture_path;
  RemoteOptions remote;
};

/// Keys: kind, seed, position_bias_rate, verbosity_bias_rate, fixture,
/// endpoint, auth_env, timeout_s, max_retries, backoff_base_ms,
/// max_in_flight, schema, model. Validates timeout > 0 and max_retries >= 0.
BackendConfig backend_config_from_json(const nlohmann::json& j);
nlohmann::json backend_config_to_json(const BackendConfig& cfg);
std::shared_ptr<JudgeBackend> make_backend(const BackendConfig& cfg);

}  // namespace rubricjudge
