// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "internal/log.hpp"
#include "rubricjudge/error.hpp"
#include "rubricjudge/judge.hpp"

namespace rubricjudge {

using nlohmann::json;

namespace {

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;
  std::counting_semaphore<>& sem;
};

std::string extract_text(const json& body, WireSchema schema) {
  if (schema == WireSchema::Minimal) return body.at("text").get<std::string>();
  return body.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace

RemoteJudge::RemoteJudge(RemoteOptions options, Sleeper sleeper)
    : options_(std::move(options)), sleep_(std::move(sleeper)) {
  if (options_.timeout_s <= 0) throw Error(ErrorCode::InvalidArgument, "remote: timeout must be > 0");
  if (options_.max_retries < 0) throw Error(ErrorCode::InvalidArgument, "remote: max_retries must be >= 0");
  if (options_.max_in_flight < 1) throw Error(ErrorCode::InvalidArgument, "remote: max_in_flight must be >= 1");
  const auto scheme_end = options_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "remote: endpoint must look like http://host[:port]/path");
  const auto path_start = options_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = options_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : options_.endpoint.substr(path_start);
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  in_flight_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
}

std::string RemoteJudge::id() const { return "remote:" + options_.endpoint; }

std::string RemoteJudge::attempt_once(const std::string& body, const std::string& token, int attempt) {
  httplib::Client client(scheme_host_port_);
  const auto seconds = static_cast<time_t>(options_.timeout_s);
  const auto micros = static_cast<time_t>((options_.timeout_s - static_cast<double>(seconds)) * 1e6);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) {
    throw Error(ErrorCode::Transient, "attempt " + std::to_string(attempt) + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 429 || status >= 500)
    throw Error(ErrorCode::Transient, "attempt " + std::to_string(attempt) + ": HTTP " + std::to_string(status));
  if (status < 200 || status >= 300)
    throw Error(ErrorCode::Permanent, "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
  try {
    return extract_text(json::parse(res->body), options_.schema);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Permanent, std::string("malformed response body: ") + e.what());
  }
}

std::string RemoteJudge::judge(const JudgeRequest& request) {
  json body;
  if (options_.schema == WireSchema::Minimal) {
    body = {{"prompt", request.prompt},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  } else {
    body = {{"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
    if (!options_.model.empty()) body["model"] = options_.model;
  }
  std::string token;
  if (!options_.auth_env.empty()) {
    if (const char* v = std::getenv(options_.auth_env.c_str())) token = v;
  }
  const std::string payload = body.dump();

  SemaphoreGuard guard(*in_flight_);
  const auto start = std::chrono::steady_clock::now();
  std::string last_cause;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) sleep_(std::chrono::milliseconds(static_cast<long long>(options_.backoff_base_ms) << (attempt - 1)));
    try {
      std::string text = attempt_once(payload, token, attempt + 1);
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      detail::log().info("remote judge {} attempts={} retries={} elapsed_ms={}", request.subtask_id(), attempt + 1,
                         attempt, ms.count());
      return text;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Permanent) {
        detail::log().warn("remote judge {} permanent failure after {} attempt(s): {}", request.subtask_id(),
                           attempt + 1, e.what());
        throw;
      }
      last_cause = e.what();
      detail::log().warn("remote judge {} transient failure: {}", request.subtask_id(), last_cause);
    }
  }
  throw Error(ErrorCode::Exhausted, "retries exhausted after " + std::to_string(options_.max_retries + 1) +
                                        " attempt(s); last cause: " + last_cause);
}

// ---------------------------------------------------------------------------

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig cfg;
  try {
    const std::string kind = j.value("kind", "mock");
    if (kind == "mock")
      cfg.kind = BackendConfig::Kind::Mock;
    else if (kind == "scripted")
      cfg.kind = BackendConfig::Kind::Scripted;
    else if (kind == "remote")
      cfg.kind = BackendConfig::Kind::Remote;
    else
      throw Error(ErrorCode::InvalidArgument, "backend: unknown kind '" + kind + "'");

    cfg.mock.seed = j.value("seed", std::uint64_t{0});
    cfg.mock.position_bias_rate = j.value("position_bias_rate", 0.0);
    cfg.mock.verbosity_bias_rate = j.value("verbosity_bias_rate", 0.0);
    cfg.fixture_path = j.value("fixture", std::string{});
    cfg.remote.endpoint = j.value("endpoint", std::string{});
    cfg.remote.auth_env = j.value("auth_env", std::string{});
    cfg.remote.timeout_s = j.value("timeout_s", cfg.remote.timeout_s);
    cfg.remote.max_retries = j.value("max_retries", cfg.remote.max_retries);
    cfg.remote.backoff_base_ms = j.value("backoff_base_ms", cfg.remote.backoff_base_ms);
    cfg.remote.max_in_flight = j.value("max_in_flight", cfg.remote.max_in_flight);
    cfg.remote.model = j.value("model", std::string{});
    const std::string schema = j.value("schema", "minimal");
    if (schema == "minimal")
      cfg.remote.schema = WireSchema::Minimal;
    else if (schema == "chat")
      cfg.remote.schema = WireSchema::ChatCompletion;
    else
      throw Error(ErrorCode::InvalidArgument, "backend: unknown schema '" + schema + "'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("backend config: ") + e.what());
  }
  if (cfg.remote.timeout_s <= 0) throw Error(ErrorCode::InvalidArgument, "backend: timeout_s must be > 0");
  if (cfg.remote.max_retries < 0) throw Error(ErrorCode::InvalidArgument, "backend: max_retries must be >= 0");
  for (double rate : {cfg.mock.position_bias_rate, cfg.mock.verbosity_bias_rate})
    if (rate < 0.0 || rate > 1.0) throw Error(ErrorCode::InvalidArgument, "backend: bias rates must lie in [0, 1]");
  if (cfg.kind == BackendConfig::Kind::Scripted && cfg.fixture_path.empty())
    throw Error(ErrorCode::InvalidArgument, "backend: scripted kind needs 'fixture'");
  if (cfg.kind == BackendConfig::Kind::Remote && cfg.remote.endpoint.empty())
    throw Error(ErrorCode::InvalidArgument, "backend: remote kind needs 'endpoint'");
  return cfg;
}

json backend_config_to_json(const BackendConfig& cfg) {
  switch (cfg.kind) {
    case BackendConfig::Kind::Mock:
      return {{"kind", "mock"},
              {"seed", cfg.mock.seed},
              {"position_bias_rate", cfg.mock.position_bias_rate},
              {"verbosity_bias_rate", cfg.mock.verbosity_bias_rate}};
    case BackendConfig::Kind::Scripted:
      return {{"kind", "scripted"}, {"fixture", cfg.fixture_path.string()}};
    case BackendConfig::Kind::Remote:
      return {{"kind", "remote"},
              {"endpoint", cfg.remote.endpoint},
              {"auth_env", cfg.remote.auth_env},
              {"timeout_s", cfg.remote.timeout_s},
              {"max_retries", cfg.remote.max_retries},
              {"backoff_base_ms", cfg.remote.backoff_base_ms},
              {"max_in_flight", cfg.remote.max_in_flight},
              {"schema", cfg.remote.schema == WireSchema::Minimal ? "minimal" : "chat"},
              {"model", cfg.remote.model}};
  }
  return {};
}

std::shared_ptr<JudgeBackend> make_backend(const BackendConfig& cfg) {
  switch (cfg.kind) {
    case BackendConfig::Kind::Mock: return std::make_shared<MockJudge>(cfg.mock);
    case BackendConfig::Kind::Scripted: return std::make_shared<ScriptedJudge>(ScriptedJudge::load(cfg.fixture_path));
    case BackendConfig::Kind::Remote: return std::make_shared<RemoteJudge>(cfg.remote);
  }
  throw Error(ErrorCode::InvalidArgument, "backend: unsupported kind");
}

}  // namespace rubricjudge
