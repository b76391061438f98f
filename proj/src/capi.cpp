// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/rubricjudge.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "internal/log.hpp"
#include "rubricjudge/error.hpp"
#include "rubricjudge/judge.hpp"
#include "rubricjudge/metrics.hpp"
#include "rubricjudge/orchestrator.hpp"
#include "rubricjudge/pipeline.hpp"
#include "rubricjudge/taxonomy.hpp"

using nlohmann::json;
namespace rj = rubricjudge;

struct rj_taxonomy {
  rj::Taxonomy spec;
};

struct rj_backend {
  std::shared_ptr<rj::JudgeBackend> backend;
};

namespace {

thread_local std::string g_last_error;

rj_status status_of(rj::ErrorCode code) {
  switch (code) {
    case rj::ErrorCode::InvalidArgument: return RJ_ERR_INVALID_ARGUMENT;
    case rj::ErrorCode::Io: return RJ_ERR_IO;
    case rj::ErrorCode::Parse: return RJ_ERR_PARSE;
    case rj::ErrorCode::Range: return RJ_ERR_RANGE;
    case rj::ErrorCode::MissingFixture: return RJ_ERR_MISSING_FIXTURE;
    case rj::ErrorCode::Transient: return RJ_ERR_TRANSIENT;
    case rj::ErrorCode::Permanent: return RJ_ERR_PERMANENT;
    case rj::ErrorCode::Exhausted: return RJ_ERR_EXHAUSTED;
    case rj::ErrorCode::NonInformative: return RJ_ERR_NON_INFORMATIVE;
    case rj::ErrorCode::NonApplicable: return RJ_ERR_NON_APPLICABLE;
    case rj::ErrorCode::OutOfRange: return RJ_ERR_OUT_OF_RANGE;
    case rj::ErrorCode::Undefined: return RJ_ERR_UNDEFINED;
    case rj::ErrorCode::PartialBundle: return RJ_ERR_PARTIAL_BUNDLE;
    case rj::ErrorCode::Divergence: return RJ_ERR_DIVERGENCE;
    case rj::ErrorCode::Data: return RJ_ERR_DATA;
  }
  return RJ_ERR_INTERNAL;
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs fn, translating exceptions into a status and the thread's last error.
template <typename Fn>
rj_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return RJ_OK;
  } catch (const rj::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return RJ_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RJ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return RJ_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw rj::Error(rj::ErrorCode::InvalidArgument, what);
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw rj::Error(rj::ErrorCode::InvalidArgument, std::string("options are not valid JSON: ") + e.what());
  }
}

using Runner = json (*)(const json&);

rj_status run(Runner runner, const char* options_json, char** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = nullptr;
    *out = copy_out(runner(parse_options(options_json)).dump(2));
  });
}

}  // namespace

extern "C" {

const char* rj_version(void) { return "0.1.0"; }

const char* rj_status_name(rj_status status) {
  switch (status) {
    case RJ_OK: return "ok";
    case RJ_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RJ_ERR_IO: return "io";
    case RJ_ERR_PARSE: return "parse";
    case RJ_ERR_RANGE: return "range";
    case RJ_ERR_MISSING_FIXTURE: return "missing_fixture";
    case RJ_ERR_TRANSIENT: return "transient";
    case RJ_ERR_PERMANENT: return "permanent";
    case RJ_ERR_EXHAUSTED: return "exhausted";
    case RJ_ERR_NON_INFORMATIVE: return "non_informative";
    case RJ_ERR_NON_APPLICABLE: return "non_applicable";
    case RJ_ERR_OUT_OF_RANGE: return "out_of_range";
    case RJ_ERR_UNDEFINED: return "undefined";
    case RJ_ERR_PARTIAL_BUNDLE: return "partial_bundle";
    case RJ_ERR_DIVERGENCE: return "divergence";
    case RJ_ERR_DATA: return "data";
    case RJ_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* rj_last_error(void) { return g_last_error.c_str(); }

void rj_string_free(char* s) { std::free(s); }

rj_taxonomy* rj_taxonomy_default(void) {
  try {
    return new rj_taxonomy{rj::default_taxonomy()};
  } catch (...) {
    return nullptr;
  }
}

rj_status rj_taxonomy_load(const char* path, rj_taxonomy** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new rj_taxonomy{rj::load_taxonomy(path)};
  });
}

rj_status rj_taxonomy_from_json(const char* text, rj_taxonomy** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = nullptr;
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw rj::Error(rj::ErrorCode::InvalidArgument, std::string("taxonomy is not valid JSON: ") + e.what());
    }
    *out = new rj_taxonomy{rj::taxonomy_from_json(doc)};
  });
}

void rj_taxonomy_free(rj_taxonomy* taxonomy) { delete taxonomy; }

rj_status rj_taxonomy_to_json(const rj_taxonomy* taxonomy, char** out_json) {
  return guarded([&] {
    require(taxonomy && out_json, "null argument");
    *out_json = copy_out(rj::taxonomy_to_json(taxonomy->spec).dump(2));
  });
}

size_t rj_taxonomy_sub_aspect_count(const rj_taxonomy* taxonomy) {
  return taxonomy ? taxonomy->spec.sub_aspect_count() : 0;
}

rj_status rj_taxonomy_validate(const rj_taxonomy* taxonomy, char** out_json) {
  return guarded([&] {
    require(taxonomy && out_json, "null argument");
    json out = json::array();
    for (const auto& v : rj::validate_taxonomy(taxonomy->spec)) out.push_back({{"field", v.field}, {"message", v.message}});
    *out_json = copy_out(out.dump());
  });
}

rj_status rj_backend_create(const char* config_json, rj_backend** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = nullptr;
    *out = new rj_backend{rj::make_backend(rj::backend_config_from_json(parse_options(config_json)))};
  });
}

void rj_backend_free(rj_backend* backend) { delete backend; }

rj_status rj_evaluate_sample(const rj_taxonomy* taxonomy, const rj_backend* backend, const char* sample_json,
                             const char* mode, int workers, char** out_bundle_json) {
  return guarded([&] {
    require(taxonomy && backend && sample_json && out_bundle_json, "null argument");
    *out_bundle_json = nullptr;
    const rj::Sample sample = rj::sample_from_json(parse_options(sample_json));
    const rj::ExpertRegistry registry(taxonomy->spec, backend->backend);
    rj::RunOptions options;
    options.workers = workers < 1 ? 1 : workers;
    try {
      const auto bundle =
          rj::run_evaluation(sample, taxonomy->spec, registry, rj::mode_from_string(mode ? mode : "pairwise"), options);
      *out_bundle_json = copy_out(rj::bundle_to_json(bundle).dump());
    } catch (const rj::PartialBundleError& e) {
      *out_bundle_json = copy_out(rj::bundle_to_json(e.partial()).dump());
      throw;
    }
  });
}

rj_status rj_parse_judge_output(const rj_taxonomy* taxonomy, const char* text, const char* sub_aspect,
                                const char* mode, char** out_json) {
  return guarded([&] {
    require(taxonomy && text && sub_aspect && out_json, "null argument");
    *out_json = nullptr;
    const auto evals = rj::parse_judge_output(text, sub_aspect, rj::mode_from_string(mode ? mode : "pairwise"),
                                              taxonomy->spec.score_min, taxonomy->spec.score_max);
    json out = json::array();
    for (const auto& e : evals)
      out.push_back({{"sub_aspect", e.sub_aspect}, {"score", e.score}, {"rationale", e.rationale}});
    *out_json = copy_out(out.dump());
  });
}

rj_status rj_pearson(const double* xs, const double* ys, size_t n, double* out) {
  return guarded([&] {
    require(out && (n == 0 || (xs && ys)), "null argument");
    *out = rj::pearson(std::span<const double>(xs, n), std::span<const double>(ys, n));
  });
}

rj_status rj_icc(const double* cells, size_t n, size_t k, double* out) {
  return guarded([&] {
    require(out && (n * k == 0 || cells), "null argument");
    rj::RaterMatrix m;
    for (size_t i = 0; i < n; ++i) m.rows.emplace_back(cells + i * k, cells + (i + 1) * k);
    *out = rj::icc(m);
  });
}

rj_status rj_run_evaluate(const char* options_json, char** out) { return run(rj::pipeline::run_evaluate, options_json, out); }
rj_status rj_run_prefdata(const char* options_json, char** out) { return run(rj::pipeline::run_prefdata, options_json, out); }
rj_status rj_run_train(const char* options_json, char** out) { return run(rj::pipeline::run_train, options_json, out); }
rj_status rj_run_metrics(const char* options_json, char** out) { return run(rj::pipeline::run_metrics, options_json, out); }
rj_status rj_run_bias(const char* options_json, char** out) { return run(rj::pipeline::run_bias, options_json, out); }
rj_status rj_run_gradcheck(const char* options_json, char** out) {
  return run(rj::pipeline::run_gradcheck, options_json, out);
}

rj_status rj_set_log_level(const char* level) {
  return guarded([&] {
    require(level != nullptr, "null argument");
    const std::string l = level;
    spdlog::level::level_enum v;
    if (l == "debug")
      v = spdlog::level::debug;
    else if (l == "info")
      v = spdlog::level::info;
    else if (l == "warn")
      v = spdlog::level::warn;
    else if (l == "error")
      v = spdlog::level::err;
    else if (l == "off")
      v = spdlog::level::off;
    else
      throw rj::Error(rj::ErrorCode::InvalidArgument, "unknown log level '" + l + "'");
    rj::detail::log().set_level(v);
  });
}

}  // extern "C"
