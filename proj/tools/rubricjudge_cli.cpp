// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through its C API.
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rubricjudge/rubricjudge.h"

using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

using RunFn = rj_status (*)(const char*, char**);

// Collects flag values that were actually given, keyed by option name.
class Overrides {
 public:
  template <typename T>
  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    setters_.push_back([opt, value, key](json& doc) {
      if (opt->count() > 0) doc[key] = *value;
    });
  }

  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    setters_.push_back([opt, value, key](json& doc) {
      if (opt->count() > 0) doc[key] = *value;
    });
  }

  void apply(json& doc) const {
    for (const auto& s : setters_) s(doc);
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

struct Command {
  CLI::App* app = nullptr;
  RunFn run = nullptr;
  Overrides top;      // keys of the options document
  Overrides backend;  // keys of options["backend"]
  Overrides training; // keys of options["training"]
  std::vector<std::string> mix;
  std::vector<std::string> betas;
  std::optional<std::string> backend_file;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void add_backend_flags(Command& c) {
  c.app->add_option_function<std::string>(
      "--backend-config", [&c](const std::string& p) { c.backend_file = p; },
      "JSON file describing the judge backend");
  c.backend.bind<std::string>(c.app, "--backend", "kind", "Judge backend: mock, scripted or remote");
  c.backend.bind<std::string>(c.app, "--fixture", "fixture", "Recorded outputs for the scripted backend");
  c.backend.bind<std::string>(c.app, "--endpoint", "endpoint", "Remote judge URL");
  c.backend.bind<std::string>(c.app, "--auth-env", "auth_env", "Environment variable holding the bearer token");
  c.backend.bind<double>(c.app, "--timeout", "timeout_s", "Remote request timeout in seconds");
  c.backend.bind<int>(c.app, "--max-retries", "max_retries", "Retries after a transient remote failure");
  c.backend.bind<std::uint64_t>(c.app, "--mock-seed", "seed", "Seed of the mock judge");
  c.backend.bind<double>(c.app, "--position-bias", "position_bias_rate", "Mock: injected position bias rate");
  c.backend.bind<double>(c.app, "--verbosity-bias", "verbosity_bias_rate", "Mock: injected verbosity bias rate");
  c.top.bind<int>(c.app, "--jobs,-j", "jobs", "Concurrent backend calls (default 4)");
}

int exit_for_status(rj_status s) {
  switch (s) {
    case RJ_OK: return 0;
    case RJ_ERR_INVALID_ARGUMENT:
    case RJ_ERR_IO: return kExitUsage;
    case RJ_ERR_EXHAUSTED:
    case RJ_ERR_PERMANENT:
    case RJ_ERR_TRANSIENT: return kExitBackend;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rubric-based response evaluation, preference data and judge training"};
  app.require_subcommand(1);
  std::string config_path;
  std::string log_level = "info";
  app.add_option("--config", config_path, "JSON config; flags override its values")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "debug, info, warn, error or off");

  std::map<std::string, Command> commands;
  auto make = [&](const std::string& name, const std::string& help, RunFn fn) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.run = fn;
    return c;
  };

  {
    Command& c = make("evaluate", "Evaluate samples with the rubric experts", rj_run_evaluate);
    c.top.bind<std::string>(c.app, "--samples,-i", "samples", "Samples (JSONL)");
    c.top.bind<std::string>(c.app, "--out,-o", "out", "Bundles output (JSONL)");
    c.top.bind<std::string>(c.app, "--taxonomy", "taxonomy", "Rubric JSON (default rubric when omitted)");
    c.top.bind<std::string>(c.app, "--mode", "mode", "pairwise or single");
    c.top.bind<std::string>(c.app, "--templates", "templates", "Directory with pairwise.txt / single.txt");
    c.top.bind<int>(c.app, "--max-output-tokens", "max_output_tokens", "Judge output budget");
    add_backend_flags(c);
  }
  {
    Command& c = make("prefdata", "Build preference triplets from bundles", rj_run_prefdata);
    c.top.bind<std::string>(c.app, "--bundles,-i", "bundles", "Bundles (JSONL)");
    c.top.bind<std::string>(c.app, "--out,-o", "out", "Triplets output (JSONL)");
    c.top.bind<std::uint64_t>(c.app, "--seed", "seed", "Schedule seed (required)");
    c.top.bind<std::string>(c.app, "--taxonomy", "taxonomy", "Rubric JSON");
    c.top.flag(c.app, "--mirrored", "mirrored", "Also emit the mirrored score shift");
    c.top.bind<std::vector<int>>(c.app, "--delta-domain", "delta_domain", "Shift magnitudes to draw from");
    c.top.bind<int>(c.app, "--max-resamples", "max_resamples", "Extra draws after an out-of-range shift");
    c.app->add_option("--mix", c.mix, "Transform inclusion probability, e.g. swap_scores=0.5");
  }
  {
    Command& c = make("train", "Train one judge model per aspect on triplets", rj_run_train);
    c.top.bind<std::string>(c.app, "--triplets,-i", "triplets", "Triplets (JSONL)");
    c.top.bind<std::string>(c.app, "--out-dir,-o", "out_dir", "Directory for checkpoints and the log");
    c.top.bind<std::uint64_t>(c.app, "--seed", "seed", "Training seed (required)");
    c.top.bind<std::string>(c.app, "--taxonomy", "taxonomy", "Rubric JSON");
    c.training.bind<int>(c.app, "--steps", "steps", "Gradient steps per aspect");
    c.training.bind<double>(c.app, "--lr", "learning_rate", "Learning rate");
    c.training.bind<double>(c.app, "--beta", "default_beta", "Beta for aspects without their own");
    c.training.bind<int>(c.app, "--batch-size", "batch_size", "Mini-batch size");
    c.training.bind<double>(c.app, "--freeze-fraction", "freeze_fraction", "Share of leading blocks kept frozen");
    c.training.bind<std::string>(c.app, "--token-scheme", "token_scheme", "per_quality or shared");
    c.training.bind<int>(c.app, "--blocks", "blocks", "Parameter blocks of the model");
    c.training.bind<std::size_t>(c.app, "--max-vocab", "max_vocab", "Content tokens kept");
    c.app->add_option("--beta-aspect", c.betas, "Per-aspect beta, e.g. REL=0.3");
  }
  {
    Command& c = make("metrics", "Score agreement with human labels", rj_run_metrics);
    c.top.bind<std::string>(c.app, "--bundles,-i", "bundles", "Bundles (JSONL)");
    c.top.bind<std::string>(c.app, "--labels", "labels", "Human scores (JSONL)");
    c.top.bind<std::string>(c.app, "--out,-o", "out", "Report output (JSON)");
    c.top.bind<std::string>(c.app, "--csv", "csv", "Flat table output (default: report path with .csv)");
    c.top.bind<std::string>(c.app, "--taxonomy", "taxonomy", "Rubric JSON");
    c.top.bind<std::string>(c.app, "--matches", "matches", "Reference-match judgments (JSONL)");
    c.top.bind<std::string>(c.app, "--compare", "compare", "Second bundles file for win/tie/lose");
  }
  {
    Command& c = make("bias", "Probe position and verbosity bias", rj_run_bias);
    c.top.bind<std::string>(c.app, "--samples,-i", "samples", "Two-response samples (JSONL)");
    c.top.bind<std::string>(c.app, "--out,-o", "out", "Report output (JSON)");
    c.top.bind<std::string>(c.app, "--probe", "probe", "position, verbosity or both");
    c.top.bind<std::string>(c.app, "--aspect", "aspect", "Aspect to probe (default REL)");
    c.top.bind<std::string>(c.app, "--labels", "labels", "Human scores, needed by the verbosity probe");
    c.top.bind<std::string>(c.app, "--taxonomy", "taxonomy", "Rubric JSON");
    add_backend_flags(c);
  }
  {
    Command& c = make("gradcheck", "Check the analytic training gradient by finite differences", rj_run_gradcheck);
    c.top.bind<int>(c.app, "--instances", "instances", "Seeded model instances");
    c.top.bind<int>(c.app, "--coordinates", "coordinates", "Sampled coordinates per instance");
    c.top.bind<double>(c.app, "--eps", "eps", "Step size; only 1e-5 gates the exit code");
    c.top.bind<std::uint64_t>(c.app, "--seed", "seed", "Instance seed");
    c.top.flag(c.app, "--break-gradient", "break_gradient", "Flip the analytic gradient (negative control)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (rj_set_log_level(log_level.c_str()) != RJ_OK) {
    std::cerr << "error: " << rj_last_error() << "\n";
    return kExitUsage;
  }

  for (auto& [name, c] : commands) {
    if (!c.app->parsed()) continue;
    json options = json::object();
    try {
      if (!config_path.empty()) {
        const json cfg = read_json(config_path);
        if (!cfg.is_object()) throw std::runtime_error(config_path + ": expected an object");
        if (cfg.contains(name)) options = cfg.at(name);
        if (!options.is_object()) throw std::runtime_error(config_path + ": '" + name + "' must be an object");
      }
      c.top.apply(options);

      json backend = options.value("backend", json::object());
      if (c.backend_file) backend = read_json(*c.backend_file);
      c.backend.apply(backend);
      if (!backend.empty()) options["backend"] = backend;

      json training = options.value("training", json::object());
      c.training.apply(training);
      for (const auto& entry : c.betas) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--beta-aspect expects ASPECT=VALUE");
        training["beta"][entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
      }
      if (!training.empty()) options["training"] = training;

      for (const auto& entry : c.mix) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) throw std::runtime_error("--mix expects TRANSFORM=WEIGHT");
        options["mix"][entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitUsage;
    }

    char* summary = nullptr;
    const rj_status status = c.run(options.dump().c_str(), &summary);
    if (status != RJ_OK) {
      std::cerr << "error (" << rj_status_name(status) << "): " << rj_last_error() << "\n";
      return exit_for_status(status);
    }
    const json doc = json::parse(summary);
    rj_string_free(summary);
    std::cout << doc.dump(2) << "\n";
    return doc.value("exit_code", 1);
  }
  return kExitUsage;
}
