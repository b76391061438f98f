// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "internal/log.hpp"
#include "rubricjudge/adto.hpp"
#include "rubricjudge/error.hpp"
#include "rubricjudge/jsonl.hpp"
#include "rubricjudge/judge.hpp"
#include "rubricjudge/metrics.hpp"
#include "rubricjudge/orchestrator.hpp"
#include "rubricjudge/preference.hpp"
#include "rubricjudge/taxonomy.hpp"

namespace rubricjudge::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitBackend = 3;

class Options {
 public:
  Options(const json& doc, std::string command, std::set<std::string> allowed)
      : doc_(doc.is_null() ? json::object() : doc), command_(std::move(command)) {
    if (!doc_.is_object()) fail("options must be an object");
    for (const auto& [key, _] : doc_.items())
      if (!allowed.count(key)) fail("unknown option '" + key + "'");
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(ErrorCode::InvalidArgument, command_ + ": " + message);
  }

  [[nodiscard]] bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }
  [[nodiscard]] const json& raw(const std::string& key) const { return doc_.at(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return doc_.at(key).get<T>();
    } catch (const json::exception&) {
      fail("option '" + key + "' has the wrong type");
    }
  }

  [[nodiscard]] fs::path input(const std::string& key) const {
    const fs::path p = required_path(key);
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::Io, command_ + ": cannot read " + key + " file " + p.string());
    return p;
  }

  [[nodiscard]] fs::path output(const std::string& key) const {
    const fs::path p = required_path(key);
    const fs::path parent = p.parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
      throw Error(ErrorCode::Io, command_ + ": output directory " + parent.string() + " does not exist");
    return p;
  }

  [[nodiscard]] fs::path required_path(const std::string& key) const {
    const auto s = get<std::string>(key, "");
    if (s.empty()) fail("missing required option '" + key + "'");
    return fs::path(s);
  }

  [[nodiscard]] std::uint64_t required_seed() const {
    if (!has("seed")) fail("a seed is required");
    return get<std::uint64_t>("seed", 0);
  }

 private:
  json doc_;
  std::string command_;
};

Taxonomy load_spec(const Options& o) {
  Taxonomy spec = o.has("taxonomy") ? load_taxonomy(o.input("taxonomy")) : default_taxonomy();
  const auto violations = validate_taxonomy(spec);
  if (!violations.empty()) o.fail("invalid taxonomy: " + violations.front().field + ": " + violations.front().message);
  return spec;
}

std::string taxonomy_echo(const Options& o) { return o.has("taxonomy") ? o.required_path("taxonomy").string() : "default"; }

void write_sidecar(const fs::path& out, const json& config) {
  jsonl::write_json_file(fs::path(out.string() + ".config.json"), config);
}

BackendConfig load_backend(const Options& o) {
  return backend_config_from_json(o.has("backend") ? o.raw("backend") : json{{"kind", "mock"}});
}

int clamp_jobs(const Options& o) {
  const int jobs = o.get<int>("jobs", 4);
  if (jobs < 1) o.fail("jobs must be >= 1");
  return jobs;
}

std::vector<EvaluationBundle> read_bundles(const fs::path& path, std::vector<std::string>* errors) {
  std::vector<EvaluationBundle> out;
  jsonl::for_each(
      path,
      [&](std::size_t line, const json& j) {
        try {
          out.push_back(bundle_from_json(j));
        } catch (const Error& e) {
          errors->push_back(path.filename().string() + " line " + std::to_string(line) + ": " + e.what());
        }
      },
      [&](std::size_t line, const std::string& msg) {
        errors->push_back(path.filename().string() + " line " + std::to_string(line) + ": " + msg);
      });
  return out;
}

std::vector<Sample> read_samples(const fs::path& path, std::vector<std::string>* errors) {
  std::vector<Sample> out;
  jsonl::for_each(
      path,
      [&](std::size_t line, const json& j) {
        try {
          out.push_back(sample_from_json(j));
        } catch (const Error& e) {
          errors->push_back("line " + std::to_string(line) + ": " + e.what());
        }
      },
      [&](std::size_t line, const std::string& msg) { errors->push_back("line " + std::to_string(line) + ": " + msg); });
  return out;
}

using HumanScores = std::map<std::string, std::map<std::string, std::vector<int>>>;

HumanScores read_labels(const fs::path& path, std::vector<std::string>* errors) {
  HumanScores out;
  jsonl::for_each(
      path,
      [&](std::size_t line, const json& j) {
        const std::string where = "labels line " + std::to_string(line);
        try {
          const auto id = j.at("sample_id").get<std::string>();
          if (out.count(id)) {
            errors->push_back(where + ": duplicate sample " + id);
            return;
          }
          out[id] = j.at("scores").get<std::map<std::string, std::vector<int>>>();
        } catch (const json::exception& e) {
          errors->push_back(where + ": " + e.what());
        }
      },
      [&](std::size_t line, const std::string& msg) {
        errors->push_back("labels line " + std::to_string(line) + ": " + msg);
      });
  return out;
}

void log_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) detail::log().warn("{}", e);
}

bool is_backend_code(ErrorCode c) {
  return c == ErrorCode::Exhausted || c == ErrorCode::Permanent || c == ErrorCode::Transient;
}

}  // namespace

// ---------------------------------------------------------------------------

json run_evaluate(const json& options) {
  const Options o(options, "evaluate",
                  {"samples", "out", "taxonomy", "backend", "mode", "jobs", "templates", "max_output_tokens"});
  const fs::path samples_path = o.input("samples");
  const fs::path out_path = o.output("out");
  const Taxonomy spec = load_spec(o);
  const BackendConfig backend_cfg = load_backend(o);
  const Mode mode = mode_from_string(o.get<std::string>("mode", "pairwise"));
  RunOptions run;
  run.workers = clamp_jobs(o);
  run.max_output_tokens = o.get<int>("max_output_tokens", run.max_output_tokens);
  if (o.has("templates")) {
    const fs::path dir = o.required_path("templates");
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "evaluate: template directory " + dir.string() + " not found");
    run.templates = PromptTemplates::load(dir);
  }

  json placeholders = json::array();
  for (const auto& a : spec.aspects)
    for (const auto& sub : a.sub_aspects)
      if (sub.placeholder) placeholders.push_back(sub.code);

  const json config = {{"command", "evaluate"},
                       {"samples", samples_path.string()},
                       {"taxonomy", taxonomy_echo(o)},
                       {"placeholder_sub_aspects", placeholders},
                       {"backend", backend_config_to_json(backend_cfg)},
                       {"mode", to_string(mode)},
                       {"jobs", run.workers},
                       {"templates", o.has("templates") ? json(o.required_path("templates").string()) : json("default")},
                       {"max_output_tokens", run.max_output_tokens}};

  const ExpertRegistry registry(spec, make_backend(backend_cfg));
  detail::log().info("evaluate: experts {}", registry.describe(spec));

  jsonl::Writer writer(out_path);
  std::vector<std::string> errors;
  json failed = json::array();
  std::size_t written = 0, skipped = 0;
  bool exhausted = false;

  jsonl::for_each(
      samples_path,
      [&](std::size_t line, const json& j) {
        Sample sample;
        try {
          sample = sample_from_json(j);
          if (mode == Mode::Pairwise && sample.responses.size() != 2)
            throw Error(ErrorCode::InvalidArgument, "pairwise mode needs two responses");
        } catch (const Error& e) {
          ++skipped;
          errors.push_back("line " + std::to_string(line) + ": " + e.what());
          detail::log().warn("evaluate: skipping line {}: {}", line, e.what());
          return;
        }
        try {
          writer.write(bundle_to_json(run_evaluation(sample, spec, registry, mode, run)));
          ++written;
        } catch (const PartialBundleError& e) {
          exhausted = exhausted || e.backend_failure();
          json subtasks = json::array();
          for (const auto& f : e.failed()) {
            subtasks.push_back({{"subtask", f.subtask}, {"error", to_string(f.code)}, {"message", f.message}});
            detail::log().warn("evaluate: {} failed ({}): {}", f.subtask, to_string(f.code), f.message);
          }
          failed.push_back({{"sample_id", sample.id}, {"line", line}, {"subtasks", std::move(subtasks)}});
        }
        if ((written + failed.size()) % 50 == 0) detail::log().info("evaluate: {} samples done", written + failed.size());
      },
      [&](std::size_t line, const std::string& msg) {
        ++skipped;
        errors.push_back("line " + std::to_string(line) + ": " + msg);
        detail::log().warn("evaluate: skipping line {}: {}", line, msg);
      });
  writer.close();
  write_sidecar(out_path, config);

  int exit_code = kExitOk;
  if (skipped > 0 || !failed.empty()) exit_code = kExitData;
  if (exhausted) exit_code = kExitBackend;
  detail::log().info("evaluate: {} bundles written, {} lines skipped, {} samples failed", written, skipped,
                      failed.size());
  return {{"command", "evaluate"}, {"bundles", written},   {"skipped_lines", skipped}, {"failed", failed},
          {"errors", errors},      {"exit_code", exit_code}, {"config", config}};
}

// ---------------------------------------------------------------------------

json run_prefdata(const json& options) {
  const Options o(options, "prefdata",
                  {"bundles", "out", "seed", "taxonomy", "mix", "mirrored", "delta_domain", "max_resamples"});
  const fs::path bundles_path = o.input("bundles");
  const fs::path out_path = o.output("out");
  const Taxonomy spec = load_spec(o);

  PreferenceConfig cfg;
  cfg.seed = o.required_seed();
  cfg.mirrored = o.get<bool>("mirrored", false);
  cfg.delta_domain = o.get<std::vector<int>>("delta_domain", cfg.delta_domain);
  cfg.max_resamples = o.get<int>("max_resamples", cfg.max_resamples);
  if (cfg.max_resamples < 0) o.fail("max_resamples must be >= 0");
  if (o.has("mix")) {
    const json& m = o.raw("mix");
    if (!m.is_object()) o.fail("mix must be an object");
    for (const auto& [name, w] : m.items()) {
      if (!w.is_number()) o.fail("mix weight for " + name + " must be a number");
      switch (transform_from_string(name)) {
        case Transform::SwapScores: cfg.mix.swap_scores = w.get<double>(); break;
        case Transform::ShiftScores: cfg.mix.shift_scores = w.get<double>(); break;
        case Transform::SwapRationales: cfg.mix.swap_rationales = w.get<double>(); break;
        case Transform::DropReference: cfg.mix.drop_reference = w.get<double>(); break;
      }
    }
  }

  json mix = json::object();
  for (Transform t : kAllTransforms) mix[std::string(to_string(t))] = cfg.mix.weight(t);
  const json config = {{"command", "prefdata"},         {"bundles", bundles_path.string()},
                       {"taxonomy", taxonomy_echo(o)},   {"seed", cfg.seed},
                       {"mix", mix},                     {"mirrored", cfg.mirrored},
                       {"delta_domain", cfg.delta_domain}, {"max_resamples", cfg.max_resamples}};

  std::vector<std::string> errors;
  const auto bundles = read_bundles(bundles_path, &errors);
  log_errors(errors);
  PreferenceStats stats;
  const auto triplets = build_preference_dataset(bundles, spec, cfg, &stats);

  jsonl::Writer writer(out_path);
  for (const auto& t : triplets) writer.write(triplet_to_json(t));
  writer.close();
  write_sidecar(out_path, config);

  for (const auto& [name, n] : stats.emitted) detail::log().info("prefdata: {} {}", name, n);
  if (stats.skipped_bundles > 0)
    detail::log().warn("prefdata: skipped {} bundles (not pairwise or incomplete)", stats.skipped_bundles);

  return {{"command", "prefdata"},
          {"triplets", triplets.size()},
          {"emitted", stats.emitted},
          {"skipped_bundles", stats.skipped_bundles},
          {"non_informative", stats.non_informative},
          {"non_applicable", stats.non_applicable},
          {"out_of_range", stats.out_of_range},
          {"errors", errors},
          {"exit_code", errors.empty() ? kExitOk : kExitData},
          {"config", config}};
}

// ---------------------------------------------------------------------------

json run_train(const json& options) {
  const Options o(options, "train", {"triplets", "out_dir", "seed", "taxonomy", "training"});
  const fs::path triplets_path = o.input("triplets");
  const fs::path out_dir = o.required_path("out_dir");
  const Taxonomy spec = load_spec(o);
  json training = o.has("training") ? o.raw("training") : json::object();
  if (!training.is_object()) o.fail("training must be an object");
  training["seed"] = o.required_seed();
  const adto::ADTOConfig cfg = adto::ADTOConfig::from_json(training);
  fs::create_directories(out_dir);

  std::vector<std::string> errors;
  std::vector<PreferenceTriplet> triplets;
  jsonl::for_each(
      triplets_path,
      [&](std::size_t line, const json& j) {
        try {
          triplets.push_back(triplet_from_json(j));
        } catch (const Error& e) {
          errors.push_back("line " + std::to_string(line) + ": " + e.what());
        }
      },
      [&](std::size_t line, const std::string& msg) { errors.push_back("line " + std::to_string(line) + ": " + msg); });
  log_errors(errors);
  if (triplets.empty()) throw Error(ErrorCode::InvalidArgument, "train: no usable triplets in " + triplets_path.string());

  const json config = {{"command", "train"},
                       {"triplets", triplets_path.string()},
                       {"taxonomy", taxonomy_echo(o)},
                       {"training", cfg.to_json()}};

  std::optional<adto::TrainResult> trained;
  try {
    trained = adto::train(triplets, spec, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Divergence) throw;
    detail::log().error("train: {}", e.what());
    return {{"command", "train"}, {"error", e.what()}, {"exit_code", kExitData}, {"config", config}};
  }
  const adto::TrainResult& result = *trained;

  json checkpoints = json::object();
  for (const auto& [aspect, model] : result.models) {
    const fs::path path = out_dir / (aspect + ".json");
    jsonl::write_json_file(path, adto::checkpoint_to_json(aspect, result.vocab, model, cfg));
    checkpoints[aspect] = path.string();
  }
  const fs::path log_path = out_dir / "train_log.jsonl";
  jsonl::Writer log(log_path);
  json final_entries = json::object();
  for (const auto& e : result.log) {
    log.write({{"aspect", e.aspect}, {"step", e.step}, {"loss", e.loss}, {"mean_margin", e.mean_margin}});
    final_entries[e.aspect] = {{"step", e.step}, {"loss", e.loss}, {"mean_margin", e.mean_margin}};
  }
  log.close();
  write_sidecar(log_path, config);
  for (const auto& [aspect, e] : final_entries.items())
    detail::log().info("train: {} final loss {:.6f} margin {:.6f}", aspect, e.at("loss").get<double>(),
                        e.at("mean_margin").get<double>());

  return {{"command", "train"},
          {"checkpoints", checkpoints},
          {"log", log_path.string()},
          {"final", final_entries},
          {"vocab_size", result.vocab.size()},
          {"errors", errors},
          {"exit_code", errors.empty() ? kExitOk : kExitData},
          {"config", config}};
}

// ---------------------------------------------------------------------------

namespace {

json rate_or_null(const std::function<double()>& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Undefined) throw;
    return nullptr;
  }
}

void csv_grouped(std::ostream& out, const std::string& metric, const GroupedPercent& g) {
  for (const auto& [sub, v] : g.sub_aspect) out << metric << ",sub_aspect," << sub << "," << json(v).dump() << "," << g.counts.at(sub) << "\n";
  for (const auto& [a, v] : g.aspect) out << metric << ",aspect," << a << "," << json(v).dump() << ",\n";
}

}  // namespace

json run_metrics(const json& options) {
  const Options o(options, "metrics", {"bundles", "labels", "out", "csv", "taxonomy", "matches", "compare"});
  const fs::path bundles_path = o.input("bundles");
  const fs::path labels_path = o.input("labels");
  const fs::path out_path = o.output("out");
  const fs::path csv_path = o.has("csv") ? o.output("csv") : fs::path(out_path).replace_extension(".csv");
  const Taxonomy spec = load_spec(o);
  const std::optional<fs::path> matches_path = o.has("matches") ? std::optional(o.input("matches")) : std::nullopt;
  const std::optional<fs::path> compare_path = o.has("compare") ? std::optional(o.input("compare")) : std::nullopt;

  const json config = {{"command", "metrics"},
                       {"bundles", bundles_path.string()},
                       {"labels", labels_path.string()},
                       {"taxonomy", taxonomy_echo(o)},
                       {"matches", matches_path ? json(matches_path->string()) : json(nullptr)},
                       {"compare", compare_path ? json(compare_path->string()) : json(nullptr)},
                       {"icc_form", kIccForm}};

  std::vector<std::string> errors;
  const auto bundles = read_bundles(bundles_path, &errors);
  const auto labels = read_labels(labels_path, &errors);
  log_errors(errors);

  std::vector<std::string> unjoined;
  std::set<std::string> bundle_ids;
  for (const auto& b : bundles) {
    bundle_ids.insert(b.sample_id);
    if (!labels.count(b.sample_id)) unjoined.push_back(b.sample_id);
  }
  for (const auto& [id, _] : labels)
    if (!bundle_ids.count(id)) unjoined.push_back(id);
  if (!unjoined.empty()) {
    for (const auto& id : unjoined) detail::log().error("metrics: sample {} has no matching bundle or label", id);
    return {{"command", "metrics"}, {"unjoined", unjoined}, {"errors", errors}, {"exit_code", kExitData},
            {"config", config}};
  }

  std::vector<LabeledPair> pairs;
  struct Cell {
    std::string aspect;
    double human;
    double model;
  };
  std::vector<Cell> cells;
  for (const auto& b : bundles) {
    const auto& human = labels.at(b.sample_id);
    for (const auto& [sub, scores] : human) {
      const Aspect* parent = spec.parent_of(sub);
      if (!parent) {
        errors.push_back("labels for " + b.sample_id + ": unknown sub-aspect " + sub);
        continue;
      }
      if (scores.size() != b.per_response.size()) {
        errors.push_back("labels for " + b.sample_id + "/" + sub + ": expected " +
                         std::to_string(b.per_response.size()) + " scores");
        continue;
      }
      bool present = true;
      for (const auto& r : b.per_response) present = present && r.count(sub);
      if (!present) continue;  // incomplete bundle: nothing to compare for this sub-aspect
      for (std::size_t r = 0; r < scores.size(); ++r)
        cells.push_back({parent->code, static_cast<double>(scores[r]),
                         static_cast<double>(b.per_response[r].at(sub).score)});
      if (scores.size() == 2)
        pairs.push_back({b.sample_id, sub, {scores[0], scores[1]},
                         {b.per_response[0].at(sub).score, b.per_response[1].at(sub).score}});
    }
  }

  json report = {{"config", config}, {"samples", bundles.size()}, {"pairs", pairs.size()}, {"icc_form", kIccForm}};
  std::ostringstream csv;
  csv << "metric,group,key,value,count\n";

  if (!pairs.empty()) {
    const auto acc = pairwise_accuracy(pairs, spec);
    report["pairwise_accuracy"] = acc.to_json();
    csv_grouped(csv, "pairwise_accuracy", acc);
  } else {
    report["pairwise_accuracy"] = nullptr;
  }

  auto correlation_block = [&](const std::string& aspect_filter) {
    std::vector<double> h, m;
    RaterMatrix matrix{{}, {"human", "model"}};
    for (const auto& c : cells) {
      if (!aspect_filter.empty() && c.aspect != aspect_filter) continue;
      h.push_back(c.human);
      m.push_back(c.model);
      matrix.rows.push_back({c.human, c.model});
    }
    json block = {{"n", h.size()}};
    block["pearson"] = h.size() >= 2 ? rate_or_null([&] { return pearson(h, m); }) : json(nullptr);
    block["icc"] = matrix.rows.size() >= 2 ? rate_or_null([&] { return icc(matrix); }) : json(nullptr);
    return block;
  };
  json corr = {{"overall", correlation_block("")}, {"aspect", json::object()}};
  for (const auto& a : spec.aspects) corr["aspect"][a.code] = correlation_block(a.code);
  report["correlation"] = corr;
  auto csv_corr = [&](const std::string& group, const std::string& key, const json& block) {
    for (const char* metric : {"pearson", "icc"})
      if (!block.at(metric).is_null())
        csv << metric << "," << group << "," << key << "," << block.at(metric).dump() << "," << block.at("n").dump()
            << "\n";
  };
  csv_corr("overall", "all", corr["overall"]);
  for (const auto& [a, block] : corr["aspect"].items()) csv_corr("aspect", a, block);

  report["reference_match"] = nullptr;
  if (matches_path) {
    std::vector<MatchJudgment> judgments;
    jsonl::for_each(
        *matches_path,
        [&](std::size_t line, const json& j) {
          try {
            judgments.push_back({j.at("sample_id").get<std::string>(), j.at("sub_aspect").get<std::string>(),
                                 j.at("judge").get<std::string>(), j.at("matched").get<bool>()});
          } catch (const json::exception& e) {
            errors.push_back("matches line " + std::to_string(line) + ": " + e.what());
          }
        },
        [&](std::size_t line, const std::string& msg) {
          errors.push_back("matches line " + std::to_string(line) + ": " + msg);
        });
    if (!judgments.empty()) {
      const auto rm = reference_match_aggregate(judgments, spec);
      report["reference_match"] = rm.to_json();
      csv_grouped(csv, "reference_match", rm);
    }
  }

  report["win_tie_lose"] = nullptr;
  if (compare_path) {
    const auto other = read_bundles(*compare_path, &errors);
    json wtl = json::object();
    for (const auto& [scenario, r] : win_tie_lose(bundles, other, spec)) {
      wtl[scenario] = {{"win", r.win}, {"tie", r.tie}, {"lose", r.lose}, {"samples", r.samples}};
      for (const auto& [k, v] : {std::pair{"win", r.win}, {"tie", r.tie}, {"lose", r.lose}})
        csv << "win_tie_lose," << scenario << "," << k << "," << json(v).dump() << "," << r.samples << "\n";
    }
    report["win_tie_lose"] = wtl;
  }

  report["errors"] = errors;
  jsonl::write_json_file(out_path, report);
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "metrics: cannot write " + csv_path.string());
    out << csv.str();
  }
  return {{"command", "metrics"},
          {"report", out_path.string()},
          {"csv", csv_path.string()},
          {"pairs", pairs.size()},
          {"errors", errors},
          {"exit_code", errors.empty() ? kExitOk : kExitData},
          {"config", config}};
}

// ---------------------------------------------------------------------------

json run_bias(const json& options) {
  const Options o(options, "bias", {"samples", "out", "probe", "aspect", "labels", "taxonomy", "backend", "jobs"});
  const fs::path samples_path = o.input("samples");
  const fs::path out_path = o.output("out");
  const Taxonomy spec = load_spec(o);
  const BackendConfig backend_cfg = load_backend(o);
  const auto probe = o.get<std::string>("probe", "both");
  if (probe != "position" && probe != "verbosity" && probe != "both") o.fail("probe must be position, verbosity or both");
  const auto aspect = o.get<std::string>("aspect", "REL");
  if (!spec.find_aspect(aspect)) o.fail("unknown aspect " + aspect);
  const bool want_verbosity = probe != "position";
  std::optional<fs::path> labels_path;
  if (want_verbosity) {
    if (!o.has("labels")) o.fail("the verbosity probe needs human labels");
    labels_path = o.input("labels");
  }
  RunOptions run;
  run.workers = clamp_jobs(o);

  const json config = {{"command", "bias"},
                       {"samples", samples_path.string()},
                       {"probe", probe},
                       {"aspect", aspect},
                       {"labels", labels_path ? json(labels_path->string()) : json(nullptr)},
                       {"taxonomy", taxonomy_echo(o)},
                       {"backend", backend_config_to_json(backend_cfg)},
                       {"jobs", run.workers}};

  std::vector<std::string> errors;
  auto samples = read_samples(samples_path, &errors);
  std::erase_if(samples, [&](const Sample& s) {
    if (s.responses.size() == 2) return false;
    errors.push_back("sample " + s.id + ": needs two responses");
    return true;
  });
  log_errors(errors);

  const ExpertRegistry registry(spec, make_backend(backend_cfg));
  json report = {{"config", config}, {"samples", samples.size()}};
  try {
    if (probe != "verbosity") report["position"] = position_bias_probe(samples, spec, registry, aspect, run).to_json();
    if (want_verbosity) {
      const auto labels = read_labels(*labels_path, &errors);
      std::vector<HumanLabeledSample> labeled;
      for (const auto& s : samples) {
        auto it = labels.find(s.id);
        if (it == labels.end()) continue;
        HumanLabeledSample item{s, {}};
        for (const auto& [sub, scores] : it->second)
          if (scores.size() == 2) item.human_scores[sub] = {scores[0], scores[1]};
        labeled.push_back(std::move(item));
      }
      report["verbosity"] = verbosity_bias_probe(labeled, spec, registry, aspect, run).to_json();
    }
  } catch (const PartialBundleError& e) {
    detail::log().error("bias: {}", e.what());
    return {{"command", "bias"},
            {"error", e.what()},
            {"exit_code", e.backend_failure() ? kExitBackend : kExitData},
            {"config", config}};
  } catch (const Error& e) {
    if (!is_backend_code(e.code())) throw;
    detail::log().error("bias: {}", e.what());
    return {{"command", "bias"}, {"error", e.what()}, {"exit_code", kExitBackend}, {"config", config}};
  }
  report["errors"] = errors;
  jsonl::write_json_file(out_path, report);
  json summary = report;
  summary["command"] = "bias";
  summary["report"] = out_path.string();
  summary["exit_code"] = errors.empty() ? kExitOk : kExitData;
  return summary;
}

// ---------------------------------------------------------------------------

json run_gradcheck(const json& options) {
  const Options o(options, "gradcheck", {"instances", "coordinates", "eps", "seed", "break_gradient"});
  adto::GradCheckOptions g;
  g.instances = o.get<int>("instances", g.instances);
  g.coordinates = o.get<int>("coordinates", g.coordinates);
  g.eps = o.get<double>("eps", g.eps);
  g.seed = o.get<std::uint64_t>("seed", g.seed);
  g.break_gradient = o.get<bool>("break_gradient", false);
  if (!(g.eps > 0)) o.fail("eps must be positive");

  const auto report = adto::gradient_check(g);
  const bool gating = g.eps == kGradGatingEps;
  const bool pass = report.max_relative_error <= kGradTolerance && report.frozen_blocks_zero;
  if (!gating) detail::log().warn("gradcheck: eps {} differs from {}; result is informational", g.eps, kGradGatingEps);
  return {{"command", "gradcheck"},
          {"max_relative_error", report.max_relative_error},
          {"coordinates_checked", report.coordinates_checked},
          {"instances", report.instances},
          {"frozen_blocks_zero", report.frozen_blocks_zero},
          {"tolerance", kGradTolerance},
          {"gating", gating},
          {"pass", pass},
          {"exit_code", (pass || !gating) ? kExitOk : kExitData},
          {"config",
           {{"instances", g.instances},
            {"coordinates", g.coordinates},
            {"eps", g.eps},
            {"seed", g.seed},
            {"break_gradient", g.break_gradient}}}};
}

}  // namespace rubricjudge::pipeline
