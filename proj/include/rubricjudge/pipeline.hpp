// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

/// File-level runners behind the command-line subcommands. Each takes an
/// options document (unknown keys rejected, missing keys defaulted) and
/// returns a summary document whose "exit_code" follows the CLI contract:
/// 0 success, 1 partial or data errors, 3 backend exhaustion. Problems
/// found before any work starts (bad options, unreadable inputs) are thrown
/// as Error(InvalidArgument) or Error(Io).
///
/// JSONL outputs get a sidecar "<out>.config.json" holding the effective
/// options; JSON outputs embed them under "config".
namespace rubricjudge::pipeline {

/// samples, out, [taxonomy], [backend], [mode], [jobs], [templates],
/// [max_output_tokens]
nlohmann::json run_evaluate(const nlohmann::json& options);

/// bundles, out, seed, [taxonomy], [mix], [mirrored], [delta_domain],
/// [max_resamples]
nlohmann::json run_prefdata(const nlohmann::json& options);

/// triplets, out_dir, seed, [taxonomy], [training]
nlohmann::json run_train(const nlohmann::json& options);

/// bundles, labels, out, [csv], [taxonomy], [matches], [compare]
nlohmann::json run_metrics(const nlohmann::json& options);

/// samples, out, [probe], [aspect], [labels], [taxonomy], [backend], [jobs]
nlohmann::json run_bias(const nlohmann::json& options);

/// [instances], [coordinates], [eps], [seed], [break_gradient]
nlohmann::json run_gradcheck(const nlohmann::json& options);

/// Tolerance the gradient check gates on, at its default step size.
inline constexpr double kGradTolerance = 1e-6;
inline constexpr double kGradGatingEps = 1e-5;

}  // namespace rubricjudge::pipeline
