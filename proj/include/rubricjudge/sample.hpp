// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rubricjudge {

enum class Mode { Pairwise, Single };

std::string_view to_string(Mode mode) noexcept;
/// Accepts "pairwise" / "single"; throws Error(InvalidArgument) otherwise.
Mode mode_from_string(std::string_view text);

/// A question with one or two candidate responses to be judged.
struct Sample {
  std::string id;
  std::string question;
  std::vector<std::string> responses;
  std::optional<std::string> reference_info;
  std::optional<std::string> scenario;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws Error(InvalidArgument) naming the broken invariant.
void validate_sample(const Sample& s);

nlohmann::json sample_to_json(const Sample& s);
/// Parses and validates.
Sample sample_from_json(const nlohmann::json& j);

}  // namespace rubricjudge
