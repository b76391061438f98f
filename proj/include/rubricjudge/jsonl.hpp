// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rubricjudge::jsonl {

/// Calls `fn(line_number, record)` for every non-blank line (1-based line
/// numbers). Lines that fail to parse go to `on_error(line_number, message)`
/// when given; otherwise they raise Error(InvalidArgument).
void for_each(const std::filesystem::path& path,
              const std::function<void(std::size_t, const nlohmann::json&)>& fn,
              const std::function<void(std::size_t, const std::string&)>& on_error = {});

std::vector<nlohmann::json> read_all(const std::filesystem::path& path);

/// Compact, key-sorted serialization; identical records give identical bytes.
std::string dump(const nlohmann::json& record);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void write(const nlohmann::json& record);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace rubricjudge::jsonl
