// SPDX-License-Identifier: Apache-2.0
#include "rubricjudge/jsonl.hpp"

#include "rubricjudge/error.hpp"

namespace rubricjudge::jsonl {

using nlohmann::json;

void for_each(const std::filesystem::path& path, const std::function<void(std::size_t, const json&)>& fn,
              const std::function<void(std::size_t, const std::string&)>& on_error) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      if (!on_error)
        throw Error(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      on_error(line_no, e.what());
      continue;
    }
    fn(line_no, record);
  }
}

std::vector<json> read_all(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each(path, [&](std::size_t, const json& j) { out.push_back(j); });
  return out;
}

std::string dump(const json& record) {
  // nlohmann objects are std::map backed, so keys come out sorted.
  return record.dump(-1, ' ', false, json::error_handler_t::strict);
}

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

void Writer::write(const json& record) {
  out_ << dump(record) << '\n';
  if (!out_) throw Error(ErrorCode::Io, "write failed: " + path_.string());
}

void Writer::close() {
  out_.close();
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace rubricjudge::jsonl
