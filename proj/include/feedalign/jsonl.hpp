#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "feedalign/errors.hpp"
#include "feedalign/text.hpp"

namespace feedalign {

using json = nlohmann::ordered_json;

// One parsed JSONL line plus its 1-based position, kept so schema errors can
// name the offending line.
struct JsonlLine {
  std::size_t line_number = 0;
  json value;
};

inline std::vector<JsonlLine> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path, 0, "cannot open file");
  std::vector<JsonlLine> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json value = json::parse(line, nullptr, false);
    if (value.is_discarded())
      throw IngestError(path, line_number, "malformed JSON");
    out.push_back({line_number, std::move(value)});
  }
  return out;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& records) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  for (const json& rec : records) out << rec.dump() << "\n";
  if (!out) throw Error("write failed: " + path);
}

// Field accessors that raise IngestError with path/line context.

inline const json& require_field(const json& rec, const std::string& key,
                                 const std::string& path, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end())
    throw IngestError(path, line, "missing field \"" + key + "\"");
  return *it;
}

inline std::string require_string(const json& rec, const std::string& key,
                                  const std::string& path, std::size_t line) {
  const json& v = require_field(rec, key, path, line);
  if (!v.is_string())
    throw IngestError(path, line, "field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

inline bool require_bool(const json& rec, const std::string& key,
                         const std::string& path, std::size_t line) {
  const json& v = require_field(rec, key, path, line);
  if (!v.is_boolean())
    throw IngestError(path, line, "field \"" + key + "\" must be a boolean");
  return v.get<bool>();
}

// Collects every field of `rec` that is not in `known` so unknown fields can
// ride along unchanged through a read/write round trip.
inline json collect_extras(const json& rec, const std::vector<std::string>& known) {
  json extras = json::object();
  for (auto it = rec.begin(); it != rec.end(); ++it) {
    bool is_known = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) extras[it.key()] = it.value();
  }
  return extras;
}

inline void append_extras(json& rec, const json& extras) {
  if (!extras.is_object()) return;
  for (auto it = extras.begin(); it != extras.end(); ++it) rec[it.key()] = it.value();
}

}  // namespace feedalign
