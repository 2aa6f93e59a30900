#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace lwnd::cli {

/// JSON run record: command, resolved configuration, seed, checksums of
/// every file read or written, and command-specific results.
class Report {
 public:
  Report(std::string command, std::string resolved_config, std::uint64_t seed, std::filesystem::path file);

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  nlohmann::ordered_json& results() { return doc_["results"]; }

  /// Writes the record (if a report path was given); `status` is "started" or "ok".
  void save(const std::string& status);

 private:
  nlohmann::ordered_json doc_;
  std::filesystem::path file_;
};

}  // namespace lwnd::cli
