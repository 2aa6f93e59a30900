#include "report.hpp"

#include <fstream>

#include "lwnd/checksum.hpp"
#include "lwnd/errors.hpp"

namespace lwnd::cli {

Report::Report(std::string command, std::string resolved_config, std::uint64_t seed, std::filesystem::path file)
    : file_(std::move(file)) {
  doc_["command"] = std::move(command);
  doc_["status"] = "started";
  doc_["seed"] = seed;
  doc_["config"] = std::move(resolved_config);
  doc_["inputs"] = nlohmann::ordered_json::array();
  doc_["outputs"] = nlohmann::ordered_json::array();
  doc_["results"] = nlohmann::ordered_json::object();
}

void Report::add_input(const std::filesystem::path& path) {
  doc_["inputs"].push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void Report::add_output(const std::filesystem::path& path) {
  doc_["outputs"].push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
}

void Report::save(const std::string& status) {
  doc_["status"] = status;
  if (file_.empty()) return;
  std::ofstream out(file_, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + file_.string());
  out << doc_.dump(2) << '\n';
  if (!out) throw IoError("failed writing report " + file_.string());
}

}  // namespace lwnd::cli
