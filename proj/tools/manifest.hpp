#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace sti::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Record of one command invocation. `argv` is the effective argument list
// (after config expansion) so that replay can re-run it verbatim.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv);

  void parameter(const std::string& key, nlohmann::json value) { params_[key] = std::move(value); }
  void seed(const std::string& key, std::uint64_t value) { seeds_[key] = value; }
  void input(const std::filesystem::path& p);
  void output(const std::filesystem::path& p);

  // Adds output digests and wall-clock time and writes the file atomically.
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json params_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point start_;
};

nlohmann::json read_manifest(const std::filesystem::path& path);

}  // namespace sti::cli
