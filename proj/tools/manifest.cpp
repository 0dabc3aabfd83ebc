#include "manifest.hpp"

#include "sti/error.hpp"
#include "sti/file_util.hpp"

namespace sti::cli {

Manifest::Manifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

void Manifest::input(const std::filesystem::path& p) { inputs_[p.string()] = file_digest(p); }

void Manifest::output(const std::filesystem::path& p) { outputs_.push_back(p); }

void Manifest::write(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["tool"] = "sti";
  j["version"] = kToolVersion;
  j["command"] = command_;
  j["argv"] = argv_;
  j["parameters"] = params_;
  j["seeds"] = seeds_;
  j["inputs"] = inputs_;
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& p : outputs_) outs[p.string()] = file_digest(p);
  j["outputs"] = outs;
  j["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  write_file_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  try {
    auto j = nlohmann::json::parse(read_file(path));
    if (!j.contains("argv") || !j["argv"].is_array()) throw InputError("manifest has no argv list");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace sti::cli
