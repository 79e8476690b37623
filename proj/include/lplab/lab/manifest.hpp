#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lplab/arm/dataset.hpp"
#include "lplab/core/csv.hpp"
#include "lplab/core/error.hpp"
#include "lplab/genmod/model_io.hpp"
#include "lplab/nn/checkpoint.hpp"

namespace lplab::lab {

/// The workdir was produced by a different configuration and --force was not given.
class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

struct StageRecord {
  std::string status;  // "success" or "failed"
  double wall_seconds = 0.0;
  std::vector<std::string> artifacts;  // relative to the workdir
  std::string error;
};

/// True when the file exists and parses according to its extension.
inline bool artifact_valid(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) return false;
  try {
    const auto ext = path.extension().string();
    if (ext == ".json") (void)genmod::read_json(path.string());
    else if (ext == ".csv") (void)csv::read(path.string());
    else if (ext == ".lpck") (void)nn::load_checkpoint(path.string());
    else if (ext == ".lpds") (void)arm::load_dataset(path.string());
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// manifest.json in the workdir. All writes go through one mutex and rewrite the whole file.
class Manifest {
 public:
  /// Opens or creates the manifest. A recorded hash different from `config_hash`
  /// raises ConfigMismatch unless `force`, which discards the old stage records.
  Manifest(std::filesystem::path workdir, std::string config_hash, bool force)
      : workdir_(std::move(workdir)), hash_(std::move(config_hash)) {
    std::filesystem::create_directories(workdir_);
    const auto path = file();
    if (std::filesystem::exists(path)) {
      const auto j = genmod::read_json(path.string());
      const auto recorded = j.value("config_hash", std::string());
      if (recorded != hash_) {
        if (!force)
          throw ConfigMismatch("workdir '" + workdir_.string() + "' was produced by config " + recorded + ", current config is " +
                               hash_ + "; rerun with --force to overwrite");
      } else {
        for (const auto& [name, rec] : j.at("stages").items()) {
          StageRecord r;
          r.status = rec.at("status").get<std::string>();
          r.wall_seconds = rec.at("wall_seconds").get<double>();
          r.artifacts = rec.at("artifacts").get<std::vector<std::string>>();
          r.error = rec.value("error", std::string());
          stages_[name] = r;
        }
      }
    }
    write_locked();
  }

  [[nodiscard]] const std::filesystem::path& workdir() const { return workdir_; }
  [[nodiscard]] std::filesystem::path file() const { return workdir_ / "manifest.json"; }
  [[nodiscard]] const std::string& config_hash() const { return hash_; }

  /// Successful record whose artifacts all exist and parse.
  [[nodiscard]] bool complete(const std::string& stage) const {
    std::lock_guard lock(mutex_);
    const auto it = stages_.find(stage);
    if (it == stages_.end() || it->second.status != "success") return false;
    for (const auto& a : it->second.artifacts)
      if (!artifact_valid(workdir_ / a)) return false;
    return true;
  }

  [[nodiscard]] std::optional<StageRecord> record(const std::string& stage) const {
    std::lock_guard lock(mutex_);
    const auto it = stages_.find(stage);
    if (it == stages_.end()) return std::nullopt;
    return it->second;
  }

  void set(const std::string& stage, StageRecord rec) {
    std::lock_guard lock(mutex_);
    stages_[stage] = std::move(rec);
    write_locked();
  }

  /// Runs `body` unless the stage is complete and `force` is false. `body` returns
  /// the artifacts it wrote, relative to the workdir. Errors are recorded and rethrown.
  /// Returns false when skipped.
  bool run(const std::string& stage, bool force, const std::function<std::vector<std::string>()>& body) {
    if (!force && complete(stage)) return false;
    const auto start = std::chrono::steady_clock::now();
    StageRecord rec;
    try {
      rec.artifacts = body();
      rec.status = "success";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      set(stage, rec);
      throw Error(stage + ": " + e.what());
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    set(stage, rec);
    return true;
  }

 private:
  void write_locked() const {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, r] : stages_) {
      nlohmann::json rec = {{"status", r.status}, {"wall_seconds", r.wall_seconds}, {"artifacts", r.artifacts}};
      if (!r.error.empty()) rec["error"] = r.error;
      stages[name] = rec;
    }
    const auto tmp = workdir_ / "manifest.json.tmp";
    genmod::write_json(tmp.string(), {{"config_hash", hash_}, {"stages", stages}});
    std::filesystem::rename(tmp, file());
  }

  std::filesystem::path workdir_;
  std::string hash_;
  std::map<std::string, StageRecord> stages_;
  mutable std::mutex mutex_;
};

}  // namespace lplab::lab
