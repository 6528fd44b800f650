#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fancgan::cli {

std::string sha256_file(const std::filesystem::path& path);

// Record of one command invocation, written as <out>/manifest.json before
// the heavy work starts and rewritten with checksums once it finishes.
class RunManifest {
 public:
  RunManifest(std::string command, std::filesystem::path out_dir);

  void set_argument(const std::string& key, const std::string& value);
  void set_config(const std::string& resolved_ini);
  void set_seed(std::uint64_t seed);
  void add_input(const std::string& key, const std::filesystem::path& path);
  void set_note(const std::string& key, const std::string& value);

  std::filesystem::path path() const { return out_dir_ / "manifest.json"; }

  // status "running"
  void write_started();
  // Checksums every regular file under out_dir except the manifest itself.
  void write_completed();

  struct Loaded {
    std::string command;
    std::map<std::string, std::string> arguments;
    std::string config;
    std::uint64_t seed = 0;
    std::string status;
    std::map<std::string, std::string> checksums;
  };
  static Loaded read(const std::filesystem::path& path);

 private:
  void write(const std::string& status, bool with_checksums);

  std::string command_;
  std::filesystem::path out_dir_;
  std::map<std::string, std::string> arguments_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> notes_;
  std::string config_;
  std::uint64_t seed_ = 0;
  std::string started_at_;
};

}  // namespace fancgan::cli
