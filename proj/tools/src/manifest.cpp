#include "fancgan/cli/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>

#include "fancgan/error.hpp"

namespace fancgan::cli {
namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "' for checksumming");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

RunManifest::RunManifest(std::string command, std::filesystem::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), started_at_(utc_now()) {}

void RunManifest::set_argument(const std::string& key, const std::string& value) { arguments_[key] = value; }
void RunManifest::set_config(const std::string& resolved_ini) { config_ = resolved_ini; }
void RunManifest::set_seed(std::uint64_t seed) { seed_ = seed; }
void RunManifest::add_input(const std::string& key, const std::filesystem::path& path) {
  inputs_[key] = std::filesystem::absolute(path).lexically_normal().string();
}
void RunManifest::set_note(const std::string& key, const std::string& value) { notes_[key] = value; }

void RunManifest::write_started() { write("running", false); }
void RunManifest::write_completed() { write("complete", true); }

void RunManifest::write(const std::string& status, bool with_checksums) {
  std::filesystem::create_directories(out_dir_);
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["status"] = status;
  j["arguments"] = arguments_;
  j["seed"] = seed_;
  j["inputs"] = inputs_;
  j["output_dir"] = std::filesystem::absolute(out_dir_).lexically_normal().string();
  j["config"] = config_;
  if (!notes_.empty()) j["notes"] = notes_;
  j["started_at"] = started_at_;
  if (with_checksums) {
    std::map<std::string, std::string> sums;
    for (const auto& e : std::filesystem::recursive_directory_iterator(out_dir_)) {
      if (!e.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(e.path(), out_dir_).generic_string();
      if (rel == "manifest.json" || rel == "manifest.json.tmp") continue;
      sums[rel] = sha256_file(e.path());
    }
    j["checksums"] = sums;
    j["finished_at"] = utc_now();
  }
  const auto tmp = out_dir_ / "manifest.json.tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot write manifest '" + tmp.string() + "'");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing manifest '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path());
}

RunManifest::Loaded RunManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    Loaded m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::map<std::string, std::string>>();
    m.config = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.status = j.at("status").get<std::string>();
    if (j.contains("checksums")) m.checksums = j["checksums"].get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

}  // namespace fancgan::cli
