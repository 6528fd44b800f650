#include "fancgan/archive.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "fancgan/error.hpp"

namespace fancgan::io {
namespace {

constexpr std::array<char, 8> kMagic{'F', 'C', 'G', 'A', 'R', 'C', 'H', '\0'};

static_assert(std::endian::native == std::endian::little, "archive payload assumes little-endian");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void Archive::add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }

const Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw SchemaError("archive has no tensor '" + name + "'");
}

const std::string& Archive::meta_at(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw SchemaError("archive metadata lacks field '" + key + "'");
  return it->second;
}

void write_archive(const std::filesystem::path& path, const Archive& archive,
                   std::uint32_t schema_version) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  auto& table = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  header["payload_doubles"] = offset;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, schema_version);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& entry : archive.tensors) {
      const Tensor& t = entry.second;
      os.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    os.flush();
    if (!os) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

Archive read_archive(const std::filesystem::path& path, std::uint32_t expected_schema_version) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SchemaError("cannot open archive '" + path.string() + "'");
  const auto file_size = std::filesystem::file_size(path);

  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw SchemaError("'" + path.string() + "' is not a fancgan archive");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!get(is, version) || !get(is, header_len)) throw SchemaError("truncated archive header");
  if (version != expected_schema_version) {
    throw SchemaError("archive schema_version " + std::to_string(version) + " but this build reads " +
                      std::to_string(expected_schema_version));
  }
  const std::uint64_t prefix = kMagic.size() + sizeof(version) + sizeof(header_len);
  if (header_len > file_size - prefix) throw SchemaError("truncated archive header");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw SchemaError("truncated archive header");
  }

  Archive out;
  std::uint64_t total = 0;
  std::vector<std::pair<std::string, Shape>> table;
  try {
    const auto header = nlohmann::json::parse(text);
    out.meta = header.at("meta").get<std::map<std::string, std::string>>();
    total = header.at("payload_doubles").get<std::uint64_t>();
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      Shape shape = entry.at("shape").get<Shape>();
      if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
        throw SchemaError("archive tensor table is not contiguous");
      }
      expected_offset += shape_numel(shape);
      table.emplace_back(entry.at("name").get<std::string>(), std::move(shape));
    }
    if (expected_offset != total) throw SchemaError("archive payload size disagrees with tensor table");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed archive header: ") + e.what());
  }
  if (file_size != prefix + header_len + total * sizeof(double)) {
    throw SchemaError("archive '" + path.string() + "' is truncated or has trailing bytes");
  }
  for (auto& [name, shape] : table) {
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw SchemaError("truncated archive payload");
    }
    out.add(std::move(name), std::move(t));
  }
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& s, const std::string& field) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("field '" + field + "': '" + s + "' is not a number");
  }
  return v;
}

long long parse_int(const std::string& s, const std::string& field) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("field '" + field + "': '" + s + "' is not an integer");
  }
  return v;
}

}  // namespace fancgan::io
