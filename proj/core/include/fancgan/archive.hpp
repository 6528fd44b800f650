#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fancgan/tensor.hpp"

namespace fancgan::io {

// Single-file container: magic, schema version, a JSON header carrying
// string metadata and the tensor table, then raw little-endian doubles.
struct Archive {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t);
  // Throws SchemaError when absent.
  const Tensor& tensor(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

// Writes to a temporary sibling and renames it into place.
void write_archive(const std::filesystem::path& path, const Archive& archive,
                   std::uint32_t schema_version);

// Throws SchemaError on bad magic, version mismatch, malformed header or a
// truncated payload. Nothing is returned on failure.
Archive read_archive(const std::filesystem::path& path, std::uint32_t expected_schema_version);

// Shortest round-trip decimal form.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& field);
long long parse_int(const std::string& s, const std::string& field);

}  // namespace fancgan::io
