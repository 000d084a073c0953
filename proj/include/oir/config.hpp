#pragma once

// Run configuration (a TOML subset: [section] headers, key = value with
// strings, integers, floats, booleans and flat arrays, # comments) and the
// manifest every pipeline output directory carries.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace oir::config {

inline constexpr const char* kVersion = "0.1.0";

using Scalar = std::variant<bool, std::int64_t, double, std::string>;

struct Value {
  std::variant<Scalar, std::vector<Scalar>> v;

  bool is_array() const { return v.index() == 1; }
  const Scalar& scalar() const { return std::get<0>(v); }
  const std::vector<Scalar>& array() const { return std::get<1>(v); }
};

class Config {
 public:
  // Throws BadConfig naming the line.
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, Value value);

  // Typed accessors: nullopt when absent, BadConfig on a type mismatch.
  // Integers are accepted where floats are expected.
  std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& section, const std::string& key) const;
  std::optional<double> get_double(const std::string& section, const std::string& key) const;
  std::optional<bool> get_bool(const std::string& section, const std::string& key) const;
  std::optional<std::vector<double>> get_doubles(const std::string& section, const std::string& key) const;
  std::optional<std::vector<std::string>> get_strings(const std::string& section, const std::string& key) const;

  const std::map<std::string, std::map<std::string, Value>>& sections() const { return data_; }

  // Sorted "section.key = value" lines, stable across formatting choices.
  std::string canonical() const;
  std::string hash() const;

 private:
  const Value* find(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Value>> data_;
};

// fnv1a64 of the file bytes, hex; throws Io.
std::string file_hash(const std::filesystem::path& path);
std::string utc_timestamp();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;    // path -> content hash
  std::map<std::string, std::string> versions;  // component -> version
  std::map<std::string, std::string> parameters;
  std::vector<std::string> outputs;              // relative to the output directory
  std::string started;
  std::string finished;

  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  // Writes <dir>/manifest.json, replacing any earlier manifest.
  void write(const std::filesystem::path& dir) const;
};

inline constexpr const char* kManifestName = "manifest.json";

}  // namespace oir::config
