#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oir {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Which part of the dialogue a feature looks at. Context configurations
// decide which scopes a model may see.
enum class FeatureScope { Current, Past, Future };

// Named, ordered real-valued features with a presence mask. Absent entries
// are imputed later; their value is kMissing until then.
class FeatureVector {
 public:
  void set(std::string name, double value);
  void set_missing(std::string name);
  void set_optional(std::string name, std::optional<double> value) {
    if (value) set(std::move(name), *value); else set_missing(std::move(name));
  }
  void append(const FeatureVector& other);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::uint8_t>& present() const { return present_; }
  std::vector<double>& mutable_values() { return values_; }
  std::vector<std::uint8_t>& mutable_present() { return present_; }

  std::optional<std::size_t> index(std::string_view name) const;
  // Value when present, nullopt when imputed. Throws DataError on unknown name.
  std::optional<double> get(std::string_view name) const;
  // Raw stored value, whether present or imputed.
  double value(std::string_view name) const;
  bool is_present(std::string_view name) const;

  // Reorders to `order`; names absent from this vector become missing.
  FeatureVector reordered(const std::vector<std::string>& order) const;

 private:
  std::size_t slot(std::string&& name);

  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
};

// One row per segment id over a fixed column list.
struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint8_t>> present;

  void add_row(std::string id, const FeatureVector& fv);
  std::optional<std::size_t> row(std::string_view id) const;
  FeatureVector vector_at(std::size_t r) const;
  std::size_t column(std::string_view name) const;
};

// CSV layout: `segment_id`, then the feature columns, then one `<name>_present`
// 0/1 column per feature. Missing values are written as `nan`.
void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
std::string feature_csv_text(const FeatureTable& table);
FeatureTable read_feature_csv(const std::filesystem::path& path);

// Shortest round-trip text for a double ("nan" for NaN).
std::string format_double(double v);

}  // namespace oir
