#include "oir/features.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir {

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

std::size_t FeatureVector::slot(std::string&& name) {
  if (auto i = index(name)) return *i;
  names_.push_back(std::move(name));
  values_.push_back(kMissing);
  present_.push_back(0);
  return names_.size() - 1;
}

void FeatureVector::set(std::string name, double value) {
  const std::size_t i = slot(std::move(name));
  values_[i] = value;
  present_[i] = 1;
}

void FeatureVector::set_missing(std::string name) {
  const std::size_t i = slot(std::move(name));
  values_[i] = kMissing;
  present_[i] = 0;
}

void FeatureVector::append(const FeatureVector& other) {
  for (std::size_t i = 0; i < other.size(); ++i) {
    const std::size_t k = slot(std::string(other.names_[i]));
    values_[k] = other.values_[i];
    present_[k] = other.present_[i];
  }
}

std::optional<std::size_t> FeatureVector::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<double> FeatureVector::get(std::string_view name) const {
  auto i = index(name);
  if (!i) throw Error(Errc::DataError, "unknown feature " + std::string(name));
  if (!present_[*i]) return std::nullopt;
  return values_[*i];
}

double FeatureVector::value(std::string_view name) const {
  auto i = index(name);
  if (!i) throw Error(Errc::DataError, "unknown feature " + std::string(name));
  return values_[*i];
}

bool FeatureVector::is_present(std::string_view name) const { return get(name).has_value(); }

FeatureVector FeatureVector::reordered(const std::vector<std::string>& order) const {
  FeatureVector out;
  for (const auto& name : order) {
    if (auto i = index(name); i && present_[*i]) {
      out.set(name, values_[*i]);
    } else if (i) {
      out.set_missing(name);
      out.values_.back() = values_[*i];
    } else {
      out.set_missing(name);
    }
  }
  return out;
}

void FeatureTable::add_row(std::string id, const FeatureVector& fv) {
  if (columns.empty() && ids.empty()) columns = fv.names();
  FeatureVector ordered = fv.reordered(columns);
  ids.push_back(std::move(id));
  values.push_back(ordered.values());
  present.push_back(ordered.present());
}

std::optional<std::size_t> FeatureTable::row(std::string_view id) const {
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] == id) return r;
  }
  return std::nullopt;
}

FeatureVector FeatureTable::vector_at(std::size_t r) const {
  FeatureVector fv;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (present[r][c]) {
      fv.set(columns[c], values[r][c]);
    } else {
      fv.set_missing(columns[c]);
      fv.mutable_values().back() = values[r][c];
    }
  }
  return fv;
}

std::size_t FeatureTable::column(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  throw Error(Errc::DataError, "unknown feature column " + std::string(name));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string feature_csv_text(const FeatureTable& table) {
  std::string out = "segment_id";
  for (const auto& c : table.columns) out += "," + c;
  for (const auto& c : table.columns) out += "," + c + "_present";
  out += '\n';
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    out += table.ids[r];
    for (double v : table.values[r]) out += "," + format_double(v);
    for (auto p : table.present[r]) out += p ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << feature_csv_text(table);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_cell(const std::string& s, std::size_t line) {
  if (s == "nan") return kMissing;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw MalformedRecord(line, "value", "not a number: " + s);
  }
  return v;
}

}  // namespace

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw MalformedRecord(1, "header", "empty file");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "segment_id" || header.size() % 2 != 1) {
    throw MalformedRecord(1, "header", "expected segment_id, features, presence columns");
  }
  FeatureTable t;
  const std::size_t n = (header.size() - 1) / 2;
  for (std::size_t c = 0; c < n; ++c) {
    t.columns.push_back(header[1 + c]);
    if (header[1 + n + c] != header[1 + c] + "_present") {
      throw MalformedRecord(1, header[1 + n + c], "presence column out of order");
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size()) throw MalformedRecord(line_no, "row", "wrong column count");
    std::vector<double> vals(n);
    std::vector<std::uint8_t> pres(n);
    for (std::size_t c = 0; c < n; ++c) {
      vals[c] = parse_cell(cells[1 + c], line_no);
      const auto& p = cells[1 + n + c];
      if (p != "0" && p != "1") throw MalformedRecord(line_no, t.columns[c] + "_present", "expected 0/1");
      pres[c] = p == "1";
    }
    t.ids.push_back(cells[0]);
    t.values.push_back(std::move(vals));
    t.present.push_back(std::move(pres));
  }
  return t;
}

}  // namespace oir
