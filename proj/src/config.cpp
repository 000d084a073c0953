#include "oir/config.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/features.hpp"
#include "oir/rng.hpp"

namespace oir::config {

namespace {

[[noreturn]] void bad(std::size_t line, const std::string& what) {
  throw Error(Errc::BadConfig, "line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

class Cursor {
 public:
  Cursor(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::string string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) bad(line_, "unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: bad(line_, std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) bad(line_, "unterminated string");
    ++pos_;
    return out;
  }

  Scalar scalar() {
    skip_ws();
    if (peek() == '"') return string();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' && s_[pos_] != '\t' &&
           s_[pos_] != '#') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits += c;
    }
    if (digits.empty()) bad(line_, "missing value");
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (ec == std::errc() && p == digits.data() + digits.size()) return i;
    double d = 0;
    auto [p2, ec2] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec2 == std::errc() && p2 == digits.data() + digits.size()) return d;
    bad(line_, "cannot parse value '" + tok + "'");
  }

  Value value() {
    skip_ws();
    if (peek() != '[') return Value{scalar()};
    ++pos_;
    std::vector<Scalar> items;
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return Value{items};
    }
    for (;;) {
      items.push_back(scalar());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        if (peek() == ']') {
          ++pos_;
          break;
        }
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      bad(line_, "expected ',' or ']' in array");
    }
    return Value{items};
  }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string scalar_text(const Scalar& s) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) return format_double(x);
        else return nlohmann::json(x).dump();
      },
      s);
}

std::string value_text(const Value& v) {
  if (!v.is_array()) return scalar_text(v.scalar());
  std::string s = "[";
  for (std::size_t i = 0; i < v.array().size(); ++i) s += (i ? ", " : "") + scalar_text(v.array()[i]);
  return s + "]";
}

[[noreturn]] void mismatch(const std::string& section, const std::string& key, const char* want) {
  throw Error(Errc::BadConfig, "[" + section + "] " + key + " must be " + want);
}

std::optional<double> as_double(const Scalar& s) {
  if (const auto* d = std::get_if<double>(&s)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&s)) return static_cast<double>(*i);
  return std::nullopt;
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config c;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) bad(line_no, "unterminated section header");
      const auto rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') bad(line_no, "text after section header");
      section = std::string(trim(line.substr(1, close - 1)));
      if (!bare_key(section)) bad(line_no, "bad section name");
      c.data_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!bare_key(key)) bad(line_no, "bad key '" + key + "'");
    if (c.has(section, key)) bad(line_no, "duplicate key '" + key + "'");
    Cursor cur(line.substr(eq + 1), line_no);
    Value v = cur.value();
    if (!cur.done()) bad(line_no, "trailing characters after value");
    c.data_[section][key] = std::move(v);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + std::string(e.what()).substr(std::string(errc_name(e.code())).size() + 2));
  }
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

void Config::set(const std::string& section, const std::string& key, Value value) {
  data_[section][key] = std::move(value);
}

const Value* Config::find(const std::string& section, const std::string& key) const {
  const auto s = data_.find(section);
  if (s == data_.end()) return nullptr;
  const auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

std::optional<std::string> Config::get_string(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  if (v->is_array() || !std::holds_alternative<std::string>(v->scalar())) mismatch(section, key, "a string");
  return std::get<std::string>(v->scalar());
}

std::optional<std::int64_t> Config::get_int(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  if (v->is_array() || !std::holds_alternative<std::int64_t>(v->scalar())) mismatch(section, key, "an integer");
  return std::get<std::int64_t>(v->scalar());
}

std::optional<double> Config::get_double(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  const auto d = v->is_array() ? std::nullopt : as_double(v->scalar());
  if (!d) mismatch(section, key, "a number");
  return d;
}

std::optional<bool> Config::get_bool(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  if (v->is_array() || !std::holds_alternative<bool>(v->scalar())) mismatch(section, key, "a boolean");
  return std::get<bool>(v->scalar());
}

std::optional<std::vector<double>> Config::get_doubles(const std::string& section, const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  if (!v->is_array()) mismatch(section, key, "an array of numbers");
  std::vector<double> out;
  for (const auto& s : v->array()) {
    const auto d = as_double(s);
    if (!d) mismatch(section, key, "an array of numbers");
    out.push_back(*d);
  }
  return out;
}

std::optional<std::vector<std::string>> Config::get_strings(const std::string& section,
                                                            const std::string& key) const {
  const Value* v = find(section, key);
  if (!v) return std::nullopt;
  if (!v->is_array()) mismatch(section, key, "an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v->array()) {
    if (!std::holds_alternative<std::string>(s)) mismatch(section, key, "an array of strings");
    out.push_back(std::get<std::string>(s));
  }
  return out;
}

std::string Config::canonical() const {
  std::string s;
  for (const auto& [section, keys] : data_) {
    for (const auto& [key, v] : keys) s += (section.empty() ? key : section + "." + key) + " = " + value_text(v) + "\n";
  }
  return s;
}

std::string Config::hash() const { return hex64(fnv1a64(canonical())); }

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = file_hash(path); }

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["inputs"] = inputs;
  j["versions"] = versions;
  j["parameters"] = parameters;
  j["outputs"] = outputs;
  j["started"] = started;
  j["finished"] = finished;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.versions = j.at("versions").get<std::map<std::string, std::string>>();
    m.parameters = j.value("parameters", std::map<std::string, std::string>{});
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::DataError, std::string("bad manifest: ") + e.what());
  }
}

void RunManifest::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / kManifestName, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write manifest in " + dir.string());
  out << to_json();
}

}  // namespace oir::config
