#include "ncl/config.hpp"

#include "ncl/error.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ncl {

namespace {

struct Node {
  bool is_list = false;
  std::string scalar;  // raw text, quotes kept
  std::vector<Node> items;
};

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool valid_key(std::string_view k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return k.find("..") == std::string_view::npos;
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool quoted = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (quoted) continue;
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
  }
  return depth;
}

class ValueParser {
 public:
  ValueParser(std::string_view text, std::string where) : s_(text), where_(std::move(where)) {}

  Node parse() {
    Node n = value();
    skip_ws();
    if (pos_ != s_.size()) error("trailing characters");
    return n;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(Errc::ParseError, where_ + ": " + what + " in value '" + std::string(s_) + "'");
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  Node value() {
    skip_ws();
    if (pos_ >= s_.size()) error("missing value");
    Node n;
    if (s_[pos_] == '[') {
      n.is_list = true;
      ++pos_;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return n;
      }
      for (;;) {
        n.items.push_back(value());
        skip_ws();
        if (pos_ >= s_.size()) error("unterminated list");
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (s_[pos_] == ']') {
          ++pos_;
          return n;
        }
        error("expected ',' or ']'");
      }
    }
    if (s_[pos_] == '"') {
      const size_t start = pos_++;
      while (pos_ < s_.size() && !(s_[pos_] == '"' && s_[pos_ - 1] != '\\')) ++pos_;
      if (pos_ >= s_.size()) error("unterminated string");
      ++pos_;
      n.scalar = std::string(s_.substr(start, pos_ - start));
      return n;
    }
    const size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '[') ++pos_;
    n.scalar = trim(s_.substr(start, pos_ - start));
    if (n.scalar.empty()) error("empty element");
    return n;
  }

  std::string_view s_;
  std::string where_;
  size_t pos_ = 0;
};

std::string render(const Node& n) {
  if (!n.is_list) return n.scalar;
  std::string out = "[";
  for (size_t i = 0; i < n.items.size(); ++i) {
    if (i) out += ", ";
    out += render(n.items[i]);
  }
  return out + "]";
}

std::string unquote(const std::string& s) {
  if (s.size() < 2 || s.front() != '"') return s;
  std::string out;
  for (size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == '\\' && i + 2 < s.size()) ++i;
    out += s[i];
  }
  return out;
}

double to_double(const std::string& text, const std::string& key) {
  const std::string t = unquote(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && ptr == t.data() + t.size(), Errc::ConfigInvalid,
          "config key '" + key + "': '" + t + "' is not a number");
  return v;
}

long long to_int(const std::string& text, const std::string& key) {
  const std::string t = unquote(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && ptr == t.data() + t.size(), Errc::ConfigInvalid,
          "config key '" + key + "': '" + t + "' is not an integer");
  return v;
}

Node parse_value(const std::string& raw, const std::string& key) { return ValueParser(raw, "key '" + key + "'").parse(); }

nlohmann::json node_json(const Node& n) {
  if (n.is_list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& item : n.items) arr.push_back(node_json(item));
    return arr;
  }
  const std::string& s = n.scalar;
  if (!s.empty() && s.front() == '"') return unquote(s);
  if (s == "true") return true;
  if (s == "false") return false;
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(s.c_str(), &end, 10);
  if (!s.empty() && *end == '\0' && errno == 0) return i;
  const double d = std::strtod(s.c_str(), &end);
  if (!s.empty() && *end == '\0' && std::isfinite(d)) return d;
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Config Config::parse(std::string_view text, const std::string& source) {
  Config cfg;
  std::vector<std::string> prefix;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto where = [&](int n) { return source + ":" + std::to_string(n); };
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s == "}") {
      require(!prefix.empty(), Errc::ParseError, where(lineno) + ": unmatched '}'");
      prefix.pop_back();
      continue;
    }
    if (s.back() == '{' && s.find('=') == std::string::npos) {
      const std::string name = trim(s.substr(0, s.size() - 1));
      require(valid_key(name), Errc::ParseError, where(lineno) + ": invalid block name '" + name + "'");
      prefix.push_back(name);
      continue;
    }
    const auto eq = s.find('=');
    require(eq != std::string::npos, Errc::ParseError, where(lineno) + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    require(valid_key(key), Errc::ParseError, where(lineno) + ": invalid key '" + key + "'");
    std::string value = trim(s.substr(eq + 1));
    const int start = lineno;
    while (bracket_balance(value) > 0 && std::getline(in, line)) {
      ++lineno;
      value += " " + trim(strip_comment(line));
    }
    require(bracket_balance(value) == 0, Errc::ParseError, where(start) + ": unbalanced brackets");
    std::string full;
    for (const auto& p : prefix) full += p + ".";
    full += key;
    require(!cfg.has(full), Errc::ParseError, where(start) + ": duplicate key '" + full + "'");
    cfg.entries_[full] = render(ValueParser(value, where(start)).parse());
  }
  require(prefix.empty(), Errc::ParseError,
          where(lineno + 1) + ": unclosed block '" + (prefix.empty() ? "" : prefix.back()) + "'");
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json Config::to_json() const {
  nlohmann::json root = nlohmann::json::object();
  for (const auto& [k, v] : entries_) {
    nlohmann::json* node = &root;
    size_t start = 0;
    for (size_t dot = k.find('.'); dot != std::string::npos; dot = k.find('.', start)) {
      nlohmann::json& child = (*node)[k.substr(start, dot - start)];
      if (!child.is_object()) child = nlohmann::json::object();
      node = &child;
      start = dot + 1;
    }
    (*node)[k.substr(start)] = node_json(parse_value(v, k));
  }
  return root;
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string_view::npos, Errc::ConfigInvalid,
          "override '" + std::string(assignment) + "' must look like key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& raw_value) {
  require(valid_key(key), Errc::ConfigInvalid, "invalid config key '" + key + "'");
  entries_[key] = render(parse_value(raw_value, key));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

const std::string& Config::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  require(it != entries_.end(), Errc::ConfigInvalid, "missing config key '" + key + "'");
  return it->second;
}

std::string Config::get_string(const std::string& key) const {
  const Node n = parse_value(raw(key), key);
  require(!n.is_list, Errc::ConfigInvalid, "config key '" + key + "' must be a scalar");
  return unquote(n.scalar);
}

double Config::get_double(const std::string& key) const { return to_double(raw(key), key); }

long long Config::get_int(const std::string& key) const { return to_int(raw(key), key); }

std::uint64_t Config::get_u64(const std::string& key) const {
  const long long v = get_int(key);
  require(v >= 0, Errc::ConfigInvalid, "config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(Errc::ConfigInvalid, "config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  const Node n = parse_value(raw(key), key);
  std::vector<double> out;
  if (!n.is_list) return {to_double(n.scalar, key)};
  for (const auto& item : n.items) {
    require(!item.is_list, Errc::ConfigInvalid, "config key '" + key + "' must be a flat list");
    out.push_back(to_double(item.scalar, key));
  }
  return out;
}

std::vector<long long> Config::get_ints(const std::string& key) const {
  const Node n = parse_value(raw(key), key);
  std::vector<long long> out;
  if (!n.is_list) return {to_int(n.scalar, key)};
  for (const auto& item : n.items) {
    require(!item.is_list, Errc::ConfigInvalid, "config key '" + key + "' must be a flat list");
    out.push_back(to_int(item.scalar, key));
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key) const {
  const Node n = parse_value(raw(key), key);
  std::vector<std::string> out;
  if (!n.is_list) return {unquote(n.scalar)};
  for (const auto& item : n.items) {
    require(!item.is_list, Errc::ConfigInvalid, "config key '" + key + "' must be a flat list");
    out.push_back(unquote(item.scalar));
  }
  return out;
}

Matrix Config::get_matrix(const std::string& key) const {
  const Node n = parse_value(raw(key), key);
  require(n.is_list && !n.items.empty(), Errc::ConfigInvalid, "config key '" + key + "' must be a list of rows");
  const size_t cols = n.items.front().items.size();
  Matrix m(static_cast<Eigen::Index>(n.items.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < n.items.size(); ++r) {
    const Node& row = n.items[r];
    require(row.is_list && row.items.size() == cols && cols > 0, Errc::ConfigInvalid,
            "config key '" + key + "': rows must be non-empty lists of equal length");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_double(row.items[c].scalar, key);
  }
  return m;
}

}  // namespace ncl
