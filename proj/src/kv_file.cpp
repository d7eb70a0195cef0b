#include "dyadgrow/kv_file.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dyadgrow/error.hpp"

namespace dyadgrow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_exact(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, what + ": not a number: '" + s + "'");
  }
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, what));
  return out;
}

void KeyValueFile::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueFile::set(std::string key, double value) { set(std::move(key), format_exact(value)); }

std::optional<std::string> KeyValueFile::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string KeyValueFile::get(const std::string& key) const {
  auto v = find(key);
  if (!v) throw Error(ErrorCode::ParseError, "missing key '" + key + "'");
  return *v;
}

double KeyValueFile::get_double(const std::string& key) const {
  return parse_double(get(key), key);
}

long long KeyValueFile::get_int(const std::string& key) const {
  const double v = get_double(key);
  if (v != static_cast<double>(static_cast<long long>(v))) {
    throw Error(ErrorCode::ParseError, key + ": expected an integer");
  }
  return static_cast<long long>(v);
}

bool KeyValueFile::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorCode::ParseError, key + ": expected true or false");
}

KeyValueFile KeyValueFile::parse(std::istream& in) {
  KeyValueFile kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return parse(in);
}

void KeyValueFile::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write(out);
}

}  // namespace dyadgrow
