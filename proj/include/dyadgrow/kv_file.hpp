#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyadgrow {

/// Ordered `key = value` text records. Lines starting with '#' are comments.
class KeyValueFile {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);  // %.17g, round-trips exactly

  std::optional<std::string> find(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws ParseError when absent
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  static KeyValueFile parse(std::istream& in);
  static KeyValueFile load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_exact(double value);
double parse_double(const std::string& text, const std::string& what);
std::vector<double> parse_list(const std::string& text, const std::string& what);

}  // namespace dyadgrow
