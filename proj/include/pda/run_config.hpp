#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace pda {

/// Flat `key=value` run configuration. Blank lines and `#` comments are
/// ignored; keys are written back sorted so files diff cleanly.
class RunConfig {
 public:
  static RunConfig parse(std::string_view text);
  static RunConfig read(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Throws invalid_argument naming the first key not in `allowed`.
  void check_keys(const std::set<std::string>& allowed) const;

  std::string format() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pda
