#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace atlas {

// Flat key=value text configuration. Lines starting with '#' are comments.
// Keys are dotted paths, e.g. "optimizer.max_iterations = 50".
class Config {
 public:
  Config() = default;

  static Config fromFile(const std::string& path);
  static Config fromString(const std::string& text);

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

  [[nodiscard]] std::string getString(const std::string& key, const std::string& def = "") const;
  [[nodiscard]] double getDouble(const std::string& key, double def) const;
  [[nodiscard]] int getInt(const std::string& key, int def) const;
  [[nodiscard]] std::uint64_t getUint64(const std::string& key, std::uint64_t def) const;
  [[nodiscard]] bool getBool(const std::string& key, bool def) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

  // Keys beginning with `prefix`, in sorted order.
  [[nodiscard]] std::vector<std::string> keysWithPrefix(const std::string& prefix) const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parseDoubleList(const std::string& text);
std::vector<std::string> splitString(const std::string& text, char sep);
std::string trimString(const std::string& text);

}  // namespace atlas
