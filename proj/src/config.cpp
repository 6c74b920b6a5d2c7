#include "atlas/config.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atlas {

std::string trimString(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

std::vector<std::string> splitString(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string current;
  std::istringstream iss(text);
  while (std::getline(iss, current, sep)) out.push_back(current);
  if (!text.empty() && text.back() == sep) out.push_back("");
  return out;
}

std::vector<double> parseDoubleList(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : splitString(text, ',')) {
    const std::string t = trimString(tok);
    if (t.empty()) continue;
    out.push_back(std::stod(t));
  }
  return out;
}

Config Config::fromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Config: cannot open " + path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return fromString(oss.str());
}

Config Config::fromString(const std::string& text) {
  Config cfg;
  std::istringstream iss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(iss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trimString(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("Config: missing '=' on line " + std::to_string(line_no));
    }
    const std::string key = trimString(line.substr(0, eq));
    const std::string value = trimString(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("Config: empty key on line " + std::to_string(line_no));
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

std::string Config::getString(const std::string& key, const std::string& def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double Config::getDouble(const std::string& key, double def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : std::stod(it->second);
}

int Config::getInt(const std::string& key, int def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : std::stoi(it->second);
}

std::uint64_t Config::getUint64(const std::string& key, std::uint64_t def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : std::stoull(it->second);
}

bool Config::getBool(const std::string& key, bool def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string v = trimString(it->second);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::runtime_error("Config: bad boolean value for " + key);
}

std::vector<std::string> Config::keysWithPrefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = values_.lower_bound(prefix); it != values_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

}  // namespace atlas
