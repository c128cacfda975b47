#include "vslam/common/keyvalue.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vslam {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::Parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty()) throw std::runtime_error("line " + std::to_string(number) + ": empty key");
    kv.values_[key] = Trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::Load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return Parse(ss.str());
}

void KeyValues::Get(const std::string& key, std::string& out) const {
  auto it = values_.find(key);
  if (it == values_.end()) return;
  used_.insert(key);
  out = it->second;
}

void KeyValues::Get(const std::string& key, double& out) const {
  std::string s;
  if (!Has(key)) return;
  Get(key, s);
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw std::runtime_error(key + ": not a number: " + s);
}

void KeyValues::Get(const std::string& key, int& out) const {
  std::string s;
  if (!Has(key)) return;
  Get(key, s);
  std::size_t pos = 0;
  try {
    out = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty()) throw std::runtime_error(key + ": not an integer: " + s);
}

void KeyValues::Get(const std::string& key, std::uint64_t& out) const {
  std::string s;
  if (!Has(key)) return;
  Get(key, s);
  std::size_t pos = 0;
  try {
    out = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  // stoull silently wraps a leading minus.
  if (pos != s.size() || s.empty() || s.find('-') != std::string::npos) {
    throw std::runtime_error(key + ": not an unsigned integer: " + s);
  }
}

void KeyValues::Get(const std::string& key, bool& out) const {
  std::string s;
  if (!Has(key)) return;
  Get(key, s);
  if (s == "1" || s == "true" || s == "on" || s == "yes") {
    out = true;
  } else if (s == "0" || s == "false" || s == "off" || s == "no") {
    out = false;
  } else {
    throw std::runtime_error(key + ": not a boolean: " + s);
  }
}

void KeyValues::RejectUnused() const {
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) throw std::runtime_error("unknown key: " + k);
  }
}

}  // namespace vslam
