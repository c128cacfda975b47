#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace vslam {

// Flat "key = value" text. Blank lines and '#' comments are ignored.
// Throws std::runtime_error on a malformed line.
class KeyValues {
 public:
  static KeyValues Parse(const std::string& text);
  static KeyValues Load(const std::string& path);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  void Set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Each getter marks the key as consumed and leaves `out` untouched when
  // the key is absent.
  void Get(const std::string& key, std::string& out) const;
  void Get(const std::string& key, double& out) const;
  void Get(const std::string& key, int& out) const;
  void Get(const std::string& key, std::uint64_t& out) const;
  void Get(const std::string& key, bool& out) const;

  // Throws when a key was never read.
  void RejectUnused() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace vslam
