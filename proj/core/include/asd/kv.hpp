#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace asd {

/// Nested key-value document.
///
/// Grammar (one construct per line, '#' starts a comment):
///   pair    :=  key = value-to-end-of-line
///   section :=  key {            ... entries ...            }
///
/// Keys are [A-Za-z0-9_-]+. Values are stored verbatim (trimmed); typed
/// accessors parse on demand. Flattened paths use '.' separators.
class KvNode {
 public:
  bool has(const std::string& key) const;
  const KvNode* child(const std::string& key) const;
  const std::string* value(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  KvNode& section(const std::string& key);

  /// Keys in first-insertion order.
  const std::vector<std::string>& keys() const { return order_; }
  bool is_section(const std::string& key) const;

  std::string to_text(int indent = 0) const;

 private:
  struct Entry {
    bool section = false;
    std::string value;
    std::unique_ptr<KvNode> node;
  };
  const Entry* find(const std::string& key) const;

  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

struct KvParseError : std::runtime_error {
  explicit KvParseError(const std::string& what) : std::runtime_error(what) {}
};

KvNode parse_kv_text(const std::string& text);
KvNode parse_kv_file(const std::string& path);

}  // namespace asd
