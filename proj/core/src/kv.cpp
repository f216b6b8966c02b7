#include "asd/kv.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <memory>
#include <sstream>

namespace asd {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

const KvNode::Entry* KvNode::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool KvNode::has(const std::string& key) const { return find(key) != nullptr; }

bool KvNode::is_section(const std::string& key) const {
  const Entry* e = find(key);
  return e != nullptr && e->section;
}

const KvNode* KvNode::child(const std::string& key) const {
  const Entry* e = find(key);
  return (e && e->section) ? e->node.get() : nullptr;
}

const std::string* KvNode::value(const std::string& key) const {
  const Entry* e = find(key);
  return (e && !e->section) ? &e->value : nullptr;
}

std::string KvNode::get_string(const std::string& key) const {
  const std::string* v = value(key);
  if (!v) throw KvParseError("missing key: " + key);
  return *v;
}

long long KvNode::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  long long out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw KvParseError("key '" + key + "': expected integer, got '" + s + "'");
  return out;
}

double KvNode::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t used = 0;
    double out = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return out;
  } catch (const std::exception&) {
    throw KvParseError("key '" + key + "': expected number, got '" + s + "'");
  }
}

bool KvNode::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw KvParseError("key '" + key + "': expected bool, got '" + s + "'");
}

std::vector<double> KvNode::get_double_list(const std::string& key) const {
  const std::string s = get_string(key);
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) throw KvParseError("key '" + key + "': empty list element");
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw KvParseError("key '" + key + "': bad list element '" + part + "'");
    }
  }
  return out;
}

void KvNode::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    order_.push_back(key);
    Entry e;
    e.value = value;
    entries_.emplace(key, std::move(e));
  } else {
    it->second.section = false;
    it->second.value = value;
    it->second.node.reset();
  }
}

KvNode& KvNode::section(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    order_.push_back(key);
    Entry e;
    e.section = true;
    e.node = std::make_unique<KvNode>();
    it = entries_.emplace(key, std::move(e)).first;
  } else if (!it->second.section) {
    throw KvParseError("key '" + key + "' is a value, not a section");
  }
  return *it->second.node;
}

std::string KvNode::to_text(int indent) const {
  std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  std::string out;
  for (const std::string& k : order_) {
    const Entry& e = entries_.at(k);
    if (e.section) {
      out += pad + k + " {\n" + e.node->to_text(indent + 1) + pad + "}\n";
    } else {
      out += pad + k + " = " + e.value + "\n";
    }
  }
  return out;
}

KvNode parse_kv_text(const std::string& text) {
  KvNode root;
  std::vector<KvNode*> stack{&root};
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line == "}") {
      if (stack.size() == 1) throw KvParseError("line " + std::to_string(lineno) + ": unmatched '}'");
      stack.pop_back();
      continue;
    }
    if (line.size() >= 2 && line.back() == '{') {
      std::string key = trim(line.substr(0, line.size() - 1));
      if (!valid_key(key))
        throw KvParseError("line " + std::to_string(lineno) + ": bad section name '" + key + "'");
      if (stack.back()->has(key))
        throw KvParseError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
      stack.push_back(&stack.back()->section(key));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw KvParseError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw KvParseError("line " + std::to_string(lineno) + ": bad key '" + key + "'");
    if (stack.back()->has(key))
      throw KvParseError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    stack.back()->set(key, val);
  }
  if (stack.size() != 1) throw KvParseError("unterminated section at end of input");
  return root;
}

KvNode parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KvParseError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

}  // namespace asd
