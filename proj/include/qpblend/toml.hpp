#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "qpblend/common.hpp"

namespace qpblend::toml {

// Minimal TOML subset: tables, arrays of tables, key = value lines with
// strings, numbers, booleans and (single-line, possibly nested) arrays.
// Enough for scene and schedule configuration files.
class Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value>;

class Value {
 public:
  Value() : v_(Table{}) {}
  explicit Value(std::string s) : v_(std::move(s)) {}
  explicit Value(double d) : v_(d) {}
  explicit Value(bool b) : v_(b) {}
  explicit Value(Array a) : v_(std::move(a)) {}
  explicit Value(Table t) : v_(std::move(t)) {}

  bool is_table() const { return std::holds_alternative<Table>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_number() const { return std::holds_alternative<double>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }

  const std::string& as_string(const std::string& context) const;
  double as_number(const std::string& context) const;
  bool as_bool(const std::string& context) const;
  const Array& as_array(const std::string& context) const;
  Array& as_array(const std::string& context);
  const Table& as_table(const std::string& context) const;
  Table& as_table(const std::string& context);

  // Lookup helpers on tables; throw ConfigError naming the missing/ill-typed key.
  bool contains(const std::string& key) const;
  const Value& at(const std::string& key) const;
  const Value* find(const std::string& key) const;
  double number(const std::string& key) const { return at(key).as_number(key); }
  double number_or(const std::string& key, double fallback) const;
  const std::string& str(const std::string& key) const { return at(key).as_string(key); }
  std::vector<double> number_array(const std::string& key) const;

 private:
  std::variant<std::string, double, bool, Array, Table> v_;
};

Value parse(const std::string& text, const std::string& origin = "<string>");
Value parse_file(const std::string& path);

}  // namespace qpblend::toml
