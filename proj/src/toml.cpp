#include "qpblend/toml.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace qpblend::toml {

const std::string& Value::as_string(const std::string& context) const {
  if (!is_string()) throw ConfigError("toml: '" + context + "' is not a string");
  return std::get<std::string>(v_);
}

double Value::as_number(const std::string& context) const {
  if (!is_number()) throw ConfigError("toml: '" + context + "' is not a number");
  return std::get<double>(v_);
}

bool Value::as_bool(const std::string& context) const {
  if (!is_bool()) throw ConfigError("toml: '" + context + "' is not a boolean");
  return std::get<bool>(v_);
}

const Array& Value::as_array(const std::string& context) const {
  if (!is_array()) throw ConfigError("toml: '" + context + "' is not an array");
  return std::get<Array>(v_);
}

Array& Value::as_array(const std::string& context) {
  if (!is_array()) throw ConfigError("toml: '" + context + "' is not an array");
  return std::get<Array>(v_);
}

const Table& Value::as_table(const std::string& context) const {
  if (!is_table()) throw ConfigError("toml: '" + context + "' is not a table");
  return std::get<Table>(v_);
}

Table& Value::as_table(const std::string& context) {
  if (!is_table()) throw ConfigError("toml: '" + context + "' is not a table");
  return std::get<Table>(v_);
}

bool Value::contains(const std::string& key) const {
  return is_table() && std::get<Table>(v_).count(key) > 0;
}

const Value& Value::at(const std::string& key) const {
  const auto& t = as_table(key);
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("toml: missing key '" + key + "'");
  return it->second;
}

const Value* Value::find(const std::string& key) const {
  if (!is_table()) return nullptr;
  const auto& t = std::get<Table>(v_);
  const auto it = t.find(key);
  return it == t.end() ? nullptr : &it->second;
}

double Value::number_or(const std::string& key, double fallback) const {
  const Value* v = find(key);
  return v ? v->as_number(key) : fallback;
}

std::vector<double> Value::number_array(const std::string& key) const {
  const Array& arr = at(key).as_array(key);
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(v.as_number(key));
  return out;
}

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, int line_no, const std::string& origin)
      : text_(text), line_(line_no), origin_(origin) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("toml: " + origin_ + ":" + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size() || text_[pos_] == '#';
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  char take() { return text_[pos_++]; }

  std::string bare_key() {
    skip_ws();
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
            text_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string quoted_string() {
    take();  // opening quote
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = take();
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("dangling escape");
        char e = take();
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    take();  // closing quote
    return out;
  }

  Value value() {
    skip_ws();
    if (pos_ >= text_.size()) fail("expected a value");
    const char c = peek();
    if (c == '"') return Value(quoted_string());
    if (c == '[') {
      take();
      Array arr;
      skip_ws();
      if (peek() == ']') {
        take();
        return Value(std::move(arr));
      }
      while (true) {
        arr.push_back(value());
        skip_ws();
        if (peek() == ',') {
          take();
          skip_ws();
          if (peek() == ']') {  // trailing comma
            take();
            break;
          }
          continue;
        }
        if (peek() == ']') {
          take();
          break;
        }
        fail("expected ',' or ']' in array");
      }
      return Value(std::move(arr));
    }
    if (text_.compare(pos_, 4, "true") == 0 &&
        (pos_ + 4 >= text_.size() || !std::isalnum(static_cast<unsigned char>(text_[pos_ + 4])))) {
      pos_ += 4;
      return Value(true);
    }
    if (text_.compare(pos_, 5, "false") == 0 &&
        (pos_ + 5 >= text_.size() || !std::isalnum(static_cast<unsigned char>(text_[pos_ + 5])))) {
      pos_ += 5;
      return Value(false);
    }
    // Number.
    size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '+' || text_[pos_] == '-' ||
                                   text_[pos_] == '.' || text_[pos_] == 'e' ||
                                   text_[pos_] == 'E' || text_[pos_] == '_'))
      ++pos_;
    if (pos_ == start) fail("unrecognized value");
    std::string num(text_.substr(start, pos_ - start));
    num.erase(std::remove(num.begin(), num.end(), '_'), num.end());
    try {
      size_t used = 0;
      const double d = std::stod(num, &used);
      if (used != num.size()) fail("malformed number '" + num + "'");
      return Value(d);
    } catch (const std::exception&) {
      fail("malformed number '" + num + "'");
    }
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
  int line_;
  const std::string& origin_;
};

std::vector<std::string> split_path(const std::string& dotted, const LineParser& ctx) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : dotted) {
    if (c == '.') {
      if (cur.empty()) ctx.fail("empty table-path segment");
      parts.push_back(cur);
      cur.clear();
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
      cur += c;
    } else if (c != ' ' && c != '\t') {
      ctx.fail(std::string("bad character '") + c + "' in table path");
    }
  }
  if (cur.empty()) ctx.fail("empty table-path segment");
  parts.push_back(cur);
  return parts;
}

Value* descend(Value* node, const std::vector<std::string>& path, size_t upto,
               const LineParser& ctx) {
  for (size_t i = 0; i < upto; ++i) {
    Table& t = node->as_table(path[i]);
    auto [it, inserted] = t.emplace(path[i], Value(Table{}));
    Value* next = &it->second;
    if (next->is_array()) {  // array of tables: descend into the last element
      Array& arr = next->as_array(path[i]);
      if (arr.empty()) ctx.fail("empty array of tables '" + path[i] + "'");
      next = &arr.back();
    } else if (!next->is_table()) {
      ctx.fail("'" + path[i] + "' is not a table");
    }
    node = next;
  }
  return node;
}

}  // namespace

Value parse(const std::string& text, const std::string& origin) {
  Value root{Table{}};
  Value* current = &root;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    LineParser lp(line, line_no, origin);
    if (lp.at_end()) continue;

    if (lp.peek() == '[') {
      lp.take();
      const bool array_of_tables = lp.peek() == '[';
      if (array_of_tables) lp.take();
      std::string path_text;
      while (lp.peek() != ']' && lp.peek() != '\0') path_text += lp.take();
      if (lp.peek() != ']') lp.fail("unterminated table header");
      lp.take();
      if (array_of_tables) {
        if (lp.peek() != ']') lp.fail("unterminated array-of-tables header");
        lp.take();
      }
      if (!lp.at_end()) lp.fail("trailing characters after table header");

      const auto path = split_path(path_text, lp);
      Value* parent = descend(&root, path, path.size() - 1, lp);
      Table& t = parent->as_table(path.back());
      if (array_of_tables) {
        auto [it, inserted] = t.emplace(path.back(), Value(Array{}));
        (void)inserted;
        if (!it->second.is_array()) lp.fail("'" + path.back() + "' is not an array of tables");
        Array& arr = it->second.as_array(path.back());
        arr.push_back(Value(Table{}));
        current = &arr.back();
      } else {
        auto [it, inserted] = t.emplace(path.back(), Value(Table{}));
        (void)inserted;
        if (!it->second.is_table()) lp.fail("'" + path.back() + "' redefined as a table");
        current = &it->second;
      }
      continue;
    }

    const std::string key = lp.bare_key();
    lp.skip_ws();
    if (lp.peek() != '=') lp.fail("expected '=' after key '" + key + "'");
    lp.take();
    Value val = lp.value();
    if (!lp.at_end()) lp.fail("trailing characters after value of '" + key + "'");
    Table& t = current->as_table(key);
    if (!t.emplace(key, std::move(val)).second) lp.fail("duplicate key '" + key + "'");
  }
  return root;
}

Value parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

}  // namespace qpblend::toml
