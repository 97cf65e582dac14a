#include <cctype>
#include <cstdlib>

#include "brs/polynomial.hpp"

namespace brs {

namespace {

// Recursive-descent parser for the polynomial grammar:
//   expr    := [+|-] term ((+|-) term)*
//   term    := factor (* factor)*
//   factor  := primary (^ uint)?
//   primary := number | identifier | ( expr )
class Parser {
 public:
  Parser(const std::string& text, VarSetPtr vars, bool infer)
      : text_(text), vars_(std::move(vars)), infer_(infer) {}

  Polynomial run() {
    if (infer_) collect_identifiers();
    pos_ = 0;
    Polynomial p = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return p;
  }

 private:
  void collect_identifiers() {
    std::vector<std::string> names = vars_->names();
    for (pos_ = 0; pos_ < text_.size();) {
      if (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_') {
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
          ++pos_;
        std::string name = text_.substr(start, pos_ - start);
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      } else if (text_[pos_] == '.' || std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        // Skip numeric literals so exponent markers like 1e-3 don't register.
        char* end = nullptr;
        std::strtod(text_.c_str() + pos_, &end);
        pos_ = end - text_.c_str();
      } else {
        ++pos_;
      }
    }
    vars_ = make_vars(std::move(names));
  }

  [[noreturn]] void fail(const std::string& msg) const {
    int line = 1, col = 1;
    for (size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw std::invalid_argument("polynomial parse error at line " + std::to_string(line) +
                                ", column " + std::to_string(col) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Polynomial parse_expr() {
    double sign = 1.0;
    if (eat('+')) {
    } else if (eat('-')) {
      sign = -1.0;
    }
    Polynomial p = sign * parse_term();
    while (true) {
      if (eat('+'))
        p += parse_term();
      else if (eat('-'))
        p -= parse_term();
      else
        break;
    }
    return p;
  }

  Polynomial parse_term() {
    Polynomial p = parse_factor();
    while (eat('*')) p = p * parse_factor();
    return p;
  }

  Polynomial parse_factor() {
    Polynomial base = parse_primary();
    if (eat('^')) {
      skip_ws();
      if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
        fail("expected nonnegative integer exponent after '^'");
      int e = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        e = e * 10 + (text_[pos_++] - '0');
      Polynomial r(1.0, base.vars());
      for (int i = 0; i < e; ++i) r = r * base;
      return r;
    }
    return base;
  }

  Polynomial parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Polynomial p = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return p;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      const double v = std::strtod(text_.c_str() + pos_, &end);
      if (end == text_.c_str() + pos_) fail("malformed numeric literal");
      pos_ = end - text_.c_str();
      return Polynomial(v, vars_);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (!vars_->contains(name)) {
        pos_ = start;
        fail("unknown variable '" + name + "'");
      }
      return Polynomial::variable(name, vars_);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  const std::string& text_;
  VarSetPtr vars_;
  bool infer_;
  size_t pos_ = 0;
};

}  // namespace

Polynomial parse_polynomial(const std::string& text, const VarSetPtr& vars) {
  return Parser(text, vars, /*infer=*/false).run();
}

Polynomial parse_polynomial_any(const std::string& text) {
  return Parser(text, make_vars({}), /*infer=*/true).run();
}

}  // namespace brs
