#pragma once

// Scalar expressions for scenario profiles, e.g. "1 + 0.1*exp(-100*(x-0.5)^2)".
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Names resolve to variables (bound at parse time to slots) or constants
// (pi, e). Built-in functions: sin cos tan exp log sqrt abs tanh min max pow.
// Further unary functions can be registered by the caller.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gasnet {

class ExpressionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Expression {
public:
  using Unary = std::function<double(double)>;

  static Expression parse(const std::string& text, const std::vector<std::string>& variables,
                          const std::map<std::string, Unary>& extra = {}) {
    Parser p{text, variables, extra, 0};
    Expression e;
    e.text_ = text;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size())
      throw ExpressionError("unexpected '" + text.substr(p.pos, 1) + "' at column " + std::to_string(p.pos + 1) +
                            " in '" + text + "'");
    return e;
  }

  double operator()(std::span<const double> vars) const { return root_->eval(vars); }
  double operator()(std::initializer_list<double> vars) const {
    return root_->eval(std::span<const double>(vars.begin(), vars.size()));
  }

  const std::string& text() const { return text_; }

private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(std::span<const double> v) const = 0;
  };
  using Ptr = std::shared_ptr<const Node>;

  struct Number : Node {
    double value;
    explicit Number(double v) : value(v) {}
    double eval(std::span<const double>) const override { return value; }
  };
  struct Variable : Node {
    std::size_t slot;
    explicit Variable(std::size_t s) : slot(s) {}
    double eval(std::span<const double> v) const override { return v[slot]; }
  };
  struct Binary : Node {
    char op;
    Ptr a, b;
    Binary(char o, Ptr l, Ptr r) : op(o), a(std::move(l)), b(std::move(r)) {}
    double eval(std::span<const double> v) const override {
      double x = a->eval(v), y = b->eval(v);
      switch (op) {
      case '+': return x + y;
      case '-': return x - y;
      case '*': return x * y;
      case '/': return x / y;
      default: return std::pow(x, y);
      }
    }
  };
  struct Negate : Node {
    Ptr a;
    explicit Negate(Ptr p) : a(std::move(p)) {}
    double eval(std::span<const double> v) const override { return -a->eval(v); }
  };
  struct Call : Node {
    std::function<double(const std::vector<double>&)> fn;
    std::vector<Ptr> args;
    double eval(std::span<const double> v) const override {
      std::vector<double> x;
      x.reserve(args.size());
      for (const auto& a : args) x.push_back(a->eval(v));
      return fn(x);
    }
  };

  struct Parser {
    const std::string& s;
    const std::vector<std::string>& vars;
    const std::map<std::string, Unary>& extra;
    std::size_t pos;

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw ExpressionError(what + " at column " + std::to_string(pos + 1) + " in '" + s + "'");
    }

    Ptr expr() {
      Ptr left = term();
      for (;;) {
        if (eat('+')) left = std::make_shared<Binary>('+', left, term());
        else if (eat('-')) left = std::make_shared<Binary>('-', left, term());
        else return left;
      }
    }
    Ptr term() {
      Ptr left = unary();
      for (;;) {
        if (eat('*')) left = std::make_shared<Binary>('*', left, unary());
        else if (eat('/')) left = std::make_shared<Binary>('/', left, unary());
        else return left;
      }
    }
    Ptr unary() {
      if (eat('-')) return std::make_shared<Negate>(unary());
      if (eat('+')) return unary();
      return power();
    }
    Ptr power() {
      Ptr base = primary();
      if (eat('^')) return std::make_shared<Binary>('^', base, unary());
      return base;
    }
    Ptr primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      if (eat('(')) {
        Ptr e = expr();
        if (!eat(')')) fail("expected ')'");
        return e;
      }
      char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const char* begin = s.c_str() + pos;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos += static_cast<std::size_t>(end - begin);
        return std::make_shared<Number>(v);
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        std::string name = s.substr(start, pos - start);
        if (eat('(')) return call(name);
        for (std::size_t k = 0; k < vars.size(); ++k)
          if (vars[k] == name) return std::make_shared<Variable>(k);
        if (name == "pi") return std::make_shared<Number>(std::numbers::pi);
        if (name == "e") return std::make_shared<Number>(std::numbers::e);
        pos = start;
        fail("unknown name '" + name + "'");
      }
      fail(std::string("unexpected '") + c + "'");
    }
    Ptr call(const std::string& name) {
      auto node = std::make_shared<Call>();
      if (!eat(')')) {
        do node->args.push_back(expr());
        while (eat(','));
        if (!eat(')')) fail("expected ')' after arguments of " + name);
      }
      auto arity = [&](std::size_t n) {
        if (node->args.size() != n)
          fail(name + " takes " + std::to_string(n) + " argument" + (n == 1 ? "" : "s"));
      };
      auto unary_fn = [&](double (*f)(double)) {
        arity(1);
        node->fn = [f](const std::vector<double>& x) { return f(x[0]); };
      };
      if (auto it = extra.find(name); it != extra.end()) {
        arity(1);
        node->fn = [f = it->second](const std::vector<double>& x) { return f(x[0]); };
      } else if (name == "sin") unary_fn(std::sin);
      else if (name == "cos") unary_fn(std::cos);
      else if (name == "tan") unary_fn(std::tan);
      else if (name == "exp") unary_fn(std::exp);
      else if (name == "log") unary_fn(std::log);
      else if (name == "sqrt") unary_fn(std::sqrt);
      else if (name == "abs") unary_fn(std::fabs);
      else if (name == "tanh") unary_fn(std::tanh);
      else if (name == "min" || name == "max" || name == "pow") {
        arity(2);
        if (name == "min") node->fn = [](const std::vector<double>& x) { return std::min(x[0], x[1]); };
        else if (name == "max") node->fn = [](const std::vector<double>& x) { return std::max(x[0], x[1]); };
        else node->fn = [](const std::vector<double>& x) { return std::pow(x[0], x[1]); };
      } else {
        fail("unknown function '" + name + "'");
      }
      return node;
    }
  };

  std::string text_;
  Ptr root_;
};

} // namespace gasnet
