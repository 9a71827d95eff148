#include "multiverse/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace multiverse {
namespace {

enum class Tok { ident, string, number, eq, ne, lparen, rparen, kw_and, kw_or, kw_not, kw_index, end };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (c == '(') {
      out.push_back({Tok::lparen, "(", i++});
    } else if (c == ')') {
      out.push_back({Tok::rparen, ")", i++});
    } else if (c == '=' && i + 1 < s.size() && s[i + 1] == '=') {
      out.push_back({Tok::eq, "==", i});
      i += 2;
    } else if (c == '!' && i + 1 < s.size() && s[i + 1] == '=') {
      out.push_back({Tok::ne, "!=", i});
      i += 2;
    } else if (c == '"' || c == '\'') {
      std::string value;
      ++i;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          value += s[i + 1];
          i += 2;
        } else if (s[i] == c) {
          closed = true;
          ++i;
          break;
        } else {
          value += s[i++];
        }
      }
      if (!closed) throw ExprSyntaxError("unterminated string literal", start);
      out.push_back({Tok::string, value, start});
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' ||
               (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      ++i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '.' ||
                              ((s[i] == '-' || s[i] == '+') && (s[i - 1] == 'e' || s[i - 1] == 'E'))))
        ++i;
      out.push_back({Tok::number, std::string(s.substr(start, i - start)), start});
    } else if (ident_start(c)) {
      while (i < s.size() && ident_char(s[i])) ++i;
      std::string word(s.substr(start, i - start));
      Tok kind = Tok::ident;
      if (word == "and") kind = Tok::kw_and;
      else if (word == "or") kind = Tok::kw_or;
      else if (word == "not") kind = Tok::kw_not;
      else if (word == "index") kind = Tok::kw_index;
      out.push_back({kind, word, start});
    } else {
      throw ExprSyntaxError(std::string("unexpected character '") + c + "'", i);
    }
  }
  out.push_back({Tok::end, "", s.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  ExprPtr parse() {
    auto e = parse_or();
    if (peek().kind != Tok::end) fail("unexpected '" + peek().text + "'");
    return e;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  Token take() { return toks_[pos_++]; }
  [[noreturn]] void fail(const std::string& msg) const { throw ExprSyntaxError(msg, peek().pos); }

  ExprPtr parse_or() {
    auto lhs = parse_and();
    while (peek().kind == Tok::kw_or) {
      take();
      auto rhs = parse_and();
      lhs = std::make_shared<Expr>(Expr{Or{lhs, rhs}});
    }
    return lhs;
  }

  ExprPtr parse_and() {
    auto lhs = parse_not();
    while (peek().kind == Tok::kw_and) {
      take();
      auto rhs = parse_not();
      lhs = std::make_shared<Expr>(Expr{And{lhs, rhs}});
    }
    return lhs;
  }

  ExprPtr parse_not() {
    if (peek().kind == Tok::kw_not) {
      take();
      return std::make_shared<Expr>(Expr{Not{parse_not()}});
    }
    if (peek().kind == Tok::lparen) {
      take();
      auto inner = parse_or();
      if (peek().kind != Tok::rparen) fail("expected ')'");
      take();
      return inner;
    }
    return parse_comparison();
  }

  ExprPtr parse_comparison() {
    Operand lhs = parse_operand();
    if (peek().kind != Tok::eq && peek().kind != Tok::ne) fail("expected '==' or '!='");
    bool negated = take().kind == Tok::ne;
    Operand rhs = parse_operand();
    return std::make_shared<Expr>(Expr{Comparison{std::move(lhs), std::move(rhs), negated}});
  }

  Operand parse_operand() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::ident:
        return DecisionRef{take().text};
      case Tok::string:
        return StringLit{take().text};
      case Tok::number: {
        Token n = take();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(n.text.data(), n.text.data() + n.text.size(), v);
        if (ec != std::errc() || ptr != n.text.data() + n.text.size()) {
          throw ExprSyntaxError("malformed number '" + n.text + "'", n.pos);
        }
        return NumberLit{n.text, v};
      }
      case Tok::kw_index: {
        take();
        if (peek().kind != Tok::lparen) fail("expected '(' after index");
        take();
        if (peek().kind != Tok::ident) fail("expected decision name in index()");
        std::string name = take().text;
        if (peek().kind != Tok::rparen) fail("expected ')'");
        take();
        return IndexRef{name};
      }
      case Tok::end:
        fail("unexpected end of expression");
      default:
        fail("unexpected '" + t.text + "'");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string_view unquote(std::string_view raw) {
  if (raw.size() >= 2 && (raw.front() == '"' || raw.front() == '\'') && raw.back() == raw.front()) {
    return raw.substr(1, raw.size() - 2);
  }
  return raw;
}

// Resolved value of an operand during evaluation.
struct Value {
  enum Kind { inactive, option, integer, literal } kind;
  std::string_view raw;
  long index = -1;
  const Operand* lit = nullptr;
};

Value resolve(const Operand& op, const BindingLookup& lookup) {
  if (auto* d = std::get_if<DecisionRef>(&op)) {
    auto b = lookup(d->name);
    if (!b) return {Value::inactive, {}};
    return {Value::option, b->raw, b->index};
  }
  if (auto* ix = std::get_if<IndexRef>(&op)) {
    auto b = lookup(ix->name);
    return {Value::integer, {}, b ? b->index : -1};
  }
  return {Value::literal, {}, -1, &op};
}

std::string literal_text(const Operand& op) {
  if (auto* s = std::get_if<StringLit>(&op)) return s->value;
  if (auto* n = std::get_if<NumberLit>(&op)) return n->text;
  return {};
}

bool values_equal(const Value& a, const Value& b) {
  if (a.kind == Value::inactive || b.kind == Value::inactive) return false;
  if (a.kind == Value::literal && b.kind != Value::literal) return values_equal(b, a);
  switch (a.kind) {
    case Value::option:
      if (b.kind == Value::option) return a.raw == b.raw;
      if (b.kind == Value::literal) return option_matches(a.raw, *b.lit);
      return false;
    case Value::integer:
      if (b.kind == Value::integer) return a.index == b.index;
      if (b.kind == Value::literal) {
        if (auto* n = std::get_if<NumberLit>(b.lit)) return static_cast<double>(a.index) == n->value;
      }
      return false;
    case Value::literal:
      return literal_text(*a.lit) == literal_text(*b.lit);
    default:
      return false;
  }
}

void collect(const Expr& e, std::vector<std::string>& out) {
  auto add = [&](const Operand& op) {
    std::string name;
    if (auto* d = std::get_if<DecisionRef>(&op)) name = d->name;
    else if (auto* ix = std::get_if<IndexRef>(&op)) name = ix->name;
    else return;
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  };
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          add(n.lhs);
          add(n.rhs);
        } else if constexpr (std::is_same_v<T, Not>) {
          collect(*n.operand, out);
        } else {
          collect(*n.lhs, out);
          collect(*n.rhs, out);
        }
      },
      e.node);
}

std::string operand_string(const Operand& op) {
  if (auto* d = std::get_if<DecisionRef>(&op)) return d->name;
  if (auto* ix = std::get_if<IndexRef>(&op)) return "index(" + ix->name + ")";
  if (auto* s = std::get_if<StringLit>(&op)) {
    std::string out = "\"";
    for (char c : s->value) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }
  return std::get<NumberLit>(op).text;
}

}  // namespace

ExprPtr parse_condition(std::string_view text) { return Parser(tokenize(text)).parse(); }

bool evaluate(const Expr& expr, const BindingLookup& lookup) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          bool eq = values_equal(resolve(n.lhs, lookup), resolve(n.rhs, lookup));
          return n.negated ? !eq : eq;
        } else if constexpr (std::is_same_v<T, Not>) {
          return !evaluate(*n.operand, lookup);
        } else if constexpr (std::is_same_v<T, And>) {
          return evaluate(*n.lhs, lookup) && evaluate(*n.rhs, lookup);
        } else {
          return evaluate(*n.lhs, lookup) || evaluate(*n.rhs, lookup);
        }
      },
      expr.node);
}

std::vector<std::string> referenced_decisions(const Expr& expr) {
  std::vector<std::string> out;
  collect(expr, out);
  return out;
}

std::string to_string(const Expr& expr) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Comparison>) {
          return operand_string(n.lhs) + (n.negated ? " != " : " == ") + operand_string(n.rhs);
        } else if constexpr (std::is_same_v<T, Not>) {
          return "not (" + to_string(*n.operand) + ")";
        } else if constexpr (std::is_same_v<T, And>) {
          return "(" + to_string(*n.lhs) + " and " + to_string(*n.rhs) + ")";
        } else {
          return "(" + to_string(*n.lhs) + " or " + to_string(*n.rhs) + ")";
        }
      },
      expr.node);
}

bool option_matches(std::string_view raw, const Operand& literal) {
  if (auto* s = std::get_if<StringLit>(&literal)) {
    return raw == s->value || unquote(raw) == s->value;
  }
  if (auto* n = std::get_if<NumberLit>(&literal)) {
    if (raw == n->text) return true;
    auto v = parse_number(unquote(raw));
    return v && *v == n->value;
  }
  return false;
}

}  // namespace multiverse
