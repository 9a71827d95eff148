#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace multiverse {

// Conditions attached to procedural constraints, e.g.
//   not (ECL == "computed" and NMO == "reported")
//   index(F) != 2 or M == "lmer"

struct DecisionRef {
  std::string name;
};
struct IndexRef {
  std::string name;
};
struct StringLit {
  std::string value;
};
struct NumberLit {
  std::string text;
  double value = 0.0;
};

using Operand = std::variant<DecisionRef, IndexRef, StringLit, NumberLit>;

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Comparison {
  Operand lhs;
  Operand rhs;
  bool negated = false;  // true for !=
};
struct Not {
  ExprPtr operand;
};
struct And {
  ExprPtr lhs, rhs;
};
struct Or {
  ExprPtr lhs, rhs;
};

struct Expr {
  std::variant<Comparison, Not, And, Or> node;
};

class ExprSyntaxError : public std::runtime_error {
 public:
  ExprSyntaxError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

ExprPtr parse_condition(std::string_view text);

/// The value a decision holds in some assignment. An inactive decision has no
/// binding; comparisons against it are false and index() yields -1.
struct Binding {
  int index;
  std::string_view raw;
};
using BindingLookup = std::function<std::optional<Binding>(const std::string&)>;

bool evaluate(const Expr& expr, const BindingLookup& lookup);

/// Decision names referenced anywhere in the expression, in first-use order.
std::vector<std::string> referenced_decisions(const Expr& expr);

std::string to_string(const Expr& expr);

/// Whether an option's raw text matches a literal from a condition or config.
/// Quoted options also match their unquoted content; numeric literals compare
/// by value when the option parses as a number.
bool option_matches(std::string_view raw, const Operand& literal);

}  // namespace multiverse
