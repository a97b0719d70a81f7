#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icms/safety/features.hpp"
#include "icms/types.hpp"

namespace icms::safety {

enum class Feature { avg_speed, vehicle_count, speeding_count, pedestrian_count, hour_of_day };
enum class CmpOp { gt, ge, lt, le, eq, ne };

std::string_view to_string(Feature f);
std::optional<Feature> feature_from(std::string_view name);
std::string_view to_string(CmpOp op);

inline constexpr int kMaxRuleDepth = 32;

// Boolean AST. AND/OR are n-ary: an unparenthesised chain "a AND b AND c"
// is one node with three children.
struct Expr {
  enum class Kind { compare, negate, all_of, any_of };

  Kind kind = Kind::compare;
  Feature feature = Feature::avg_speed;
  CmpOp op = CmpOp::gt;
  double value = 0.0;
  std::vector<Expr> children;

  static Expr compare(Feature f, CmpOp op, double value);
  static Expr negate(Expr operand);
  static Expr all_of(std::vector<Expr> operands);
  static Expr any_of(std::vector<Expr> operands);

  bool operator==(const Expr&) const = default;
};

struct RuleExpression {
  Expr expression;
  Severity severity = Severity::warning;

  bool operator==(const RuleExpression&) const = default;
};

// Throws RuleSyntaxError (line/column, 1-based) on syntax errors, unknown
// identifiers and nesting beyond kMaxRuleDepth.
RuleExpression parse_rule(std::string_view text);

std::string pretty_print(const Expr& e);
std::string pretty_print(const RuleExpression& r);

int depth(const Expr& e);

// Comparisons on an absent avg_speed are false.
bool evaluate(const Expr& e, const WindowFeatures& f);

struct Rule {
  std::uint64_t rule_id = 0;
  std::string name;
  std::string text;
  RuleExpression parsed;
  bool enabled = true;

  Severity severity() const { return parsed.severity; }
  bool operator==(const Rule&) const = default;
};

Rule make_rule(std::uint64_t id, std::string name, std::string text, bool enabled = true);

std::optional<Severity> eval_rule(const Rule& rule, const WindowFeatures& f);

}  // namespace icms::safety
