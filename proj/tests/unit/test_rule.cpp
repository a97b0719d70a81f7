#include <doctest.h>

#include <random>

#include "icms/error.hpp"
#include "icms/safety/rule.hpp"
#include "rule_oracle.hpp"

using namespace icms;
using namespace icms::safety;
using icms::test::AstGen;
using icms::test::oracle;

namespace {

struct SyntaxFailure {
  std::string message;
  int line = 0;
  int column = 0;
};

SyntaxFailure syntax_failure(std::string_view text) {
  try {
    parse_rule(text);
  } catch (const RuleSyntaxError& e) {
    CHECK(e.code() == ErrorCode::RuleSyntax);
    return {e.what(), e.line(), e.column()};
  }
  FAIL("rule accepted: " << text);
  return {};
}

Expr cmp(Feature f, CmpOp op, double v) { return Expr::compare(f, op, v); }

}  // namespace

TEST_CASE("rules parse into the documented AST") {
  const auto r = parse_rule("avg_speed > 50 AND pedestrian_count >= 10 -> danger");
  CHECK(r.severity == Severity::danger);
  CHECK(r.expression == Expr::all_of({cmp(Feature::avg_speed, CmpOp::gt, 50),
                                      cmp(Feature::pedestrian_count, CmpOp::ge, 10)}));

  const auto n = parse_rule("NOT (vehicle_count == 0) -> warning");
  CHECK(n.severity == Severity::warning);
  CHECK(n.expression == Expr::negate(cmp(Feature::vehicle_count, CmpOp::eq, 0)));

  // AND binds tighter than OR
  const auto p = parse_rule("hour_of_day < 6 OR hour_of_day >= 22 AND speeding_count != 0 -> warning");
  CHECK(p.expression == Expr::any_of({cmp(Feature::hour_of_day, CmpOp::lt, 6),
                                      Expr::all_of({cmp(Feature::hour_of_day, CmpOp::ge, 22),
                                                    cmp(Feature::speeding_count, CmpOp::ne, 0)})}));
  CHECK(parse_rule("  avg_speed<=12.5\n->\twarning ").expression == cmp(Feature::avg_speed, CmpOp::le, 12.5));
}

TEST_CASE("syntax errors point at the offending token") {
  const auto e = syntax_failure("speed >> 5 -> danger");
  CHECK(e.line == 1);
  CHECK(e.column == 8);

  const auto multi = syntax_failure("avg_speed > 50 AND\n  pedestrian_count >= -> danger");
  CHECK(multi.line == 2);
  CHECK(multi.column == 23);

  CHECK(syntax_failure("avg_speed > 50").message.find("'->'") != std::string::npos);
  CHECK(syntax_failure("avg_speed > 50 -> fatal").message.find("severity") != std::string::npos);
  CHECK(syntax_failure("(avg_speed > 50 -> danger").message.find("')'") != std::string::npos);
  CHECK(syntax_failure("avg_speed > 5. -> danger").column == 15);
  CHECK(syntax_failure("avg_speed and 5 -> danger").column == 11);
  CHECK(syntax_failure("avg_speed > 50 -> danger danger").column == 26);
}

TEST_CASE("unknown identifiers are named") {
  const auto e = syntax_failure("speed > 5 -> danger");
  CHECK(e.message.find("'speed'") != std::string::npos);
  CHECK(e.column == 1);
  const auto later = syntax_failure("avg_speed > 1 AND lanes < 2 -> warning");
  CHECK(later.message.find("'lanes'") != std::string::npos);
  CHECK(later.column == 19);
  // keywords are case-sensitive
  CHECK(syntax_failure("avg_speed > 1 and avg_speed < 2 -> warning").column == 15);
}

TEST_CASE("depth is bounded") {
  std::string deep = "avg_speed > 1";
  for (int i = 1; i < kMaxRuleDepth; ++i) deep = "NOT " + deep;
  CHECK(depth(parse_rule(deep + " -> warning").expression) == kMaxRuleDepth);
  CHECK(syntax_failure("NOT " + deep + " -> warning").message.find("depth") != std::string::npos);

  std::string parens(10000, '(');
  CHECK(syntax_failure(parens + "avg_speed > 1" + std::string(10000, ')') + " -> warning").message.find("depth") !=
        std::string::npos);
}

TEST_CASE("pretty printing round-trips through the parser") {
  const auto r = parse_rule("(avg_speed > 50 OR vehicle_count>3) AND NOT speeding_count == 0 -> danger");
  CHECK(pretty_print(r) == "(avg_speed > 50 OR vehicle_count > 3) AND NOT speeding_count == 0 -> danger");
  CHECK(pretty_print(parse_rule("NOT (avg_speed > 1 AND avg_speed < 2) -> warning")) ==
        "NOT (avg_speed > 1 AND avg_speed < 2) -> warning");
  CHECK(pretty_print(parse_rule("avg_speed > 0.1 -> warning")) == "avg_speed > 0.1 -> warning");

  AstGen gen(99);
  for (int i = 0; i < 1000; ++i) {
    const RuleExpression rule{gen.expr(1 + static_cast<int>(gen.rng()() % 8)),
                              gen.rng()() % 2 ? Severity::danger : Severity::warning};
    const auto text = pretty_print(rule);
    const auto reparsed = parse_rule(text);
    REQUIRE_MESSAGE(reparsed == rule, text);
    CHECK(pretty_print(reparsed) == text);
  }
}

TEST_CASE("evaluation") {
  const auto rule = make_rule(1, "fast", "avg_speed > 50 AND pedestrian_count >= 10 -> danger");
  WindowFeatures w;
  w.avg_speed = 62;
  w.vehicle_count = 3;
  w.pedestrian_count = 12;
  CHECK(eval_rule(rule, w) == Severity::danger);

  WindowFeatures empty = w;
  empty.avg_speed.reset();
  empty.vehicle_count = 0;
  CHECK_FALSE(eval_rule(rule, empty).has_value());
  CHECK_FALSE(evaluate(cmp(Feature::avg_speed, CmpOp::ne, 1), empty));
  CHECK(evaluate(Expr::negate(cmp(Feature::avg_speed, CmpOp::gt, 1)), empty));

  auto disabled = rule;
  disabled.enabled = false;
  CHECK_FALSE(eval_rule(disabled, w).has_value());
}

TEST_CASE("evaluation agrees with an independent evaluator") {
  AstGen gen(2024);
  for (int i = 0; i < 10000; ++i) {
    const Expr e = gen.expr(1 + static_cast<int>(gen.rng()() % 5));
    REQUIRE(depth(e) <= 5);
    const auto w = gen.features();
    REQUIRE_MESSAGE(evaluate(e, w) == oracle(e, w), pretty_print(e));
  }
}

TEST_CASE("make_rule rejects bad text") {
  CHECK_THROWS_AS(make_rule(1, "x", "speed > 1 -> danger"), RuleSyntaxError);
  const auto r = make_rule(7, "night", "hour_of_day >= 22 -> warning", false);
  CHECK(r.rule_id == 7);
  CHECK(r.severity() == Severity::warning);
  CHECK_FALSE(r.enabled);
}
