#include "icms/safety/rule.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "icms/error.hpp"

namespace icms::safety {
namespace {

// Recursion guard for parenthesised input; the AST depth bound is checked
// separately once parsing succeeds.
constexpr int kMaxNesting = 4 * kMaxRuleDepth;

enum class Tok { ident, number, cmp, lparen, rparen, arrow, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  CmpOp op = CmpOp::gt;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::end;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          advance();
        }
        t.kind = Tok::ident;
        t.text = std::string(src_.substr(start, pos_ - start));
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        lex_number(t);
      } else if (c == '(' || c == ')') {
        t.kind = c == '(' ? Tok::lparen : Tok::rparen;
        t.text = std::string(1, c);
        advance();
      } else if (c == '-') {
        if (peek(1) != '>') fail("unexpected character '-'");
        t.kind = Tok::arrow;
        t.text = "->";
        advance();
        advance();
      } else if (c == '>' || c == '<') {
        t.kind = Tok::cmp;
        advance();
        if (pos_ < src_.size() && src_[pos_] == '=') {
          advance();
          t.op = c == '>' ? CmpOp::ge : CmpOp::le;
          t.text = std::string(1, c) + "=";
        } else {
          t.op = c == '>' ? CmpOp::gt : CmpOp::lt;
          t.text = std::string(1, c);
        }
      } else if (c == '=' || c == '!') {
        if (peek(1) != '=') fail(std::string("unexpected character '") + c + "'");
        t.kind = Tok::cmp;
        t.op = c == '=' ? CmpOp::eq : CmpOp::ne;
        t.text = std::string(1, c) + "=";
        advance();
        advance();
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char peek(std::size_t ahead) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  void lex_number(Token& t) {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        fail("expected digit after '.'");
      }
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    }
    t.kind = Tok::number;
    t.text = std::string(src_.substr(start, pos_ - start));
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
    if (ec != std::errc{} || !std::isfinite(t.number)) {
      throw RuleSyntaxError("number out of range '" + t.text + "'", t.line, t.column);
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw RuleSyntaxError(msg, line_, column_); }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

std::string describe(const Token& t) {
  return t.kind == Tok::end ? std::string("end of input") : "'" + t.text + "'";
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  RuleExpression run() {
    RuleExpression r;
    r.expression = expr();
    if (cur().kind != Tok::arrow) fail("expected '->' or boolean operator, found " + describe(cur()));
    next();
    const Token& sev = cur();
    const auto severity = sev.kind == Tok::ident ? severity_from(sev.text) : std::nullopt;
    if (!severity) fail("expected severity 'warning' or 'danger', found " + describe(sev));
    r.severity = *severity;
    next();
    if (cur().kind != Tok::end) fail("unexpected " + describe(cur()) + " after severity");
    // Identifiers are checked only after the whole rule is syntactically valid.
    if (unknown_) {
      throw RuleSyntaxError("unknown identifier '" + unknown_->text + "'", unknown_->line, unknown_->column);
    }
    if (const int d = depth(r.expression); d > kMaxRuleDepth) {
      throw RuleSyntaxError("rule depth " + std::to_string(d) + " exceeds limit of " +
                                std::to_string(kMaxRuleDepth),
                            1, 1);
    }
    return r;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  void next() {
    if (pos_ + 1 < toks_.size()) ++pos_;
  }
  bool keyword(std::string_view kw) const { return cur().kind == Tok::ident && cur().text == kw; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw RuleSyntaxError(msg, cur().line, cur().column);
  }

  void enter() {
    if (++nesting_ > kMaxNesting) fail("expression nesting exceeds depth limit");
  }

  Expr expr() {
    enter();
    std::vector<Expr> terms;
    terms.push_back(and_expr());
    while (keyword("OR")) {
      next();
      terms.push_back(and_expr());
    }
    --nesting_;
    return terms.size() == 1 ? std::move(terms.front()) : Expr::any_of(std::move(terms));
  }

  Expr and_expr() {
    std::vector<Expr> terms;
    terms.push_back(not_expr());
    while (keyword("AND")) {
      next();
      terms.push_back(not_expr());
    }
    return terms.size() == 1 ? std::move(terms.front()) : Expr::all_of(std::move(terms));
  }

  Expr not_expr() {
    if (keyword("NOT")) {
      next();
      enter();
      Expr inner = not_expr();
      --nesting_;
      return Expr::negate(std::move(inner));
    }
    return primary();
  }

  Expr primary() {
    if (cur().kind == Tok::lparen) {
      next();
      Expr inner = expr();
      if (cur().kind != Tok::rparen) fail("expected ')', found " + describe(cur()));
      next();
      return inner;
    }
    return comparison();
  }

  Expr comparison() {
    const Token& id = cur();
    if (id.kind != Tok::ident || id.text == "AND" || id.text == "OR" || id.text == "NOT") {
      fail("expected feature identifier, found " + describe(id));
    }
    auto feature = feature_from(id.text);
    if (!feature && !unknown_) unknown_ = id;
    next();
    if (cur().kind != Tok::cmp) fail("expected comparison operator, found " + describe(cur()));
    const CmpOp op = cur().op;
    next();
    if (cur().kind != Tok::number) fail("expected number, found " + describe(cur()));
    const double value = cur().number;
    next();
    return Expr::compare(feature.value_or(Feature::avg_speed), op, value);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int nesting_ = 0;
  std::optional<Token> unknown_;
};

std::string format_number(double v) {
  char buf[512];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  if (ec != std::errc{}) return "0";
  return std::string(buf, p);
}

bool compare(double lhs, CmpOp op, double rhs) {
  switch (op) {
    case CmpOp::gt: return lhs > rhs;
    case CmpOp::ge: return lhs >= rhs;
    case CmpOp::lt: return lhs < rhs;
    case CmpOp::le: return lhs <= rhs;
    case CmpOp::eq: return lhs == rhs;
    case CmpOp::ne: return lhs != rhs;
  }
  return false;
}

std::optional<double> feature_value(Feature f, const WindowFeatures& w) {
  switch (f) {
    case Feature::avg_speed: return w.avg_speed;
    case Feature::vehicle_count: return static_cast<double>(w.vehicle_count);
    case Feature::speeding_count: return static_cast<double>(w.speeding_count);
    case Feature::pedestrian_count: return static_cast<double>(w.pedestrian_count);
    case Feature::hour_of_day: return static_cast<double>(w.hour_of_day);
  }
  return std::nullopt;
}

void print(const Expr& e, std::string& out) {
  auto operand = [&](const Expr& child) {
    const bool group = child.kind == Expr::Kind::all_of || child.kind == Expr::Kind::any_of;
    if (group) out += '(';
    print(child, out);
    if (group) out += ')';
  };
  switch (e.kind) {
    case Expr::Kind::compare:
      out += to_string(e.feature);
      out += ' ';
      out += to_string(e.op);
      out += ' ';
      out += format_number(e.value);
      break;
    case Expr::Kind::negate:
      out += "NOT ";
      operand(e.children.front());
      break;
    case Expr::Kind::all_of:
    case Expr::Kind::any_of: {
      const char* sep = e.kind == Expr::Kind::all_of ? " AND " : " OR ";
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += sep;
        operand(e.children[i]);
      }
      break;
    }
  }
}

}  // namespace

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::avg_speed: return "avg_speed";
    case Feature::vehicle_count: return "vehicle_count";
    case Feature::speeding_count: return "speeding_count";
    case Feature::pedestrian_count: return "pedestrian_count";
    case Feature::hour_of_day: return "hour_of_day";
  }
  return "avg_speed";
}

std::optional<Feature> feature_from(std::string_view name) {
  if (name == "avg_speed") return Feature::avg_speed;
  if (name == "vehicle_count") return Feature::vehicle_count;
  if (name == "speeding_count") return Feature::speeding_count;
  if (name == "pedestrian_count") return Feature::pedestrian_count;
  if (name == "hour_of_day") return Feature::hour_of_day;
  return std::nullopt;
}

std::string_view to_string(CmpOp op) {
  switch (op) {
    case CmpOp::gt: return ">";
    case CmpOp::ge: return ">=";
    case CmpOp::lt: return "<";
    case CmpOp::le: return "<=";
    case CmpOp::eq: return "==";
    case CmpOp::ne: return "!=";
  }
  return ">";
}

Expr Expr::compare(Feature f, CmpOp op, double value) {
  Expr e;
  e.kind = Kind::compare;
  e.feature = f;
  e.op = op;
  e.value = value;
  return e;
}

Expr Expr::negate(Expr operand) {
  Expr e;
  e.kind = Kind::negate;
  e.children.push_back(std::move(operand));
  return e;
}

Expr Expr::all_of(std::vector<Expr> operands) {
  Expr e;
  e.kind = Kind::all_of;
  e.children = std::move(operands);
  return e;
}

Expr Expr::any_of(std::vector<Expr> operands) {
  Expr e;
  e.kind = Kind::any_of;
  e.children = std::move(operands);
  return e;
}

RuleExpression parse_rule(std::string_view text) {
  return Parser(Lexer(text).run()).run();
}

std::string pretty_print(const Expr& e) {
  std::string out;
  print(e, out);
  return out;
}

std::string pretty_print(const RuleExpression& r) {
  return pretty_print(r.expression) + " -> " + std::string(to_string(r.severity));
}

int depth(const Expr& e) {
  int deepest = 0;
  for (const auto& c : e.children) deepest = std::max(deepest, depth(c));
  return deepest + 1;
}

bool evaluate(const Expr& e, const WindowFeatures& f) {
  switch (e.kind) {
    case Expr::Kind::compare: {
      const auto lhs = feature_value(e.feature, f);
      return lhs && compare(*lhs, e.op, e.value);
    }
    case Expr::Kind::negate:
      return !evaluate(e.children.front(), f);
    case Expr::Kind::all_of:
      return std::all_of(e.children.begin(), e.children.end(),
                         [&](const Expr& c) { return evaluate(c, f); });
    case Expr::Kind::any_of:
      return std::any_of(e.children.begin(), e.children.end(),
                         [&](const Expr& c) { return evaluate(c, f); });
  }
  return false;
}

Rule make_rule(std::uint64_t id, std::string name, std::string text, bool enabled) {
  Rule r;
  r.rule_id = id;
  r.parsed = parse_rule(text);
  r.name = std::move(name);
  r.text = std::move(text);
  r.enabled = enabled;
  return r;
}

std::optional<Severity> eval_rule(const Rule& rule, const WindowFeatures& f) {
  if (!rule.enabled) return std::nullopt;
  if (evaluate(rule.parsed.expression, f)) return rule.parsed.severity;
  return std::nullopt;
}

}  // namespace icms::safety
