#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <functional>
#include <set>

#include "car/rewardlang.hpp"

namespace car::dsl {

std::string_view to_string(ProgramKind k) {
  switch (k) {
    case ProgramKind::Identify: return "Identify";
    case ProgramKind::Check: return "Check";
    case ProgramKind::Reward: return "Reward";
  }
  return "Check";
}

std::string_view entry_name(ProgramKind k) {
  switch (k) {
    case ProgramKind::Identify: return "identify";
    case ProgramKind::Check: return "check";
    case ProgramKind::Reward: return "reward";
  }
  return "check";
}

std::optional<ProgramKind> kind_from_string(std::string_view s) {
  for (ProgramKind k : {ProgramKind::Identify, ProgramKind::Check, ProgramKind::Reward}) {
    if (s == entry_name(k) || s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string to_string(Pos p) { return std::to_string(p.line) + ":" + std::to_string(p.col); }

namespace {

std::string describe_expected(const std::vector<std::string>& expected) {
  std::string out;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i > 0) out += i + 1 == expected.size() ? " or " : ", ";
    out += expected[i];
  }
  return out;
}

}  // namespace

ParseError::ParseError(Pos pos, const std::string& message, std::vector<std::string> expected)
    : Error(to_string(pos) + ": " + message + (expected.empty() ? "" : " (expected " + describe_expected(expected) + ")")),
      pos_(pos),
      expected_(std::move(expected)) {}

const Function* Program::find(std::string_view name) const {
  for (const Function& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const Function& Program::entry() const {
  const Function* f = find(entry_name(kind));
  if (f == nullptr) throw WrongEntrypoint("program has no " + std::string(entry_name(kind)) + "() function");
  return *f;
}

namespace {

const std::set<std::string, std::less<>> kKeywords = {"fn", "let", "store", "if", "else", "return", "true", "false"};

enum class Tok : std::uint8_t { Ident, Int, Real, Str, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t i = 0;
  double r = 0.0;
  Pos pos;
};

std::string show(const Token& t) {
  switch (t.kind) {
    case Tok::End: return "end of input";
    case Tok::Str: return "string literal";
    default: return "'" + t.text + "'";
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space();
      Token t;
      t.pos = {line_, col_};
      if (at_end()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = peek();
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Tok::Ident;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) t.text += get();
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        number(t);
      } else if (c == '"') {
        string(t);
      } else {
        static const std::array<std::string_view, 6> kTwo = {"==", "!=", "<=", ">=", "&&", "||"};
        t.kind = Tok::Punct;
        for (std::string_view two : kTwo) {
          if (src_.substr(i_, 2) == two) {
            get();
            get();
            t.text = std::string(two);
            break;
          }
        }
        if (t.text.empty()) {
          static constexpr std::string_view kOne = "(){},;=+-*/%<>!";
          if (kOne.find(c) == std::string_view::npos) {
            throw ParseError(t.pos, std::string("unexpected character '") + c + "'");
          }
          t.text = std::string(1, get());
        }
      }
      out.push_back(std::move(t));
    }
  }

 private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(std::size_t k = 0) const { return i_ + k < src_.size() ? src_[i_ + k] : '\0'; }
  char get() {
    const char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (!at_end()) {
      if (std::isspace(static_cast<unsigned char>(peek()))) {
        get();
      } else if (peek() == '/' && peek(1) == '/') {
        while (!at_end() && peek() != '\n') get();
      } else {
        return;
      }
    }
  }

  void number(Token& t) {
    const std::size_t start = i_;
    bool real = false;
    while (std::isdigit(static_cast<unsigned char>(peek()))) get();
    if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
      real = true;
      get();
      while (std::isdigit(static_cast<unsigned char>(peek()))) get();
    }
    if ((peek() == 'e' || peek() == 'E') &&
        (std::isdigit(static_cast<unsigned char>(peek(1))) ||
         ((peek(1) == '+' || peek(1) == '-') && std::isdigit(static_cast<unsigned char>(peek(2)))))) {
      real = true;
      get();
      if (peek() == '+' || peek() == '-') get();
      while (std::isdigit(static_cast<unsigned char>(peek()))) get();
    }
    t.text = std::string(src_.substr(start, i_ - start));
    const char* b = t.text.data();
    const char* e = b + t.text.size();
    if (real) {
      t.kind = Tok::Real;
      const auto res = std::from_chars(b, e, t.r);
      if (res.ec != std::errc() || !std::isfinite(t.r)) throw ParseError(t.pos, "real literal out of range");
    } else {
      t.kind = Tok::Int;
      const auto res = std::from_chars(b, e, t.i);
      if (res.ec != std::errc()) throw ParseError(t.pos, "integer literal out of range");
    }
  }

  void string(Token& t) {
    t.kind = Tok::Str;
    get();
    while (true) {
      if (at_end() || peek() == '\n') throw ParseError(t.pos, "unterminated string literal");
      const char c = get();
      if (c == '"') return;
      if (c == '\\') {
        if (at_end()) throw ParseError(t.pos, "unterminated string literal");
        const char esc = get();
        switch (esc) {
          case 'n': t.text += '\n'; break;
          case 't': t.text += '\t'; break;
          case '"': t.text += '"'; break;
          case '\\': t.text += '\\'; break;
          default: throw ParseError({line_, col_ - 1}, std::string("unknown escape '\\") + esc + "'");
        }
      } else {
        t.text += c;
      }
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

int binary_precedence(std::string_view op) {
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "==" || op == "!=") return 3;
  if (op == "<" || op == "<=" || op == ">" || op == ">=") return 4;
  if (op == "+" || op == "-") return 5;
  if (op == "*" || op == "/" || op == "%") return 6;
  return 0;
}

constexpr int kUnaryPrecedence = 7;

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  std::vector<Function> program() {
    std::vector<Function> fns;
    while (cur().kind != Tok::End) fns.push_back(function());
    if (fns.empty()) throw ParseError(cur().pos, "empty program", {"'fn'"});
    return fns;
  }

 private:
  const Token& cur() const { return toks_[k_]; }
  bool is(std::string_view punct_or_kw) const {
    return (cur().kind == Tok::Punct || cur().kind == Tok::Ident) && cur().text == punct_or_kw;
  }
  Token take() { return toks_[k_ < toks_.size() - 1 ? k_++ : k_]; }
  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw ParseError(cur().pos, "unexpected " + show(cur()), std::move(expected));
  }
  Token expect(std::string_view text) {
    if (!is(text)) fail({"'" + std::string(text) + "'"});
    return take();
  }
  Token ident(const char* what) {
    if (cur().kind != Tok::Ident || kKeywords.contains(cur().text)) fail({what});
    return take();
  }

  Function function() {
    Function f;
    f.pos = expect("fn").pos;
    f.name = ident("function name").text;
    expect("(");
    expect(")");
    f.body = block();
    return f;
  }

  std::vector<Stmt> block() {
    expect("{");
    std::vector<Stmt> body;
    while (!is("}")) {
      if (cur().kind == Tok::End) fail({"'}'"});
      body.push_back(statement());
    }
    take();
    return body;
  }

  Stmt statement() {
    Stmt s;
    s.pos = cur().pos;
    if (is("let")) {
      take();
      s.kind = StmtKind::Let;
      s.name = ident("variable name").text;
      expect("=");
      s.expr = expression(0);
      expect(";");
    } else if (is("store")) {
      take();
      s.kind = StmtKind::Store;
      if (cur().kind != Tok::Str) fail({"string literal"});
      s.name = take().text;
      expect("=");
      s.expr = expression(0);
      expect(";");
    } else if (is("if")) {
      return if_statement();
    } else if (is("return")) {
      take();
      s.kind = StmtKind::Return;
      s.expr = expression(0);
      expect(";");
    } else {
      fail({"'let'", "'store'", "'if'", "'return'", "'}'"});
    }
    return s;
  }

  Stmt if_statement() {
    Stmt s;
    s.kind = StmtKind::If;
    s.pos = expect("if").pos;
    s.expr = expression(0);
    s.then_body = block();
    if (is("else")) {
      take();
      s.has_else = true;
      if (is("if")) {
        s.else_body.push_back(if_statement());
      } else {
        s.else_body = block();
      }
    }
    return s;
  }

  ExprPtr expression(int min_prec) {
    ExprPtr lhs = unary();
    while (cur().kind == Tok::Punct) {
      const int prec = binary_precedence(cur().text);
      if (prec == 0 || prec <= min_prec) break;
      const Token op = take();
      ExprPtr rhs = expression(prec);
      auto e = std::make_shared<Expr>();
      e->kind = ExprKind::Binary;
      e->pos = op.pos;
      e->text = op.text;
      e->args = {std::move(lhs), std::move(rhs)};
      lhs = std::move(e);
    }
    return lhs;
  }

  ExprPtr unary() {
    if (is("-") || is("!")) {
      const Token op = take();
      auto e = std::make_shared<Expr>();
      e->kind = ExprKind::Unary;
      e->pos = op.pos;
      e->text = op.text;
      e->args = {unary()};
      return e;
    }
    return primary();
  }

  ExprPtr primary() {
    auto e = std::make_shared<Expr>();
    e->pos = cur().pos;
    switch (cur().kind) {
      case Tok::Int:
        e->kind = ExprKind::Int;
        e->i = take().i;
        return e;
      case Tok::Real:
        e->kind = ExprKind::Real;
        e->r = take().r;
        return e;
      case Tok::Str:
        e->kind = ExprKind::Str;
        e->text = take().text;
        return e;
      case Tok::Ident:
        if (is("true") || is("false")) {
          e->kind = ExprKind::Bool;
          e->b = take().text == "true";
          return e;
        }
        if (kKeywords.contains(cur().text)) break;
        e->text = take().text;
        if (is("(")) {
          take();
          e->kind = ExprKind::Call;
          if (!is(")")) {
            e->args.push_back(expression(0));
            while (is(",")) {
              take();
              e->args.push_back(expression(0));
            }
          }
          expect(")");
        } else {
          e->kind = ExprKind::Var;
        }
        return e;
      case Tok::Punct:
        if (is("(")) {
          take();
          ExprPtr inner = expression(0);
          expect(")");
          return inner;
        }
        break;
      case Tok::End: break;
    }
    fail({"expression"});
  }

  std::vector<Token> toks_;
  std::size_t k_ = 0;
};

// ---- validation ----

class Validator {
 public:
  explicit Validator(const std::vector<Function>& fns) : fns_(fns) {}

  void run() {
    for (const Function& f : fns_) {
      if (find_builtin(f.name) != nullptr) throw ParseError(f.pos, "function '" + f.name + "' shadows a builtin");
      if (!names_.insert(f.name).second) throw ParseError(f.pos, "function '" + f.name + "' defined twice");
    }
    for (const Function& f : fns_) {
      current_ = &f;
      std::vector<std::set<std::string>> scopes(1);
      block(f.body, scopes);
      bool returns = false;
      for (const Stmt& s : f.body) returns = returns || definitely_returns(s);
      if (!returns) throw ParseError(f.pos, "function '" + f.name + "' may finish without returning a value");
    }
    // Reject recursion: the call graph must be acyclic.
    std::map<std::string, int> state;
    std::function<void(const std::string&)> visit = [&](const std::string& name) {
      state[name] = 1;
      for (const auto& [callee, pos] : calls_[name]) {
        if (state[callee] == 1) throw ParseError(pos, "recursive call to '" + callee + "'");
        if (state[callee] == 0) visit(callee);
      }
      state[name] = 2;
    };
    for (const Function& f : fns_) {
      if (state[f.name] == 0) visit(f.name);
    }
  }

 private:
  static bool definitely_returns(const Stmt& s) {
    if (s.kind == StmtKind::Return) return true;
    if (s.kind != StmtKind::If || !s.has_else) return false;
    auto all = [](const std::vector<Stmt>& b) {
      return std::any_of(b.begin(), b.end(), [](const Stmt& x) { return definitely_returns(x); });
    };
    return all(s.then_body) && all(s.else_body);
  }

  void block(const std::vector<Stmt>& body, std::vector<std::set<std::string>>& scopes) {
    for (const Stmt& s : body) {
      switch (s.kind) {
        case StmtKind::Let:
          expr(*s.expr, scopes);
          scopes.back().insert(s.name);
          break;
        case StmtKind::Store:
        case StmtKind::Return: expr(*s.expr, scopes); break;
        case StmtKind::If:
          expr(*s.expr, scopes);
          scopes.emplace_back();
          block(s.then_body, scopes);
          scopes.pop_back();
          scopes.emplace_back();
          block(s.else_body, scopes);
          scopes.pop_back();
          break;
      }
    }
  }

  void expr(const Expr& e, std::vector<std::set<std::string>>& scopes) {
    switch (e.kind) {
      case ExprKind::Var: {
        const bool known =
            std::any_of(scopes.begin(), scopes.end(), [&](const auto& sc) { return sc.contains(e.text); });
        if (!known) throw ParseError(e.pos, "undefined variable '" + e.text + "'");
        break;
      }
      case ExprKind::Call:
        if (const BuiltinInfo* b = find_builtin(e.text)) {
          const int n = static_cast<int>(e.args.size());
          if (n < b->min_args || n > b->max_args) {
            throw ParseError(e.pos, "wrong number of arguments to '" + e.text + "', signature " +
                                        std::string(b->signature));
          }
        } else if (names_.contains(e.text)) {
          if (!e.args.empty()) throw ParseError(e.pos, "function '" + e.text + "' takes no arguments");
          calls_[current_->name].emplace_back(e.text, e.pos);
        } else {
          throw ParseError(e.pos, "unknown function '" + e.text + "'");
        }
        break;
      default: break;
    }
    for (const ExprPtr& a : e.args) expr(*a, scopes);
  }

  const std::vector<Function>& fns_;
  const Function* current_ = nullptr;
  std::set<std::string> names_;
  std::map<std::string, std::vector<std::pair<std::string, Pos>>> calls_;
};

std::vector<Function> parse_functions(std::string_view source) {
  Parser parser(Lexer(source).run());
  std::vector<Function> fns = parser.program();
  Validator(fns).run();
  return fns;
}

}  // namespace

Program parse(std::string_view source, ProgramKind kind) {
  Program p;
  p.kind = kind;
  p.functions = parse_functions(source);
  p.source = std::string(source);
  for (ProgramKind other : {ProgramKind::Identify, ProgramKind::Check, ProgramKind::Reward}) {
    if (other != kind && p.find(entry_name(other)) != nullptr) {
      throw WrongEntrypoint("a " + std::string(to_string(kind)) + " program must not define " +
                            std::string(entry_name(other)) + "()");
    }
  }
  (void)p.entry();
  return p;
}

Program parse_any(std::string_view source) {
  Program p;
  p.functions = parse_functions(source);
  p.source = std::string(source);
  int found = 0;
  for (ProgramKind k : {ProgramKind::Identify, ProgramKind::Check, ProgramKind::Reward}) {
    if (p.find(entry_name(k)) != nullptr) {
      p.kind = k;
      ++found;
    }
  }
  if (found != 1) throw WrongEntrypoint("program must define exactly one of identify(), check(), reward()");
  return p;
}

// ---- formatting ----

namespace {

int precedence(const Expr& e) {
  if (e.kind == ExprKind::Binary) return binary_precedence(e.text);
  if (e.kind == ExprKind::Unary) return kUnaryPrecedence;
  return 8;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string real_text(double r) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, r);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

void format_expr(const Expr& e, std::string& out) {
  switch (e.kind) {
    case ExprKind::Bool: out += e.b ? "true" : "false"; return;
    case ExprKind::Int: out += std::to_string(e.i); return;
    case ExprKind::Real: out += real_text(e.r); return;
    case ExprKind::Str: out += quote(e.text); return;
    case ExprKind::Var: out += e.text; return;
    case ExprKind::Call:
      out += e.text;
      out += '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i > 0) out += ", ";
        format_expr(*e.args[i], out);
      }
      out += ')';
      return;
    case ExprKind::Unary: {
      out += e.text;
      const Expr& a = *e.args[0];
      const bool paren = precedence(a) < kUnaryPrecedence;
      if (paren) out += '(';
      format_expr(a, out);
      if (paren) out += ')';
      return;
    }
    case ExprKind::Binary: {
      const int p = precedence(e);
      const Expr& l = *e.args[0];
      const Expr& r = *e.args[1];
      const bool lp = precedence(l) < p;
      const bool rp = precedence(r) <= p;
      if (lp) out += '(';
      format_expr(l, out);
      if (lp) out += ')';
      out += ' ';
      out += e.text;
      out += ' ';
      if (rp) out += '(';
      format_expr(r, out);
      if (rp) out += ')';
      return;
    }
  }
}

void format_block(const std::vector<Stmt>& body, int depth, std::string& out);

void format_if(const Stmt& s, int depth, std::string& out) {
  out += "if ";
  format_expr(*s.expr, out);
  out += " {\n";
  format_block(s.then_body, depth + 1, out);
  out += std::string(static_cast<std::size_t>(depth) * 2, ' ') + "}";
  if (!s.has_else) return;
  if (s.else_body.size() == 1 && s.else_body[0].kind == StmtKind::If) {
    out += " else ";
    format_if(s.else_body[0], depth, out);
    return;
  }
  out += " else {\n";
  format_block(s.else_body, depth + 1, out);
  out += std::string(static_cast<std::size_t>(depth) * 2, ' ') + "}";
}

void format_block(const std::vector<Stmt>& body, int depth, std::string& out) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  for (const Stmt& s : body) {
    out += indent;
    switch (s.kind) {
      case StmtKind::Let:
        out += "let " + s.name + " = ";
        format_expr(*s.expr, out);
        out += ";";
        break;
      case StmtKind::Store:
        out += "store " + quote(s.name) + " = ";
        format_expr(*s.expr, out);
        out += ";";
        break;
      case StmtKind::Return:
        out += "return ";
        format_expr(*s.expr, out);
        out += ";";
        break;
      case StmtKind::If: format_if(s, depth, out); break;
    }
    out += '\n';
  }
}

bool same_block(const std::vector<Stmt>& a, const std::vector<Stmt>& b);

bool same_stmt(const Stmt& a, const Stmt& b) {
  return a.kind == b.kind && a.name == b.name && a.has_else == b.has_else && same_structure(*a.expr, *b.expr) &&
         same_block(a.then_body, b.then_body) && same_block(a.else_body, b.else_body);
}

bool same_block(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), same_stmt);
}

}  // namespace

std::string format(const Expr& e) {
  std::string out;
  format_expr(e, out);
  return out;
}

std::string format(const Program& p) {
  std::string out;
  for (std::size_t i = 0; i < p.functions.size(); ++i) {
    if (i > 0) out += '\n';
    const Function& f = p.functions[i];
    out += "fn " + f.name + "() {\n";
    format_block(f.body, 1, out);
    out += "}\n";
  }
  return out;
}

bool same_structure(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.text != b.text || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case ExprKind::Bool:
      if (a.b != b.b) return false;
      break;
    case ExprKind::Int:
      if (a.i != b.i) return false;
      break;
    case ExprKind::Real:
      if (a.r != b.r) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!same_structure(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

bool same_structure(const Program& a, const Program& b) {
  if (a.kind != b.kind || a.functions.size() != b.functions.size()) return false;
  for (std::size_t i = 0; i < a.functions.size(); ++i) {
    if (a.functions[i].name != b.functions[i].name || !same_block(a.functions[i].body, b.functions[i].body)) {
      return false;
    }
  }
  return true;
}

}  // namespace car::dsl
