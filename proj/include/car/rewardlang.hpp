#pragma once

// The reward-program language: a loop-free, dynamically typed DSL over the
// imaging primitives. Programs are parsed into an immutable AST, validated
// statically (names, arity, entrypoint, no recursion) and run by a
// fuel-limited tree-walking interpreter.
//
//   program := func+
//   func    := "fn" IDENT "(" ")" block
//   block   := "{" stmt* "}"
//   stmt    := "let" IDENT "=" expr ";" | "store" STRING "=" expr ";"
//            | "if" expr block ("else" (block | if-stmt))? | "return" expr ";"
//   expr    := literal | IDENT | IDENT "(" args ")" | expr BINOP expr
//            | ("-" | "!") expr | "(" expr ")"
//
// Comments run from "//" to end of line.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "car/error.hpp"
#include "car/frame.hpp"
#include "car/imaging.hpp"

namespace car::dsl {

inline constexpr std::uint64_t kDefaultFuel = 1'000'000;

enum class ProgramKind : std::uint8_t { Identify, Check, Reward };

std::string_view to_string(ProgramKind k);
// "identify", "check" or "reward".
std::string_view entry_name(ProgramKind k);
std::optional<ProgramKind> kind_from_string(std::string_view s);

struct Pos {
  int line = 1;
  int col = 1;
  friend bool operator==(const Pos&, const Pos&) = default;
};

std::string to_string(Pos p);

// ---- errors ----

class ParseError : public Error {
 public:
  ParseError(Pos pos, const std::string& message, std::vector<std::string> expected = {});
  Pos pos() const { return pos_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  Pos pos_;
  std::vector<std::string> expected_;
};

class WrongEntrypoint : public Error {
 public:
  using Error::Error;
};

enum class EvalErrorKind : std::uint8_t { FuelExhausted, RuntimeTypeError, MissingStoreKey, DivisionByZero };

std::string_view to_string(EvalErrorKind k);

class EvalError : public Error {
 public:
  EvalError(EvalErrorKind kind, Pos pos, const std::string& message);
  EvalErrorKind kind() const { return kind_; }
  Pos pos() const { return pos_; }

 private:
  EvalErrorKind kind_;
  Pos pos_;
};

#define CAR_DEFINE_EVAL_ERROR(Name)                                                        \
  class Name : public EvalError {                                                          \
   public:                                                                                 \
    Name(Pos pos, const std::string& message) : EvalError(EvalErrorKind::Name, pos, message) {} \
  }
CAR_DEFINE_EVAL_ERROR(FuelExhausted);
CAR_DEFINE_EVAL_ERROR(RuntimeTypeError);
CAR_DEFINE_EVAL_ERROR(MissingStoreKey);
CAR_DEFINE_EVAL_ERROR(DivisionByZero);
#undef CAR_DEFINE_EVAL_ERROR

// ---- AST ----

enum class ExprKind : std::uint8_t { Bool, Int, Real, Str, Var, Call, Unary, Binary };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind = ExprKind::Bool;
  Pos pos;
  bool b = false;
  std::int64_t i = 0;
  double r = 0.0;
  std::string text;  // string literal, variable, callee or operator
  std::vector<ExprPtr> args;
};

enum class StmtKind : std::uint8_t { Let, Store, If, Return };

struct Stmt {
  StmtKind kind = StmtKind::Return;
  Pos pos;
  std::string name;  // let target or store key
  ExprPtr expr;      // value or condition
  std::vector<Stmt> then_body;
  std::vector<Stmt> else_body;
  bool has_else = false;
};

struct Function {
  std::string name;
  Pos pos;
  std::vector<Stmt> body;
};

struct Program {
  ProgramKind kind = ProgramKind::Check;
  std::vector<Function> functions;
  std::string source;

  const Function* find(std::string_view name) const;
  const Function& entry() const;
};

// Parses and validates. Throws ParseError, or WrongEntrypoint when the
// entry function for `kind` is absent or another entrypoint is also defined.
Program parse(std::string_view source, ProgramKind kind);
// Infers the kind from the single entry function present.
Program parse_any(std::string_view source);

// Canonical text. parse(format(p)) is structurally equal to p.
std::string format(const Program& p);
std::string format(const Expr& e);

// Equality of ASTs ignoring positions and source text.
bool same_structure(const Program& a, const Program& b);
bool same_structure(const Expr& a, const Expr& b);

// ---- values ----

struct Detection {
  bool found = false;
  std::vector<PointPx> locations;
  friend bool operator==(const Detection&, const Detection&) = default;
};

using MaskPtr = std::shared_ptr<const Mask>;
using FramePtr = std::shared_ptr<const Frame>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, PointPx, Rect, Contour, std::vector<Contour>, MaskPtr,
               FramePtr, Detection>
      v;

  std::string_view type_name() const;
  friend bool operator==(const Value& a, const Value& b);
};

std::string_view type_name_of_index(std::size_t index);

// ---- evaluation ----

struct EvalContext {
  FramePtr frame;
  FramePtr initial;
  std::map<std::string, Value> store;
  std::uint64_t fuel = kDefaultFuel;

  // Clears the store and installs a new initial frame.
  void begin_episode(FramePtr initial_frame);
};

Detection eval_identify(const Program& p, EvalContext& ctx);
bool eval_check(const Program& p, EvalContext& ctx);
double eval_reward(const Program& p, EvalContext& ctx);
// Runs the entrypoint whatever the kind; returns the raw value.
Value eval_entry(const Program& p, EvalContext& ctx);

// Builtin catalogue, also used to render the reference card.
struct BuiltinInfo {
  std::string_view name;
  int min_args;
  int max_args;
  std::string_view signature;
};
std::span<const BuiltinInfo> builtins();
const BuiltinInfo* find_builtin(std::string_view name);

}  // namespace car::dsl
