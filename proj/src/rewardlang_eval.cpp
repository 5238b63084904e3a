#include <algorithm>
#include <cmath>

#include "car/rewardlang.hpp"

namespace car::dsl {

std::string_view to_string(EvalErrorKind k) {
  switch (k) {
    case EvalErrorKind::FuelExhausted: return "FuelExhausted";
    case EvalErrorKind::RuntimeTypeError: return "RuntimeTypeError";
    case EvalErrorKind::MissingStoreKey: return "MissingStoreKey";
    case EvalErrorKind::DivisionByZero: return "DivisionByZero";
  }
  return "RuntimeTypeError";
}

EvalError::EvalError(EvalErrorKind kind, Pos pos, const std::string& message)
    : Error(std::string(to_string(kind)) + " at " + to_string(pos) + ": " + message), kind_(kind), pos_(pos) {}

std::string_view type_name_of_index(std::size_t index) {
  static constexpr std::array<std::string_view, 11> kNames = {
      "bool", "int", "real", "string", "point", "rect", "contour", "contours", "mask", "image", "detection"};
  return index < kNames.size() ? kNames[index] : "?";
}

std::string_view Value::type_name() const { return type_name_of_index(v.index()); }

bool operator==(const Value& a, const Value& b) {
  if (a.v.index() != b.v.index()) return false;
  if (const auto* m = std::get_if<MaskPtr>(&a.v)) {
    const auto& n = std::get<MaskPtr>(b.v);
    return m->get() == n.get() || (*m && n && **m == *n);
  }
  if (const auto* f = std::get_if<FramePtr>(&a.v)) {
    const auto& g = std::get<FramePtr>(b.v);
    return f->get() == g.get() || (*f && g && **f == *g);
  }
  return a.v == b.v;
}

void EvalContext::begin_episode(FramePtr initial_frame) {
  initial = std::move(initial_frame);
  store.clear();
}

namespace {

constexpr std::array<BuiltinInfo, 30> kBuiltins = {{
    {"frame", 0, 0, "frame() -> image"},
    {"initial", 0, 0, "initial() -> image"},
    {"mask", 2, 3, "mask(image, color: string[, tolerance: int]) -> mask"},
    {"contours", 1, 1, "contours(mask) -> contours"},
    {"approx", 2, 2, "approx(contour | contours, eps: number) -> same"},
    {"hull", 1, 1, "hull(contour | contours) -> same"},
    {"vertices", 1, 1, "vertices(contour) -> int"},
    {"area", 1, 1, "area(contour) -> real"},
    {"centroid", 1, 1, "centroid(contour) -> point"},
    {"bbox", 1, 1, "bbox(contour) -> rect"},
    {"count", 1, 1, "count(contours | mask | detection) -> int"},
    {"nth", 2, 2, "nth(contours | detection, index: int) -> contour | point"},
    {"filter_area", 3, 3, "filter_area(contours, min: number, max: number) -> contours"},
    {"filter_vertices", 4, 4, "filter_vertices(contours, eps: number, min: int, max: int) -> contours"},
    {"largest", 1, 1, "largest(contours) -> contour"},
    {"contains", 2, 2, "contains(contour | rect, point | contour) -> bool"},
    {"dist", 2, 2, "dist(point, point) -> real"},
    {"found", 1, 1, "found(detection) -> bool"},
    {"detection", 0, 2, "detection([flag: bool,] [point | contour | contours]) -> detection"},
    {"recall", 1, 1, "recall(key: string) -> value"},
    {"has", 1, 1, "has(key: string) -> bool"},
    {"point", 2, 2, "point(x: number, y: number) -> point"},
    {"x", 1, 1, "x(point | rect) -> number"},
    {"y", 1, 1, "y(point | rect) -> number"},
    {"width", 1, 1, "width(rect | image | mask) -> int"},
    {"height", 1, 1, "height(rect | image | mask) -> int"},
    {"abs", 1, 1, "abs(number) -> number"},
    {"min", 2, 2, "min(number, number) -> number"},
    {"max", 2, 2, "max(number, number) -> number"},
    {"sqrt", 1, 1, "sqrt(number) -> real"},
}};

}  // namespace

std::span<const BuiltinInfo> builtins() { return kBuiltins; }

const BuiltinInfo* find_builtin(std::string_view name) {
  for (const BuiltinInfo& b : kBuiltins) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

namespace {

template <class T>
Value make(T x) {
  return Value{std::move(x)};
}

class Interpreter {
 public:
  Interpreter(const Program& p, EvalContext& ctx) : p_(p), ctx_(ctx) {}

  Value call(const Function& f) {
    std::vector<std::map<std::string, Value>> scopes(1);
    auto r = block(f.body, scopes);
    if (!r) throw RuntimeTypeError(f.pos, "function '" + f.name + "' finished without returning");
    return std::move(*r);
  }

 private:
  void charge(Pos pos) {
    if (ctx_.fuel == 0) throw FuelExhausted(pos, "fuel budget exhausted");
    --ctx_.fuel;
  }

  [[noreturn]] static void type_error(const Expr& e, const std::string& what) { throw RuntimeTypeError(e.pos, what); }

  std::optional<Value> block(const std::vector<Stmt>& body, std::vector<std::map<std::string, Value>>& scopes) {
    for (const Stmt& s : body) {
      charge(s.pos);
      switch (s.kind) {
        case StmtKind::Let: scopes.back()[s.name] = eval(*s.expr, scopes); break;
        case StmtKind::Store: ctx_.store[s.name] = eval(*s.expr, scopes); break;
        case StmtKind::Return: return eval(*s.expr, scopes);
        case StmtKind::If: {
          const Value c = eval(*s.expr, scopes);
          const bool* b = std::get_if<bool>(&c.v);
          if (b == nullptr) type_error(*s.expr, "if condition must be bool, got " + std::string(c.type_name()));
          scopes.emplace_back();
          auto r = block(*b ? s.then_body : s.else_body, scopes);
          scopes.pop_back();
          if (r) return r;
          break;
        }
      }
    }
    return std::nullopt;
  }

  Value eval(const Expr& e, std::vector<std::map<std::string, Value>>& scopes) {
    charge(e.pos);
    switch (e.kind) {
      case ExprKind::Bool: return make(e.b);
      case ExprKind::Int: return make(e.i);
      case ExprKind::Real: return make(e.r);
      case ExprKind::Str: return make(e.text);
      case ExprKind::Var:
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
          if (auto f = it->find(e.text); f != it->end()) return f->second;
        }
        type_error(e, "undefined variable '" + e.text + "'");
      case ExprKind::Unary: return unary(e, eval(*e.args[0], scopes));
      case ExprKind::Binary: {
        if (e.text == "&&" || e.text == "||") {
          const Value l = eval(*e.args[0], scopes);
          const bool* lb = std::get_if<bool>(&l.v);
          if (lb == nullptr) type_error(e, "'" + e.text + "' needs bool operands, got " + std::string(l.type_name()));
          if ((e.text == "&&") != *lb) return make(*lb);
          const Value r = eval(*e.args[1], scopes);
          const bool* rb = std::get_if<bool>(&r.v);
          if (rb == nullptr) type_error(e, "'" + e.text + "' needs bool operands, got " + std::string(r.type_name()));
          return make(*rb);
        }
        Value l = eval(*e.args[0], scopes);
        Value r = eval(*e.args[1], scopes);
        return binary(e, l, r);
      }
      case ExprKind::Call: {
        if (const Function* f = p_.find(e.text)) return call(*f);
        std::vector<Value> args;
        args.reserve(e.args.size());
        for (const ExprPtr& a : e.args) args.push_back(eval(*a, scopes));
        try {
          return builtin(e, args);
        } catch (const EvalError&) {
          throw;
        } catch (const Error& err) {
          // Imaging failures (degenerate contour, unknown color) surface as type errors.
          type_error(e, std::string(err.what()));
        }
      }
    }
    type_error(e, "unknown expression");
  }

  static bool is_number(const Value& v) { return v.v.index() == 1 || v.v.index() == 2; }

  static double number(const Expr& e, const Value& v, const char* what) {
    if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
    if (const auto* r = std::get_if<double>(&v.v)) return *r;
    type_error(e, std::string(what) + " must be a number, got " + std::string(v.type_name()));
  }

  Value unary(const Expr& e, const Value& a) {
    if (e.text == "!") {
      if (const bool* b = std::get_if<bool>(&a.v)) return make(!*b);
      type_error(e, "'!' needs a bool, got " + std::string(a.type_name()));
    }
    if (const auto* i = std::get_if<std::int64_t>(&a.v)) {
      if (*i == std::numeric_limits<std::int64_t>::min()) type_error(e, "integer overflow");
      return make(-*i);
    }
    if (const auto* r = std::get_if<double>(&a.v)) return make(-*r);
    type_error(e, "'-' needs a number, got " + std::string(a.type_name()));
  }

  Value binary(const Expr& e, const Value& l, const Value& r) {
    const std::string& op = e.text;
    if (op == "==" || op == "!=") {
      bool eq;
      if (is_number(l) && is_number(r) && l.v.index() != r.v.index()) {
        eq = number(e, l, "operand") == number(e, r, "operand");
      } else {
        eq = l == r;
      }
      return make(op == "==" ? eq : !eq);
    }
    if (!is_number(l) || !is_number(r)) {
      type_error(e, "'" + op + "' needs numbers, got " + std::string(l.type_name()) + " and " +
                        std::string(r.type_name()));
    }
    const auto* li = std::get_if<std::int64_t>(&l.v);
    const auto* ri = std::get_if<std::int64_t>(&r.v);
    if (op == "<" || op == "<=" || op == ">" || op == ">=") {
      if (li && ri) return make(compare(op, *li, *ri));
      return make(compare(op, number(e, l, "operand"), number(e, r, "operand")));
    }
    if (op == "/") {
      const double d = number(e, r, "divisor");
      if (d == 0.0) throw DivisionByZero(e.pos, "division by zero");
      return make(number(e, l, "dividend") / d);
    }
    if (op == "%") {
      if (li && ri) {
        if (*ri == 0) throw DivisionByZero(e.pos, "modulo by zero");
        if (*ri == -1) return make(std::int64_t{0});
        return make(*li % *ri);
      }
      const double d = number(e, r, "divisor");
      if (d == 0.0) throw DivisionByZero(e.pos, "modulo by zero");
      return make(std::fmod(number(e, l, "dividend"), d));
    }
    if (li && ri) {
      std::int64_t out = 0;
      bool overflow = false;
      if (op == "+") overflow = __builtin_add_overflow(*li, *ri, &out);
      if (op == "-") overflow = __builtin_sub_overflow(*li, *ri, &out);
      if (op == "*") overflow = __builtin_mul_overflow(*li, *ri, &out);
      if (overflow) type_error(e, "integer overflow");
      return make(out);
    }
    const double a = number(e, l, "operand");
    const double b = number(e, r, "operand");
    if (op == "+") return make(a + b);
    if (op == "-") return make(a - b);
    return make(a * b);
  }

  template <class T>
  static bool compare(const std::string& op, T a, T b) {
    if (op == "<") return a < b;
    if (op == "<=") return a <= b;
    if (op == ">") return a > b;
    return a >= b;
  }

  template <class T>
  static const T& want(const Expr& e, const Value& v, const char* what) {
    if (const T* x = std::get_if<T>(&v.v)) return *x;
    type_error(e, "argument " + std::string(what) + " of " + e.text + "() has type " + std::string(v.type_name()));
  }

  static std::int64_t want_int(const Expr& e, const Value& v, const char* what) {
    return want<std::int64_t>(e, v, what);
  }

  static PointPx location_of(const Contour& c) {
    if (area(c) > 0.0) return centroid(c);
    PointPx p;
    for (const PointI& v : c.vertices) {
      p.x += v.x;
      p.y += v.y;
    }
    const double n = static_cast<double>(std::max<std::size_t>(c.vertices.size(), 1));
    return {p.x / n, p.y / n};
  }

  const Frame& image_of(const Expr& e, const Value& v) {
    const FramePtr& f = want<FramePtr>(e, v, "1");
    if (!f) type_error(e, "image is not available");
    return *f;
  }

  Value builtin(const Expr& e, std::vector<Value>& a) {
    const std::string& n = e.text;
    if (n == "frame" || n == "initial") {
      const FramePtr& f = n == "frame" ? ctx_.frame : ctx_.initial;
      if (!f) type_error(e, n + "() is not available in this context");
      return make(f);
    }
    if (n == "mask") {
      const Frame& f = image_of(e, a[0]);
      const int tol = a.size() > 2 ? static_cast<int>(std::clamp<std::int64_t>(want_int(e, a[2], "3"), 0, 255)) : 0;
      return make(MaskPtr(std::make_shared<const Mask>(color_mask(f, want<std::string>(e, a[1], "2"), tol))));
    }
    if (n == "contours") {
      const MaskPtr& m = want<MaskPtr>(e, a[0], "1");
      return make(extract_contours(*m));
    }
    if (n == "approx" || n == "hull") {
      double eps = 0.0;
      if (n == "approx") {
        eps = number(e, a[1], "eps");
        if (!(eps >= 0.0)) type_error(e, "eps must be non-negative");
      }
      auto one = [&](const Contour& c) { return n == "approx" ? approx_polygon(c, eps) : convex_hull(c); };
      if (const auto* c = std::get_if<Contour>(&a[0].v)) return make(one(*c));
      const auto& cs = want<std::vector<Contour>>(e, a[0], "1");
      std::vector<Contour> out;
      out.reserve(cs.size());
      for (const Contour& c : cs) out.push_back(one(c));
      return make(std::move(out));
    }
    if (n == "vertices") return make(static_cast<std::int64_t>(want<Contour>(e, a[0], "1").vertices.size()));
    if (n == "area") return make(area(want<Contour>(e, a[0], "1")));
    if (n == "centroid") return make(centroid(want<Contour>(e, a[0], "1")));
    if (n == "bbox") return make(bbox(want<Contour>(e, a[0], "1")));
    if (n == "count") {
      if (const auto* cs = std::get_if<std::vector<Contour>>(&a[0].v)) return make(static_cast<std::int64_t>(cs->size()));
      if (const auto* d = std::get_if<Detection>(&a[0].v)) return make(static_cast<std::int64_t>(d->locations.size()));
      return make(static_cast<std::int64_t>(want<MaskPtr>(e, a[0], "1")->count()));
    }
    if (n == "nth") {
      const std::int64_t i = want_int(e, a[1], "2");
      if (const auto* d = std::get_if<Detection>(&a[0].v)) {
        if (i < 0 || i >= static_cast<std::int64_t>(d->locations.size())) type_error(e, "index out of range");
        return make(d->locations[static_cast<std::size_t>(i)]);
      }
      const auto& cs = want<std::vector<Contour>>(e, a[0], "1");
      if (i < 0 || i >= static_cast<std::int64_t>(cs.size())) type_error(e, "index out of range");
      return make(cs[static_cast<std::size_t>(i)]);
    }
    if (n == "filter_area") {
      const auto& cs = want<std::vector<Contour>>(e, a[0], "1");
      const double lo = number(e, a[1], "min");
      const double hi = number(e, a[2], "max");
      std::vector<Contour> out;
      for (const Contour& c : cs) {
        const double ar = area(c);
        if (ar >= lo && ar <= hi) out.push_back(c);
      }
      return make(std::move(out));
    }
    if (n == "filter_vertices") {
      const auto& cs = want<std::vector<Contour>>(e, a[0], "1");
      const double eps = number(e, a[1], "eps");
      if (!(eps >= 0.0)) type_error(e, "eps must be non-negative");
      const std::int64_t lo = want_int(e, a[2], "3");
      const std::int64_t hi = want_int(e, a[3], "4");
      std::vector<Contour> out;
      for (const Contour& c : cs) {
        const auto k = static_cast<std::int64_t>(approx_polygon(c, eps).vertices.size());
        if (k >= lo && k <= hi) out.push_back(c);
      }
      return make(std::move(out));
    }
    if (n == "largest") {
      const auto& cs = want<std::vector<Contour>>(e, a[0], "1");
      if (cs.empty()) type_error(e, "largest() of an empty sequence");
      // Contours arrive sorted by descending area.
      return make(cs.front());
    }
    if (n == "contains") {
      auto inside = [&](const PointPx& p) {
        if (const auto* r = std::get_if<Rect>(&a[0].v)) {
          return p.x >= r->x && p.y >= r->y && p.x <= r->x + r->width - 1 && p.y <= r->y + r->height - 1;
        }
        return contains_point(want<Contour>(e, a[0], "1"), p);
      };
      if (const auto* c = std::get_if<Contour>(&a[1].v)) {
        if (c->vertices.empty()) return make(false);
        return make(std::all_of(c->vertices.begin(), c->vertices.end(),
                                [&](const PointI& v) { return inside(PointPx{double(v.x), double(v.y)}); }));
      }
      return make(inside(want<PointPx>(e, a[1], "2")));
    }
    if (n == "dist") return make(euclidean(want<PointPx>(e, a[0], "1"), want<PointPx>(e, a[1], "2")));
    if (n == "found") return make(want<Detection>(e, a[0], "1").found);
    if (n == "detection") {
      Detection d;
      std::size_t k = 0;
      bool flag = true;
      if (!a.empty() && std::holds_alternative<bool>(a[0].v)) {
        flag = std::get<bool>(a[0].v);
        k = 1;
      }
      if (k < a.size() && flag) {
        if (const auto* p = std::get_if<PointPx>(&a[k].v)) {
          d.locations.push_back(*p);
        } else if (const auto* c = std::get_if<Contour>(&a[k].v)) {
          d.locations.push_back(location_of(*c));
        } else {
          for (const Contour& c : want<std::vector<Contour>>(e, a[k], "location")) d.locations.push_back(location_of(c));
        }
      } else if (k < a.size()) {
        const std::size_t idx = a[k].v.index();
        if (idx != 4 && idx != 6 && idx != 7) type_error(e, "detection location has type " + std::string(a[k].type_name()));
      }
      d.found = !d.locations.empty();
      return make(std::move(d));
    }
    if (n == "recall") {
      const auto& key = want<std::string>(e, a[0], "1");
      auto it = ctx_.store.find(key);
      if (it == ctx_.store.end()) throw MissingStoreKey(e.pos, "no stored value for '" + key + "'");
      return it->second;
    }
    if (n == "has") return make(ctx_.store.contains(want<std::string>(e, a[0], "1")));
    if (n == "point") return make(PointPx{number(e, a[0], "x"), number(e, a[1], "y")});
    if (n == "x" || n == "y") {
      if (const auto* r = std::get_if<Rect>(&a[0].v)) return make(static_cast<std::int64_t>(n == "x" ? r->x : r->y));
      const PointPx& p = want<PointPx>(e, a[0], "1");
      return make(n == "x" ? p.x : p.y);
    }
    if (n == "width" || n == "height") {
      const bool w = n == "width";
      if (const auto* r = std::get_if<Rect>(&a[0].v)) return make(static_cast<std::int64_t>(w ? r->width : r->height));
      if (const auto* m = std::get_if<MaskPtr>(&a[0].v)) return make(static_cast<std::int64_t>(w ? (*m)->width : (*m)->height));
      const Frame& f = image_of(e, a[0]);
      return make(static_cast<std::int64_t>(w ? f.width() : f.height()));
    }
    if (n == "abs") {
      if (const auto* i = std::get_if<std::int64_t>(&a[0].v)) {
        if (*i == std::numeric_limits<std::int64_t>::min()) type_error(e, "integer overflow");
        return make(*i < 0 ? -*i : *i);
      }
      return make(std::abs(number(e, a[0], "argument")));
    }
    if (n == "min" || n == "max") {
      const auto* li = std::get_if<std::int64_t>(&a[0].v);
      const auto* ri = std::get_if<std::int64_t>(&a[1].v);
      if (li && ri) return make(n == "min" ? std::min(*li, *ri) : std::max(*li, *ri));
      const double l = number(e, a[0], "argument");
      const double r = number(e, a[1], "argument");
      return make(n == "min" ? std::min(l, r) : std::max(l, r));
    }
    if (n == "sqrt") {
      const double v = number(e, a[0], "argument");
      if (v < 0.0) type_error(e, "sqrt of a negative number");
      return make(std::sqrt(v));
    }
    type_error(e, "unknown builtin '" + n + "'");
  }

  const Program& p_;
  EvalContext& ctx_;
};

}  // namespace

Value eval_entry(const Program& p, EvalContext& ctx) {
  const Function& f = p.entry();
  return Interpreter(p, ctx).call(f);
}

Detection eval_identify(const Program& p, EvalContext& ctx) {
  if (p.kind != ProgramKind::Identify) throw WrongEntrypoint("not an Identify program");
  Value v = eval_entry(p, ctx);
  if (auto* d = std::get_if<Detection>(&v.v)) return std::move(*d);
  throw RuntimeTypeError(p.entry().pos, "identify() must return a detection, got " + std::string(v.type_name()));
}

bool eval_check(const Program& p, EvalContext& ctx) {
  if (p.kind != ProgramKind::Check) throw WrongEntrypoint("not a Check program");
  Value v = eval_entry(p, ctx);
  if (const bool* b = std::get_if<bool>(&v.v)) return *b;
  throw RuntimeTypeError(p.entry().pos, "check() must return bool, got " + std::string(v.type_name()));
}

double eval_reward(const Program& p, EvalContext& ctx) {
  if (p.kind != ProgramKind::Reward) throw WrongEntrypoint("not a Reward program");
  Value v = eval_entry(p, ctx);
  if (const auto* r = std::get_if<double>(&v.v)) return *r;
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
  throw RuntimeTypeError(p.entry().pos, "reward() must return a number, got " + std::string(v.type_name()));
}

}  // namespace car::dsl
