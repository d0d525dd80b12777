#include "netdyn/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace netdyn {

namespace {

constexpr double kDivEps = 1e-300;

std::string format_number(double v) {
    char buf[40];
    snprintf(buf, sizeof buf, "%.17g", v);
    // shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        snprintf(probe, sizeof probe, "%.*g", prec, v);
        if (strtod(probe, nullptr) == v) return probe;
    }
    return buf;
}

bool is_number_token(const std::string& t) {
    if (t.empty()) return false;
    char* end = nullptr;
    strtod(t.c_str(), &end);
    return end && *end == '\0';
}

std::optional<int> var_from_token(const std::string& raw) {
    std::string t;
    for (char c : raw)
        if (c != '_') t += char(std::tolower(static_cast<unsigned char>(c)));
    if (t.empty() || t[0] != 'x') return std::nullopt;
    std::string rest = t.substr(1);
    if (rest.empty() || rest == "i") return 0;  // x, x_i -> first variable
    if (rest == "j") return 1;                  // x_j -> second variable
    for (char c : rest)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    int idx = std::stoi(rest);
    if (idx < 1) return std::nullopt;
    return idx - 1;
}

}  // namespace

int op_arity(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow:
            return 2;
        case Op::Var:
        case Op::Const:
            return 0;
        default:
            return 1;
    }
}

const char* op_token(Op op) {
    switch (op) {
        case Op::Add: return "+";
        case Op::Sub: return "-";
        case Op::Mul: return "*";
        case Op::Div: return "/";
        case Op::Pow: return "pow";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Tan: return "tan";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Abs: return "abs";
        case Op::Sqrt: return "sqrt";
        case Op::Neg: return "neg";
        case Op::Var: return "var";
        case Op::Const: return "const";
    }
    return "?";
}

std::optional<Op> op_from_token(const std::string& tok) {
    if (tok == "+") return Op::Add;
    if (tok == "-" || tok == "−") return Op::Sub;
    if (tok == "*" || tok == "×") return Op::Mul;
    if (tok == "/" || tok == "÷") return Op::Div;
    if (tok == "pow" || tok == "^") return Op::Pow;
    if (tok == "sin") return Op::Sin;
    if (tok == "cos") return Op::Cos;
    if (tok == "tan") return Op::Tan;
    if (tok == "exp") return Op::Exp;
    if (tok == "log" || tok == "ln") return Op::Log;
    if (tok == "abs") return Op::Abs;
    if (tok == "sqrt") return Op::Sqrt;
    if (tok == "neg") return Op::Neg;
    return std::nullopt;
}

Expression Expression::constant(double v) {
    Expression e;
    e.op = Op::Const;
    e.value = v;
    return e;
}

Expression Expression::variable(int index) {
    Expression e;
    e.op = Op::Var;
    e.var = index;
    return e;
}

Expression Expression::unary(Op op, Expression a) {
    Expression e;
    e.op = op;
    e.args.push_back(std::move(a));
    return e;
}

Expression Expression::binary(Op op, Expression a, Expression b) {
    Expression e;
    e.op = op;
    e.args.push_back(std::move(a));
    e.args.push_back(std::move(b));
    return e;
}

int Expression::size() const {
    int s = 1;
    for (const auto& a : args) s += a.size();
    return s;
}

int Expression::depth() const {
    int d = 0;
    for (const auto& a : args) d = std::max(d, a.depth());
    return d + 1;
}

namespace {

double eval_node(const Expression& e, std::span<const double> vars, std::string& path, bool& ok) {
    auto fail = [&](const char* what) -> double {
        if (ok) path = std::string(what) + " in " + op_token(e.op);
        ok = false;
        return 0.0;
    };
    switch (e.op) {
        case Op::Const:
            return e.value;
        case Op::Var:
            if (e.var < 0 || size_t(e.var) >= vars.size()) return fail("unbound variable");
            return vars[e.var];
        default:
            break;
    }
    double a = eval_node(e.args[0], vars, path, ok);
    if (!ok) return 0.0;
    double r = 0.0;
    if (op_arity(e.op) == 2) {
        double b = eval_node(e.args[1], vars, path, ok);
        if (!ok) return 0.0;
        switch (e.op) {
            case Op::Add: r = a + b; break;
            case Op::Sub: r = a - b; break;
            case Op::Mul: r = a * b; break;
            case Op::Div:
                if (std::abs(b) < kDivEps) return fail("division by zero");
                r = a / b;
                break;
            case Op::Pow:
                if (a == 0.0 && b < 0.0) return fail("zero base with negative exponent");
                if (a < 0.0 && b != std::floor(b)) return fail("negative base with non-integer exponent");
                r = std::pow(a, b);
                break;
            default: break;
        }
    } else {
        switch (e.op) {
            case Op::Sin: r = std::sin(a); break;
            case Op::Cos: r = std::cos(a); break;
            case Op::Tan: r = std::tan(a); break;
            case Op::Exp: r = std::exp(a); break;
            case Op::Log:
                if (a <= 0.0) return fail("log of non-positive value");
                r = std::log(a);
                break;
            case Op::Abs: r = std::abs(a); break;
            case Op::Sqrt:
                if (a < 0.0) return fail("sqrt of negative value");
                r = std::sqrt(a);
                break;
            case Op::Neg: r = -a; break;
            default: break;
        }
    }
    if (!std::isfinite(r)) return fail("non-finite result");
    return r;
}

}  // namespace

double Expression::evaluate(std::span<const double> vars) const {
    std::string path;
    bool ok = true;
    double r = eval_node(*this, vars, path, ok);
    if (!ok) throw EvalError("eval_expression: " + path);
    return r;
}

bool Expression::try_evaluate(std::span<const double> vars, double& out) const noexcept {
    std::string path;
    bool ok = true;
    out = eval_node(*this, vars, path, ok);
    return ok;
}

double Expression::evaluate(const std::map<std::string, double>& bindings) const {
    int m = max_var() + 1;
    std::vector<double> vars(std::max(m, 0));
    for (int i = 0; i < m; ++i) {
        std::string key = "x" + std::to_string(i + 1);
        auto it = bindings.find(key);
        if (it == bindings.end())
            throw EvalError("eval_expression: unbound variable " + key);
        vars[i] = it->second;
    }
    return evaluate(vars);
}

int Expression::max_var() const {
    int m = op == Op::Var ? var : -1;
    for (const auto& a : args) m = std::max(m, a.max_var());
    return m;
}

std::vector<std::string> Expression::to_prefix() const {
    std::vector<std::string> out;
    auto walk = [&](auto&& self, const Expression& e) -> void {
        switch (e.op) {
            case Op::Const: out.push_back(format_number(e.value)); break;
            case Op::Var: out.push_back("x" + std::to_string(e.var + 1)); break;
            default:
                out.push_back(op_token(e.op));
                for (const auto& a : e.args) self(self, a);
        }
    };
    walk(walk, *this);
    return out;
}

Expression parse_prefix(const std::vector<std::string>& tokens) {
    size_t pos = 0;
    auto parse = [&](auto&& self) -> Expression {
        if (pos >= tokens.size())
            throw ParseError("parse_prefix: arity underflow at token " + std::to_string(pos + 1));
        const std::string& tok = tokens[pos++];
        if (auto op = op_from_token(tok)) {
            Expression e;
            e.op = *op;
            for (int i = 0; i < op_arity(*op); ++i) e.args.push_back(self(self));
            return e;
        }
        if (auto v = var_from_token(tok)) return Expression::variable(*v);
        if (is_number_token(tok)) return Expression::constant(strtod(tok.c_str(), nullptr));
        throw ParseError("parse_prefix: unknown token '" + tok + "' at token " + std::to_string(pos));
    };
    Expression e = parse(parse);
    if (pos != tokens.size())
        throw ParseError("parse_prefix: arity overflow, unused tokens from token " + std::to_string(pos + 1));
    return e;
}

namespace {

int precedence(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        default: return 5;
    }
}

std::string infix_node(const Expression& e, const std::vector<std::string>* names) {
    auto name = [&](int v) {
        if (names && v < int(names->size())) return (*names)[v];
        return "x" + std::to_string(v + 1);
    };
    switch (e.op) {
        case Op::Const: {
            if (e.value < 0) return "(" + format_number(e.value) + ")";
            return format_number(e.value);
        }
        case Op::Var:
            return name(e.var);
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow: {
            std::string a = infix_node(e.args[0], names);
            std::string b = infix_node(e.args[1], names);
            int p = precedence(e.op);
            if (precedence(e.args[0].op) < p && op_arity(e.args[0].op) > 0) a = "(" + a + ")";
            bool paren_b = (precedence(e.args[1].op) < p && op_arity(e.args[1].op) > 0) ||
                           ((e.op == Op::Sub || e.op == Op::Div) && precedence(e.args[1].op) == p &&
                            op_arity(e.args[1].op) == 2);
            if (paren_b) b = "(" + b + ")";
            if (e.op == Op::Pow) return a + "^" + b;
            const char* sym = e.op == Op::Add ? " + " : e.op == Op::Sub ? " - " : e.op == Op::Mul ? "*" : "/";
            return a + sym + b;
        }
        case Op::Neg: {
            std::string a = infix_node(e.args[0], names);
            if (op_arity(e.args[0].op) == 2) a = "(" + a + ")";
            return "-" + a;
        }
        default:
            return std::string(op_token(e.op)) + "(" + infix_node(e.args[0], names) + ")";
    }
}

}  // namespace

std::string Expression::to_infix() const { return infix_node(*this, nullptr); }

std::string Expression::to_infix(const std::vector<std::string>& var_names) const {
    return infix_node(*this, &var_names);
}

std::vector<double*> Expression::constant_slots() {
    std::vector<double*> out;
    auto walk = [&](auto&& self, Expression& e) -> void {
        if (e.op == Op::Const) out.push_back(&e.value);
        for (auto& a : e.args) self(self, a);
    };
    walk(walk, *this);
    return out;
}

bool Expression::operator==(const Expression& other) const {
    if (op != other.op) return false;
    if (op == Op::Const) return value == other.value;
    if (op == Op::Var) return var == other.var;
    if (args.size() != other.args.size()) return false;
    for (size_t i = 0; i < args.size(); ++i)
        if (!(args[i] == other.args[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Infix parser (library files, CLI): recursive descent over
//   expr := term (('+'|'-') term)* ; term := factor (('*'|'/') factor)* ;
//   factor := ('-')? power ; power := primary ('^' factor)?
// ---------------------------------------------------------------------------

namespace {

struct InfixParser {
    const std::string& s;
    size_t pos = 0;
    int num_vars;

    explicit InfixParser(const std::string& text, int nv) : s(text), num_vars(nv) {}

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool peek(char c) {
        skip_ws();
        return pos < s.size() && s[pos] == c;
    }
    bool accept(char c) {
        if (peek(c)) {
            ++pos;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw ParseError("parse_infix: " + what + " at position " + std::to_string(pos));
    }

    Expression parse() {
        Expression e = expr();
        skip_ws();
        if (pos != s.size()) fail("trailing input");
        return e;
    }

    Expression expr() {
        Expression e = term();
        while (true) {
            if (accept('+'))
                e = Expression::binary(Op::Add, std::move(e), term());
            else if (accept('-'))
                e = Expression::binary(Op::Sub, std::move(e), term());
            else
                return e;
        }
    }

    Expression term() {
        Expression e = factor();
        while (true) {
            if (accept('*'))
                e = Expression::binary(Op::Mul, std::move(e), factor());
            else if (accept('/'))
                e = Expression::binary(Op::Div, std::move(e), factor());
            else
                return e;
        }
    }

    Expression factor() {
        if (accept('-')) return Expression::unary(Op::Neg, factor());
        return power();
    }

    Expression power() {
        Expression base = primary();
        if (accept('^')) return Expression::binary(Op::Pow, std::move(base), factor());
        return base;
    }

    Expression primary() {
        skip_ws();
        if (pos >= s.size()) fail("unexpected end of input");
        char c = s[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            char* end = nullptr;
            double v = strtod(s.c_str() + pos, &end);
            pos = end - s.c_str();
            return Expression::constant(v);
        }
        if (c == '(') {
            ++pos;
            Expression e = expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t start = pos;
            while (pos < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
                ++pos;
            std::string ident = s.substr(start, pos - start);
            if (auto op = op_from_token(ident)) {
                if (!accept('(')) fail("expected '(' after " + ident);
                Expression a = expr();
                if (op_arity(*op) == 2) {
                    if (!accept(',')) fail("expected ',' in " + ident);
                    Expression b = expr();
                    if (!accept(')')) fail("expected ')'");
                    return Expression::binary(*op, std::move(a), std::move(b));
                }
                if (!accept(')')) fail("expected ')'");
                return Expression::unary(*op, std::move(a));
            }
            if (auto v = var_from_token(ident)) {
                if (num_vars >= 0 && *v >= num_vars)
                    fail("variable " + ident + " out of range");
                return Expression::variable(*v);
            }
            fail("unknown identifier '" + ident + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace

Expression parse_infix(const std::string& text, int num_vars) {
    InfixParser p(text, num_vars);
    return p.parse();
}

Expression simplify(const Expression& e) {
    Expression out = e;
    for (auto& a : out.args) a = simplify(a);
    auto is_const = [](const Expression& x, double v) { return x.op == Op::Const && x.value == v; };
    bool all_const = !out.args.empty();
    for (const auto& a : out.args) all_const &= a.op == Op::Const;
    if (all_const) {
        double v;
        if (out.try_evaluate({}, v)) return Expression::constant(v);
        return out;  // keep domain errors visible rather than folding them away
    }
    switch (out.op) {
        case Op::Add:
            if (is_const(out.args[0], 0.0)) return out.args[1];
            if (is_const(out.args[1], 0.0)) return out.args[0];
            break;
        case Op::Sub:
            if (is_const(out.args[1], 0.0)) return out.args[0];
            break;
        case Op::Mul:
            if (is_const(out.args[0], 1.0)) return out.args[1];
            if (is_const(out.args[1], 1.0)) return out.args[0];
            if (is_const(out.args[0], 0.0) || is_const(out.args[1], 0.0)) return Expression::constant(0.0);
            break;
        case Op::Div:
            if (is_const(out.args[1], 1.0)) return out.args[0];
            break;
        case Op::Pow:
            if (is_const(out.args[1], 1.0)) return out.args[0];
            break;
        case Op::Neg:
            if (out.args[0].op == Op::Const) return Expression::constant(-out.args[0].value);
            break;
        default:
            break;
    }
    return out;
}

CompiledExpression::CompiledExpression(const Expression& e) {
    auto walk = [&](auto&& self, const Expression& node) -> void {
        for (const auto& a : node.args) self(self, a);
        tape_.push_back({node.op, node.value, node.var});
    };
    walk(walk, e);
    depth_ = e.depth() + 1;
    if (depth_ > 63) throw ParseError("compile: expression too deep");
}

bool CompiledExpression::eval(const double* vars, double& out) const noexcept {
    double stack[64];  // depth checked at construction; keeps eval reentrant
    double* sp = stack;
    size_t top = 0;
    for (const auto& in : tape_) {
        double r;
        switch (in.op) {
            case Op::Const: r = in.value; break;
            case Op::Var: r = vars[in.var]; break;
            case Op::Add: r = sp[top - 2] + sp[top - 1]; top -= 2; break;
            case Op::Sub: r = sp[top - 2] - sp[top - 1]; top -= 2; break;
            case Op::Mul: r = sp[top - 2] * sp[top - 1]; top -= 2; break;
            case Op::Div:
                if (std::abs(sp[top - 1]) < kDivEps) return false;
                r = sp[top - 2] / sp[top - 1];
                top -= 2;
                break;
            case Op::Pow: {
                double a = sp[top - 2], b = sp[top - 1];
                if ((a == 0.0 && b < 0.0) || (a < 0.0 && b != std::floor(b))) return false;
                r = std::pow(a, b);
                top -= 2;
                break;
            }
            case Op::Sin: r = std::sin(sp[top - 1]); top -= 1; break;
            case Op::Cos: r = std::cos(sp[top - 1]); top -= 1; break;
            case Op::Tan: r = std::tan(sp[top - 1]); top -= 1; break;
            case Op::Exp: r = std::exp(sp[top - 1]); top -= 1; break;
            case Op::Log:
                if (sp[top - 1] <= 0.0) return false;
                r = std::log(sp[top - 1]);
                top -= 1;
                break;
            case Op::Abs: r = std::abs(sp[top - 1]); top -= 1; break;
            case Op::Sqrt:
                if (sp[top - 1] < 0.0) return false;
                r = std::sqrt(sp[top - 1]);
                top -= 1;
                break;
            case Op::Neg: r = -sp[top - 1]; top -= 1; break;
            default: return false;
        }
        if (!std::isfinite(r)) return false;
        sp[top++] = r;
    }
    out = sp[0];
    return true;
}

double CompiledExpression::eval_checked(const double* vars) const {
    double out;
    if (!eval(vars, out)) throw EvalError("eval_expression: domain violation in compiled expression");
    return out;
}

}  // namespace netdyn
