#include "pathtransport/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "pathtransport/errors.hpp"

namespace pt {

using Op = Expression::Op;
using NodePtr = Expression::NodePtr;
using Node = Expression::Node;

namespace {

constexpr int kMaxDepth = 200;

NodePtr make(Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    return std::make_shared<const Node>(Node{op, 0.0, 0, std::move(lhs), std::move(rhs)});
}
NodePtr make_const(double v) { return std::make_shared<const Node>(Node{Op::constant, v, 0, nullptr, nullptr}); }
NodePtr make_var(int index) { return std::make_shared<const Node>(Node{Op::variable, 0.0, index, nullptr, nullptr}); }

bool is_const(const NodePtr& n, double v) { return n->op == Op::constant && n->value == v; }
bool is_const(const NodePtr& n) { return n->op == Op::constant; }

struct FunctionName {
    const char* name;
    Op op;
};
constexpr FunctionName kFunctions[] = {{"sin", Op::sin},   {"cos", Op::cos},   {"tan", Op::tan},
                                       {"exp", Op::exp},   {"log", Op::log},   {"sqrt", Op::sqrt},
                                       {"abs", Op::abs},   {"atan2", Op::atan2}};

class Parser {
public:
    Parser(std::string_view src, const std::vector<std::string>& vars) : src_(src), vars_(vars) {}

    NodePtr parse() {
        NodePtr root = sum();
        skip_ws();
        if (pos_ < src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'", "operator or end of input");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& msg, const std::string& expected) const {
        std::ostringstream os;
        os << "syntax error at position " << pos_ + 1 << ": " << msg << " (expected " << expected << ")";
        throw SyntaxError(os.str(), pos_ + 1, expected);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= src_.size()) fail("unexpected end of input", std::string("'") + c + "'");
            fail("unexpected character '" + std::string(1, src_[pos_]) + "'", std::string("'") + c + "'");
        }
    }

    struct DepthGuard {
        explicit DepthGuard(Parser& p) : p_(p) {
            if (++p_.depth_ > kMaxDepth) p_.fail("expression nested too deeply", "a shallower expression");
        }
        ~DepthGuard() { --p_.depth_; }
        Parser& p_;
    };

    // Every level of recursion passes through unary(), which alone counts depth.
    NodePtr sum() {
        NodePtr lhs = product();
        for (;;) {
            if (accept('+'))
                lhs = make(Op::add, lhs, product());
            else if (accept('-'))
                lhs = make(Op::sub, lhs, product());
            else
                return lhs;
        }
    }

    NodePtr product() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*'))
                lhs = make(Op::mul, lhs, unary());
            else if (accept('/'))
                lhs = make(Op::div, lhs, unary());
            else
                return lhs;
        }
    }

    NodePtr unary() {
        DepthGuard guard(*this);
        if (accept('-')) return make(Op::neg, unary());
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (accept('^')) return make(Op::pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input", "number, variable, function or '('");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = sum();
            expect(')');
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail("unexpected character '" + std::string(1, c) + "'", "number, variable, function or '('");
    }

    NodePtr number() {
        const std::size_t start = pos_;
        bool digits = false;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, digits = true;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, digits = true;
        }
        if (!digits) {
            pos_ = start;
            fail("malformed number", "digits");
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) ++p;
                pos_ = p;
            } else {
                pos_ = p;
                fail("malformed exponent", "digits");
            }
        }
        const std::string text(src_.substr(start, pos_ - start));
        const double v = std::strtod(text.c_str(), nullptr);
        if (!std::isfinite(v)) {
            pos_ = start;
            fail("number out of range", "a finite number");
        }
        return make_const(v);
    }

    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string name(src_.substr(start, pos_ - start));

        for (const auto& f : kFunctions) {
            if (name != f.name) continue;
            expect('(');
            NodePtr a = sum();
            NodePtr b;
            if (f.op == Op::atan2) {
                expect(',');
                b = sum();
            }
            expect(')');
            return make(f.op, a, b);
        }
        const auto it = std::find(vars_.begin(), vars_.end(), name);
        if (it != vars_.end()) return make_var(static_cast<int>(it - vars_.begin()));
        if (name == "pi") return make_const(std::numbers::pi);

        pos_ = start;
        std::string expected = "a function";
        for (const auto& v : vars_) expected += ", " + v;
        expected += " or pi";
        fail("unknown identifier '" + name + "'", expected);
    }

    std::string_view src_;
    const std::vector<std::string>& vars_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

// Builders that fold constants and drop neutral elements, so derivatives stay small.
NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
    return make(Op::add, std::move(a), std::move(b));
}
NodePtr neg(NodePtr a) {
    if (is_const(a)) return make_const(-a->value);
    return make(Op::neg, std::move(a));
}
NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(std::move(b));
    if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
    return make(Op::sub, std::move(a), std::move(b));
}
NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
    return make(Op::mul, std::move(a), std::move(b));
}
NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return make_const(0.0);
    if (is_const(b, 1.0)) return a;
    return make(Op::div, std::move(a), std::move(b));
}
NodePtr pow(NodePtr a, NodePtr b) { return make(Op::pow, std::move(a), std::move(b)); }
NodePtr fn(Op op, NodePtr a) { return make(op, std::move(a)); }

NodePtr diff(const NodePtr& n, int k) {
    switch (n->op) {
        case Op::constant: return make_const(0.0);
        case Op::variable: return make_const(n->index == k ? 1.0 : 0.0);
        case Op::neg: return neg(diff(n->lhs, k));
        case Op::add: return add(diff(n->lhs, k), diff(n->rhs, k));
        case Op::sub: return sub(diff(n->lhs, k), diff(n->rhs, k));
        case Op::mul: return add(mul(diff(n->lhs, k), n->rhs), mul(n->lhs, diff(n->rhs, k)));
        case Op::div: {
            NodePtr num = sub(mul(diff(n->lhs, k), n->rhs), mul(n->lhs, diff(n->rhs, k)));
            return div(num, mul(n->rhs, n->rhs));
        }
        case Op::pow: {
            NodePtr da = diff(n->lhs, k), db = diff(n->rhs, k);
            if (is_const(db, 0.0)) {
                // b a^(b-1) a'
                return mul(mul(n->rhs, pow(n->lhs, sub(n->rhs, make_const(1.0)))), da);
            }
            // a^b (b' log a + b a'/a)
            return mul(n, add(mul(db, fn(Op::log, n->lhs)), div(mul(n->rhs, da), n->lhs)));
        }
        case Op::sin: return mul(fn(Op::cos, n->lhs), diff(n->lhs, k));
        case Op::cos: return neg(mul(fn(Op::sin, n->lhs), diff(n->lhs, k)));
        case Op::tan: {
            NodePtr c = fn(Op::cos, n->lhs);
            return div(diff(n->lhs, k), mul(c, c));
        }
        case Op::exp: return mul(n, diff(n->lhs, k));
        case Op::log: return div(diff(n->lhs, k), n->lhs);
        case Op::sqrt: return div(diff(n->lhs, k), mul(make_const(2.0), n));
        case Op::abs: return div(mul(diff(n->lhs, k), n->lhs), n);
        case Op::atan2: {
            const NodePtr& y = n->lhs;
            const NodePtr& x = n->rhs;
            NodePtr num = sub(mul(x, diff(y, k)), mul(y, diff(x, k)));
            return div(num, add(mul(x, x), mul(y, y)));
        }
    }
    return make_const(0.0);
}

double eval(const Node& n, std::span<const double> v) {
    auto arg = [&](const NodePtr& p) { return eval(*p, v); };
    switch (n.op) {
        case Op::constant: return n.value;
        case Op::variable: return v[static_cast<std::size_t>(n.index)];
        case Op::neg: return -arg(n.lhs);
        case Op::add: return arg(n.lhs) + arg(n.rhs);
        case Op::sub: return arg(n.lhs) - arg(n.rhs);
        case Op::mul: return arg(n.lhs) * arg(n.rhs);
        case Op::div: {
            const double num = arg(n.lhs), den = arg(n.rhs);
            if (den == 0.0) throw EvaluationError("division by zero");
            return num / den;
        }
        case Op::pow: {
            const double r = std::pow(arg(n.lhs), arg(n.rhs));
            if (!std::isfinite(r)) throw EvaluationError("power has no finite real value");
            return r;
        }
        case Op::sin: return std::sin(arg(n.lhs));
        case Op::cos: return std::cos(arg(n.lhs));
        case Op::tan: return std::tan(arg(n.lhs));
        case Op::exp: {
            const double r = std::exp(arg(n.lhs));
            if (!std::isfinite(r)) throw EvaluationError("exp overflow");
            return r;
        }
        case Op::log: {
            const double a = arg(n.lhs);
            if (!(a > 0.0)) throw EvaluationError("log of non-positive value");
            return std::log(a);
        }
        case Op::sqrt: {
            const double a = arg(n.lhs);
            if (a < 0.0) throw EvaluationError("sqrt of negative value");
            return std::sqrt(a);
        }
        case Op::abs: return std::abs(arg(n.lhs));
        case Op::atan2: return std::atan2(arg(n.lhs), arg(n.rhs));
    }
    return 0.0;
}

void print(const Node& n, const std::vector<std::string>& vars, std::ostringstream& os) {
    auto bin = [&](const char* op) {
        os << '(';
        print(*n.lhs, vars, os);
        os << ' ' << op << ' ';
        print(*n.rhs, vars, os);
        os << ')';
    };
    auto call = [&](const char* name) {
        os << name << '(';
        print(*n.lhs, vars, os);
        if (n.rhs) {
            os << ", ";
            print(*n.rhs, vars, os);
        }
        os << ')';
    };
    switch (n.op) {
        case Op::constant: os << n.value; return;
        case Op::variable: os << vars[static_cast<std::size_t>(n.index)]; return;
        case Op::neg: os << "(-"; print(*n.lhs, vars, os); os << ')'; return;
        case Op::add: bin("+"); return;
        case Op::sub: bin("-"); return;
        case Op::mul: bin("*"); return;
        case Op::div: bin("/"); return;
        case Op::pow: bin("^"); return;
        case Op::sin: call("sin"); return;
        case Op::cos: call("cos"); return;
        case Op::tan: call("tan"); return;
        case Op::exp: call("exp"); return;
        case Op::log: call("log"); return;
        case Op::sqrt: call("sqrt"); return;
        case Op::abs: call("abs"); return;
        case Op::atan2: call("atan2"); return;
    }
}

}  // namespace

Expression Expression::parse(std::string_view src, std::vector<std::string> variables) {
    Parser p(src, variables);
    NodePtr root = p.parse();
    return Expression(std::move(root), std::move(variables));
}

Expression Expression::constant(double v, std::vector<std::string> variables) {
    return Expression(make_const(v), std::move(variables));
}

double Expression::evaluate(std::span<const double> values) const {
    if (!root_) throw EvaluationError("empty expression");
    if (values.size() != variables_.size()) throw ShapeError("wrong number of variable values");
    const double r = eval(*root_, values);
    if (!std::isfinite(r)) throw EvaluationError("expression value is not finite");
    return r;
}

Expression Expression::derivative(int index) const {
    if (!root_) throw EvaluationError("empty expression");
    if (index < 0 || index >= static_cast<int>(variables_.size())) throw EvaluationError("no such variable");
    return Expression(diff(root_, index), variables_);
}

bool Expression::is_constant_zero() const { return root_ && is_const(root_, 0.0); }

std::string Expression::to_string() const {
    if (!root_) return {};
    std::ostringstream os;
    os.precision(17);
    print(*root_, variables_, os);
    return os.str();
}

}  // namespace pt
