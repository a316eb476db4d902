#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pt {

// Arithmetic expressions over named variables.
//
// Grammar (whitespace-insensitive):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?             right-associative
//   primary := number | constant | variable | call | '(' sum ')'
//   call    := fn '(' sum ')' | 'atan2' '(' sum ',' sum ')'
// with fn in {sin, cos, tan, exp, log, sqrt, abs} and constant `pi`.
// So ^ binds tighter than unary minus: "-x1^2" is -(x1^2).
class Expression {
public:
    enum class Op {
        constant, variable, neg, add, sub, mul, div, pow,
        sin, cos, tan, exp, log, sqrt, abs, atan2
    };
    struct Node;
    using NodePtr = std::shared_ptr<const Node>;
    struct Node {
        Op op;
        double value = 0.0;  // constant
        int index = 0;       // variable
        NodePtr lhs, rhs;
    };

    Expression() = default;

    // Throws SyntaxError carrying a 1-based character position and a hint of
    // the expected token.
    static Expression parse(std::string_view src, std::vector<std::string> variables);
    static Expression constant(double v, std::vector<std::string> variables = {});

    // Throws EvaluationError on division by zero, log of a non-positive
    // number, sqrt of a negative number, or any non-finite result.
    double evaluate(std::span<const double> values) const;

    // Symbolic partial derivative with respect to variables()[index].
    Expression derivative(int index) const;

    bool is_constant_zero() const;
    const std::vector<std::string>& variables() const noexcept { return variables_; }
    std::string to_string() const;

private:
    Expression(NodePtr root, std::vector<std::string> vars) : root_(std::move(root)), variables_(std::move(vars)) {}

    NodePtr root_;
    std::vector<std::string> variables_;
};

}  // namespace pt
