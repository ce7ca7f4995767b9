#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass as a node holding the
// operation, references to its inputs (always earlier nodes) and its value.
// `backward` walks the nodes in reverse and accumulates adjoints. Tapes are
// meant to live for one forward/backward pass and to stay on one thread.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvae/matrix.hpp"
#include "cvae/parameters.hpp"

namespace cvae::ad {

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    MatMul,
    Transpose,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Clamp,
    SumAll,
    SumCols,
    Broadcast,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    LogSumExpRows,
};

std::string_view op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Matrix& value() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable input.
    Var variable(Matrix value);
    // Input excluded from differentiation.
    Var constant(Matrix value);

    const Matrix& value(Var v) const { return nodes_[v.id()].value; }
    // Adjoint from the most recent backward pass; zeros if none reached v.
    Matrix grad(Var v) const;

    // Seeds the scalar output with 1 and propagates adjoints.
    void backward(Var output);
    // Seeds a general output with `seed` (same shape) and propagates.
    void backward(Var output, const Matrix& seed);

    // Overwrites a leaf value; the shape must not change.
    void set_value(Var leaf, Matrix value);
    // Re-evaluates every non-leaf node from current leaf values.
    void replay();

    std::size_t size() const { return nodes_.size(); }

    // Used by the operation functions below; not part of the user surface.
    Var record(Op op, std::vector<std::size_t> inputs, double c0 = 0.0, double c1 = 0.0,
               std::size_t i0 = 0, std::size_t i1 = 0);

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<std::size_t> inputs;
        double c0 = 0.0, c1 = 0.0;
        std::size_t i0 = 0, i1 = 0;
        bool needs_grad = false;
        Matrix value;
        Matrix grad;
    };

    Matrix evaluate(const Node& node) const;
    void check_finite(const Matrix& m, std::size_t id, Op op, const char* phase) const;
    void propagate(std::size_t id);
    Matrix& grad_slot(std::size_t id);

    std::vector<Node> nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double shift);
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);            // a · bᵀ
Var transpose(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);                        // 1×1
Var sum_cols(Var a);                   // r×c -> r×1
Var broadcast(Var a, std::size_t rows, std::size_t cols);  // from 1×1, 1×c or r×1
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var logsumexp_rows(Var a);             // r×c -> r×1

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

inline Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::span(parts.begin(), parts.size())); }
inline Var concat_rows(std::initializer_list<Var> parts) { return concat_rows(std::span(parts.begin(), parts.size())); }

// n stacked copies of a.
Var tile_rows(Var a, std::size_t n);
// Mean over all entries.
Var mean(Var a);

// ---------------------------------------------------------------------------
// Parameter-level drivers

using VarMap = std::map<std::string, Var, std::less<>>;

VarMap bind(Tape& tape, const ParameterSet& params);
Var lookup(const VarMap& vars, std::string_view name);
ParameterSet gradients(const Tape& tape, const VarMap& vars);

using ScalarFunction = std::function<Var(Tape&, const VarMap&)>;
using VectorFunction = std::function<Var(Tape&, Var)>;

struct ValueAndGrad {
    double value = 0.0;
    ParameterSet grad;
};

ValueAndGrad value_and_grad(const ScalarFunction& f, const ParameterSet& at);
ParameterSet grad(const ScalarFunction& f, const ParameterSet& at);
double evaluate(const ScalarFunction& f, const ParameterSet& at);

// m×n Jacobian of g: R^n -> R^m (g takes and returns row vectors), one
// reverse pass per output.
Matrix jacobian(const VectorFunction& g, std::span<const double> at);

// Max over coordinates of |analytic - numeric| / (|analytic| + |numeric| + 1e-12),
// numeric from central differences with the given step.
double check_gradient(const ScalarFunction& f, const ParameterSet& at, double step);

}  // namespace cvae::ad
