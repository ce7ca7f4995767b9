#include "cvae/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

namespace cvae::ad {

namespace {

// Dense kernels. Each output element accumulates in a fixed order that does
// not depend on how many rows the left operand has, so a batched product
// equals the stack of row-wise products bit for bit.
// out(i, j) += sum_k a(i, k) · b(k, j), with a addressed through strides so
// the same kernel serves a and aᵀ. Blocks of a and b are packed into
// contiguous panels; k is split into chunks processed in increasing order, and
// every element is updated by one multiply-add per k starting from its
// previous value, whichever tile or chunk it falls in.
#ifdef __FMA__
inline double madd(double a, double b, double c) { return __builtin_fma(a, b, c); }
#else
inline double madd(double a, double b, double c) { return c + a * b; }
#endif

constexpr std::size_t kMr = 8, kNr = 16, kKc = 256, kMc = 64, kNc = 512;

// acc(r, j) over an kMr × kNr tile of packed panels; only rows × cols is
// read from and written to out.
void gemm_micro(const double* ap, const double* bp, std::size_t kc, double* out, std::size_t ldo, std::size_t rows,
                std::size_t cols) {
    double acc[kMr][kNr] = {};
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) acc[r][j] = out[r * ldo + j];
    for (std::size_t k = 0; k < kc; ++k) {
        const double* bk = bp + k * kNr;
        const double* ak = ap + k * kMr;
#pragma GCC unroll 8
        for (std::size_t r = 0; r < kMr; ++r)
#pragma GCC unroll 16
            for (std::size_t j = 0; j < kNr; ++j) acc[r][j] = madd(ak[r], bk[j], acc[r][j]);
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) out[r * ldo + j] = acc[r][j];
}

void gemm_strided(const double* a, std::size_t sa_i, std::size_t sa_k, std::size_t m, std::size_t depth,
                  const double* b, std::size_t n, double* out) {
    thread_local std::vector<double> apack, bpack;
    apack.resize(kMc * kKc);
    bpack.resize(kKc * kNc);
    for (std::size_t jc = 0; jc < n; jc += kNc) {
        const std::size_t nc = std::min(kNc, n - jc);
        for (std::size_t pc = 0; pc < depth; pc += kKc) {
            const std::size_t kc = std::min(kKc, depth - pc);
            // b panels: kNr columns each, k-major, zero padded.
            for (std::size_t jr = 0; jr < nc; jr += kNr) {
                double* dst = bpack.data() + jr * kc;
                const std::size_t w = std::min(kNr, nc - jr);
                for (std::size_t k = 0; k < kc; ++k) {
                    const double* src = b + (pc + k) * n + jc + jr;
                    for (std::size_t j = 0; j < w; ++j) dst[k * kNr + j] = src[j];
                    for (std::size_t j = w; j < kNr; ++j) dst[k * kNr + j] = 0.0;
                }
            }
            for (std::size_t ic = 0; ic < m; ic += kMc) {
                const std::size_t mc = std::min(kMc, m - ic);
                for (std::size_t ir = 0; ir < mc; ir += kMr) {
                    double* dst = apack.data() + ir * kc;
                    const std::size_t h = std::min(kMr, mc - ir);
                    for (std::size_t k = 0; k < kc; ++k) {
                        const double* src = a + (ic + ir) * sa_i + (pc + k) * sa_k;
                        for (std::size_t r = 0; r < h; ++r) dst[k * kMr + r] = src[r * sa_i];
                        for (std::size_t r = h; r < kMr; ++r) dst[k * kMr + r] = 0.0;
                    }
                }
                for (std::size_t jr = 0; jr < nc; jr += kNr)
                    for (std::size_t ir = 0; ir < mc; ir += kMr)
                        gemm_micro(apack.data() + ir * kc, bpack.data() + jr * kc, kc,
                                   out + (ic + ir) * n + jc + jr, n, std::min(kMr, mc - ir), std::min(kNr, nc - jr));
            }
        }
    }
}

// out += a · b
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
    gemm_strided(a.data.data(), a.cols, 1, a.rows, a.cols, b.data.data(), b.cols, out.data.data());
}

// out += a · bᵀ, through a transposed copy of b.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    Matrix bt(b.cols, b.rows);
    for (std::size_t r = 0; r < b.rows; ++r)
        for (std::size_t c = 0; c < b.cols; ++c) bt(c, r) = b(r, c);
    gemm_nn(a, bt, out);
}

// out += aᵀ · b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    gemm_strided(a.data.data(), 1, a.cols, a.cols, a.rows, b.data.data(), b.cols, out.data.data());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <class F>
Matrix map_unary(const Matrix& a, F f) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
    return out;
}

template <class F>
Matrix map_binary(const Matrix& a, const Matrix& b, F f) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols) + ")");
}

Tape& common_tape(std::span<const Var> vars) {
    if (vars.empty()) throw ContractError("operation needs at least one input");
    Tape& t = vars.front().tape();
    for (const auto& v : vars)
        if (&v.tape() != &t) throw ContractError("operands live on different tapes");
    return t;
}

}  // namespace

std::string_view op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Softplus: return "softplus";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Clamp: return "clamp";
        case Op::SumAll: return "sum";
        case Op::SumCols: return "sum_cols";
        case Op::Broadcast: return "broadcast";
        case Op::ConcatCols: return "concat_cols";
        case Op::ConcatRows: return "concat_rows";
        case Op::SliceCols: return "slice_cols";
        case Op::SliceRows: return "slice_rows";
        case Op::LogSumExpRows: return "logsumexp_rows";
    }
    return "unknown";
}

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::variable(Matrix value) {
    check_finite(value, nodes_.size(), Op::Leaf, "input");
    Node n;
    n.value = std::move(value);
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    check_finite(value, nodes_.size(), Op::Leaf, "input");
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, double c0, double c1, std::size_t i0, std::size_t i1) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.c0 = c0;
    n.c1 = c1;
    n.i0 = i0;
    n.i1 = i1;
    for (auto in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    n.value = evaluate(n);
    check_finite(n.value, nodes_.size(), op, "forward");
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_finite(const Matrix& m, std::size_t id, Op op, const char* phase) const {
    // Exponent bits all set means inf or NaN; the integer reduction vectorizes.
    constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
    std::uint64_t bad = 0;
    for (double x : m.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        bad |= static_cast<std::uint64_t>((bits & kExponent) == kExponent);
    }
    if (!bad) return;
    for (double x : m.data) {
        if (!std::isfinite(x))
            throw NumericalError("non-finite value in " + std::string(phase) + " of op #" + std::to_string(id) +
                                     " (" + std::string(op_name(op)) + ")",
                                 id, std::string(op_name(op)));
    }
}

Matrix Tape::evaluate(const Node& n) const {
    auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
    switch (n.op) {
        case Op::Leaf: return n.value;
        case Op::Add:
            require_same_shape(in(0), in(1), "add");
            return map_binary(in(0), in(1), [](double a, double b) { return a + b; });
        case Op::Sub:
            require_same_shape(in(0), in(1), "sub");
            return map_binary(in(0), in(1), [](double a, double b) { return a - b; });
        case Op::Mul:
            require_same_shape(in(0), in(1), "mul");
            return map_binary(in(0), in(1), [](double a, double b) { return a * b; });
        case Op::Scale: return map_unary(in(0), [c = n.c0](double a) { return a * c; });
        case Op::AddScalar: return map_unary(in(0), [c = n.c0](double a) { return a + c; });
        case Op::MatMul: {
            const Matrix& a = in(0);
            const Matrix& b = in(1);
            const bool nt = n.i0 != 0;
            const std::size_t inner = nt ? b.cols : b.rows;
            if (a.cols != inner)
                throw ContractError("matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                                    std::to_string(inner) + ")");
            Matrix out(a.rows, nt ? b.rows : b.cols);
            if (nt)
                gemm_nt(a, b, out);
            else
                gemm_nn(a, b, out);
            return out;
        }
        case Op::Transpose: {
            const Matrix& a = in(0);
            Matrix out(a.cols, a.rows);
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
            return out;
        }
        case Op::Tanh: return map_unary(in(0), [](double a) { return std::tanh(a); });
        case Op::Sigmoid: return map_unary(in(0), stable_sigmoid);
        case Op::Softplus: return map_unary(in(0), stable_softplus);
        case Op::Exp: return map_unary(in(0), [](double a) { return std::exp(a); });
        case Op::Log: return map_unary(in(0), [](double a) { return std::log(a); });
        case Op::Clamp:
            return map_unary(in(0), [lo = n.c0, hi = n.c1](double a) { return std::clamp(a, lo, hi); });
        case Op::SumAll: {
            double s = 0.0;
            for (double x : in(0).data) s += x;
            return Matrix(1, 1, s);
        }
        case Op::SumCols: {
            const Matrix& a = in(0);
            Matrix out(a.rows, 1);
            for (std::size_t r = 0; r < a.rows; ++r) {
                double s = 0.0;
                for (double x : a.row(r)) s += x;
                out.data[r] = s;
            }
            return out;
        }
        case Op::Broadcast: {
            const Matrix& a = in(0);
            Matrix out(n.i0, n.i1);
            for (std::size_t r = 0; r < out.rows; ++r)
                for (std::size_t c = 0; c < out.cols; ++c)
                    out(r, c) = a(a.rows == 1 ? 0 : r, a.cols == 1 ? 0 : c);
            return out;
        }
        case Op::ConcatCols: {
            const std::size_t rows = in(0).rows;
            std::size_t cols = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                if (in(k).rows != rows) throw ContractError("concat_cols: row counts differ");
                cols += in(k).cols;
            }
            Matrix out(rows, cols);
            for (std::size_t r = 0; r < rows; ++r) {
                auto dst = out.row(r).begin();
                for (std::size_t k = 0; k < n.inputs.size(); ++k) dst = std::copy_n(in(k).row(r).begin(), in(k).cols, dst);
            }
            return out;
        }
        case Op::ConcatRows: {
            const std::size_t cols = in(0).cols;
            std::size_t rows = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                if (in(k).cols != cols) throw ContractError("concat_rows: column counts differ");
                rows += in(k).rows;
            }
            Matrix out(rows, cols);
            auto dst = out.data.begin();
            for (std::size_t k = 0; k < n.inputs.size(); ++k) dst = std::copy(in(k).data.begin(), in(k).data.end(), dst);
            return out;
        }
        case Op::SliceCols: {
            const Matrix& a = in(0);
            Matrix out(a.rows, n.i1);
            for (std::size_t r = 0; r < a.rows; ++r)
                std::copy_n(a.row(r).begin() + static_cast<std::ptrdiff_t>(n.i0), n.i1, out.row(r).begin());
            return out;
        }
        case Op::SliceRows: return take_rows(in(0), n.i0, n.i1);
        case Op::LogSumExpRows: {
            const Matrix& a = in(0);
            Matrix out(a.rows, 1);
            for (std::size_t r = 0; r < a.rows; ++r) {
                auto row = a.row(r);
                const double m = *std::max_element(row.begin(), row.end());
                double s = 0.0;
                for (double x : row) s += std::exp(x - m);
                out.data[r] = m + std::log(s);
            }
            return out;
        }
    }
    throw ContractError("unknown op");
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

Matrix& Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::backward(Var output) {
    const Matrix& v = value(output);
    if (v.rows != 1 || v.cols != 1) throw ContractError("backward: output is not a scalar; pass a seed");
    backward(output, Matrix(1, 1, 1.0));
}

void Tape::backward(Var output, const Matrix& seed) {
    if (&output.tape() != this) throw ContractError("backward: output belongs to another tape");
    require_same_shape(value(output), seed, "backward seed");
    for (auto& n : nodes_) n.grad = Matrix();
    nodes_[output.id()].grad = seed;
    for (std::size_t id = output.id() + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (n.op == Op::Leaf || !n.needs_grad || n.grad.empty()) continue;
        propagate(id);
    }
}

void Tape::propagate(std::size_t id) {
    // nodes_ does not grow during backward, so these references stay valid.
    const Node& n = nodes_[id];
    const Matrix& g = n.grad;
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
    auto in_value = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
    auto in_grad = [&](std::size_t k) -> Matrix& { return grad_slot(n.inputs[k]); };

    auto accumulate_elementwise = [&](std::size_t k, auto local) {
        if (!wants(k)) return;
        Matrix& dst = in_grad(k);
        for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i] * local(i);
    };

    switch (n.op) {
        case Op::Leaf: break;
        case Op::Add:
            accumulate_elementwise(0, [](std::size_t) { return 1.0; });
            accumulate_elementwise(1, [](std::size_t) { return 1.0; });
            break;
        case Op::Sub:
            accumulate_elementwise(0, [](std::size_t) { return 1.0; });
            accumulate_elementwise(1, [](std::size_t) { return -1.0; });
            break;
        case Op::Mul: {
            const Matrix& a = in_value(0);
            const Matrix& b = in_value(1);
            accumulate_elementwise(0, [&](std::size_t i) { return b.data[i]; });
            accumulate_elementwise(1, [&](std::size_t i) { return a.data[i]; });
            break;
        }
        case Op::Scale: accumulate_elementwise(0, [c = n.c0](std::size_t) { return c; }); break;
        case Op::AddScalar: accumulate_elementwise(0, [](std::size_t) { return 1.0; }); break;
        case Op::MatMul:
            if (n.i0 == 0) {  // out = a · b
                if (wants(0)) gemm_nt(g, in_value(1), in_grad(0));
                if (wants(1)) gemm_tn(in_value(0), g, in_grad(1));
            } else {  // out = a · bᵀ
                if (wants(0)) gemm_nn(g, in_value(1), in_grad(0));
                if (wants(1)) gemm_tn(g, in_value(0), in_grad(1));
            }
            break;
        case Op::Transpose:
            if (wants(0)) {
                Matrix& dst = in_grad(0);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) dst(c, r) += g(r, c);
            }
            break;
        case Op::Tanh: {
            const Matrix& y = n.value;
            accumulate_elementwise(0, [&](std::size_t i) { return 1.0 - y.data[i] * y.data[i]; });
            break;
        }
        case Op::Sigmoid: {
            const Matrix& y = n.value;
            accumulate_elementwise(0, [&](std::size_t i) { return y.data[i] * (1.0 - y.data[i]); });
            break;
        }
        case Op::Softplus: {
            const Matrix& x = in_value(0);
            accumulate_elementwise(0, [&](std::size_t i) { return stable_sigmoid(x.data[i]); });
            break;
        }
        case Op::Exp: {
            const Matrix& y = n.value;
            accumulate_elementwise(0, [&](std::size_t i) { return y.data[i]; });
            break;
        }
        case Op::Log: {
            const Matrix& x = in_value(0);
            accumulate_elementwise(0, [&](std::size_t i) { return 1.0 / x.data[i]; });
            break;
        }
        case Op::Clamp: {
            const Matrix& x = in_value(0);
            accumulate_elementwise(0, [&](std::size_t i) {
                return (x.data[i] >= n.c0 && x.data[i] <= n.c1) ? 1.0 : 0.0;
            });
            break;
        }
        case Op::SumAll:
            if (wants(0))
                for (double& d : in_grad(0).data) d += g.data[0];
            break;
        case Op::SumCols:
            if (wants(0)) {
                Matrix& dst = in_grad(0);
                for (std::size_t r = 0; r < dst.rows; ++r)
                    for (double& d : dst.row(r)) d += g.data[r];
            }
            break;
        case Op::Broadcast:
            if (wants(0)) {
                Matrix& dst = in_grad(0);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c)
                        dst(dst.rows == 1 ? 0 : r, dst.cols == 1 ? 0 : c) += g(r, c);
            }
            break;
        case Op::ConcatCols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const std::size_t width = in_value(k).cols;
                if (wants(k)) {
                    Matrix& dst = in_grad(k);
                    for (std::size_t r = 0; r < g.rows; ++r)
                        for (std::size_t c = 0; c < width; ++c) dst(r, c) += g(r, offset + c);
                }
                offset += width;
            }
            break;
        }
        case Op::ConcatRows: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const std::size_t count = in_value(k).size();
                if (wants(k)) {
                    Matrix& dst = in_grad(k);
                    for (std::size_t i = 0; i < count; ++i) dst.data[i] += g.data[offset + i];
                }
                offset += count;
            }
            break;
        }
        case Op::SliceCols:
            if (wants(0)) {
                Matrix& dst = in_grad(0);
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < g.cols; ++c) dst(r, n.i0 + c) += g(r, c);
            }
            break;
        case Op::SliceRows:
            if (wants(0)) {
                Matrix& dst = in_grad(0);
                const std::size_t base = n.i0 * dst.cols;
                for (std::size_t i = 0; i < g.size(); ++i) dst.data[base + i] += g.data[i];
            }
            break;
        case Op::LogSumExpRows:
            if (wants(0)) {
                const Matrix& x = in_value(0);
                Matrix& dst = in_grad(0);
                for (std::size_t r = 0; r < x.rows; ++r)
                    for (std::size_t c = 0; c < x.cols; ++c)
                        dst(r, c) += g.data[r] * std::exp(x(r, c) - n.value.data[r]);
            }
            break;
    }
    for (auto in : n.inputs) {
        const Node& src = nodes_[in];
        if (src.needs_grad && !src.grad.empty()) check_finite(src.grad, id, n.op, "backward");
    }
}

void Tape::set_value(Var leaf, Matrix value) {
    Node& n = nodes_[leaf.id()];
    if (n.op != Op::Leaf) throw ContractError("set_value: node is not a leaf");
    require_same_shape(n.value, value, "set_value");
    check_finite(value, leaf.id(), Op::Leaf, "input");
    n.value = std::move(value);
}

void Tape::replay() {
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        Node& n = nodes_[id];
        if (n.op == Op::Leaf) continue;
        n.value = evaluate(n);
        check_finite(n.value, id, n.op, "forward");
    }
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b) { return common_tape(std::array{a, b}).record(Op::Add, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return common_tape(std::array{a, b}).record(Op::Sub, {a.id(), b.id()}); }
Var mul(Var a, Var b) { return common_tape(std::array{a, b}).record(Op::Mul, {a.id(), b.id()}); }
Var scale(Var a, double factor) { return a.tape().record(Op::Scale, {a.id()}, factor); }
Var add_scalar(Var a, double shift) { return a.tape().record(Op::AddScalar, {a.id()}, shift); }
Var matmul(Var a, Var b) { return common_tape(std::array{a, b}).record(Op::MatMul, {a.id(), b.id()}); }
Var matmul_nt(Var a, Var b) {
    return common_tape(std::array{a, b}).record(Op::MatMul, {a.id(), b.id()}, 0.0, 0.0, 1);
}
Var transpose(Var a) { return a.tape().record(Op::Transpose, {a.id()}); }
Var tanh(Var a) { return a.tape().record(Op::Tanh, {a.id()}); }
Var sigmoid(Var a) { return a.tape().record(Op::Sigmoid, {a.id()}); }
Var softplus(Var a) { return a.tape().record(Op::Softplus, {a.id()}); }
Var exp(Var a) { return a.tape().record(Op::Exp, {a.id()}); }
Var log(Var a) { return a.tape().record(Op::Log, {a.id()}); }

Var clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
    return a.tape().record(Op::Clamp, {a.id()}, lo, hi);
}

Var sum(Var a) { return a.tape().record(Op::SumAll, {a.id()}); }
Var sum_cols(Var a) { return a.tape().record(Op::SumCols, {a.id()}); }

Var broadcast(Var a, std::size_t rows, std::size_t cols) {
    const bool ok_rows = a.rows() == rows || a.rows() == 1;
    const bool ok_cols = a.cols() == cols || a.cols() == 1;
    if (!ok_rows || !ok_cols) throw ContractError("broadcast: incompatible target shape");
    return a.tape().record(Op::Broadcast, {a.id()}, 0.0, 0.0, rows, cols);
}

Var concat_cols(std::span<const Var> parts) {
    Tape& t = common_tape(parts);
    if (parts.size() == 1) return parts.front();
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return t.record(Op::ConcatCols, std::move(ids));
}

Var concat_rows(std::span<const Var> parts) {
    Tape& t = common_tape(parts);
    if (parts.size() == 1) return parts.front();
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return t.record(Op::ConcatRows, std::move(ids));
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) throw ContractError("slice_cols: range exceeds width");
    return a.tape().record(Op::SliceCols, {a.id()}, 0.0, 0.0, begin, count);
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) throw ContractError("slice_rows: range exceeds height");
    return a.tape().record(Op::SliceRows, {a.id()}, 0.0, 0.0, begin, count);
}

Var logsumexp_rows(Var a) { return a.tape().record(Op::LogSumExpRows, {a.id()}); }

Var tile_rows(Var a, std::size_t n) {
    if (n == 0) throw ContractError("tile_rows: n must be positive");
    std::vector<Var> copies(n, a);
    return concat_rows(copies);
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// ---------------------------------------------------------------------------

VarMap bind(Tape& tape, const ParameterSet& params) {
    VarMap vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.variable(value));
    return vars;
}

Var lookup(const VarMap& vars, std::string_view name) {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
    return it->second;
}

ParameterSet gradients(const Tape& tape, const VarMap& vars) {
    ParameterSet out;
    for (const auto& [name, var] : vars) out.set(name, tape.grad(var));
    return out;
}

ValueAndGrad value_and_grad(const ScalarFunction& f, const ParameterSet& at) {
    Tape tape;
    const VarMap vars = bind(tape, at);
    const Var out = f(tape, vars);
    tape.backward(out);
    return {out.value().data[0], gradients(tape, vars)};
}

ParameterSet grad(const ScalarFunction& f, const ParameterSet& at) { return value_and_grad(f, at).grad; }

double evaluate(const ScalarFunction& f, const ParameterSet& at) {
    Tape tape;
    const VarMap vars = bind(tape, at);
    const Var out = f(tape, vars);
    if (out.value().size() != 1) throw ContractError("evaluate: function is not scalar-valued");
    return out.value().data[0];
}

Matrix jacobian(const VectorFunction& g, std::span<const double> at) {
    if (at.empty()) throw ContractError("jacobian: input dimension must be at least 1");
    Tape tape;
    const Var input = tape.variable(Matrix::row_vector(at));
    const Var output = g(tape, input);
    const Matrix& y = output.value();
    if (y.rows != 1 || y.cols == 0) throw ContractError("jacobian: map must return a non-empty row vector");
    Matrix jac(y.cols, at.size());
    for (std::size_t i = 0; i < y.cols; ++i) {
        Matrix seed(1, y.cols);
        seed.data[i] = 1.0;
        tape.backward(output, seed);
        const Matrix row = tape.grad(input);
        std::copy(row.data.begin(), row.data.end(), jac.row(i).begin());
    }
    return jac;
}

double check_gradient(const ScalarFunction& f, const ParameterSet& at, double step) {
    if (!(step > 0.0)) throw ContractError("check_gradient: step must be positive");
    const ParameterSet analytic = grad(f, at);
    ParameterSet probe = at;
    double worst = 0.0;
    for (auto& [name, value] : probe) {
        const Matrix& a = analytic.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double original = value.data[i];
            value.data[i] = original + step;
            const double up = evaluate(f, probe);
            value.data[i] = original - step;
            const double down = evaluate(f, probe);
            value.data[i] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(a.data[i] - numeric) / (std::abs(a.data[i]) + std::abs(numeric) + 1e-12);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace cvae::ad
