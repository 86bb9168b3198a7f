#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace soundflow {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

namespace detail {
struct Node;

// Test hook: when set, tanh's backward rule is deliberately wrong. The
// gradcheck command uses it to prove the finite-difference harness catches
// a bad rule. Never set outside tests.
extern bool corrupt_tanh_backward;
}  // namespace detail

// Dense double-precision tensor participating in a reverse-mode graph.
// Value-semantic handle; copies share the underlying node. Graphs are built
// by the free functions below and are always acyclic: every op creates a
// fresh node and never mutates its inputs.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const;
    bool requires_grad() const;

    const std::vector<double>& values() const;
    // In-place access for leaf updates (optimizer steps). Must not be called
    // on tensors that are interior to a live graph.
    std::vector<double>& mutable_values();

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    // Scalar extraction; throws unless size() == 1.
    double item() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// ---- op suite -------------------------------------------------------------
// Shapes must conform exactly; the only broadcast is bias-add of a rank-1
// tensor over the rows of a rank-2 tensor. Mismatches throw
// std::invalid_argument naming the offending shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Multiply by a learnable scalar tensor (shape [1]).
Tensor scale_by(const Tensor& a, const Tensor& s);

// 2-D matrix product, or batched product of two rank-3 tensors with equal
// leading extent.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a);  // last axis
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias);  // last axis
Tensor tanh(const Tensor& a);
Tensor silu(const Tensor& a);

Tensor sum(const Tensor& a);                          // scalar
Tensor mean_axis(const Tensor& a, std::size_t axis);  // drops the axis
Tensor mse(const Tensor& a, const Tensor& b);         // scalar mean squared error

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                                      // 2-D
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);  // rank <= 3
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);      // 2-D, axis 0 or 1

// Rows of `table` selected by index; gradients scatter-add into the table.
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids);

// [c] -> [rows, c]; backward sums over rows.
Tensor broadcast_rows(const Tensor& v, std::size_t rows);

// Rotary position embedding over pairs of the last axis. Input is [n, d] or
// [n, heads, d] with d even; positions has length n. Position 0 is identity.
Tensor rope(const Tensor& a, const std::vector<double>& positions, double base = 10000.0);

// ---- autodiff ---------------------------------------------------------------

// Reverse sweep from a scalar loss. Gradients accumulate (sum) across fan-out
// and are written into every requires_grad tensor reachable from the loss.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central| / max(1, |central|) for a
// scalar-valued function of one tensor, central differences with the given
// step. The analytic side runs through backward(); the reference side only
// re-evaluates f.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step = 1e-3);

}  // namespace soundflow
