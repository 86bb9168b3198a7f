#include "soundflow/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace soundflow {

namespace {

using EigenRowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenRowMat>;
using ConstMatMap = Eigen::Map<const EigenRowMat>;

constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

namespace detail {

bool corrupt_tanh_backward = false;

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    std::size_t size() const { return values.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size()) {
        fail("tensor: value count " + std::to_string(values.size()) +
             " does not match shape " + shape_str(shape));
    }
    if (shape.empty() || shape_size(shape) == 0) {
        fail("tensor: shape must have positive extents, got " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

std::shared_ptr<Node> make_op(const char* op, Shape shape,
                              std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->shape = std::move(shape);
    n->values.assign(shape_size(n->shape), 0.0);
    n->requires_grad = false;
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    return n;
}

std::shared_ptr<Node> need(const Tensor& t, const char* op) {
    if (!t.defined()) fail(std::string(op) + ": undefined tensor");
    return t.node();
}

void check_same_shape(const char* op, const Node& a, const Node& b) {
    if (a.shape != b.shape) {
        fail(std::string(op) + ": shapes differ: " + shape_str(a.shape) + " vs " +
             shape_str(b.shape));
    }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(shape_size(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(shape_size(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }
std::size_t Tensor::size() const { return need(*this, "size")->values.size(); }
std::size_t Tensor::rank() const { return need(*this, "rank")->shape.size(); }
bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }

const std::vector<double>& Tensor::values() const { return need(*this, "values")->values; }

std::vector<double>& Tensor::mutable_values() { return need(*this, "mutable_values")->values; }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    auto n = need(*this, "grad");
    if (n->grad.empty()) fail("grad: no gradient present (run backward first)");
    return n->grad;
}

void Tensor::zero_grad() {
    auto n = need(*this, "zero_grad");
    n->grad.clear();
}

double Tensor::item() const {
    auto n = need(*this, "item");
    if (n->values.size() != 1) fail("item: tensor is not scalar, shape " + shape_str(n->shape));
    return n->values[0];
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& ta, const Tensor& tb) {
    auto a = need(ta, "add");
    auto b = need(tb, "add");
    // bias-add broadcast: [n, c] + [c]
    const bool bias = a->shape.size() == 2 && b->shape.size() == 1 && a->shape[1] == b->shape[0];
    if (!bias) check_same_shape("add", *a, *b);

    auto out = make_op("add", a->shape, {a, b});
    const std::size_t n = a->size();
    const std::size_t c = bias ? b->size() : 0;
    for (std::size_t i = 0; i < n; ++i) {
        out->values[i] = a->values[i] + (bias ? b->values[i % c] : b->values[i]);
    }
    out->backward_fn = [a, b, bias, c](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) {
                b->grad[bias ? i % c : i] += self.grad[i];
            }
        }
    };
    return Tensor(out);
}

Tensor sub(const Tensor& ta, const Tensor& tb) {
    auto a = need(ta, "sub");
    auto b = need(tb, "sub");
    check_same_shape("sub", *a, *b);
    auto out = make_op("sub", a->shape, {a, b});
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] - b->values[i];
    out->backward_fn = [a, b](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) b->grad[i] -= self.grad[i];
        }
    };
    return Tensor(out);
}

Tensor mul(const Tensor& ta, const Tensor& tb) {
    auto a = need(ta, "mul");
    auto b = need(tb, "mul");
    check_same_shape("mul", *a, *b);
    auto out = make_op("mul", a->shape, {a, b});
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * b->values[i];
    out->backward_fn = [a, b](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * b->values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) b->grad[i] += self.grad[i] * a->values[i];
        }
    };
    return Tensor(out);
}

Tensor scale(const Tensor& ta, double s) {
    auto a = need(ta, "scale");
    auto out = make_op("scale", a->shape, {a});
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * s;
    out->backward_fn = [a, s](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * s;
    };
    return Tensor(out);
}

Tensor scale_by(const Tensor& ta, const Tensor& ts) {
    auto a = need(ta, "scale_by");
    auto s = need(ts, "scale_by");
    if (s->size() != 1) fail("scale_by: scale must be a scalar tensor, got " + shape_str(s->shape));
    auto out = make_op("scale_by", a->shape, {a, s});
    const double sv = s->values[0];
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * sv;
    out->backward_fn = [a, s, sv](Node& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * sv;
        }
        if (s->requires_grad) {
            s->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < self.size(); ++i) acc += self.grad[i] * a->values[i];
            s->grad[0] += acc;
        }
    };
    return Tensor(out);
}

// ---- matmul ----------------------------------------------------------------

namespace {

void matmul_2d(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
               std::size_t m) {
    ConstMatMap ma(a, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    ConstMatMap mb(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    MatMap mc(c, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    mc.noalias() = ma * mb;
}

// c += a * b^T and c += a^T * b, used by the backward rules.
void matmul_acc_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m) {
    // a: [n x m], b: [k x m] -> c[n x k] += a * b^T
    ConstMatMap ma(a, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    ConstMatMap mb(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    MatMap mc(c, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    mc.noalias() += ma * mb.transpose();
}

void matmul_acc_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m) {
    // a: [n x k], b: [n x m] -> c[k x m] += a^T * b
    ConstMatMap ma(a, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    ConstMatMap mb(b, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    MatMap mc(c, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    mc.noalias() += ma.transpose() * mb;
}

}  // namespace

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    auto a = need(ta, "matmul");
    auto b = need(tb, "matmul");
    const auto& sa = a->shape;
    const auto& sb = b->shape;

    const bool two_d = sa.size() == 2 && sb.size() == 2;
    const bool batched = sa.size() == 3 && sb.size() == 3;
    if (!two_d && !batched) {
        fail("matmul: expects two rank-2 or two rank-3 tensors, got " + shape_str(sa) + " and " +
             shape_str(sb));
    }
    if (batched && sa[0] != sb[0]) {
        fail("matmul: batch extents differ: " + shape_str(sa) + " vs " + shape_str(sb));
    }
    const std::size_t batch = batched ? sa[0] : 1;
    const std::size_t n = batched ? sa[1] : sa[0];
    const std::size_t k = batched ? sa[2] : sa[1];
    const std::size_t kb = batched ? sb[1] : sb[0];
    const std::size_t m = batched ? sb[2] : sb[1];
    if (k != kb) {
        fail("matmul: inner extents differ: " + shape_str(sa) + " vs " + shape_str(sb));
    }

    Shape out_shape = batched ? Shape{batch, n, m} : Shape{n, m};
    auto out = make_op("matmul", out_shape, {a, b});
    for (std::size_t i = 0; i < batch; ++i) {
        matmul_2d(a->values.data() + i * n * k, b->values.data() + i * k * m,
                  out->values.data() + i * n * m, n, k, m);
    }
    out->backward_fn = [a, b, batch, n, k, m](Node& self) {
        for (std::size_t i = 0; i < batch; ++i) {
            const double* g = self.grad.data() + i * n * m;
            if (a->requires_grad) {
                a->ensure_grad();
                matmul_acc_nt(g, b->values.data() + i * k * m, a->grad.data() + i * n * k, n, k, m);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                matmul_acc_tn(a->values.data() + i * n * k, g, b->grad.data() + i * k * m, n, k, m);
            }
        }
    };
    return Tensor(out);
}

// ---- softmax / layer norm / nonlinearities ----------------------------------

Tensor softmax(const Tensor& ta) {
    auto a = need(ta, "softmax");
    const std::size_t cols = a->shape.back();
    const std::size_t rows = a->size() / cols;
    auto out = make_op("softmax", a->shape, {a});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->values.data() + r * cols;
        double* y = out->values.data() + r * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
    }
    out->backward_fn = [a, rows, cols](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.values.data() + r * cols;
            const double* gy = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += y[j] * gy[j];
            double* gx = a->grad.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    };
    return Tensor(out);
}

Tensor layer_norm(const Tensor& ta, const Tensor& tgain, const Tensor& tbias) {
    auto a = need(ta, "layer_norm");
    auto g = need(tgain, "layer_norm");
    auto b = need(tbias, "layer_norm");
    const std::size_t cols = a->shape.back();
    if (g->shape != Shape{cols} || b->shape != Shape{cols}) {
        fail("layer_norm: gain/bias must be [" + std::to_string(cols) + "], got " +
             shape_str(g->shape) + " and " + shape_str(b->shape));
    }
    const std::size_t rows = a->size() / cols;
    auto out = make_op("layer_norm", a->shape, {a, g, b});
    // keep normalized activations for the backward pass
    auto xhat = std::make_shared<std::vector<double>>(a->size());
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->values.data() + r * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += x[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_sigma)[r] = inv;
        double* xh = xhat->data() + r * cols;
        double* y = out->values.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) {
            xh[j] = (x[j] - mean) * inv;
            y[j] = xh[j] * g->values[j] + b->values[j];
        }
    }
    out->backward_fn = [a, g, b, rows, cols, xhat, inv_sigma](Node& self) {
        if (a->requires_grad) a->ensure_grad();
        if (g->requires_grad) g->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gy = self.grad.data() + r * cols;
            const double* xh = xhat->data() + r * cols;
            if (g->requires_grad || b->requires_grad) {
                for (std::size_t j = 0; j < cols; ++j) {
                    if (g->requires_grad) g->grad[j] += gy[j] * xh[j];
                    if (b->requires_grad) b->grad[j] += gy[j];
                }
            }
            if (!a->requires_grad) continue;
            // dxhat_j = gy_j * gain_j ; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double dxh = gy[j] * g->values[j];
                m1 += dxh;
                m2 += dxh * xh[j];
            }
            m1 /= static_cast<double>(cols);
            m2 /= static_cast<double>(cols);
            double* gx = a->grad.data() + r * cols;
            const double inv = (*inv_sigma)[r];
            for (std::size_t j = 0; j < cols; ++j) {
                const double dxh = gy[j] * g->values[j];
                gx[j] += inv * (dxh - m1 - xh[j] * m2);
            }
        }
    };
    return Tensor(out);
}

Tensor tanh(const Tensor& ta) {
    auto a = need(ta, "tanh");
    auto out = make_op("tanh", a->shape, {a});
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = std::tanh(a->values[i]);
    out->backward_fn = [a](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const double fudge = detail::corrupt_tanh_backward ? 1.01 : 1.0;
        for (std::size_t i = 0; i < self.size(); ++i) {
            const double y = self.values[i];
            a->grad[i] += self.grad[i] * (1.0 - y * y) * fudge;
        }
    };
    return Tensor(out);
}

Tensor silu(const Tensor& ta) {
    auto a = need(ta, "silu");
    auto out = make_op("silu", a->shape, {a});
    for (std::size_t i = 0; i < a->size(); ++i) {
        const double x = a->values[i];
        out->values[i] = x / (1.0 + std::exp(-x));
    }
    out->backward_fn = [a](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) {
            const double x = a->values[i];
            const double sig = 1.0 / (1.0 + std::exp(-x));
            a->grad[i] += self.grad[i] * sig * (1.0 + x * (1.0 - sig));
        }
    };
    return Tensor(out);
}

// ---- reductions --------------------------------------------------------------

Tensor sum(const Tensor& ta) {
    auto a = need(ta, "sum");
    auto out = make_op("sum", Shape{1}, {a});
    double acc = 0.0;
    for (double v : a->values) acc += v;
    out->values[0] = acc;
    out->backward_fn = [a](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const double g = self.grad[0];
        for (double& gi : a->grad) gi += g;
    };
    return Tensor(out);
}

Tensor mean_axis(const Tensor& ta, std::size_t axis) {
    auto a = need(ta, "mean_axis");
    if (axis >= a->shape.size()) {
        fail("mean_axis: axis " + std::to_string(axis) + " out of range for " +
             shape_str(a->shape));
    }
    Shape out_shape;
    for (std::size_t i = 0; i < a->shape.size(); ++i) {
        if (i != axis) out_shape.push_back(a->shape[i]);
    }
    if (out_shape.empty()) out_shape = {1};

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a->shape[i];
    for (std::size_t i = axis + 1; i < a->shape.size(); ++i) inner *= a->shape[i];
    const std::size_t extent = a->shape[axis];

    auto out = make_op("mean_axis", out_shape, {a});
    const double inv = 1.0 / static_cast<double>(extent);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::size_t e = 0; e < extent; ++e) {
                acc += a->values[(o * extent + e) * inner + i];
            }
            out->values[o * inner + i] = acc * inv;
        }
    }
    out->backward_fn = [a, outer, inner, extent, inv](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const double g = self.grad[o * inner + i] * inv;
                for (std::size_t e = 0; e < extent; ++e) {
                    a->grad[(o * extent + e) * inner + i] += g;
                }
            }
        }
    };
    return Tensor(out);
}

Tensor mse(const Tensor& ta, const Tensor& tb) {
    auto a = need(ta, "mse");
    auto b = need(tb, "mse");
    check_same_shape("mse", *a, *b);
    auto out = make_op("mse", Shape{1}, {a, b});
    const double inv = 1.0 / static_cast<double>(a->size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) {
        const double d = a->values[i] - b->values[i];
        acc += d * d;
    }
    out->values[0] = acc * inv;
    out->backward_fn = [a, b, inv](Node& self) {
        const double g = self.grad[0] * 2.0 * inv;
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) {
            const double d = a->values[i] - b->values[i];
            if (a->requires_grad) a->grad[i] += g * d;
            if (b->requires_grad) b->grad[i] -= g * d;
        }
    };
    return Tensor(out);
}

// ---- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& ta, Shape shape) {
    auto a = need(ta, "reshape");
    if (shape_size(shape) != a->size()) {
        fail("reshape: cannot view " + shape_str(a->shape) + " as " + shape_str(shape));
    }
    auto out = make_op("reshape", shape, {a});
    out->values = a->values;
    out->backward_fn = [a](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
    };
    return Tensor(out);
}

Tensor transpose(const Tensor& ta) {
    auto a = need(ta, "transpose");
    if (a->shape.size() != 2) fail("transpose: expects rank 2, got " + shape_str(a->shape));
    const std::size_t n = a->shape[0], m = a->shape[1];
    auto out = make_op("transpose", Shape{m, n}, {a});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out->values[j * n + i] = a->values[i * m + j];
    }
    out->backward_fn = [a, n, m](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) a->grad[i * m + j] += self.grad[j * n + i];
        }
    };
    return Tensor(out);
}

Tensor permute(const Tensor& ta, const std::vector<std::size_t>& axes) {
    auto a = need(ta, "permute");
    const std::size_t r = a->shape.size();
    if (r > 3) fail("permute: supports rank <= 3, got " + shape_str(a->shape));
    if (axes.size() != r) fail("permute: axes count must equal rank " + std::to_string(r));
    std::vector<bool> seen(r, false);
    for (std::size_t ax : axes) {
        if (ax >= r || seen[ax]) fail("permute: invalid axis list");
        seen[ax] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = a->shape[axes[i]];

    // strides of the input, gathered in permuted order
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * a->shape[i];
    std::vector<std::size_t> gather(r);
    for (std::size_t i = 0; i < r; ++i) gather[i] = in_stride[axes[i]];

    auto out = make_op("permute", out_shape, {a});
    auto index_map = std::make_shared<std::vector<std::size_t>>(a->size());
    std::size_t flat = 0;
    std::vector<std::size_t> idx(r, 0);
    while (true) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < r; ++i) src += idx[i] * gather[i];
        (*index_map)[flat] = src;
        out->values[flat] = a->values[src];
        ++flat;
        std::size_t d = r;
        while (d-- > 0) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
            if (d == 0) goto done;
        }
        if (flat >= out->size()) break;
    }
done:
    out->backward_fn = [a, index_map](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) a->grad[(*index_map)[i]] += self.grad[i];
    };
    return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) fail("concat: no inputs");
    if (axis > 1) fail("concat: axis must be 0 or 1");
    std::vector<std::shared_ptr<Node>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(need(p, "concat"));
    const std::size_t other = 1 - axis;
    for (const auto& n : nodes) {
        if (n->shape.size() != 2) fail("concat: expects rank 2, got " + shape_str(n->shape));
        if (n->shape[other] != nodes[0]->shape[other]) {
            fail("concat: extents differ on axis " + std::to_string(other) + ": " +
                 shape_str(nodes[0]->shape) + " vs " + shape_str(n->shape));
        }
    }
    std::size_t total = 0;
    for (const auto& n : nodes) total += n->shape[axis];
    Shape out_shape = nodes[0]->shape;
    out_shape[axis] = total;

    auto out = make_op("concat", out_shape, nodes);
    const std::size_t rows = out_shape[0], cols = out_shape[1];
    if (axis == 0) {
        std::size_t row0 = 0;
        for (const auto& n : nodes) {
            std::copy(n->values.begin(), n->values.end(), out->values.begin() + row0 * cols);
            row0 += n->shape[0];
        }
    } else {
        std::size_t col0 = 0;
        for (const auto& n : nodes) {
            const std::size_t c = n->shape[1];
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy(n->values.begin() + r * c, n->values.begin() + (r + 1) * c,
                          out->values.begin() + r * cols + col0);
            }
            col0 += c;
        }
    }
    out->backward_fn = [nodes, axis, rows, cols](Node& self) {
        std::size_t off = 0;
        for (const auto& n : nodes) {
            if (axis == 0) {
                if (n->requires_grad) {
                    n->ensure_grad();
                    const std::size_t base = off * cols;
                    for (std::size_t i = 0; i < n->size(); ++i) n->grad[i] += self.grad[base + i];
                }
                off += n->shape[0];
            } else {
                const std::size_t c = n->shape[1];
                if (n->requires_grad) {
                    n->ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < c; ++j) {
                            n->grad[r * c + j] += self.grad[r * cols + off + j];
                        }
                    }
                }
                off += c;
            }
        }
    };
    return Tensor(out);
}

Tensor embedding(const Tensor& ttable, const std::vector<std::size_t>& ids) {
    auto table = need(ttable, "embedding");
    if (table->shape.size() != 2) {
        fail("embedding: table must be rank 2, got " + shape_str(table->shape));
    }
    if (ids.empty()) fail("embedding: empty id list");
    const std::size_t vocab = table->shape[0], dim = table->shape[1];
    for (std::size_t id : ids) {
        if (id >= vocab) {
            fail("embedding: id " + std::to_string(id) + " out of range for table " +
                 shape_str(table->shape));
        }
    }
    auto out = make_op("embedding", Shape{ids.size(), dim}, {table});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy(table->values.begin() + ids[i] * dim, table->values.begin() + (ids[i] + 1) * dim,
                  out->values.begin() + i * dim);
    }
    auto ids_copy = std::make_shared<std::vector<std::size_t>>(ids);
    out->backward_fn = [table, ids_copy, dim](Node& self) {
        if (!table->requires_grad) return;
        table->ensure_grad();
        for (std::size_t i = 0; i < ids_copy->size(); ++i) {
            const std::size_t id = (*ids_copy)[i];
            for (std::size_t j = 0; j < dim; ++j) {
                table->grad[id * dim + j] += self.grad[i * dim + j];
            }
        }
    };
    return Tensor(out);
}

Tensor broadcast_rows(const Tensor& tv, std::size_t rows) {
    auto v = need(tv, "broadcast_rows");
    if (v->shape.size() != 1) {
        fail("broadcast_rows: expects rank 1, got " + shape_str(v->shape));
    }
    if (rows == 0) fail("broadcast_rows: rows must be positive");
    const std::size_t c = v->shape[0];
    auto out = make_op("broadcast_rows", Shape{rows, c}, {v});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v->values.begin(), v->values.end(), out->values.begin() + r * c);
    }
    out->backward_fn = [v, rows, c](Node& self) {
        if (!v->requires_grad) return;
        v->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) v->grad[j] += self.grad[r * c + j];
        }
    };
    return Tensor(out);
}

Tensor rope(const Tensor& ta, const std::vector<double>& positions, double base) {
    auto a = need(ta, "rope");
    const std::size_t r = a->shape.size();
    if (r != 2 && r != 3) fail("rope: expects rank 2 or 3, got " + shape_str(a->shape));
    const std::size_t n = a->shape[0];
    const std::size_t heads = r == 3 ? a->shape[1] : 1;
    const std::size_t d = a->shape.back();
    if (d % 2 != 0) fail("rope: last axis must be even, got " + shape_str(a->shape));
    if (positions.size() != n) {
        fail("rope: positions length " + std::to_string(positions.size()) +
             " does not match rows of " + shape_str(a->shape));
    }

    const std::size_t pairs = d / 2;
    // angle(pos, i) = pos * base^(-2i/d)
    auto freqs = std::make_shared<std::vector<double>>(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        (*freqs)[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    }
    auto pos = std::make_shared<std::vector<double>>(positions);

    auto out = make_op("rope", a->shape, {a});
    auto rotate = [&](const std::vector<double>& src, std::vector<double>& dst, double sign) {
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = (row * heads + h) * d;
                for (std::size_t i = 0; i < pairs; ++i) {
                    const double theta = sign * (*pos)[row] * (*freqs)[i];
                    const double c = std::cos(theta), s = std::sin(theta);
                    const double x = src[off + 2 * i], y = src[off + 2 * i + 1];
                    dst[off + 2 * i] += x * c - y * s;
                    dst[off + 2 * i + 1] += x * s + y * c;
                }
            }
        }
    };
    rotate(a->values, out->values, 1.0);
    out->backward_fn = [a, pos, freqs, n, heads, d](Node& self) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const std::size_t pairs = d / 2;
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t off = (row * heads + h) * d;
                for (std::size_t i = 0; i < pairs; ++i) {
                    const double theta = -(*pos)[row] * (*freqs)[i];
                    const double c = std::cos(theta), s = std::sin(theta);
                    const double gx = self.grad[off + 2 * i], gy = self.grad[off + 2 * i + 1];
                    a->grad[off + 2 * i] += gx * c - gy * s;
                    a->grad[off + 2 * i + 1] += gx * s + gy * c;
                }
            }
        }
    };
    return Tensor(out);
}

// ---- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
    auto root = need(loss, "backward");
    if (root->values.size() != 1) {
        fail("backward: loss must be scalar, got " + shape_str(root->shape));
    }

    // iterative post-order DFS; order is fully determined by graph structure
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Leaf grads persist across sweeps (optimizers accumulate, then call
    // zero_grad); interior grads are scratch space for this sweep only and
    // must start from zero or a reused graph would double-count.
    for (Node* n : order) {
        if (!n->requires_grad) continue;
        if (n->backward_fn)
            n->grad.assign(n->values.size(), 0.0);
        else
            n->ensure_grad();
    }
    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                  double step) {
    Tensor x(point.shape(), point.values(), /*requires_grad=*/true);
    Tensor loss = f(x);
    if (loss.size() != 1) fail("grad_check: function must be scalar-valued");
    backward(loss);
    const std::vector<double> analytic = x.grad();

    double worst = 0.0;
    std::vector<double> values = point.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = f(Tensor(point.shape(), values)).item();
        values[i] = saved - step;
        const double dn = f(Tensor(point.shape(), values)).item();
        values[i] = saved;
        const double central = (up - dn) / (2.0 * step);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace soundflow
