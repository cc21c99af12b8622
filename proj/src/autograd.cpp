#include "leprompter/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "leprompter/error.hpp"
#include "leprompter/rng.hpp"

namespace leprompter {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Eigen::Index;

Var make(const char* op, Tensor value, std::vector<std::shared_ptr<Node>> inputs,
         std::function<void(Node&)> bw) {
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + op);
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [](const auto& in) { return in->requires_grad; });
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
    if (a.value().rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(a.shape()));
    }
}

bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

} // namespace

Tensor& Node::grad_buffer() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    return grad;
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "constant";
    return Var(std::move(n));
}

Var Var::leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (node_->grad.data.empty()) return Tensor::zeros(node_->value.shape);
    return node_->grad;
}

void backward(const Var& output) {
    if (output.value().size() != 1) {
        throw ShapeError("backward: output must be a single element, got " + shape_string(output.shape()));
    }
    if (!output.requires_grad()) return;
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
    seen.insert(output.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    output.node()->grad_buffer().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.data.empty()) n->backward(*n);
    }
}

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make("add", std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (auto& in : self.inputs) {
            if (!wants(in)) continue;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return make("sub", std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& in = self.inputs[k];
            if (!wants(in)) continue;
            const double sign = k == 0 ? 1.0 : -1.0;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make("mul", std::move(out), {a.node(), b.node()}, [](Node& self) {
        auto& x = self.inputs[0];
        auto& y = self.inputs[1];
        if (wants(x)) {
            auto& g = x->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y->value[i];
        }
        if (wants(y)) {
            auto& g = y->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.data) v *= s;
    return make("scale", std::move(out), {a.node()}, [s](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " are incompatible");
    }
    Tensor out({m, n});
    MapMat(out.data.data(), Index(m), Index(n)).noalias() =
        CMapMat(a.value().data.data(), Index(m), Index(k)) * CMapMat(b.value().data.data(), Index(k), Index(n));
    return make("matmul", std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
        auto& x = self.inputs[0];
        auto& y = self.inputs[1];
        CMapMat dout(self.grad.data.data(), Index(m), Index(n));
        if (wants(x)) {
            MapMat(x->grad_buffer().data.data(), Index(m), Index(k)).noalias() +=
                dout * CMapMat(y->value.data.data(), Index(k), Index(n)).transpose();
        }
        if (wants(y)) {
            MapMat(y->grad_buffer().data.data(), Index(k), Index(n)).noalias() +=
                CMapMat(x->value.data.data(), Index(m), Index(k)).transpose() * dout;
        }
    });
}

Var add_row_bias(const Var& a, const Var& bias) {
    require_rank("add_row_bias", a, 2);
    const auto m = a.dim(0), n = a.dim(1);
    if (bias.value().size() != n) {
        throw ShapeError("add_row_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
    }
    Tensor out = a.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bias.value()[j];
    return make("add_row_bias", std::move(out), {a.node(), bias.node()}, [m, n](Node& self) {
        if (wants(self.inputs[0])) {
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self.inputs[1])) {
            auto& g = self.inputs[1]->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
        }
    });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    require_rank("add_channel_bias", x, 3);
    const auto c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (bias.value().size() != c) {
        throw ShapeError("add_channel_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
    }
    Tensor out = x.value();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] += bias.value()[ch];
    return make("add_channel_bias", std::move(out), {x.node(), bias.node()}, [c, hw](Node& self) {
        if (wants(self.inputs[0])) {
            auto& g = self.inputs[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(self.inputs[1])) {
            auto& g = self.inputs[1]->grad_buffer();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) g[ch] += self.grad[ch * hw + i];
        }
    });
}

Var transpose(const Var& a) {
    require_rank("transpose", a, 2);
    const auto m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.value().at(i, j);
    return make("transpose", std::move(out), {a.node()}, [m, n](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
    });
}

Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a.value().size()) {
        throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    Tensor out(std::move(shape), a.value().data);
    return make("reshape", std::move(out), {a.node()}, [](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

} // namespace

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_string(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
        if (!ok) {
            throw ShapeError("concat: shapes " + shape_string(first) + " and " + shape_string(s) +
                             " disagree off axis " + std::to_string(axis));
        }
        extents.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const auto split = split_at(out_shape, axis);
    const std::size_t row = out_shape[axis] * split.inner;
    Tensor out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t chunk = extents[k] * split.inner;
        const auto& src = parts[k].value().data;
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                        out.data.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
        }
        offset += chunk;
    }
    std::vector<std::shared_ptr<Node>> inputs;
    for (const auto& p : parts) inputs.push_back(p.node());
    return make("concat", std::move(out), std::move(inputs), [extents, split, row](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            const std::size_t chunk = extents[k] * split.inner;
            if (wants(self.inputs[k])) {
                auto& g = self.inputs[k]->grad_buffer();
                for (std::size_t o = 0; o < split.outer; ++o)
                    for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += self.grad[o * row + offset + i];
            }
            offset += chunk;
        }
    });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
    const Shape& s = a.shape();
    if (axis >= s.size() || begin > end || end > s[axis]) {
        throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " out of range for " + shape_string(s));
    }
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    const auto split = split_at(s, axis);
    const std::size_t row = s[axis] * split.inner;
    const std::size_t chunk = (end - begin) * split.inner;
    const std::size_t offset = begin * split.inner;
    Tensor out(out_shape);
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(a.value().data.begin() + static_cast<std::ptrdiff_t>(o * row + offset), chunk,
                    out.data.begin() + static_cast<std::ptrdiff_t>(o * chunk));
    }
    return make("slice", std::move(out), {a.node()}, [split, row, chunk, offset](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t i = 0; i < chunk; ++i) g[o * row + offset + i] += self.grad[o * chunk + i];
    });
}

Var repeat_rows(const Var& a, std::size_t m) {
    require_rank("repeat_rows", a, 2);
    if (a.dim(0) != 1) throw ShapeError("repeat_rows: expected one row, got " + shape_string(a.shape()));
    const auto n = a.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) std::copy_n(a.value().data.begin(), n, out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    return make("repeat_rows", std::move(out), {a.node()}, [m, n](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
    });
}

Var softmax_rows(const Var& a) {
    require_rank("softmax_rows", a, 2);
    const auto m = a.dim(0), n = a.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = a.value().at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.value().at(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += out.at(i, j) = std::exp(a.value().at(i, j) - mx);
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= total;
    }
    auto y = std::make_shared<Tensor>(out);
    return make("softmax", std::move(out), {a.node()}, [m, n, y](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += self.grad.at(i, j) * y->at(i, j);
            for (std::size_t j = 0; j < n; ++j) g.at(i, j) += y->at(i, j) * (self.grad.at(i, j) - dot);
        }
    });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
    require_rank("layer_norm", a, 2);
    const auto m = a.dim(0), n = a.dim(1);
    if (gain.value().size() != n || bias.value().size() != n) {
        throw ShapeError("layer_norm: affine parameters " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match " + shape_string(a.shape()));
    }
    auto xhat = std::make_shared<Tensor>(Shape{m, n});
    auto rstd = std::make_shared<std::vector<double>>(m);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += a.value().at(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = a.value().at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        (*rstd)[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat->at(i, j) = (a.value().at(i, j) - mu) * (*rstd)[i];
            out.at(i, j) = gain.value()[j] * xhat->at(i, j) + bias.value()[j];
        }
    }
    return make("layer_norm", std::move(out), {a.node(), gain.node(), bias.node()},
                [m, n, xhat, rstd](Node& self) {
                    auto& x = self.inputs[0];
                    auto& gn = self.inputs[1];
                    auto& bs = self.inputs[2];
                    if (wants(gn)) {
                        auto& g = gn->grad_buffer();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.at(i, j) * xhat->at(i, j);
                    }
                    if (wants(bs)) {
                        auto& g = bs->grad_buffer();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
                    }
                    if (!wants(x)) return;
                    auto& g = x->grad_buffer();
                    std::vector<double> dxhat(n);
                    for (std::size_t i = 0; i < m; ++i) {
                        double mean_d = 0.0, mean_dx = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            dxhat[j] = self.grad.at(i, j) * gn->value[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xhat->at(i, j);
                        }
                        mean_d /= static_cast<double>(n);
                        mean_dx /= static_cast<double>(n);
                        for (std::size_t j = 0; j < n; ++j) {
                            g.at(i, j) += (*rstd)[i] * (dxhat[j] - mean_d - xhat->at(i, j) * mean_dx);
                        }
                    }
                });
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_derivative(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Var gelu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data) v = gelu_value(v);
    return make("gelu", std::move(out), {a.node()}, [](Node& self) {
        auto& in = self.inputs[0];
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * gelu_derivative(in->value[i]);
    });
}

Var conv2d(const Var& x, const Var& w, const Var* bias, int stride, int pad, int groups) {
    require_rank("conv2d", x, 3);
    require_rank("conv2d", w, 4);
    const auto cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const auto cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const auto g = static_cast<std::size_t>(groups);
    if (groups < 1 || stride < 1 || pad < 0 || cin % g != 0 || cout % g != 0 || cin / g != cin_g) {
        throw ShapeError("conv2d: input " + shape_string(x.shape()) + " and weight " + shape_string(w.shape()) +
                         " incompatible with groups=" + std::to_string(groups));
    }
    if (bias && bias->value().size() != cout) {
        throw ShapeError("conv2d: bias " + shape_string(bias->shape()) + " does not match " +
                         std::to_string(cout) + " output channels");
    }
    const auto s = static_cast<std::size_t>(stride);
    const auto p = static_cast<std::size_t>(pad);
    if (h + 2 * p < kh || wd + 2 * p < kw) throw ShapeError("conv2d: kernel larger than padded input");
    const std::size_t ho = (h + 2 * p - kh) / s + 1;
    const std::size_t wo = (wd + 2 * p - kw) / s + 1;
    const std::size_t hw_out = ho * wo;
    const std::size_t k = cin_g * kh * kw;
    const std::size_t cout_g = cout / g;

    auto cols = std::make_shared<std::vector<RowMat>>(g);
    Tensor out({cout, ho, wo});
    for (std::size_t gi = 0; gi < g; ++gi) {
        RowMat& c = (*cols)[gi];
        c.setZero(Index(k), Index(hw_out));
        for (std::size_t ci = 0; ci < cin_g; ++ci) {
            const double* src = x.value().data.data() + (gi * cin_g + ci) * h * wd;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    double* dst = c.data() + ((ci * kh + ky) * kw + kx) * hw_out;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            dst[oy * wo + ox] = src[static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
        MapMat(out.data.data() + gi * cout_g * hw_out, Index(cout_g), Index(hw_out)).noalias() =
            CMapMat(w.value().data.data() + gi * cout_g * k, Index(cout_g), Index(k)) * c;
    }
    if (bias) {
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t i = 0; i < hw_out; ++i) out[co * hw_out + i] += bias->value()[co];
    }
    std::vector<std::shared_ptr<Node>> inputs{x.node(), w.node()};
    if (bias) inputs.push_back(bias->node());
    return make("conv2d", std::move(out), std::move(inputs),
                [=](Node& self) {
                    auto& xn = self.inputs[0];
                    auto& wn = self.inputs[1];
                    for (std::size_t gi = 0; gi < g; ++gi) {
                        CMapMat dout(self.grad.data.data() + gi * cout_g * hw_out, Index(cout_g), Index(hw_out));
                        if (wants(wn)) {
                            MapMat(wn->grad_buffer().data.data() + gi * cout_g * k, Index(cout_g), Index(k))
                                .noalias() += dout * (*cols)[gi].transpose();
                        }
                        if (!wants(xn)) continue;
                        const RowMat dcols =
                            CMapMat(wn->value.data.data() + gi * cout_g * k, Index(cout_g), Index(k)).transpose() *
                            dout;
                        auto& gx = xn->grad_buffer();
                        for (std::size_t ci = 0; ci < cin_g; ++ci) {
                            double* dst = gx.data.data() + (gi * cin_g + ci) * h * wd;
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const double* src = dcols.data() + ((ci * kh + ky) * kw + kx) * hw_out;
                                    for (std::size_t oy = 0; oy < ho; ++oy) {
                                        const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                        for (std::size_t ox = 0; ox < wo; ++ox) {
                                            const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                            dst[static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)] +=
                                                src[oy * wo + ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if (self.inputs.size() == 3 && wants(self.inputs[2])) {
                        auto& gb = self.inputs[2]->grad_buffer();
                        for (std::size_t co = 0; co < cout; ++co)
                            for (std::size_t i = 0; i < hw_out; ++i) gb[co] += self.grad[co * hw_out + i];
                    }
                });
}

namespace {

struct Tap {
    std::size_t lo, hi;
    double w_lo, w_hi;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out, int factor) {
    std::vector<Tap> taps(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        const double frac = src - static_cast<double>(lo);
        taps[o] = {lo, hi, 1.0 - frac, frac};
    }
    return taps;
}

} // namespace

Var upsample_bilinear(const Var& x, int factor) {
    require_rank("upsample_bilinear", x, 3);
    if (factor < 1) throw ShapeError("upsample_bilinear: factor must be >= 1");
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto f = static_cast<std::size_t>(factor);
    const auto ty = bilinear_taps(h, h * f, factor);
    const auto tx = bilinear_taps(w, w * f, factor);
    Tensor out({c, h * f, w * f});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < h * f; ++oy) {
            for (std::size_t ox = 0; ox < w * f; ++ox) {
                const auto& a = ty[oy];
                const auto& b = tx[ox];
                out.at(ch, oy, ox) = a.w_lo * (b.w_lo * x.value().at(ch, a.lo, b.lo) + b.w_hi * x.value().at(ch, a.lo, b.hi)) +
                                     a.w_hi * (b.w_lo * x.value().at(ch, a.hi, b.lo) + b.w_hi * x.value().at(ch, a.hi, b.hi));
            }
        }
    }
    return make("upsample_bilinear", std::move(out), {x.node()}, [c, h, w, f, ty, tx](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t oy = 0; oy < h * f; ++oy) {
                for (std::size_t ox = 0; ox < w * f; ++ox) {
                    const double d = self.grad.at(ch, oy, ox);
                    const auto& a = ty[oy];
                    const auto& b = tx[ox];
                    g.at(ch, a.lo, b.lo) += d * a.w_lo * b.w_lo;
                    g.at(ch, a.lo, b.hi) += d * a.w_lo * b.w_hi;
                    g.at(ch, a.hi, b.lo) += d * a.w_hi * b.w_lo;
                    g.at(ch, a.hi, b.hi) += d * a.w_hi * b.w_hi;
                }
            }
        }
    });
}

Var sum(const Var& a) {
    double total = 0.0;
    for (double v : a.value().data) total += v;
    return make("sum", Tensor::scalar(total), {a.node()}, [](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (auto& v : g.data) v += self.grad[0];
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var cross_entropy(const Var& logits, const std::vector<std::uint8_t>& labels) {
    require_rank("cross_entropy", logits, 3);
    const auto classes = logits.dim(0), pixels = logits.dim(1) * logits.dim(2);
    if (labels.size() != pixels) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
    }
    auto probs = std::make_shared<Tensor>(Shape{classes, pixels});
    double total = 0.0;
    for (std::size_t px = 0; px < pixels; ++px) {
        if (labels[px] >= classes) throw ContractError("cross_entropy: label out of range");
        double mx = logits.value()[px];
        for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, logits.value()[k * pixels + px]);
        double z = 0.0;
        for (std::size_t k = 0; k < classes; ++k) z += (*probs)[k * pixels + px] = std::exp(logits.value()[k * pixels + px] - mx);
        for (std::size_t k = 0; k < classes; ++k) (*probs)[k * pixels + px] /= z;
        total += mx + std::log(z) - logits.value()[labels[px] * pixels + px];
    }
    return make("cross_entropy", Tensor::scalar(total / static_cast<double>(pixels)), {logits.node()},
                [classes, pixels, probs, labels](Node& self) {
                    auto& g = self.inputs[0]->grad_buffer();
                    const double s = self.grad[0] / static_cast<double>(pixels);
                    for (std::size_t k = 0; k < classes; ++k) {
                        for (std::size_t px = 0; px < pixels; ++px) {
                            const double onehot = labels[px] == k ? 1.0 : 0.0;
                            g[k * pixels + px] += s * ((*probs)[k * pixels + px] - onehot);
                        }
                    }
                });
}

Tensor fourier_frequencies(std::size_t dim, std::uint64_t seed, double scale) {
    if (dim == 0 || dim % 2 != 0) throw ShapeError("fourier_frequencies: dim must be even and positive");
    Rng rng(seed);
    Tensor g({2, dim / 2});
    for (auto& v : g.data) v = scale * rng.normal();
    return g;
}

Tensor fourier_features(const std::vector<std::pair<double, double>>& coords, const Tensor& frequencies) {
    if (frequencies.rank() != 2 || frequencies.dim(0) != 2) {
        throw ShapeError("fourier_features: frequencies must be [2, C/2], got " + shape_string(frequencies.shape));
    }
    const auto half = frequencies.dim(1);
    Tensor out({coords.size(), 2 * half});
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double u = 2.0 * coords[i].first - 1.0;
        const double v = 2.0 * coords[i].second - 1.0;
        for (std::size_t j = 0; j < half; ++j) {
            const double a = 2.0 * std::numbers::pi * (u * frequencies.at(0, j) + v * frequencies.at(1, j));
            out.at(i, j) = std::sin(a);
            out.at(i, half + j) = std::cos(a);
        }
    }
    return out;
}

Tensor fourier_pe(const std::vector<std::pair<double, double>>& coords, std::size_t dim, std::uint64_t seed) {
    return fourier_features(coords, fourier_frequencies(dim, seed));
}

Tensor grid_fourier_features(std::size_t h, std::size_t w, const Tensor& frequencies) {
    std::vector<std::pair<double, double>> coords;
    coords.reserve(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            coords.emplace_back((static_cast<double>(x) + 0.5) / static_cast<double>(w),
                                (static_cast<double>(y) + 0.5) / static_cast<double>(h));
    return fourier_features(coords, frequencies);
}

} // namespace leprompter
