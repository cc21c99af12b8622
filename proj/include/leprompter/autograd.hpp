#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "leprompter/tensor.hpp"

namespace leprompter {

/// One recorded value in the op graph. `backward` reads `grad` and
/// accumulates into the gradients of `inputs`.
struct Node {
    Tensor value;
    Tensor grad; // empty until first accumulation
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
    bool requires_grad = false;
    const char* op = "leaf";

    Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var leaf(Tensor value); // requires grad

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    std::size_t dim(std::size_t i) const { return node_->value.shape.at(i); }
    bool requires_grad() const { return node_->requires_grad; }
    /// Accumulated gradient; a zero tensor if none has arrived.
    Tensor grad() const;
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

  private:
    std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar (single-element) output.
void backward(const Var& output);

// ---- ops -----------------------------------------------------------------
// All ops check their output for NaN/Inf and throw NumericError naming the op.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a[m,k] · b[k,n]
Var matmul(const Var& a, const Var& b);
/// a[m,n] + bias[n] per row.
Var add_row_bias(const Var& a, const Var& bias);
/// Adds a[C] to every spatial position of x[C,H,W].
Var add_channel_bias(const Var& x, const Var& bias);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Tiles a[1,n] into [m,n].
Var repeat_rows(const Var& a, std::size_t m);
/// Softmax over the last axis of a rank-2 tensor (max-subtracted).
Var softmax_rows(const Var& a);
/// Per-row normalization of a[m,n] followed by gain[n]·x + bias[n].
Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
/// tanh approximation.
Var gelu(const Var& a);
/// x[Cin,H,W] ⊛ w[Cout,Cin/groups,kh,kw] (+ b[Cout]) with zero padding.
Var conv2d(const Var& x, const Var& w, const Var* bias, int stride, int pad, int groups = 1);
/// Bilinear, align_corners = false, integer factor.
Var upsample_bilinear(const Var& x, int factor);
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean per-pixel softmax cross entropy of logits[K,H,W] against labels in [0,K).
Var cross_entropy(const Var& logits, const std::vector<std::uint8_t>& labels);

// ---- non-differentiable helpers -------------------------------------------

double gelu_value(double x);
double gelu_derivative(double x);

/// Random Fourier features of 2-D coordinates in [0,1]²: with frequencies
/// G[2, C/2], row i is [sin(2π·u_i·G), cos(2π·u_i·G)] where u_i = 2·coord−1.
Tensor fourier_features(const std::vector<std::pair<double, double>>& coords, const Tensor& frequencies);
/// Gaussian frequency matrix [2, dim/2] drawn from `seed`, entries ~ N(0, scale²).
Tensor fourier_frequencies(std::size_t dim, std::uint64_t seed, double scale = 1.0);
Tensor fourier_pe(const std::vector<std::pair<double, double>>& coords, std::size_t dim, std::uint64_t seed);
/// Encodings of the pixel-center grid of an h×w map, row-major, shape [h·w, C].
Tensor grid_fourier_features(std::size_t h, std::size_t w, const Tensor& frequencies);

} // namespace leprompter
