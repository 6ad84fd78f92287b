#pragma once

// Minimal dense arrays with a reverse-mode tape. Just enough operators for
// fully convolutional heads, a graph convolution encoder and a spatial
// cross-entropy objective. All reductions run in a fixed order, so a given
// binary produces bitwise-identical results for identical inputs.

#include <array>
#include <deque>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ropegraph::ad {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double& at(int i, int j) { return values_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return values_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int c, int i, int j) { return values_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j]; }
    double at(int c, int i, int j) const {
        return values_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }

    Array reshaped(Shape shape) const;
    void fill(double v);
    friend bool operator==(const Array&, const Array&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

class Tape;

// Handle to a node recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Array& value() const;
    const Array& grad() const;
    const Shape& shape() const { return value().shape(); }
};

// The computation record. Single-owner; build a fresh tape per forward pass.
class Tape {
public:
    // Receives the node's upstream gradient and accumulates into its inputs.
    using BackwardFn = std::function<void(Tape&, const Array& upstream)>;

    Var constant(Array value);
    Var variable(Array value);

    // Reverse sweep from a scalar node. Throws NoGraph if nothing was recorded
    // or the handle does not belong to this tape.
    void backward(Var loss);

    const Array& value(Var v) const;
    // Gradient of the last backward() target with respect to v; an all-zero
    // array for nodes that were not reached.
    const Array& grad(Var v);

    bool requires_grad(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Operator plumbing.
    Var record(Array value, std::initializer_list<Var> inputs, BackwardFn backward);
    Array& grad_buffer(int id);

private:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::deque<Node> nodes_;  // stable references across record()
    int backward_root_ = -1;
};

enum class Padding { Same, Valid };
enum class Activation { ReLU, Identity };

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var relu(Var a);
Var sum(Var a);
Var reshape(Var a, Shape shape);

// 3-D permutation: out[i0][i1][i2] = a[...] with out dim d = a dim perm[d].
Var permute3(Var a, std::array<int, 3> perm);

// (m x k) @ (k x n)
Var matmul(Var a, Var b);
// x (m x k) @ w (k x n) + b (n); b may be a null Var.
Var dense(Var x, Var w, Var b = {});

// Cross-correlation (no kernel flip). input C_in x H x W, kernels
// C_out x C_in x k x k with k odd, bias C_out or null. Taps are `dilation`
// pixels apart.
Var conv2d(Var input, Var kernels, Var bias, Padding padding, int dilation = 1);

// 'Same'-padded cross-correlation of a C x H x W map with a single C x kh x kw
// kernel (any kh, kw). The kernel's anchor is (kh/2, kw/2), so output (r, c)
// is sum K[d][i][j] * x[d][r + i - kh/2][c + j - kw/2]. Returns 1 x H x W.
Var correlate(Var input, Var kernel);

// C x size x size window whose anchor (size/2, size/2) sits on (row, col);
// zero outside the map.
Var crop(Var input, int row, int col, int size);

// Symmetric normalization D^-1/2 A D^-1/2 of a square 0/1 adjacency.
// Throws DegenerateGraph on a zero-degree vertex.
Array normalized_adjacency(const Array& adjacency);

// sigma(D^-1/2 A D^-1/2 H W).
Var gcn_layer(Var node_features, const Array& adjacency, Var weight, Activation activation);

// -log softmax(flatten(logits))[target].
Var spatial_softmax_ce(Var logits, std::size_t target);

}  // namespace ropegraph::ad
