#include "ropegraph/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ropegraph/errors.hpp"

namespace ropegraph::ad {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatch("negative dimension in " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
        throw ShapeMismatch("value count " + std::to_string(values_.size()) + " does not match shape " +
                            shape_string(shape_));
    }
}

Array Array::reshaped(Shape shape) const {
    if (shape_size(shape) != values_.size()) {
        throw ShapeMismatch("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Array(std::move(shape), values_);
}

void Array::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

const Array& Var::value() const { return tape->value(*this); }
const Array& Var::grad() const { return tape->grad(*this); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Array value) {
    nodes_.push_back({std::move(value), {}, false, {}});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Array value) {
    nodes_.push_back({std::move(value), {}, true, {}});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Array value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape == nullptr) continue;
        if (in.tape != this) throw NoGraph("operand recorded on a different tape");
        needs = needs || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    nodes_.push_back({std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Array& Tape::value(Var v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw NoGraph("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Tape::requires_grad(Var v) const {
    return v.tape == this && nodes_[static_cast<std::size_t>(v.id)].requires_grad;
}

Array& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && !n.value.empty()) n.grad = Array(n.value.shape(), 0.0);
    if (n.grad.shape() != n.value.shape()) n.grad = Array(n.value.shape(), 0.0);
    return n.grad;
}

const Array& Tape::grad(Var v) {
    value(v);
    return grad_buffer(v.id);
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw NoGraph("backward called before any forward computation");
    const Array& root = value(loss);
    if (root.size() != 1) throw ShapeMismatch("backward target must be a scalar, got " + shape_string(root.shape()));
    for (Node& n : nodes_) n.grad = Array();
    backward_root_ = loss.id;
    grad_buffer(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, n.grad);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and shape operators

namespace {

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

void accumulate(Tape& t, Var v, const Array& g, double scale = 1.0) {
    if (!t.requires_grad(v)) return;
    Array& buf = t.grad_buffer(v.id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += scale * g[i];
}

}  // namespace

Var add(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    require_same_shape(av, bv, "add");
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        accumulate(t, a, g);
        accumulate(t, b, g);
    });
}

Var sub(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    require_same_shape(av, bv, "sub");
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        accumulate(t, a, g);
        accumulate(t, b, g, -1.0);
    });
}

Var relu(Var a) {
    Array out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return a.tape->record(std::move(out), {a}, [a](Tape& t, const Array& g) {
        if (!t.requires_grad(a)) return;
        const Array& x = t.value(a);
        Array& buf = t.grad_buffer(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > 0.0) buf[i] += g[i];
        }
    });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return a.tape->record(Array({1}, {s}), {a}, [a](Tape& t, const Array& g) {
        if (!t.requires_grad(a)) return;
        Array& buf = t.grad_buffer(a.id);
        for (double& v : buf.values()) v += g[0];
    });
}

Var reshape(Var a, Shape shape) {
    Array out = a.value().reshaped(std::move(shape));
    return a.tape->record(std::move(out), {a}, [a](Tape& t, const Array& g) {
        if (!t.requires_grad(a)) return;
        Array& buf = t.grad_buffer(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
    });
}

Var permute3(Var a, std::array<int, 3> perm) {
    const Array& x = a.value();
    if (x.rank() != 3) throw ShapeMismatch("permute3 expects rank 3, got " + shape_string(x.shape()));
    std::array<bool, 3> seen{};
    for (int p : perm) {
        if (p < 0 || p > 2 || seen[static_cast<std::size_t>(p)]) throw ShapeMismatch("permute3: invalid permutation");
        seen[static_cast<std::size_t>(p)] = true;
    }
    const std::array<std::size_t, 3> in_stride{static_cast<std::size_t>(x.dim(1)) * x.dim(2),
                                                static_cast<std::size_t>(x.dim(2)), 1};
    const Shape out_shape{x.dim(perm[0]), x.dim(perm[1]), x.dim(perm[2])};
    // index map: out flat index -> in flat index
    std::vector<std::size_t> map(x.size());
    std::size_t k = 0;
    for (int i = 0; i < out_shape[0]; ++i)
        for (int j = 0; j < out_shape[1]; ++j)
            for (int l = 0; l < out_shape[2]; ++l) {
                map[k++] = i * in_stride[static_cast<std::size_t>(perm[0])] +
                           j * in_stride[static_cast<std::size_t>(perm[1])] +
                           l * in_stride[static_cast<std::size_t>(perm[2])];
            }
    Array out(out_shape);
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = x[map[i]];
    return a.tape->record(std::move(out), {a}, [a, map = std::move(map)](Tape& t, const Array& g) {
        if (!t.requires_grad(a)) return;
        Array& buf = t.grad_buffer(a.id);
        for (std::size_t i = 0; i < map.size(); ++i) buf[map[i]] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Dense algebra

namespace {

// c (m x n) += a (m x k) @ b (k x n), optionally with a and/or b transposed
// as stored. Loop order keeps the innermost access contiguous where possible.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(i) * k + p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x k) += g (m x n) @ b^T where b is (k x n)
void gemm_nt(const double* g, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += g[static_cast<std::size_t>(i) * n + j] * b[static_cast<std::size_t>(p) * n + j];
            c[static_cast<std::size_t>(i) * k + p] += s;
        }
    }
}

// c (k x n) += a^T @ g where a is (m x k), g is (m x n)
void gemm_tn(const double* a, const double* g, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(i) * k + p];
            double* crow = c + static_cast<std::size_t>(p) * n;
            const double* grow = g + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeMismatch("matmul: " + shape_string(av.shape()) + " @ " + shape_string(bv.shape()));
    }
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Array out({m, n});
    gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
    return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Array& g) {
        if (t.requires_grad(a)) gemm_nt(g.data(), t.value(b).data(), t.grad_buffer(a.id).data(), m, k, n);
        if (t.requires_grad(b)) gemm_tn(t.value(a).data(), g.data(), t.grad_buffer(b.id).data(), m, k, n);
    });
}

Var dense(Var x, Var w, Var b) {
    Var y = matmul(x, w);
    if (b.tape == nullptr) return y;
    const Array& yv = y.value();
    const Array& bv = b.value();
    if (bv.size() != static_cast<std::size_t>(yv.dim(1))) {
        throw ShapeMismatch("dense bias " + shape_string(bv.shape()) + " vs output " + shape_string(yv.shape()));
    }
    const int m = yv.dim(0), n = yv.dim(1);
    Array out = yv;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += bv[static_cast<std::size_t>(j)];
    return x.tape->record(std::move(out), {y, b}, [y, b, m, n](Tape& t, const Array& g) {
        accumulate(t, y, g);
        if (!t.requires_grad(b)) return;
        Array& gb = t.grad_buffer(b.id);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gb[static_cast<std::size_t>(j)] += g.at(i, j);
    });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
    int cin, h, w;     // input
    int cout, kh, kw;  // kernels
    int ph, pw;        // anchor offsets
    int oh, ow;        // output
    int dil;           // tap spacing
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Valid output column range for kernel column j: input column
// x + j * dil - pw must lie in [0, w).
inline void column_range(const ConvGeometry& g, int j, int& lo, int& hi) {
    lo = std::max(0, g.pw - j * g.dil);
    hi = std::min(g.ow, g.w - j * g.dil + g.pw);
}

// Unfolds output rows [y0, y1) into a (cin*kh*kw) x ((y1-y0)*ow) patch
// matrix, zero where the window leaves the input.
void im2col(const ConvGeometry& g, const double* in, int y0, int y1, double* col) {
    const std::size_t tile = static_cast<std::size_t>(y1 - y0) * g.ow;
    std::fill_n(col, tile * g.cin * g.kh * g.kw, 0.0);
    for (int c = 0; c < g.cin; ++c) {
        const double* in_plane = in + static_cast<std::size_t>(c) * g.h * g.w;
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                double* dst = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * tile;
                int lo, hi;
                column_range(g, j, lo, hi);
                for (int y = y0; y < y1; ++y) {
                    const int yy = y + i * g.dil - g.ph;
                    if (yy < 0 || yy >= g.h) continue;
                    const double* irow = in_plane + static_cast<std::size_t>(yy) * g.w + (j * g.dil - g.pw);
                    double* orow = dst + static_cast<std::size_t>(y - y0) * g.ow;
                    for (int x = lo; x < hi; ++x) orow[x] = irow[x];
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const double* col, int y0, int y1, double* in) {
    const std::size_t tile = static_cast<std::size_t>(y1 - y0) * g.ow;
    for (int c = 0; c < g.cin; ++c) {
        double* in_plane = in + static_cast<std::size_t>(c) * g.h * g.w;
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                const double* src = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * tile;
                int lo, hi;
                column_range(g, j, lo, hi);
                for (int y = y0; y < y1; ++y) {
                    const int yy = y + i * g.dil - g.ph;
                    if (yy < 0 || yy >= g.h) continue;
                    double* irow = in_plane + static_cast<std::size_t>(yy) * g.w + (j * g.dil - g.pw);
                    const double* orow = src + static_cast<std::size_t>(y - y0) * g.ow;
                    for (int x = lo; x < hi; ++x) irow[x] += orow[x];
                }
            }
        }
    }
}

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Output rows are processed in tiles so the patch matrix stays cache sized.
template <typename F>
void for_each_tile(const ConvGeometry& g, std::vector<double>& col, F f) {
    const int rows = g.cin * g.kh * g.kw;
    const int tile_rows = std::max(1, std::min(g.oh, 8192 / std::max(1, rows * g.ow)));
    col.resize(static_cast<std::size_t>(rows) * tile_rows * g.ow);
    for (int y0 = 0; y0 < g.oh; y0 += tile_rows) {
        const int y1 = std::min(g.oh, y0 + tile_rows);
        f(y0, y1, rows, (y1 - y0) * g.ow);
    }
}

void conv_forward(const ConvGeometry& g, const double* in, const double* k, double* out) {
    std::vector<double> col;
    const int plane = g.oh * g.ow;
    for_each_tile(g, col, [&](int y0, int y1, int rows, int cols) {
        im2col(g, in, y0, y1, col.data());
        StridedMap(out + static_cast<std::size_t>(y0) * g.ow, g.cout, cols, Eigen::OuterStride<>(plane)).noalias() +=
            ConstMatrixMap(k, g.cout, rows) * ConstMatrixMap(col.data(), rows, cols);
    });
}

void conv_backward_input(const ConvGeometry& g, const double* gout, const double* k, double* gin) {
    std::vector<double> col;
    const int plane = g.oh * g.ow;
    for_each_tile(g, col, [&](int y0, int y1, int rows, int cols) {
        MatrixMap(col.data(), rows, cols).noalias() =
            ConstMatrixMap(k, g.cout, rows).transpose() *
            ConstStridedMap(gout + static_cast<std::size_t>(y0) * g.ow, g.cout, cols, Eigen::OuterStride<>(plane));
        col2im(g, col.data(), y0, y1, gin);
    });
}

void conv_backward_kernel(const ConvGeometry& g, const double* gout, const double* in, double* gk) {
    std::vector<double> col;
    const int plane = g.oh * g.ow;
    for_each_tile(g, col, [&](int y0, int y1, int rows, int cols) {
        im2col(g, in, y0, y1, col.data());
        MatrixMap(gk, g.cout, rows).noalias() +=
            ConstStridedMap(gout + static_cast<std::size_t>(y0) * g.ow, g.cout, cols, Eigen::OuterStride<>(plane)) *
            ConstMatrixMap(col.data(), rows, cols).transpose();
    });
}

Var convolve(Var input, Var kernels, Var bias, int ph, int pw, int oh, int ow, int dil = 1) {
    const Array& x = input.value();
    const Array& k = kernels.value();
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), k.dim(3), ph, pw, oh, ow, dil};
    Array out({g.cout, g.oh, g.ow});
    if (bias.tape != nullptr) {
        const Array& b = bias.value();
        if (b.size() != static_cast<std::size_t>(g.cout)) {
            throw ShapeMismatch("conv bias " + shape_string(b.shape()) + " for " + std::to_string(g.cout) + " outputs");
        }
        const std::size_t plane = static_cast<std::size_t>(g.oh) * g.ow;
        for (int o = 0; o < g.cout; ++o)
            std::fill_n(out.data() + o * plane, plane, b[static_cast<std::size_t>(o)]);
    }
    conv_forward(g, x.data(), k.data(), out.data());
    return input.tape->record(std::move(out), {input, kernels, bias},
                              [input, kernels, bias, g](Tape& t, const Array& gout) {
                                  if (t.requires_grad(input)) {
                                      conv_backward_input(g, gout.data(), t.value(kernels).data(),
                                                          t.grad_buffer(input.id).data());
                                  }
                                  if (t.requires_grad(kernels)) {
                                      conv_backward_kernel(g, gout.data(), t.value(input).data(),
                                                           t.grad_buffer(kernels.id).data());
                                  }
                                  if (bias.tape != nullptr && t.requires_grad(bias)) {
                                      Array& gb = t.grad_buffer(bias.id);
                                      const std::size_t plane = static_cast<std::size_t>(g.oh) * g.ow;
                                      for (int o = 0; o < g.cout; ++o) {
                                          double s = 0.0;
                                          const double* p = gout.data() + o * plane;
                                          for (std::size_t i = 0; i < plane; ++i) s += p[i];
                                          gb[static_cast<std::size_t>(o)] += s;
                                      }
                                  }
                              });
}

}  // namespace

Var conv2d(Var input, Var kernels, Var bias, Padding padding, int dilation) {
    const Array& x = input.value();
    const Array& k = kernels.value();
    if (x.rank() != 3 || k.rank() != 4) {
        throw ShapeMismatch("conv2d expects C x H x W input and O x C x k x k kernels, got " +
                            shape_string(x.shape()) + " and " + shape_string(k.shape()));
    }
    if (k.dim(1) != x.dim(0)) {
        throw ShapeMismatch("conv2d channel mismatch: input has " + std::to_string(x.dim(0)) +
                            ", kernels expect " + std::to_string(k.dim(1)));
    }
    if (k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0) throw ShapeMismatch("conv2d kernels must be square with odd size");
    if (dilation < 1) throw ShapeMismatch("conv2d dilation must be >= 1");
    const int h = x.dim(1), w = x.dim(2);
    const int span = (k.dim(2) - 1) * dilation + 1;
    if (padding == Padding::Same) return convolve(input, kernels, bias, span / 2, span / 2, h, w, dilation);
    if (h < span || w < span) throw ShapeMismatch("conv2d: input smaller than kernel");
    return convolve(input, kernels, bias, 0, 0, h - span + 1, w - span + 1, dilation);
}

Var correlate(Var input, Var kernel) {
    const Array& x = input.value();
    const Array& k = kernel.value();
    if (x.rank() != 3 || k.rank() != 3 || k.dim(0) != x.dim(0)) {
        throw ShapeMismatch("correlate: map " + shape_string(x.shape()) + " with kernel " + shape_string(k.shape()));
    }
    Var k4 = reshape(kernel, {1, k.dim(0), k.dim(1), k.dim(2)});
    return convolve(input, k4, Var{}, k.dim(1) / 2, k.dim(2) / 2, x.dim(1), x.dim(2));
}

Var crop(Var input, int row, int col, int size) {
    const Array& x = input.value();
    if (x.rank() != 3) throw ShapeMismatch("crop expects C x H x W, got " + shape_string(x.shape()));
    if (size < 1) throw ShapeMismatch("crop size must be positive");
    const int channels = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int r0 = row - size / 2;
    const int c0 = col - size / 2;
    Array out({channels, size, size});
    for (int d = 0; d < channels; ++d)
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                const int r = r0 + i, c = c0 + j;
                if (r >= 0 && r < h && c >= 0 && c < w) out.at(d, i, j) = x.at(d, r, c);
            }
    return input.tape->record(std::move(out), {input}, [input, r0, c0, size](Tape& t, const Array& g) {
        if (!t.requires_grad(input)) return;
        Array& buf = t.grad_buffer(input.id);
        const int channels = buf.dim(0), h = buf.dim(1), w = buf.dim(2);
        for (int d = 0; d < channels; ++d)
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < size; ++j) {
                    const int r = r0 + i, c = c0 + j;
                    if (r >= 0 && r < h && c >= 0 && c < w) buf.at(d, r, c) += g.at(d, i, j);
                }
    });
}

// ---------------------------------------------------------------------------
// Graph convolution

Array normalized_adjacency(const Array& adjacency) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1)) {
        throw ShapeMismatch("adjacency must be square, got " + shape_string(adjacency.shape()));
    }
    const int k = adjacency.dim(0);
    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        double deg = 0.0;
        for (int j = 0; j < k; ++j) deg += adjacency.at(i, j);
        if (!(deg > 0.0)) throw DegenerateGraph("vertex " + std::to_string(i) + " has zero degree");
        inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    Array out({k, k});
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            out.at(i, j) = inv_sqrt_deg[static_cast<std::size_t>(i)] * adjacency.at(i, j) *
                           inv_sqrt_deg[static_cast<std::size_t>(j)];
    return out;
}

Var gcn_layer(Var node_features, const Array& adjacency, Var weight, Activation activation) {
    const Array& h = node_features.value();
    if (h.rank() != 2 || adjacency.rank() != 2 || adjacency.dim(0) != h.dim(0)) {
        throw ShapeMismatch("gcn_layer: features " + shape_string(h.shape()) + ", adjacency " +
                            shape_string(adjacency.shape()));
    }
    Var a_hat = node_features.tape->constant(normalized_adjacency(adjacency));
    Var out = matmul(matmul(a_hat, node_features), weight);
    return activation == Activation::ReLU ? relu(out) : out;
}

// ---------------------------------------------------------------------------
// Objective

Var spatial_softmax_ce(Var logits, std::size_t target) {
    const Array& z = logits.value();
    if (target >= z.size()) throw ShapeMismatch("softmax target out of range");
    double m = z[0];
    for (double v : z.values()) m = std::max(m, v);
    double s = 0.0;
    for (double v : z.values()) s += std::exp(v - m);
    const double lse = m + std::log(s);
    const double loss = lse - z[target];
    return logits.tape->record(Array({1}, {loss}), {logits}, [logits, target, lse](Tape& t, const Array& g) {
        if (!t.requires_grad(logits)) return;
        const Array& zz = t.value(logits);
        Array& buf = t.grad_buffer(logits.id);
        for (std::size_t i = 0; i < zz.size(); ++i) buf[i] += g[0] * std::exp(zz[i] - lse);
        buf[target] -= g[0];
    });
}

}  // namespace ropegraph::ad
