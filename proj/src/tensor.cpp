#include "ghostgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ghostgrad/ghost_head.hpp"

namespace ghostgrad {

std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict__ ai = a + i * k;
        double* __restrict__ ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* __restrict__ bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C[m x n] += A^T * B with A stored [k x m]
void gemm_tn(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* __restrict__ ap = a + p * m;
        const double* __restrict__ bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = ap[i];
            double* __restrict__ ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

// C[m x n] += A * B^T with B stored [n x k]
void gemm_nt(const double* __restrict__ a, const double* __restrict__ b, double* __restrict__ c,
             std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict__ ai = a + i * k;
        double* __restrict__ ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* __restrict__ bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

}  // namespace detail

namespace {

// Patch matrix for one sample: cols[(C*KH*KW) x (OH*OW)].
void im2col(const double* x, std::size_t chans, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, double* cols) {
    const std::size_t oh = h - kh + 1;
    const std::size_t ow = w - kw + 1;
    std::size_t row = 0;
    for (std::size_t ch = 0; ch < chans; ++ch) {
        const double* xc = x + ch * h * w;
        for (std::size_t di = 0; di < kh; ++di) {
            for (std::size_t dj = 0; dj < kw; ++dj) {
                double* dst = cols + row * (oh * ow);
                for (std::size_t i = 0; i < oh; ++i) {
                    const double* src = xc + (i + di) * w + dj;
                    for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] = src[j];
                }
                ++row;
            }
        }
    }
}

// Scatter-add of a patch-matrix gradient back to the input image.
void col2im_acc(const double* cols, std::size_t chans, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, double* gx) {
    const std::size_t oh = h - kh + 1;
    const std::size_t ow = w - kw + 1;
    std::size_t row = 0;
    for (std::size_t ch = 0; ch < chans; ++ch) {
        double* gc = gx + ch * h * w;
        for (std::size_t di = 0; di < kh; ++di) {
            for (std::size_t dj = 0; dj < kw; ++dj) {
                const double* src = cols + row * (oh * ow);
                for (std::size_t i = 0; i < oh; ++i) {
                    double* dst = gc + (i + di) * w + dj;
                    for (std::size_t j = 0; j < ow; ++j) dst[j] += src[i * ow + j];
                }
                ++row;
            }
        }
    }
}

double act_forward(double x, Activation a) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

// Derivative expressed from input x and output y, whichever is cheaper.
double act_backward(double x, double y, Activation a) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Tanh: return 1.0 - y * y;
    }
    return 1.0;
}

}  // namespace

TensorRef Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return TensorRef{static_cast<int>(nodes_.size() - 1)};
}

void Tape::check_finite(const Node& n, const char* op_name) const {
    for (const double v : n.value)
        if (!std::isfinite(v))
            throw NumericError(std::string(op_name) + " produced a non-finite value");
}

TensorRef Tape::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size())
        throw DimensionError("leaf: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

TensorRef Tape::zeros(Shape shape, bool requires_grad) {
    std::vector<double> data(numel(shape), 0.0);
    return leaf(std::move(shape), std::move(data), requires_grad);
}

TensorRef Tape::add(TensorRef a, TensorRef b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape)
        throw DimensionError("add: shape mismatch " + shape_str(na.shape) + " vs " +
                             shape_str(nb.shape));
    Node n;
    n.shape = na.shape;
    n.op = OpKind::Add;
    n.inputs = {a.id, b.id};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.resize(na.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] + nb.value[i];
    check_finite(n, "add");
    return push(std::move(n));
}

TensorRef Tape::sub(TensorRef a, TensorRef b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape)
        throw DimensionError("sub: shape mismatch " + shape_str(na.shape) + " vs " +
                             shape_str(nb.shape));
    Node n;
    n.shape = na.shape;
    n.op = OpKind::Sub;
    n.inputs = {a.id, b.id};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.resize(na.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] - nb.value[i];
    check_finite(n, "sub");
    return push(std::move(n));
}

TensorRef Tape::mul(TensorRef a, TensorRef b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape != nb.shape)
        throw DimensionError("mul: shape mismatch " + shape_str(na.shape) + " vs " +
                             shape_str(nb.shape));
    Node n;
    n.shape = na.shape;
    n.op = OpKind::Mul;
    n.inputs = {a.id, b.id};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.resize(na.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] * nb.value[i];
    check_finite(n, "mul");
    return push(std::move(n));
}

TensorRef Tape::scale(TensorRef a, double c) {
    const Node& na = node(a);
    Node n;
    n.shape = na.shape;
    n.op = OpKind::Scale;
    n.inputs = {a.id, -1};
    n.scalar = c;
    n.requires_grad = na.requires_grad;
    n.value.resize(na.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = c * na.value[i];
    check_finite(n, "scale");
    return push(std::move(n));
}

TensorRef Tape::matmul(TensorRef a, TensorRef b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(na.shape) + " and " +
                             shape_str(nb.shape));
    const std::size_t m = na.shape[0], k = na.shape[1], cols = nb.shape[1];
    Node n;
    n.shape = {m, cols};
    n.op = OpKind::Matmul;
    n.inputs = {a.id, b.id};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value.assign(m * cols, 0.0);
    detail::gemm_nn(na.value.data(), nb.value.data(), n.value.data(), m, k, cols);
    check_finite(n, "matmul");
    return push(std::move(n));
}

TensorRef Tape::bias_add(TensorRef x, TensorRef b) {
    const Node& nx = node(x);
    const Node& nb = node(b);
    if (nx.shape.size() != 2 || nb.shape.size() != 1 || nb.shape[0] != nx.shape[1])
        throw DimensionError("bias_add: expected [m x n] + [n], got " + shape_str(nx.shape) +
                             " and " + shape_str(nb.shape));
    Node n;
    n.shape = nx.shape;
    n.op = OpKind::BiasAdd;
    n.inputs = {x.id, b.id};
    n.requires_grad = nx.requires_grad || nb.requires_grad;
    n.value.resize(nx.value.size());
    const std::size_t cols = nx.shape[1];
    for (std::size_t i = 0; i < nx.shape[0]; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            n.value[i * cols + j] = nx.value[i * cols + j] + nb.value[j];
    check_finite(n, "bias_add");
    return push(std::move(n));
}

TensorRef Tape::channel_bias_add(TensorRef x, TensorRef b) {
    const Node& nx = node(x);
    const Node& nb = node(b);
    if (nx.shape.size() != 4 || nb.shape.size() != 1 || nb.shape[0] != nx.shape[1])
        throw DimensionError("channel_bias_add: expected [N,C,H,W] + [C], got " +
                             shape_str(nx.shape) + " and " + shape_str(nb.shape));
    Node n;
    n.shape = nx.shape;
    n.op = OpKind::ChannelBiasAdd;
    n.inputs = {x.id, b.id};
    n.requires_grad = nx.requires_grad || nb.requires_grad;
    n.value.resize(nx.value.size());
    const std::size_t plane = nx.shape[2] * nx.shape[3];
    std::size_t idx = 0;
    for (std::size_t img = 0; img < nx.shape[0]; ++img)
        for (std::size_t ch = 0; ch < nx.shape[1]; ++ch) {
            const double bc = nb.value[ch];
            for (std::size_t p = 0; p < plane; ++p, ++idx) n.value[idx] = nx.value[idx] + bc;
        }
    check_finite(n, "channel_bias_add");
    return push(std::move(n));
}

TensorRef Tape::conv2d(TensorRef x, TensorRef k) {
    const Node& nx = node(x);
    const Node& nk = node(k);
    if (nx.shape.size() != 4 || nk.shape.size() != 4)
        throw DimensionError("conv2d: expected 4-d input and kernel, got " + shape_str(nx.shape) +
                             " and " + shape_str(nk.shape));
    if (nx.shape[1] != nk.shape[1])
        throw DimensionError("conv2d: channel mismatch " + shape_str(nx.shape) + " vs " +
                             shape_str(nk.shape));
    const std::size_t batch = nx.shape[0], chans = nx.shape[1], h = nx.shape[2], w = nx.shape[3];
    const std::size_t filters = nk.shape[0], kh = nk.shape[2], kw = nk.shape[3];
    if (h < kh || w < kw)
        throw DimensionError("conv2d: spatial dims " + shape_str(nx.shape) +
                             " smaller than kernel " + shape_str(nk.shape));
    const std::size_t oh = h - kh + 1, ow = w - kw + 1;
    const std::size_t patch = chans * kh * kw, pos = oh * ow;

    Node n;
    n.shape = {batch, filters, oh, ow};
    n.op = OpKind::Conv2d;
    n.inputs = {x.id, k.id};
    n.requires_grad = nx.requires_grad || nk.requires_grad;
    n.value.assign(batch * filters * pos, 0.0);
    // Patches are kept on the node for the backward pass; inference-only
    // graphs run through a small scratch buffer instead.
    std::vector<double> scratch;
    if (n.requires_grad) n.aux_d.resize(batch * patch * pos);
    else scratch.resize(patch * pos);
    for (std::size_t img = 0; img < batch; ++img) {
        double* cols = n.requires_grad ? n.aux_d.data() + img * patch * pos : scratch.data();
        im2col(nx.value.data() + img * chans * h * w, chans, h, w, kh, kw, cols);
        detail::gemm_nn(nk.value.data(), cols, n.value.data() + img * filters * pos, filters,
                        patch, pos);
    }
    check_finite(n, "conv2d");
    return push(std::move(n));
}

TensorRef Tape::maxpool2(TensorRef x) {
    const Node& nx = node(x);
    if (nx.shape.size() != 4)
        throw DimensionError("maxpool2: expected 4-d input, got " + shape_str(nx.shape));
    const std::size_t h = nx.shape[2], w = nx.shape[3];
    if (h % 2 != 0 || w % 2 != 0)
        throw DimensionError("maxpool2: spatial dims must be even, got " + shape_str(nx.shape));
    const std::size_t batch = nx.shape[0], chans = nx.shape[1], oh = h / 2, ow = w / 2;
    Node n;
    n.shape = {batch, chans, oh, ow};
    n.op = OpKind::MaxPool2;
    n.inputs = {x.id, -1};
    n.requires_grad = nx.requires_grad;
    n.value.resize(batch * chans * oh * ow);
    n.aux_i.resize(n.value.size());
    std::size_t out = 0;
    for (std::size_t img = 0; img < batch; ++img)
        for (std::size_t ch = 0; ch < chans; ++ch) {
            const double* plane = nx.value.data() + (img * chans + ch) * h * w;
            const std::size_t base = (img * chans + ch) * h * w;
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j, ++out) {
                    // Strict > keeps the first (row-major) maximum on ties.
                    std::size_t best = (2 * i) * w + 2 * j;
                    double bv = plane[best];
                    for (const std::size_t cand :
                         {(2 * i) * w + 2 * j + 1, (2 * i + 1) * w + 2 * j,
                          (2 * i + 1) * w + 2 * j + 1}) {
                        if (plane[cand] > bv) {
                            bv = plane[cand];
                            best = cand;
                        }
                    }
                    n.value[out] = bv;
                    n.aux_i[out] = static_cast<std::int64_t>(base + best);
                }
        }
    check_finite(n, "maxpool2");
    return push(std::move(n));
}

TensorRef Tape::zero_pad2d(TensorRef x, std::size_t pad_h, std::size_t pad_w) {
    const Node& nx = node(x);
    if (nx.shape.size() != 4)
        throw DimensionError("zero_pad2d: expected 4-d input, got " + shape_str(nx.shape));
    const std::size_t batch = nx.shape[0], chans = nx.shape[1], h = nx.shape[2], w = nx.shape[3];
    const std::size_t nh = h + pad_h, nw = w + pad_w;
    Node n;
    n.shape = {batch, chans, nh, nw};
    n.op = OpKind::ZeroPad2d;
    n.inputs = {x.id, -1};
    n.aux_i = {static_cast<std::int64_t>(pad_h), static_cast<std::int64_t>(pad_w)};
    n.requires_grad = nx.requires_grad;
    n.value.assign(batch * chans * nh * nw, 0.0);
    for (std::size_t img = 0; img < batch; ++img)
        for (std::size_t ch = 0; ch < chans; ++ch) {
            const double* src = nx.value.data() + (img * chans + ch) * h * w;
            double* dst = n.value.data() + (img * chans + ch) * nh * nw;
            for (std::size_t i = 0; i < h; ++i)
                std::copy(src + i * w, src + (i + 1) * w, dst + i * nw);
        }
    return push(std::move(n));
}

TensorRef Tape::pointwise(TensorRef x, Activation kind) {
    const Node& nx = node(x);
    Node n;
    n.shape = nx.shape;
    n.op = OpKind::Pointwise;
    n.inputs = {x.id, -1};
    n.act = kind;
    n.requires_grad = nx.requires_grad;
    n.value.resize(nx.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = act_forward(nx.value[i], kind);
    check_finite(n, "pointwise");
    return push(std::move(n));
}

TensorRef Tape::reshape(TensorRef x, Shape shape) {
    const Node& nx = node(x);
    if (numel(shape) != nx.value.size())
        throw DimensionError("reshape: cannot view " + shape_str(nx.shape) + " as " +
                             shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.op = OpKind::Reshape;
    n.inputs = {x.id, -1};
    n.requires_grad = nx.requires_grad;
    n.value = nx.value;
    return push(std::move(n));
}

TensorRef Tape::sum(TensorRef x) {
    const Node& nx = node(x);
    Node n;
    n.shape = {1};
    n.op = OpKind::Sum;
    n.inputs = {x.id, -1};
    n.requires_grad = nx.requires_grad;
    double acc = 0.0;
    for (const double v : nx.value) acc += v;
    n.value = {acc};
    check_finite(n, "sum");
    return push(std::move(n));
}

TensorRef Tape::ghost_cross_entropy(TensorRef logits, std::span<const int> labels, int c, int e) {
    const Node& nl = node(logits);
    if (nl.shape.size() != 2 || nl.shape[1] != static_cast<std::size_t>(c + e))
        throw DimensionError("ghost_cross_entropy: logits " + shape_str(nl.shape) +
                             " do not match c+e = " + std::to_string(c + e));
    const std::size_t batch = nl.shape[0];
    const LossBreakdown mean = ghost_softmax_ce(nl.value, batch, labels, c, e);
    Node n;
    n.shape = {1};
    n.op = OpKind::GhostCrossEntropy;
    n.inputs = {logits.id, -1};
    n.requires_grad = nl.requires_grad;
    n.value = {mean.l_ext};
    // Backward needs (yhat - ytilde)/batch; precompute it here where the
    // stabilized path already exists.
    n.aux_d = ghost_softmax_ce_grad(nl.value, batch, labels, c, e);
    return push(std::move(n));
}

void Tape::backward(TensorRef loss) {
    Node& top = at(loss);
    if (numel(top.shape) != 1)
        throw ContractError("backward: loss must be scalar, got " + shape_str(top.shape));
    for (Node& n : nodes_)
        if (n.requires_grad && n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    if (!top.requires_grad) return;
    top.grad[0] = 1.0;

    for (std::size_t rev = nodes_.size(); rev-- > 0;) {
        Node& n = nodes_[rev];
        if (!n.requires_grad || n.op == OpKind::Leaf) continue;
        Node& a = nodes_[static_cast<std::size_t>(n.inputs[0])];
        switch (n.op) {
            case OpKind::Add: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
                if (b.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) b.grad[i] += n.grad[i];
                break;
            }
            case OpKind::Sub: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
                if (b.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) b.grad[i] -= n.grad[i];
                break;
            }
            case OpKind::Mul: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        a.grad[i] += n.grad[i] * b.value[i];
                if (b.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        b.grad[i] += n.grad[i] * a.value[i];
                break;
            }
            case OpKind::Scale: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        a.grad[i] += n.scalar * n.grad[i];
                break;
            }
            case OpKind::Matmul: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
                if (a.requires_grad)
                    detail::gemm_nt(n.grad.data(), b.value.data(), a.grad.data(), m, cols, k);
                if (b.requires_grad)
                    detail::gemm_tn(a.value.data(), n.grad.data(), b.grad.data(), k, m, cols);
                break;
            }
            case OpKind::BiasAdd: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                const std::size_t cols = n.shape[1];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
                if (b.requires_grad)
                    for (std::size_t i = 0; i < n.shape[0]; ++i)
                        for (std::size_t j = 0; j < cols; ++j) b.grad[j] += n.grad[i * cols + j];
                break;
            }
            case OpKind::ChannelBiasAdd: {
                Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
                const std::size_t plane = n.shape[2] * n.shape[3];
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
                if (b.requires_grad) {
                    std::size_t idx = 0;
                    for (std::size_t img = 0; img < n.shape[0]; ++img)
                        for (std::size_t ch = 0; ch < n.shape[1]; ++ch) {
                            double acc = 0.0;
                            for (std::size_t p = 0; p < plane; ++p, ++idx) acc += n.grad[idx];
                            b.grad[ch] += acc;
                        }
                }
                break;
            }
            case OpKind::Conv2d: {
                Node& kn = nodes_[static_cast<std::size_t>(n.inputs[1])];
                const std::size_t batch = a.shape[0], chans = a.shape[1], h = a.shape[2],
                                  w = a.shape[3];
                const std::size_t filters = kn.shape[0], kh = kn.shape[2], kw = kn.shape[3];
                const std::size_t oh = h - kh + 1, ow = w - kw + 1;
                const std::size_t patch = chans * kh * kw, pos = oh * ow;
                std::vector<double> gcols;
                if (a.requires_grad) gcols.resize(patch * pos);
                for (std::size_t img = 0; img < batch; ++img) {
                    const double* cols = n.aux_d.data() + img * patch * pos;
                    const double* gout = n.grad.data() + img * filters * pos;
                    if (kn.requires_grad)
                        detail::gemm_nt(gout, cols, kn.grad.data(), filters, pos, patch);
                    if (a.requires_grad) {
                        std::fill(gcols.begin(), gcols.end(), 0.0);
                        detail::gemm_tn(kn.value.data(), gout, gcols.data(), patch, filters, pos);
                        col2im_acc(gcols.data(), chans, h, w, kh, kw,
                                   a.grad.data() + img * chans * h * w);
                    }
                }
                break;
            }
            case OpKind::MaxPool2: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        a.grad[static_cast<std::size_t>(n.aux_i[i])] += n.grad[i];
                break;
            }
            case OpKind::ZeroPad2d: {
                if (a.requires_grad) {
                    const std::size_t h = a.shape[2], w = a.shape[3];
                    const std::size_t nh = n.shape[2], nw = n.shape[3];
                    for (std::size_t img = 0; img < a.shape[0]; ++img)
                        for (std::size_t ch = 0; ch < a.shape[1]; ++ch) {
                            const double* src = n.grad.data() + (img * a.shape[1] + ch) * nh * nw;
                            double* dst = a.grad.data() + (img * a.shape[1] + ch) * h * w;
                            for (std::size_t i = 0; i < h; ++i)
                                for (std::size_t j = 0; j < w; ++j) dst[i * w + j] += src[i * nw + j];
                        }
                }
                break;
            }
            case OpKind::Pointwise: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        a.grad[i] += n.grad[i] * act_backward(a.value[i], n.value[i], n.act);
                break;
            }
            case OpKind::Reshape: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += n.grad[i];
                break;
            }
            case OpKind::Sum: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += n.grad[0];
                break;
            }
            case OpKind::GhostCrossEntropy: {
                if (a.requires_grad)
                    for (std::size_t i = 0; i < a.grad.size(); ++i)
                        a.grad[i] += n.grad[0] * n.aux_d[i];
                break;
            }
            case OpKind::Leaf: break;
        }
    }
}

}  // namespace ghostgrad
