#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ghostgrad/errors.hpp"

namespace ghostgrad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Activation { Identity, Relu, Sigmoid, Tanh };

enum class OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Matmul,
    BiasAdd,
    ChannelBiasAdd,
    Conv2d,
    MaxPool2,
    ZeroPad2d,
    Pointwise,
    Reshape,
    Sum,
    GhostCrossEntropy,
};

// One recorded operation. Saved buffers (aux_*) hold whatever the backward
// pass needs: argmax indices for pooling, im2col patches for convolution,
// softmax probabilities for the loss node.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    OpKind op = OpKind::Leaf;
    std::array<int, 2> inputs{-1, -1};
    double scalar = 0.0;
    Activation act = Activation::Identity;
    std::vector<std::int64_t> aux_i;
    std::vector<double> aux_d;
};

struct TensorRef {
    int id = -1;
};

// Append-only computation tape. Construction order is topological order, so
// the backward sweep is a single reverse pass that visits each node once.
// One tape is single-threaded; independent tapes may run concurrently.
class Tape {
  public:
    TensorRef leaf(Shape shape, std::vector<double> data, bool requires_grad = false);
    TensorRef zeros(Shape shape, bool requires_grad = false);

    TensorRef add(TensorRef a, TensorRef b);
    TensorRef sub(TensorRef a, TensorRef b);
    TensorRef mul(TensorRef a, TensorRef b);
    TensorRef scale(TensorRef a, double c);
    TensorRef matmul(TensorRef a, TensorRef b);
    // y[i,j] = x[i,j] + b[j]; the only broadcast in the engine.
    TensorRef bias_add(TensorRef x, TensorRef b);
    // y[n,c,h,w] = x[n,c,h,w] + b[c]
    TensorRef channel_bias_add(TensorRef x, TensorRef b);
    // Valid cross-correlation, stride 1. x:[N,C,H,W], k:[F,C,KH,KW].
    TensorRef conv2d(TensorRef x, TensorRef k);
    // 2x2 window max, stride 2; ties route gradient to the first (row-major)
    // maximal element.
    TensorRef maxpool2(TensorRef x);
    // Zero padding appended on the bottom/right spatial edges.
    TensorRef zero_pad2d(TensorRef x, std::size_t pad_h, std::size_t pad_w);
    TensorRef pointwise(TensorRef x, Activation kind);
    TensorRef reshape(TensorRef x, Shape shape);
    TensorRef sum(TensorRef x);
    // Mean extended cross-entropy over the batch; labels in [0, c).
    TensorRef ghost_cross_entropy(TensorRef logits, std::span<const int> labels, int c, int e);

    // Populates grad buffers of every requires_grad node reachable from loss.
    void backward(TensorRef loss);

    const Node& node(TensorRef t) const { return nodes_[static_cast<std::size_t>(t.id)]; }
    std::span<const double> value(TensorRef t) const { return node(t).value; }
    std::span<const double> grad(TensorRef t) const { return node(t).grad; }
    std::size_t size() const { return nodes_.size(); }

  private:
    TensorRef push(Node n);
    Node& at(TensorRef t) { return nodes_[static_cast<std::size_t>(t.id)]; }
    void check_finite(const Node& n, const char* op_name) const;

    std::vector<Node> nodes_;
};

// Dense kernels shared by the tape ops. C is accumulated into, callers zero it
// first when needed.
namespace detail {
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
}  // namespace detail

}  // namespace ghostgrad
