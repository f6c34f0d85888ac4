#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ghostgrad/ghost_head.hpp"
#include "ghostgrad/tensor.hpp"

namespace ghostgrad {

// One named slice of the flat parameter vector. Ghost segments hold the
// gamma parameters (ghost head columns); everything else is backbone w.
struct ParamSegment {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool ghost = false;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<ParamSegment> segments;

    std::size_t size() const { return values.size(); }
    const ParamSegment* find(std::string_view name) const;
    std::span<const double> segment(std::string_view name) const;
    std::span<double> segment(std::string_view name);
};

// A labelled batch of images, row-major [count x chans x rows x cols].
struct BatchView {
    std::span<const double> images;
    std::span<const int> labels;
    std::size_t count = 0;
    std::size_t chans = 1;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

struct ModelSpec {
    enum class Kind { Mlp, Cnn2Block };
    Kind kind = Kind::Mlp;
    std::size_t input_chans = 1;
    std::size_t input_rows = 28;
    std::size_t input_cols = 28;
    std::vector<std::size_t> hidden = {32};  // mlp only; empty = bare head
    std::size_t conv1_channels = 8;          // cnn2block only
    std::size_t conv2_channels = 16;
    int classes = 10;
    int ghosts = 0;
    Activation head_activation = Activation::Identity;
    GammaInit gamma_init = GammaInit::Zeros;
    std::uint64_t init_seed = 0;
};

struct ModelLoss {
    LossBreakdown loss;
    double accuracy = 0.0;  // argmax over real classes
};

// A reference architecture terminating in a ghost-extended softmax head.
// Immutable after build; parameters travel as explicit ParamVectors.
class Model {
  public:
    static Model build(const ModelSpec& spec);

    const ModelSpec& spec() const { return spec_; }
    const ParamVector& init_params() const { return init_params_; }
    std::size_t param_count() const { return init_params_.values.size(); }
    int feature_count() const { return feature_count_; }

    // Plain forward: logits for a batch, no gradients.
    std::vector<double> logits(const ParamVector& w, const BatchView& batch) const;

    // Loss breakdown plus accuracy; no gradients.
    ModelLoss evaluate(const ParamVector& w, const BatchView& batch) const;

    // Loss breakdown and d(l_ext)/dw; grad is segment-aligned with w.
    LossBreakdown loss_and_grad(const ParamVector& w, const BatchView& batch,
                                ParamVector* grad) const;

    // The same architecture with the ghost columns removed. Because ghost
    // segments sit at the end of the layout, a reduced parameter vector is a
    // prefix of the extended one.
    Model reduced() const;
    ParamVector strip_ghost(const ParamVector& w) const;

    // Head weights assembled from the flat vector.
    GhostHeadConfig head_config(const ParamVector& w) const;

  private:
    struct GraphOut {
        TensorRef logits;
        std::vector<TensorRef> leaves;  // one per segment, ghost leaves merged
    };
    GraphOut forward_graph(Tape& tape, const ParamVector& w, const BatchView& batch,
                           bool requires_grad) const;
    void check_batch(const BatchView& batch) const;

    ModelSpec spec_;
    ParamVector init_params_;
    int feature_count_ = 0;
};

// Named-tensor view of a flat parameter vector and its inverse. The round
// trip is the identity.
std::map<std::string, std::vector<double>> unflatten_params(const Model& model,
                                                            const ParamVector& w);
ParamVector flatten_params(const Model& model,
                           const std::map<std::string, std::vector<double>>& named);

// Max over backbone (non-ghost) segments of the Euclidean norm of the
// difference between d(l_ext)/dw and d(l_orig)/dw at the same parameters.
// Zero exactly when e = 0; tends to zero as ghost logits go to -infinity.
double gradient_coincidence_gap(const Model& model, const ParamVector& w, const BatchView& batch);

}  // namespace ghostgrad
