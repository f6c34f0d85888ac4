#pragma once

#include <span>
#include <vector>

#include "ghostgrad/tensor.hpp"

namespace ghostgrad {

// Extended categorical head: c real classes plus e ghost classes fed by s
// features. Ghost columns of u (and the trailing entries of b) are the ghost
// parameters; with e = 0 this is exactly the original softmax head.
struct GhostHeadConfig {
    int c = 0;
    int e = 0;
    int s = 0;
    Activation activation = Activation::Identity;
    std::vector<double> u;  // s x (c+e), row-major: u[j*(c+e)+i]
    std::vector<double> b;  // c+e

    int width() const { return c + e; }
    void validate() const;
};

// l_ext = l_orig + l_ghost, all in nats, batch means.
struct LossBreakdown {
    double l_ext = 0.0;
    double l_orig = 0.0;
    double l_ghost = 0.0;
};

enum class GammaInit { Zeros, SmallGaussian, FrozenAtNegative };

// z_i = sigma(sum_j u_{j,i} zeta_j + b_i), batch-row layout. features is
// batch x s, result batch x (c+e).
std::vector<double> head_forward(std::span<const double> features, std::size_t batch,
                                 const GhostHeadConfig& cfg);

// Extended softmax cross-entropy with the denominator over all c+e classes,
// plus the decomposition into the original loss and the non-negative ghost
// contribution log(1 + sum_ghost e^z / sum_real e^z). Everything goes through
// max-shifted log-sum-exp; the ghost/real ratio is formed in log space.
// per_sample, when given, receives one breakdown per row.
LossBreakdown ghost_softmax_ce(std::span<const double> logits, std::size_t batch,
                               std::span<const int> labels, int c, int e,
                               std::vector<LossBreakdown>* per_sample = nullptr);

// dL/dz as (yhat - ytilde)/batch with the one-hot target padded by zeros on
// ghost coordinates.
std::vector<double> ghost_softmax_ce_grad(std::span<const double> logits, std::size_t batch,
                                          std::span<const int> labels, int c, int e);

// The same gradient evaluated from the published partial-derivative formulas
// (separate real-class and ghost-class expressions with the j != i sums
// written out). Kept distinct from ghost_softmax_ce_grad so the two routes can
// be checked against each other.
std::vector<double> ghost_softmax_ce_grad_literal(std::span<const double> logits,
                                                  std::size_t batch, std::span<const int> labels,
                                                  int c, int e);

// Max relative disagreement between the yhat-ytilde form and the literal form.
double grad_forms_disagreement(std::span<const double> logits, std::size_t batch,
                               std::span<const int> labels, int c, int e);

// Widens an e=0 head by e_new ghost columns. Real-class columns are copied
// unchanged; ghost columns follow the init policy. FrozenAtNegative sets ghost
// biases to -frozen_level with zero ghost weights, which reproduces the
// original model's losses to within rounding.
GhostHeadConfig embed_original(const GhostHeadConfig& original, int e_new, GammaInit init,
                               std::uint64_t seed = 0, double frozen_level = 30.0);

}  // namespace ghostgrad
