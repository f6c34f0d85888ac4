#include "ghostgrad/ghost_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ghostgrad/rng.hpp"

namespace ghostgrad {

namespace {

double apply_act(double x, Activation a) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

// Max-shifted log(sum_{i in [lo,hi)} e^{z_i}). Returns -inf for an empty range.
double lse(std::span<const double> z, int lo, int hi) {
    if (lo >= hi) return -std::numeric_limits<double>::infinity();
    double m = z[static_cast<std::size_t>(lo)];
    for (int i = lo + 1; i < hi; ++i) m = std::max(m, z[static_cast<std::size_t>(i)]);
    double s = 0.0;
    for (int i = lo; i < hi; ++i) s += std::exp(z[static_cast<std::size_t>(i)] - m);
    return m + std::log(s);
}

void check_ce_inputs(std::span<const double> logits, std::size_t batch, std::span<const int> labels,
                     int c, int e) {
    if (c <= 0) throw ContractError("ghost_softmax_ce: c must be positive");
    if (e < 0) throw ContractError("ghost_softmax_ce: e must be non-negative");
    const std::size_t width = static_cast<std::size_t>(c + e);
    if (logits.size() != batch * width)
        throw DimensionError("ghost_softmax_ce: logits size " + std::to_string(logits.size()) +
                             " != batch*" + std::to_string(width));
    if (labels.size() != batch)
        throw DimensionError("ghost_softmax_ce: labels size != batch");
    for (std::size_t r = 0; r < batch; ++r)
        if (labels[r] < 0 || labels[r] >= c)
            throw ContractError("ghost_softmax_ce: label " + std::to_string(labels[r]) +
                                " out of range [0," + std::to_string(c) + ") at row " +
                                std::to_string(r));
    if (batch == 0) throw ContractError("ghost_softmax_ce: empty batch");
}

}  // namespace

void GhostHeadConfig::validate() const {
    if (c <= 0) throw ContractError("GhostHeadConfig: c must be positive");
    if (e < 0) throw ContractError("GhostHeadConfig: e must be non-negative");
    if (s <= 0) throw ContractError("GhostHeadConfig: s must be positive");
    const std::size_t w = static_cast<std::size_t>(width());
    if (u.size() != static_cast<std::size_t>(s) * w)
        throw DimensionError("GhostHeadConfig: u has " + std::to_string(u.size()) +
                             " entries, expected s*(c+e) = " + std::to_string(s * w));
    if (b.size() != w) throw DimensionError("GhostHeadConfig: b has wrong length");
}

std::vector<double> head_forward(std::span<const double> features, std::size_t batch,
                                 const GhostHeadConfig& cfg) {
    cfg.validate();
    const std::size_t s = static_cast<std::size_t>(cfg.s);
    const std::size_t w = static_cast<std::size_t>(cfg.width());
    if (features.size() != batch * s)
        throw DimensionError("head_forward: feature width mismatch, got " +
                             std::to_string(features.size()) + " values for batch " +
                             std::to_string(batch) + " x s=" + std::to_string(s));
    std::vector<double> z(batch * w);
    for (std::size_t r = 0; r < batch; ++r) {
        const double* f = features.data() + r * s;
        double* zr = z.data() + r * w;
        for (std::size_t i = 0; i < w; ++i) zr[i] = cfg.b[i];
        for (std::size_t j = 0; j < s; ++j) {
            const double fj = f[j];
            const double* uj = cfg.u.data() + j * w;
            for (std::size_t i = 0; i < w; ++i) zr[i] += fj * uj[i];
        }
        for (std::size_t i = 0; i < w; ++i) zr[i] = apply_act(zr[i], cfg.activation);
    }
    return z;
}

LossBreakdown ghost_softmax_ce(std::span<const double> logits, std::size_t batch,
                               std::span<const int> labels, int c, int e,
                               std::vector<LossBreakdown>* per_sample) {
    check_ce_inputs(logits, batch, labels, c, e);
    const std::size_t width = static_cast<std::size_t>(c + e);
    if (per_sample) {
        per_sample->clear();
        per_sample->reserve(batch);
    }
    LossBreakdown mean;
    for (std::size_t r = 0; r < batch; ++r) {
        const std::span<const double> z = logits.subspan(r * width, width);
        const double lse_real = lse(z, 0, c);
        const double lse_ghost = lse(z, c, c + e);
        const double zy = z[static_cast<std::size_t>(labels[r])];
        LossBreakdown row;
        row.l_orig = lse_real - zy;
        // log(1 + S_gh/S_real) without ever forming either sum outside log space.
        row.l_ghost = e == 0 ? 0.0 : std::log1p(std::exp(lse_ghost - lse_real));
        row.l_ext = lse(z, 0, c + e) - zy;
        if (per_sample) per_sample->push_back(row);
        mean.l_ext += row.l_ext;
        mean.l_orig += row.l_orig;
        mean.l_ghost += row.l_ghost;
    }
    const double inv = 1.0 / static_cast<double>(batch);
    mean.l_ext *= inv;
    mean.l_orig *= inv;
    mean.l_ghost *= inv;
    return mean;
}

std::vector<double> ghost_softmax_ce_grad(std::span<const double> logits, std::size_t batch,
                                          std::span<const int> labels, int c, int e) {
    check_ce_inputs(logits, batch, labels, c, e);
    const std::size_t width = static_cast<std::size_t>(c + e);
    std::vector<double> g(batch * width);
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const std::span<const double> z = logits.subspan(r * width, width);
        const double lse_all = lse(z, 0, c + e);
        double* gr = g.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) gr[i] = std::exp(z[i] - lse_all) * inv;
        gr[static_cast<std::size_t>(labels[r])] -= inv;
    }
    return g;
}

std::vector<double> ghost_softmax_ce_grad_literal(std::span<const double> logits,
                                                  std::size_t batch, std::span<const int> labels,
                                                  int c, int e) {
    check_ce_inputs(logits, batch, labels, c, e);
    const std::size_t width = static_cast<std::size_t>(c + e);
    std::vector<double> g(batch * width);
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const std::span<const double> z = logits.subspan(r * width, width);
        double zmax = z[0];
        for (std::size_t i = 1; i < width; ++i) zmax = std::max(zmax, z[i]);
        // The formulas are invariant under a common shift of all z, so work
        // with e^{z_i - zmax} to keep the sums representable.
        double denom = 0.0;
        for (std::size_t i = 0; i < width; ++i) denom += std::exp(z[i] - zmax);
        double* gr = g.data() + r * width;
        const int y = labels[r];
        for (int i = 0; i < c; ++i) {
            // (sum_{j != i} y_j) e^{z_i} - y_i sum_{j != i} e^{z_j}, one-hot y.
            const double yi = i == y ? 1.0 : 0.0;
            const double sum_y_except_i = 1.0 - yi;
            double sum_exp_except_i = 0.0;
            for (std::size_t j = 0; j < width; ++j)
                if (j != static_cast<std::size_t>(i)) sum_exp_except_i += std::exp(z[j] - zmax);
            gr[i] = (sum_y_except_i * std::exp(z[static_cast<std::size_t>(i)] - zmax) -
                     yi * sum_exp_except_i) /
                    denom * inv;
        }
        for (int i = c; i < c + e; ++i) {
            // (sum_{j<=c} y_j) e^{z_i} / sum_j e^{z_j}; the label sum is 1.
            gr[i] = std::exp(z[static_cast<std::size_t>(i)] - zmax) / denom * inv;
        }
    }
    return g;
}

double grad_forms_disagreement(std::span<const double> logits, std::size_t batch,
                               std::span<const int> labels, int c, int e) {
    const std::vector<double> a = ghost_softmax_ce_grad(logits, batch, labels, c, e);
    const std::vector<double> b = ghost_softmax_ce_grad_literal(logits, batch, labels, c, e);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

GhostHeadConfig embed_original(const GhostHeadConfig& original, int e_new, GammaInit init,
                               std::uint64_t seed, double frozen_level) {
    original.validate();
    if (original.e != 0) throw ContractError("embed_original: source head must have e = 0");
    if (e_new < 0) throw ContractError("embed_original: e_new must be non-negative");
    GhostHeadConfig ext;
    ext.c = original.c;
    ext.e = e_new;
    ext.s = original.s;
    ext.activation = original.activation;
    const std::size_t wo = static_cast<std::size_t>(original.c);
    const std::size_t wn = static_cast<std::size_t>(ext.width());
    ext.u.assign(static_cast<std::size_t>(ext.s) * wn, 0.0);
    ext.b.assign(wn, 0.0);
    for (std::size_t j = 0; j < static_cast<std::size_t>(ext.s); ++j)
        for (std::size_t i = 0; i < wo; ++i) ext.u[j * wn + i] = original.u[j * wo + i];
    for (std::size_t i = 0; i < wo; ++i) ext.b[i] = original.b[i];

    CounterRng rng(seed, CounterRng::kGhostInit);
    for (std::size_t i = wo; i < wn; ++i) {
        switch (init) {
            case GammaInit::Zeros: break;
            case GammaInit::SmallGaussian:
                ext.b[i] = 0.01 * rng.next_normal();
                for (std::size_t j = 0; j < static_cast<std::size_t>(ext.s); ++j)
                    ext.u[j * wn + i] = 0.01 * rng.next_normal();
                break;
            case GammaInit::FrozenAtNegative: ext.b[i] = -frozen_level; break;
        }
    }
    return ext;
}

}  // namespace ghostgrad
