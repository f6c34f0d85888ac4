#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ghostgrad/optim.hpp"

namespace ghostgrad {

using GradFn = std::function<std::vector<double>(std::span<const double>)>;
using HessFn = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

// Running sums of the tracked observables along one chain.
struct ErgodicAccumulator {
    std::uint64_t count = 0;
    double sum_f_orig = 0.0;
    double sum_f_ghost = 0.0;
    double sum_grad_norm = 0.0;
    double sum_lyap = 0.0;
    std::uint64_t lyap_count = 0;
    std::uint64_t cadence_k = 10;

    void record(const TrajectoryRecord& rec);
};

struct ErgodicMeans {
    double f_orig = 0.0;
    double f_ghost = 0.0;
    double grad_norm = 0.0;
};

ErgodicMeans ergodic_means(const ErgodicAccumulator& acc);

// Mean of the recorded log||I - eta Hf|| values; the sign is the diagnostic
// (persistently negative: contracting toward a minimizer; near zero or
// positive: still roaming or pinned near a saddle).
double lyapunov_running(const ErgodicAccumulator& acc);

// Two fixed random unit projections of the iterates, binned into a 64x64
// histogram over [-3 sigma, 3 sigma] of the observed values, split into
// first-half and second-half windows.
class MeasureSketch {
  public:
    MeasureSketch(std::size_t dim, std::uint64_t seed, std::size_t bins = 64);

    void record(std::span<const double> w);
    std::size_t steps() const { return points_.size(); }

    // Total-variation distance between the half-trajectory histograms, in
    // [0, 1]. Small values are evidence of stabilization, not proof.
    double tv_distance() const;

  private:
    std::size_t bins_;
    std::vector<double> proj1_, proj2_;
    std::vector<std::array<double, 2>> points_;
};

// How Hessian-vector products are realized.
struct SpectralProbe {
    enum class HvpMethod { FiniteDifferenceOfGradients, ExactQuadratic };
    HvpMethod method = HvpMethod::FiniteDifferenceOfGradients;
    std::size_t max_iters = 100;
    double tol = 1e-8;
    std::uint64_t seed = 0;
    GradFn grad;       // used by FiniteDifferenceOfGradients
    HessFn hess_apply; // used by ExactQuadratic: (w, v) -> H(w) v
};

struct SpectralResult {
    double value = 0.0;
    bool converged = false;
    std::size_t iters = 0;
};

// Central-difference Hessian action: (grad(w + eps vhat) - grad(w - eps vhat))
// / (2 eps) * ||v||, eps = 1e-5 (1 + ||w||_inf). Exact for quadratics.
std::vector<double> hvp(const GradFn& grad, std::span<const double> w, std::span<const double> v);

// Power iteration on v -> v - eta Hv; returns the largest absolute eigenvalue,
// which is the spectral norm of the symmetric shifted operator. The start
// vector is drawn from probe.seed, never from a global source.
SpectralResult spectral_norm_shifted(const SpectralProbe& probe, std::span<const double> w,
                                     double eta);

// Smallest t >= 1 with s[t] > s[t-1] and s[t] >= s[t+1] after centered
// moving-average smoothing (window 1 = none). Absence is a value.
std::optional<std::size_t> first_peak(std::span<const double> series, std::size_t smooth_window = 1);

std::vector<double> moving_average(std::span<const double> series, std::size_t window);

}  // namespace ghostgrad
