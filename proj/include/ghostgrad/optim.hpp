#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ghostgrad/models.hpp"
#include "ghostgrad/rng.hpp"

namespace ghostgrad {

// One mini-batch gradient draw g(w, xi) together with the losses it saw.
struct GradSample {
    std::vector<double> grad;
    std::uint64_t xi = 0;  // identifies the drawn batch
    LossBreakdown loss;
};

// Source of stochastic gradients for the SGD map. Implementations must be
// unbiased: the expectation of estimate() over xi equals full_gradient().
class GradientOracle {
  public:
    virtual ~GradientOracle() = default;
    virtual std::size_t dim() const = 0;
    virtual GradSample estimate(std::span<const double> w, CounterRng& rng) = 0;
    virtual std::vector<double> full_gradient(std::span<const double> w) = 0;
};

enum class BatchMode { FullBatch, WithReplacement, WithoutReplacementEpoch };

// Seeded batch index source over a dataset of n samples.
class BatchSampler {
  public:
    BatchSampler(std::size_t dataset_size, std::size_t batch_size, BatchMode mode);

    // Draws the next batch; rng must be the chain's batch stream.
    std::vector<std::size_t> draw(CounterRng& rng);
    std::size_t dataset_size() const { return n_; }
    std::size_t batch_size() const { return m_; }
    BatchMode mode() const { return mode_; }

  private:
    std::size_t n_;
    std::size_t m_;
    BatchMode mode_;
    std::vector<std::size_t> order_;  // epoch permutation
    std::size_t cursor_ = 0;
};

// Dataset-backed oracle: mean per-sample gradient of the extended loss over
// the drawn batch. full_gradient() is the exact gradient over all samples.
class DatasetObjective : public GradientOracle {
  public:
    DatasetObjective(const Model& model, BatchView data, BatchSampler sampler);
    std::size_t dim() const override;
    GradSample estimate(std::span<const double> w, CounterRng& rng) override;
    std::vector<double> full_gradient(std::span<const double> w) override;
    // Gradient over an explicit index set (exposed for enumeration tests).
    GradSample eval_batch(std::span<const double> w, std::span<const std::size_t> idx) const;
    const Model& model() const { return model_; }
    const BatchView& data() const { return data_; }

  private:
    const Model& model_;
    BatchView data_;
    BatchSampler sampler_;
};

struct SgdState {
    ParamVector params;
    std::uint64_t t = 0;
    double eta = 0.0;
    double momentum = 0.0;  // must stay 0; kept to make the choice explicit
    double domain_bound = 1e3;
    std::uint64_t clamp_events = 0;
    CounterRng batch_rng{0, CounterRng::kBatch};

    static SgdState make(ParamVector params, double eta, std::uint64_t seed,
                         double domain_bound = 1e3);
};

// Per-step observables. lyap_summand is log||I - eta H|| when the step was
// probed, absent otherwise.
struct TrajectoryRecord {
    std::uint64_t step = 0;
    double f_orig = 0.0;
    double f_ghost = 0.0;
    double grad_norm = 0.0;
    std::optional<double> lyap_summand;
    std::uint64_t xi = 0;
    std::uint64_t param_hash = 0;
};

using Observer = std::function<void(const TrajectoryRecord&, std::span<const double>)>;

// Evaluates log||I - eta Hf(w)|| at the pre-step iterate; wired up by the
// harness from the diagnostics module.
struct LyapunovProbe {
    std::uint64_t cadence = 10;  // steps between probes
    std::function<double(std::span<const double>)> log_norm;
};

// FNV-1a over the raw parameter bytes; the trajectory fingerprint.
std::uint64_t param_hash(std::span<const double> values);

// grad_estimate of the spec: one draw from the oracle.
GradSample grad_estimate(const ParamVector& params, GradientOracle& oracle, CounterRng& rng);

// w <- clamp(w - eta g); advances t and the batch stream. Throws NumericError
// on a non-finite gradient.
TrajectoryRecord sgd_step(SgdState& state, GradientOracle& oracle);

// Runs N steps, appending one record per step to *records (partial on error).
// Observers are read-only; the trajectory does not depend on them.
void run_chain(SgdState& state, GradientOracle& oracle, std::uint64_t steps,
               std::span<const Observer> observers, std::vector<TrajectoryRecord>* records,
               const LyapunovProbe* probe = nullptr);

}  // namespace ghostgrad
