#include "ghostgrad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace ghostgrad {

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, BatchMode mode)
    : n_(dataset_size), m_(batch_size), mode_(mode) {
    if (n_ == 0) throw ContractError("BatchSampler: empty dataset");
    if (mode_ == BatchMode::FullBatch) m_ = n_;
    if (m_ == 0 || m_ > n_)
        throw ContractError("BatchSampler: batch size " + std::to_string(m_) +
                            " invalid for dataset of " + std::to_string(n_));
}

std::vector<std::size_t> BatchSampler::draw(CounterRng& rng) {
    std::vector<std::size_t> idx;
    idx.reserve(m_);
    switch (mode_) {
        case BatchMode::FullBatch: {
            idx.resize(n_);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            break;
        }
        case BatchMode::WithReplacement: {
            for (std::size_t i = 0; i < m_; ++i)
                idx.push_back(static_cast<std::size_t>(rng.next_below(n_)));
            break;
        }
        case BatchMode::WithoutReplacementEpoch: {
            // Fisher-Yates reshuffle at each epoch boundary, then consume
            // consecutive blocks.
            if (cursor_ + m_ > order_.size()) {
                order_.resize(n_);
                std::iota(order_.begin(), order_.end(), std::size_t{0});
                for (std::size_t i = n_ - 1; i > 0; --i)
                    std::swap(order_[i], order_[static_cast<std::size_t>(rng.next_below(i + 1))]);
                cursor_ = 0;
            }
            idx.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + m_));
            cursor_ += m_;
            break;
        }
    }
    return idx;
}

DatasetObjective::DatasetObjective(const Model& model, BatchView data, BatchSampler sampler)
    : model_(model), data_(data), sampler_(std::move(sampler)) {
    if (data_.count == 0) throw ContractError("DatasetObjective: empty dataset");
    if (sampler_.dataset_size() != data_.count)
        throw ContractError("DatasetObjective: sampler size does not match dataset");
}

std::size_t DatasetObjective::dim() const { return model_.param_count(); }

GradSample DatasetObjective::eval_batch(std::span<const double> w,
                                        std::span<const std::size_t> idx) const {
    const std::size_t pix = data_.chans * data_.rows * data_.cols;
    ParamVector params = model_.init_params();
    std::copy(w.begin(), w.end(), params.values.begin());

    GradSample out;
    if (idx.size() == data_.count) {
        ParamVector g;
        out.loss = model_.loss_and_grad(params, data_, &g);
        out.grad = std::move(g.values);
    } else {
        std::vector<double> images(idx.size() * pix);
        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(data_.images.begin() + static_cast<std::ptrdiff_t>(idx[i] * pix), pix,
                        images.begin() + static_cast<std::ptrdiff_t>(i * pix));
            labels[i] = data_.labels[idx[i]];
        }
        BatchView sub{images, labels, idx.size(), data_.chans, data_.rows, data_.cols};
        ParamVector g;
        out.loss = model_.loss_and_grad(params, sub, &g);
        out.grad = std::move(g.values);
    }
    return out;
}

GradSample DatasetObjective::estimate(std::span<const double> w, CounterRng& rng) {
    const std::vector<std::size_t> idx = sampler_.draw(rng);
    GradSample s = eval_batch(w, idx);
    // Batch identity: order-sensitive FNV over the index list.
    std::uint64_t h = 1469598103934665603ULL;
    for (const std::size_t i : idx) {
        h ^= static_cast<std::uint64_t>(i);
        h *= 1099511628211ULL;
    }
    s.xi = h;
    return s;
}

std::vector<double> DatasetObjective::full_gradient(std::span<const double> w) {
    std::vector<std::size_t> all(data_.count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return eval_batch(w, all).grad;
}

SgdState SgdState::make(ParamVector params, double eta, std::uint64_t seed, double domain_bound) {
    if (eta <= 0.0) throw ContractError("SgdState: eta must be positive");
    SgdState s;
    s.params = std::move(params);
    s.eta = eta;
    s.domain_bound = domain_bound;
    s.batch_rng = CounterRng(seed, CounterRng::kBatch);
    return s;
}

std::uint64_t param_hash(std::span<const double> values) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFF;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

GradSample grad_estimate(const ParamVector& params, GradientOracle& oracle, CounterRng& rng) {
    return oracle.estimate(params.values, rng);
}

TrajectoryRecord sgd_step(SgdState& state, GradientOracle& oracle) {
    if (state.momentum != 0.0)
        throw ContractError("sgd_step: momentum is fixed at 0 for this optimizer");
    GradSample s = oracle.estimate(state.params.values, state.batch_rng);
    if (s.grad.size() != state.params.size())
        throw ContractError("sgd_step: gradient dimension mismatch");

    double norm2 = 0.0;
    for (const double g : s.grad) {
        if (!std::isfinite(g))
            throw NumericError("sgd_step: non-finite gradient at step " +
                               std::to_string(state.t) + " (xi=" + std::to_string(s.xi) + ")");
        norm2 += g * g;
    }

    const double bound = state.domain_bound;
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        double v = state.params.values[i] - state.eta * s.grad[i];
        if (v > bound) {
            v = bound;
            ++state.clamp_events;
        } else if (v < -bound) {
            v = -bound;
            ++state.clamp_events;
        }
        state.params.values[i] = v;
    }
    ++state.t;

    TrajectoryRecord rec;
    rec.step = state.t - 1;
    rec.f_orig = s.loss.l_orig;
    rec.f_ghost = s.loss.l_ghost;
    rec.grad_norm = std::sqrt(norm2);
    rec.xi = s.xi;
    rec.param_hash = param_hash(state.params.values);
    return rec;
}

void run_chain(SgdState& state, GradientOracle& oracle, std::uint64_t steps,
               std::span<const Observer> observers, std::vector<TrajectoryRecord>* records,
               const LyapunovProbe* probe) {
    if (steps < 1) throw ContractError("run_chain: steps must be >= 1");
    if (!records) throw ContractError("run_chain: records sink is required");
    records->reserve(records->size() + steps);
    for (std::uint64_t i = 0; i < steps; ++i) {
        std::optional<double> summand;
        if (probe && probe->log_norm && probe->cadence > 0 && state.t % probe->cadence == 0)
            summand = probe->log_norm(state.params.values);
        TrajectoryRecord rec = sgd_step(state, oracle);
        rec.lyap_summand = summand;
        records->push_back(rec);
        for (const Observer& obs : observers) {
            try {
                obs(records->back(), state.params.values);
            } catch (const std::exception& e) {
                throw ContractError("run_chain: observer failed at step " +
                                    std::to_string(rec.step) + ": " + e.what());
            }
        }
    }
}

}  // namespace ghostgrad
