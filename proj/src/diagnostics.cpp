#include "ghostgrad/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "ghostgrad/rng.hpp"

namespace ghostgrad {

void ErgodicAccumulator::record(const TrajectoryRecord& rec) {
    ++count;
    sum_f_orig += rec.f_orig;
    sum_f_ghost += rec.f_ghost;
    sum_grad_norm += rec.grad_norm;
    if (rec.lyap_summand) {
        sum_lyap += *rec.lyap_summand;
        ++lyap_count;
    }
}

ErgodicMeans ergodic_means(const ErgodicAccumulator& acc) {
    if (acc.count == 0) throw ContractError("ergodic_means: no steps recorded");
    const double inv = 1.0 / static_cast<double>(acc.count);
    return {acc.sum_f_orig * inv, acc.sum_f_ghost * inv, acc.sum_grad_norm * inv};
}

double lyapunov_running(const ErgodicAccumulator& acc) {
    if (acc.lyap_count == 0) throw ContractError("lyapunov_running: no probes recorded");
    return acc.sum_lyap / static_cast<double>(acc.lyap_count);
}

MeasureSketch::MeasureSketch(std::size_t dim, std::uint64_t seed, std::size_t bins)
    : bins_(bins), proj1_(dim), proj2_(dim) {
    if (dim == 0) throw ContractError("MeasureSketch: zero-dimensional space");
    if (bins_ < 2) throw ContractError("MeasureSketch: need at least 2 bins");
    CounterRng rng(seed, CounterRng::kSketch);
    auto draw_unit = [&rng, dim](std::vector<double>& v) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& x : v) {
                x = rng.next_normal();
                norm2 += x * x;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : v) x *= inv;
    };
    draw_unit(proj1_);
    draw_unit(proj2_);
}

void MeasureSketch::record(std::span<const double> w) {
    if (w.size() != proj1_.size())
        throw DimensionError("MeasureSketch: parameter dimension changed mid-run");
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        a += proj1_[i] * w[i];
        b += proj2_[i] * w[i];
    }
    points_.push_back({a, b});
}

double MeasureSketch::tv_distance() const {
    if (points_.size() < 2000)
        throw ContractError("MeasureSketch: need >= 2000 recorded steps, have " +
                            std::to_string(points_.size()));
    // Per-axis sigma over the whole trajectory fixes a common binning for
    // both halves.
    double mean[2] = {0.0, 0.0};
    for (const auto& p : points_) {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= static_cast<double>(points_.size());
    mean[1] /= static_cast<double>(points_.size());
    double var[2] = {0.0, 0.0};
    for (const auto& p : points_) {
        var[0] += (p[0] - mean[0]) * (p[0] - mean[0]);
        var[1] += (p[1] - mean[1]) * (p[1] - mean[1]);
    }
    double sigma[2];
    for (int k = 0; k < 2; ++k)
        sigma[k] = std::max(std::sqrt(var[k] / static_cast<double>(points_.size())), 1e-300);

    const std::size_t half = points_.size() / 2;
    std::vector<double> h1(bins_ * bins_, 0.0), h2(bins_ * bins_, 0.0);
    auto bin_of = [this](double x, double mu, double s) {
        const double lo = mu - 3.0 * s, hi = mu + 3.0 * s;
        double u = (x - lo) / (hi - lo);
        u = std::clamp(u, 0.0, 1.0);
        std::size_t b = static_cast<std::size_t>(u * static_cast<double>(bins_));
        return std::min(b, bins_ - 1);
    };
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const std::size_t bi = bin_of(points_[i][0], mean[0], sigma[0]);
        const std::size_t bj = bin_of(points_[i][1], mean[1], sigma[1]);
        (i < half ? h1 : h2)[bi * bins_ + bj] += 1.0;
    }
    const double n1 = static_cast<double>(half);
    const double n2 = static_cast<double>(points_.size() - half);
    double tv = 0.0;
    for (std::size_t i = 0; i < h1.size(); ++i) tv += std::abs(h1[i] / n1 - h2[i] / n2);
    return 0.5 * tv;
}

std::vector<double> hvp(const GradFn& grad, std::span<const double> w, std::span<const double> v) {
    if (w.size() != v.size()) throw DimensionError("hvp: w and v dimensions differ");
    double vnorm2 = 0.0;
    for (const double x : v) vnorm2 += x * x;
    if (vnorm2 == 0.0) throw ContractError("hvp: v must be nonzero");
    const double vnorm = std::sqrt(vnorm2);

    double winf = 0.0;
    for (const double x : w) winf = std::max(winf, std::abs(x));
    const double eps = 1e-5 * (1.0 + winf);

    std::vector<double> wp(w.begin(), w.end()), wm(w.begin(), w.end());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double dv = eps * v[i] / vnorm;
        wp[i] += dv;
        wm[i] -= dv;
    }
    const std::vector<double> gp = grad(wp);
    const std::vector<double> gm = grad(wm);
    if (gp.size() != w.size() || gm.size() != w.size())
        throw DimensionError("hvp: gradient oracle returned wrong dimension");
    std::vector<double> out(w.size());
    const double scale = vnorm / (2.0 * eps);
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = (gp[i] - gm[i]) * scale;
    return out;
}

SpectralResult spectral_norm_shifted(const SpectralProbe& probe, std::span<const double> w,
                                     double eta) {
    if (eta < 0.0) throw ContractError("spectral_norm_shifted: eta must be >= 0");
    const std::size_t d = w.size();
    if (d == 0) throw ContractError("spectral_norm_shifted: empty parameter vector");

    auto apply_shifted = [&](const std::vector<double>& v) {
        std::vector<double> hv;
        if (probe.method == SpectralProbe::HvpMethod::ExactQuadratic) {
            if (!probe.hess_apply)
                throw ContractError("spectral_norm_shifted: ExactQuadratic needs hess_apply");
            hv = probe.hess_apply(w, v);
        } else {
            if (!probe.grad)
                throw ContractError("spectral_norm_shifted: missing gradient oracle");
            hv = hvp(probe.grad, w, v);
        }
        for (std::size_t i = 0; i < d; ++i) hv[i] = v[i] - eta * hv[i];
        return hv;
    };

    CounterRng rng(probe.seed, CounterRng::kProbe);
    SpectralResult res;
    for (int restart = 0; restart < 3; ++restart) {
        std::vector<double> v(d);
        double n2 = 0.0;
        for (double& x : v) {
            x = rng.next_normal();
            n2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(n2);
        for (double& x : v) x *= inv;

        double lambda_prev = 0.0;
        bool degenerate = false;
        for (std::size_t it = 1; it <= probe.max_iters; ++it) {
            const std::vector<double> u = apply_shifted(v);
            double vu = 0.0, vv = 0.0, unorm2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                vu += v[i] * u[i];
                vv += v[i] * v[i];
                unorm2 += u[i] * u[i];
            }
            const double lambda = vu / vv;
            res.value = std::abs(lambda);
            res.iters = it;
            if (unorm2 == 0.0) {
                // Start vector annihilated; try a fresh one.
                degenerate = true;
                break;
            }
            if (it > 1 && std::abs(lambda - lambda_prev) <= probe.tol * std::max(1.0, std::abs(lambda))) {
                res.converged = true;
                return res;
            }
            lambda_prev = lambda;
            const double uinv = 1.0 / std::sqrt(unorm2);
            for (std::size_t i = 0; i < d; ++i) v[i] = u[i] * uinv;
        }
        if (!degenerate) return res;  // hit max_iters: best estimate, unconverged
    }
    return res;
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
    if (window <= 1) return std::vector<double>(series.begin(), series.end());
    std::vector<double> out(series.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(series.size());
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((window - 1) / 2);
    const std::ptrdiff_t right = static_cast<std::ptrdiff_t>(window / 2);
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - left);
        const std::ptrdiff_t hi = std::min(n - 1, t + right);
        double acc = 0.0;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) acc += series[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(t)] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

std::optional<std::size_t> first_peak(std::span<const double> series, std::size_t smooth_window) {
    if (series.size() < 3) throw ContractError("first_peak: need at least 3 points");
    const std::vector<double> s = moving_average(series, smooth_window);
    for (std::size_t t = 1; t + 1 < s.size(); ++t)
        if (s[t] > s[t - 1] && s[t] >= s[t + 1]) return t;
    return std::nullopt;
}

}  // namespace ghostgrad
