#include "ghostgrad/landscapes.hpp"

#include <cmath>

namespace ghostgrad {

SyntheticLandscape SyntheticLandscape::quadratic(std::vector<double> spectrum) {
    if (spectrum.empty()) throw ContractError("quadratic landscape: empty spectrum");
    SyntheticLandscape l(Kind::Quadratic, spectrum.size());
    l.spectrum_ = std::move(spectrum);
    return l;
}

SyntheticLandscape SyntheticLandscape::saddle() { return SyntheticLandscape(Kind::Saddle, 2); }

SyntheticLandscape SyntheticLandscape::ridge2d() { return SyntheticLandscape(Kind::Ridge2d, 2); }

std::string SyntheticLandscape::name() const {
    switch (kind_) {
        case Kind::Quadratic: return "quadratic";
        case Kind::Saddle: return "saddle";
        case Kind::Ridge2d: return "ridge2d";
    }
    return "?";
}

void SyntheticLandscape::check(std::span<const double> w) const {
    if (w.size() != dim_)
        throw DimensionError("landscape " + name() + ": expected " + std::to_string(dim_) +
                             " coordinates, got " + std::to_string(w.size()));
    for (const double x : w)
        if (!std::isfinite(x)) throw ContractError("landscape " + name() + ": non-finite w");
}

double SyntheticLandscape::f(std::span<const double> w) const {
    check(w);
    switch (kind_) {
        case Kind::Quadratic: {
            double acc = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) acc += 0.5 * spectrum_[i] * w[i] * w[i];
            return acc;
        }
        case Kind::Saddle: return 0.5 * (w[0] * w[0] - w[1] * w[1]);
        case Kind::Ridge2d: {
            const double a = w[0] * w[0] - 1.0;
            return a * a - 0.3 * w[0] + 0.5 * w[1] * w[1];
        }
    }
    return 0.0;
}

std::vector<double> SyntheticLandscape::grad(std::span<const double> w) const {
    check(w);
    std::vector<double> g(dim_);
    switch (kind_) {
        case Kind::Quadratic:
            for (std::size_t i = 0; i < dim_; ++i) g[i] = spectrum_[i] * w[i];
            break;
        case Kind::Saddle:
            g[0] = w[0];
            g[1] = -w[1];
            break;
        case Kind::Ridge2d:
            g[0] = 4.0 * w[0] * w[0] * w[0] - 4.0 * w[0] - 0.3;
            g[1] = w[1];
            break;
    }
    return g;
}

std::vector<double> SyntheticLandscape::hessian(std::span<const double> w) const {
    check(w);
    std::vector<double> h(dim_ * dim_, 0.0);
    switch (kind_) {
        case Kind::Quadratic:
            for (std::size_t i = 0; i < dim_; ++i) h[i * dim_ + i] = spectrum_[i];
            break;
        case Kind::Saddle:
            h[0] = 1.0;
            h[3] = -1.0;
            break;
        case Kind::Ridge2d:
            h[0] = 12.0 * w[0] * w[0] - 4.0;
            h[3] = 1.0;
            break;
    }
    return h;
}

std::vector<double> SyntheticLandscape::hessian_apply(std::span<const double> w,
                                                      std::span<const double> v) const {
    if (v.size() != dim_) throw DimensionError("hessian_apply: v has wrong dimension");
    const std::vector<double> h = hessian(w);
    std::vector<double> out(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) out[i] += h[i * dim_ + j] * v[j];
    return out;
}

LandscapeEval landscape_eval(const SyntheticLandscape& landscape, std::span<const double> w) {
    LandscapeEval out;
    out.f = landscape.f(w);
    out.grad = landscape.grad(w);
    out.hessian = landscape.hessian(w);
    return out;
}

}  // namespace ghostgrad
