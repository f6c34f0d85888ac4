#pragma once

#include <span>
#include <string>
#include <vector>

#include "ghostgrad/errors.hpp"

namespace ghostgrad {

// Closed-form test landscapes with exact gradients and Hessians.
//   quadratic: f(w) = 1/2 sum_i lambda_i w_i^2
//   saddle:    f(w) = 1/2 (w1^2 - w2^2)
//   ridge2d:   f(w) = (w1^2 - 1)^2 - 0.3 w1 + 0.5 w2^2
// ridge2d has two unequal wells separated by a ridge near w1 = -0.0754; the
// deeper well sits at w1 = +1.0356.
class SyntheticLandscape {
  public:
    enum class Kind { Quadratic, Saddle, Ridge2d };

    static SyntheticLandscape quadratic(std::vector<double> spectrum);
    static SyntheticLandscape saddle();
    static SyntheticLandscape ridge2d();

    Kind kind() const { return kind_; }
    std::string name() const;
    std::size_t dim() const { return dim_; }

    double f(std::span<const double> w) const;
    std::vector<double> grad(std::span<const double> w) const;
    // Dense row-major d x d Hessian.
    std::vector<double> hessian(std::span<const double> w) const;
    // H(w) v without forming the matrix.
    std::vector<double> hessian_apply(std::span<const double> w, std::span<const double> v) const;

  private:
    SyntheticLandscape(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {}
    void check(std::span<const double> w) const;

    Kind kind_;
    std::size_t dim_;
    std::vector<double> spectrum_;
};

struct LandscapeEval {
    double f = 0.0;
    std::vector<double> grad;
    std::vector<double> hessian;  // row-major d x d
};

LandscapeEval landscape_eval(const SyntheticLandscape& landscape, std::span<const double> w);

}  // namespace ghostgrad
