#pragma once

// Synthetic data-generating process: Gaussian covariate laws in trial and
// external-control populations, Gaussian outcomes with mean c0 + c1*x +
// c2*exp(x) per arm, and an additive location shift of the EC untreated
// outcome. This family admits closed-form shift weights (see shift.hpp).

#include <array>
#include <cmath>
#include <cstddef>

#include "shiftfuse/errors.hpp"

namespace shiftfuse {

struct DGPSpec {
    std::array<double, 2> trial_x{1.5, 0.8};  // mean, sd
    std::array<double, 2> ec_x{1.0, 1.0};
    std::array<double, 3> mu1_coef{2.0, 1.0, 0.6};  // c0 + c1*x + c2*exp(x)
    std::array<double, 3> mu0_coef{1.0, 1.5, 0.5};
    double outcome_sd = 0.8;
    double ec_offset = 0.5;  // added to the EC untreated outcome mean
    std::size_t n = 1500;    // trial rows
    std::size_t N = 3500;    // total rows
    double pi = 0.5;         // trial treatment probability

    double kappa() const { return static_cast<double>(n) / static_cast<double>(N); }
    double mu1(double x) const { return mu1_coef[0] + mu1_coef[1] * x + mu1_coef[2] * std::exp(x); }
    double mu0(double x) const { return mu0_coef[0] + mu0_coef[1] * x + mu0_coef[2] * std::exp(x); }

    void validate() const {
        if (!(trial_x[1] > 0.0) || !(ec_x[1] > 0.0) || !(outcome_sd > 0.0))
            throw DomainError("DGPSpec: standard deviations must be positive");
        if (!(n > 0 && n < N))
            throw SizeError("DGPSpec: require 0 < n < N");
        if (!(pi > 0.0 && pi < 1.0))
            throw DomainError("DGPSpec: pi must lie in (0,1)");
    }
};

}  // namespace shiftfuse
