#pragma once

// Shift-induced weights k(x) and rho(x,y), conversions between the
// propensity and density-ratio parameterizations, closed-form oracles for
// the Gaussian DGP family, and empirical calibration checks.

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "shiftfuse/data.hpp"
#include "shiftfuse/dgp.hpp"
#include "shiftfuse/nuisance.hpp"

namespace shiftfuse {

// Clamp bound for the ratio conversions, which are singular at {0,1}.
inline constexpr double kWeightClamp = 1e-12;

// Counts how often a conversion had to clamp its input; surfaced in CLI
// output so degenerate weights are visible rather than silent.
struct ClampStats {
    std::size_t clamped = 0;
};

enum class WeightSource { Fitted, Oracle, Unit };

// Per-row evaluations of k and rho. k is defined for every row; rho only
// for untreated rows (NaN marks undefined). Values lie in (0,1]; the value
// 1 occurs only for Unit weights on datasets without external controls.
struct ShiftWeights {
    std::vector<double> k;
    std::vector<double> rho;
    WeightSource source = WeightSource::Fitted;

    bool has_rho(std::size_t i) const { return rho[i] == rho[i]; }  // !NaN
};

// Rowwise expit(design . coef) for both models.
ShiftWeights eval_weights(const Dataset& ds, const LogisticModel& k_model,
                          const LogisticModel& rho_model);

// k = rho = 1 on every (untreated) row: the no-external-controls degeneracy.
ShiftWeights unit_weights(const Dataset& ds);

// Closed-form weights from the Gaussian DGP family.
ShiftWeights oracle_weights(const Dataset& ds, const DGPSpec& dgp);

// a(x) = kappa (1-k) / {(1-kappa) k}: EC/trial covariate density ratio.
double a_from_k(double k, double kappa, ClampStats* stats = nullptr);

// a(x) b(x,y) = kappa (1-pi) (1-rho) / {(1-kappa) rho}.
double ab_from_rho(double rho, double kappa, double pi, ClampStats* stats = nullptr);

// Inverses of the above, used by round-trip checks.
double k_from_a(double a, double kappa);
double rho_from_ab(double ab, double kappa, double pi);

// Exact logistic coefficients of k(x) on [Intercept, Linear(0), Square(0)]
// and of rho(x,y) on [Intercept, Linear(0), Square(0), Exp(0), Outcome]
// for the Gaussian DGP family, obtained by expanding the log density
// ratios. Only univariate specs are supported.
LogisticModel true_gaussian_k(const DGPSpec& dgp);
LogisticModel true_gaussian_rho(const DGPSpec& dgp);

// Empirical means of the two calibration equations for test functions g1(x)
// and g2(x,y); both are mean-zero at the true weights.
std::pair<double, double> calibration_residuals(
    const Dataset& ds, const ShiftWeights& w, double pi,
    const std::function<double(std::span<const double>)>& g1,
    const std::function<double(std::span<const double>, double)>& g2,
    ClampStats* stats = nullptr);

}  // namespace shiftfuse
