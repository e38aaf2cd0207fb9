#pragma once

// Synthetic-data lab: dataset generation from the Gaussian DGP family and
// the two Monte Carlo experiments (validation-information sweep and
// misspecification robustness).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shiftfuse/data.hpp"
#include "shiftfuse/dgp.hpp"
#include "shiftfuse/nuisance.hpp"

namespace shiftfuse {

struct ScenarioSpec {
    bool mu_correct = true;
    bool k_correct = true;
    bool rho_correct = true;
    double validation_multiplier = 0.0;  // 0 = fit shifts on the primary data
    WeightSource weight_source = WeightSource::Fitted;

    void validate() const {
        if (validation_multiplier < 0.0)
            throw DomainError("ScenarioSpec: validation multiplier must be nonnegative");
    }
};

// One summary cell: a (regime, estimator, estimand) triple over replications.
struct MCCell {
    std::string regime;
    std::string estimator;  // trial_only | augmented | shrinkage
    std::string estimand;   // tau1 | tau0 | tau
    long reps = 0;          // successful replications
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double mean_se = 0.0;   // mean plug-in SE
    double coverage = 0.0;  // 95% CI coverage
};

// n trial rows (X ~ trial law, T ~ Bernoulli(pi), Y = mu_T(X) + sd*Z) then
// N-n EC rows (X ~ EC law, T=0, Y = offset + mu0(X) + sd*Z).
Dataset generate(const DGPSpec& dgp, std::uint64_t seed);

// tau_t = c0 + c1*m + c2*exp(m + s^2/2) under the trial covariate law.
std::array<double, 3> true_tau(const DGPSpec& dgp);

// Working bases for the Gaussian family. The misspecified versions drop the
// nonlinear terms present in the true models.
FeatureBasis mu_basis_true();
FeatureBasis mu_basis_misspec();
FeatureBasis k_basis_true();
FeatureBasis k_basis_misspec();
FeatureBasis rho_basis_true();
FeatureBasis rho_basis_misspec();

// Experiment 1: efficiency under varying validation information. Regimes:
// one per multiplier (0 = shifts fitted on the primary sample) plus an
// oracle regime with closed-form weights.
std::vector<MCCell> run_experiment1(const DGPSpec& dgp, const std::vector<double>& multipliers,
                                    int replications, std::uint64_t seed, int workers = 0);

// Experiment 2: robustness across misspecification scenarios.
std::vector<MCCell> run_experiment2(const DGPSpec& dgp, const std::vector<ScenarioSpec>& scenarios,
                                    int replications, std::uint64_t seed, int workers = 0);

// The four scenarios of the robustness experiment.
std::vector<ScenarioSpec> default_scenarios();

// One CSV row per cell; header_comment (if nonempty) is written first as a
// '#' line. Output is byte-stable across runs and worker counts.
void write_mc_csv(const std::vector<MCCell>& cells, std::ostream& out,
                  const std::string& header_comment);

// Worker-count resolution: explicit argument, else SHIFTFUSE_THREADS, else
// hardware concurrency.
int resolve_workers(int requested);

}  // namespace shiftfuse
