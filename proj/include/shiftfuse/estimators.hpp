#pragma once

// Point estimators for tau_1, tau_0, tau: gold-standard arm means,
// trial-only doubly robust, EC-augmented, and adaptive shrinkage; plug-in,
// validation-corrected, and bootstrap variance estimation.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "shiftfuse/data.hpp"
#include "shiftfuse/nuisance.hpp"
#include "shiftfuse/shift.hpp"

namespace shiftfuse {

// Normal 97.5% quantile; all limit theory here is Gaussian.
inline constexpr double kNormalQuantile975 = 1.959964;

enum class Method { GoldStandard, TrialDR, Augmented, Shrinkage };
enum class ArmTag { Tau1, Tau0, Tau };

const char* method_name(Method m);
const char* arm_name(ArmTag a);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    Method method = Method::GoldStandard;
    ArmTag arm = ArmTag::Tau;
};

Estimate make_estimate(double value, double se, Method method, ArmTag arm);

struct EstimateTriple {
    Estimate tau1, tau0, tau;
};

// Rowwise influence values: trial-only (psi_tilde) and augmented (psi)
// estimating functions evaluated at plug-in nuisances and a common
// (tau1, tau0).
struct InfluenceValues {
    std::vector<double> psi_tilde1, psi_tilde0, psi1, psi0;
    double kappa_hat = 0.0;
    double pi_hat = 0.0;
    double tau1 = 0.0;
    double tau0 = 0.0;

    std::size_t size() const noexcept { return psi1.size(); }
};

struct ShrinkageDiagnostics {
    double lambda_star = 0.0;  // variance-optimal shrinkage weight
    double delta = 1.0;        // adaptive factor in (0,1]
    double lambda_n = 0.0;     // delta * lambda_star
    double var_diff = 0.0;     // var(tau_hat - tau_tilde)
    double cov_term = 0.0;     // cov(tau_hat - tau_tilde, tau_tilde)
    double sigma2 = 0.0;       // var at lambda_star, capped reporting below
};

struct ValidationVariance {
    Eigen::RowVectorXd gamma1, gamma0, gamma_rho;
    Eigen::MatrixXd phi_var;  // joint influence covariance of (alpha, beta)
    double xi_hat = 0.0;      // m/N
    double sigma2_val_tau1 = 0.0;  // corrected asymptotic variances (per sqrt(N))
    double sigma2_val_tau0 = 0.0;
    double sigma2_val_tau = 0.0;

    double se_tau1(std::size_t N) const;
    double se_tau0(std::size_t N) const;
    double se_tau(std::size_t N) const;
};

// Unadjusted treated/control sample means within the trial.
EstimateTriple tau_gold(const Dataset& ds);

// Trial-only doubly robust estimators solving the efficient influence
// function estimating equations.
EstimateTriple tau_trial_dr(const Dataset& ds, const OutcomeModel& mu1, const OutcomeModel& mu0,
                            double pi_hat);

// EC-augmented estimators; weight-level core plus model-level convenience.
Estimate tau1_aug(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                  double pi_hat);
Estimate tau0_aug(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu0,
                  double pi_hat);
Estimate tau1_aug(const Dataset& ds, const LogisticModel& k_model, const OutcomeModel& mu1,
                  double pi_hat);
Estimate tau0_aug(const Dataset& ds, const LogisticModel& k_model, const LogisticModel& rho_model,
                  const OutcomeModel& mu0, double pi_hat);
EstimateTriple tau_augmented(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                             const OutcomeModel& mu0, double pi_hat);

InfluenceValues influence_values(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                                 const OutcomeModel& mu0, double pi_hat, double tau1, double tau0);

// sqrt(mean(psi^2)/N) for the augmented function of the chosen target.
double var_plugin(const InfluenceValues& iv, ArmTag target);

// Same for the trial-only function.
double var_plugin_trial(const InfluenceValues& iv, ArmTag target);

// Plug-in second moments of the estimator pair (all on the estimator
// variance scale N^{-2} sum); shared by shrink and by variance reporting.
struct InfluenceMoments {
    double var_tilde = 0.0;
    double var_hat = 0.0;
    double cov = 0.0;       // cov(tau_hat, tau_tilde)
    double var_diff = 0.0;  // var(tau_hat - tau_tilde)
    double cov_diff = 0.0;  // cov(tau_hat - tau_tilde, tau_tilde)
};
InfluenceMoments influence_moments(const InfluenceValues& iv, ArmTag arm);

// Variance correction for shift models estimated on an independent
// validation sample: sigma2 = E(psi^2) + xi^{-1} Gamma var(phi) Gamma'.
ValidationVariance var_validation(const Dataset& primary, const InfluenceValues& iv,
                                  const Dataset& validation, const LogisticModel& k_model,
                                  const LogisticModel& rho_model, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1, double pi_hat);

// Adaptive shrinkage of tau_hat toward tau_tilde. The reported SE is
// sqrt(min{sigma2, var(tau_tilde)}), which is the dominance guarantee.
std::pair<Estimate, ShrinkageDiagnostics> shrink(const Estimate& tau_tilde,
                                                 const Estimate& tau_hat,
                                                 const InfluenceValues& iv, ArmTag arm);

// Single shrinkage estimator for tau built from the differenced influence
// arrays.
std::pair<Estimate, ShrinkageDiagnostics> shrink_combined(const Estimate& tau_tilde,
                                                          const Estimate& tau_hat,
                                                          const InfluenceValues& iv);

struct BootstrapSpec {
    FeatureBasis k_basis, rho_basis, mu_basis;
    FitPopulation mu_population = FitPopulation::TrialOnly;
};

struct SETriple {
    double tau1 = 0.0, tau0 = 0.0, tau = 0.0;
};

struct BootstrapResult {
    SETriple gold, trial_dr, augmented, shrinkage;
    int replicates = 0;
};

// Nonparametric bootstrap stratified by (r,t); nuisances are refitted on
// every resample. Deterministic given seed; replicate b uses the derived
// stream (seed, b), so extending B keeps earlier replicates identical.
BootstrapResult bootstrap_se(const Dataset& ds, const BootstrapSpec& spec, int B,
                             std::uint64_t seed);

}  // namespace shiftfuse
