#pragma once

// Parametric working models: logistic regressions for the trial-membership
// probabilities k(x) and rho(x,y), least-squares outcome regressions
// mu_t(x), and the trial treatment frequency.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftfuse/data.hpp"
#include "shiftfuse/errors.hpp"

namespace shiftfuse {

enum class TermKind { Intercept, Linear, Square, Exp, Outcome };

struct Term {
    TermKind kind = TermKind::Intercept;
    int index = -1;  // covariate index for Linear/Square/Exp

    friend bool operator==(const Term& a, const Term& b) {
        return a.kind == b.kind && (a.kind == TermKind::Intercept ||
                                    a.kind == TermKind::Outcome || a.index == b.index);
    }
};

inline Term intercept() { return {TermKind::Intercept, -1}; }
inline Term linear(int j) { return {TermKind::Linear, j}; }
inline Term square(int j) { return {TermKind::Square, j}; }
inline Term exp_of(int j) { return {TermKind::Exp, j}; }
inline Term outcome() { return {TermKind::Outcome, -1}; }

struct FeatureBasis {
    std::vector<Term> terms;

    std::size_t size() const noexcept { return terms.size(); }
    bool has_outcome() const noexcept;
    int max_covariate_index() const noexcept;
    void validate(bool outcome_allowed) const;
};

// Term <-> string, e.g. "Intercept", "Linear(2)", "Outcome". Used by model
// JSON and by CLI configs.
std::string term_to_string(const Term& term);
Term term_from_string(const std::string& s);

// Feature vector for one row, in basis order. y must be supplied exactly
// when the basis contains the Outcome term.
Eigen::VectorXd design_row(const FeatureBasis& basis, std::span<const double> x,
                           std::optional<double> y = std::nullopt);

struct LogisticModel {
    FeatureBasis basis;
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;

    // expit(design . coef)
    double predict(std::span<const double> x, std::optional<double> y = std::nullopt) const;
};

struct OutcomeModel {
    int arm = 0;  // fitted treatment arm
    FeatureBasis basis;
    Eigen::VectorXd coef;

    double predict(std::span<const double> x) const;
};

enum class FitPopulation { TrialOnly, Pooled };

// Weighted Bernoulli maximum likelihood by IRLS with step-halving.
// Convergence: max |score|/N < 1e-8 or step norm < 1e-10, within 100
// iterations. Complete separation and rank deficiency are errors.
LogisticModel fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                           const Eigen::VectorXd& weights, FeatureBasis basis);

// Least squares of y on design_row over rows with the given arm (and r=1
// when TrialOnly).
OutcomeModel fit_outcome(const Dataset& ds, int arm, const FeatureBasis& basis,
                         FitPopulation population = FitPopulation::TrialOnly);

// Logistic regression of r on design_row(x) over all rows.
LogisticModel fit_k(const Dataset& ds, const FeatureBasis& basis);

// Logistic regression of r on design_row(x,y) over untreated rows only.
LogisticModel fit_rho(const Dataset& ds, const FeatureBasis& basis);

// #{T=1}/n over trial rows.
double estimate_pi(const Dataset& ds);

inline double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// JSON document {basis:[...], coef:[...], converged, iterations} for reuse
// across CLI invocations.
std::string logistic_model_to_json(const LogisticModel& m);
LogisticModel logistic_model_from_json(const std::string& text);
std::string outcome_model_to_json(const OutcomeModel& m);
OutcomeModel outcome_model_from_json(const std::string& text);

}  // namespace shiftfuse
