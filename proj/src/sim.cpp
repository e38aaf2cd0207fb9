#include "shiftfuse/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <thread>

#include "shiftfuse/estimators.hpp"
#include "shiftfuse/rng.hpp"
#include "shiftfuse/shift.hpp"

namespace shiftfuse {

Dataset generate(const DGPSpec& dgp, std::uint64_t seed) {
    dgp.validate();
    Rng rng(seed);
    std::vector<Record> recs;
    recs.reserve(dgp.N);
    for (std::size_t i = 0; i < dgp.n; ++i) {
        Record rec;
        rec.r = 1;
        const double x = rng.normal(dgp.trial_x[0], dgp.trial_x[1]);
        rec.t = rng.bernoulli(dgp.pi) ? 1 : 0;
        const double mean = rec.t ? dgp.mu1(x) : dgp.mu0(x);
        rec.y = mean + dgp.outcome_sd * rng.normal();
        rec.x = {x};
        recs.push_back(std::move(rec));
    }
    for (std::size_t i = dgp.n; i < dgp.N; ++i) {
        Record rec;
        rec.r = 0;
        rec.t = 0;
        const double x = rng.normal(dgp.ec_x[0], dgp.ec_x[1]);
        rec.y = dgp.ec_offset + dgp.mu0(x) + dgp.outcome_sd * rng.normal();
        rec.x = {x};
        recs.push_back(std::move(rec));
    }
    return Dataset(std::move(recs));
}

std::array<double, 3> true_tau(const DGPSpec& dgp) {
    dgp.validate();
    const double m = dgp.trial_x[0], s = dgp.trial_x[1];
    const double e_exp = std::exp(m + 0.5 * s * s);  // lognormal moment E[exp(X)]
    const double t1 = dgp.mu1_coef[0] + dgp.mu1_coef[1] * m + dgp.mu1_coef[2] * e_exp;
    const double t0 = dgp.mu0_coef[0] + dgp.mu0_coef[1] * m + dgp.mu0_coef[2] * e_exp;
    return {t1, t0, t1 - t0};
}

FeatureBasis mu_basis_true() { return FeatureBasis{{intercept(), linear(0), exp_of(0)}}; }
FeatureBasis mu_basis_misspec() { return FeatureBasis{{intercept(), linear(0)}}; }
FeatureBasis k_basis_true() { return FeatureBasis{{intercept(), linear(0), square(0)}}; }
FeatureBasis k_basis_misspec() { return FeatureBasis{{intercept(), linear(0)}}; }
FeatureBasis rho_basis_true() {
    return FeatureBasis{{intercept(), linear(0), square(0), exp_of(0), outcome()}};
}
FeatureBasis rho_basis_misspec() {
    return FeatureBasis{{intercept(), linear(0), outcome()}};
}

std::vector<ScenarioSpec> default_scenarios() {
    std::vector<ScenarioSpec> s(4);
    s[0] = {true, true, true, 0.0, WeightSource::Fitted};
    s[1] = {false, true, true, 0.0, WeightSource::Fitted};
    s[2] = {true, false, false, 0.0, WeightSource::Fitted};
    s[3] = {false, false, false, 0.0, WeightSource::Fitted};
    return s;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SHIFTFUSE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Per-replication result: value and plug-in SE for
// {trial_only, augmented, shrinkage} x {tau1, tau0, tau}.
struct RepResult {
    bool ok = false;
    double val[3][3] = {};
    double se[3][3] = {};
};

struct Regime {
    std::string label;
    bool oracle = false;
    double multiplier = 0.0;  // used when not oracle
    ScenarioSpec scenario;    // bases + weight source
};

RepResult run_replication(const DGPSpec& dgp, const Regime& regime, std::uint64_t rep_seed) {
    RepResult out;
    try {
        const Dataset ds = generate(dgp, Rng::derive(rep_seed, 1));
        const double pi_hat = estimate_pi(ds);
        const ScenarioSpec& sc = regime.scenario;
        const FeatureBasis mu_b = sc.mu_correct ? mu_basis_true() : mu_basis_misspec();
        const OutcomeModel mu1 = fit_outcome(ds, 1, mu_b, FitPopulation::TrialOnly);
        const OutcomeModel mu0 = fit_outcome(ds, 0, mu_b, FitPopulation::TrialOnly);

        ShiftWeights w;
        if (regime.oracle || sc.weight_source == WeightSource::Oracle) {
            w = oracle_weights(ds, dgp);
        } else {
            const FeatureBasis k_b = sc.k_correct ? k_basis_true() : k_basis_misspec();
            const FeatureBasis r_b = sc.rho_correct ? rho_basis_true() : rho_basis_misspec();
            if (regime.multiplier > 0.0) {
                DGPSpec vspec = dgp;
                vspec.n = static_cast<std::size_t>(std::lround(regime.multiplier * dgp.n));
                vspec.N = static_cast<std::size_t>(std::lround(regime.multiplier * dgp.N));
                const Dataset val = generate(vspec, Rng::derive(rep_seed, 2));
                w = eval_weights(ds, fit_k(val, k_b), fit_rho(val, r_b));
            } else {
                w = eval_weights(ds, fit_k(ds, k_b), fit_rho(ds, r_b));
            }
        }

        const EstimateTriple dr = tau_trial_dr(ds, mu1, mu0, pi_hat);
        const EstimateTriple aug = tau_augmented(ds, w, mu1, mu0, pi_hat);
        const InfluenceValues iv =
            influence_values(ds, w, mu1, mu0, pi_hat, aug.tau1.value, aug.tau0.value);
        const auto s1 = shrink(dr.tau1, aug.tau1, iv, ArmTag::Tau1);
        const auto s0 = shrink(dr.tau0, aug.tau0, iv, ArmTag::Tau0);
        const auto st = shrink_combined(dr.tau, aug.tau, iv);

        const Estimate* ests[3][3] = {{&dr.tau1, &dr.tau0, &dr.tau},
                                      {&aug.tau1, &aug.tau0, &aug.tau},
                                      {&s1.first, &s0.first, &st.first}};
        for (int e = 0; e < 3; ++e)
            for (int a = 0; a < 3; ++a) {
                out.val[e][a] = ests[e][a]->value;
                out.se[e][a] = ests[e][a]->se;
            }
        out.ok = true;
    } catch (const Error&) {
        out.ok = false;  // counted per regime; see summarize
    }
    return out;
}

// Neumaier compensated sum; the reduction order is fixed (replication
// index), so summaries are identical for any worker count.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        comp_ += (std::abs(sum_) >= std::abs(v)) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0, comp_ = 0.0;
};

void summarize(const std::string& regime_label, const std::vector<RepResult>& reps,
               const std::array<double, 3>& truth, std::vector<MCCell>& out) {
    static const char* kEstimators[3] = {"trial_only", "augmented", "shrinkage"};
    static const char* kEstimands[3] = {"tau1", "tau0", "tau"};
    for (int e = 0; e < 3; ++e)
        for (int a = 0; a < 3; ++a) {
            MCCell cell;
            cell.regime = regime_label;
            cell.estimator = kEstimators[e];
            cell.estimand = kEstimands[a];
            CompensatedSum sum, sum_se;
            long count = 0, covered = 0;
            for (const RepResult& r : reps) {
                if (!r.ok) continue;
                ++count;
                sum.add(r.val[e][a]);
                sum_se.add(r.se[e][a]);
                if (std::abs(r.val[e][a] - truth[a]) <= kNormalQuantile975 * r.se[e][a]) ++covered;
            }
            cell.reps = count;
            if (count > 0) {
                cell.mean = sum.value() / count;
                cell.bias = cell.mean - truth[a];
                CompensatedSum ss;
                for (const RepResult& r : reps) {
                    if (!r.ok) continue;
                    const double d = r.val[e][a] - cell.mean;
                    ss.add(d * d);
                }
                cell.sd = count > 1 ? std::sqrt(ss.value() / (count - 1.0)) : 0.0;
                cell.mean_se = sum_se.value() / count;
                cell.coverage = static_cast<double>(covered) / count;
            }
            out.push_back(cell);
        }
}

std::vector<MCCell> run_regimes(const DGPSpec& dgp, const std::vector<Regime>& regimes,
                                int replications, std::uint64_t seed, int workers) {
    if (replications < 1) throw UsageError("experiments need at least 1 replication");
    const std::array<double, 3> truth = true_tau(dgp);
    const int nw = std::max(1, std::min(resolve_workers(workers), replications));
    std::vector<MCCell> cells;
    for (std::size_t g = 0; g < regimes.size(); ++g) {
        std::vector<RepResult> reps(replications);
        // Replication seeds depend only on (seed, replication index), so
        // scheduling cannot change the results and regimes share primary
        // draws (common random numbers for cross-regime comparisons).
        auto work = [&](int first, int step) {
            for (int r = first; r < replications; r += step)
                reps[r] = run_replication(dgp, regimes[g],
                                          Rng::derive(seed, static_cast<std::uint64_t>(r)));
        };
        if (nw == 1) {
            work(0, 1);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(nw);
            for (int t = 0; t < nw; ++t) pool.emplace_back(work, t, nw);
            for (auto& th : pool) th.join();
        }
        summarize(regimes[g].label, reps, truth, cells);
    }
    return cells;
}

std::string format_multiplier(double m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", m);
    return buf;
}

}  // namespace

std::vector<MCCell> run_experiment1(const DGPSpec& dgp, const std::vector<double>& multipliers,
                                    int replications, std::uint64_t seed, int workers) {
    std::vector<Regime> regimes;
    for (double m : multipliers) {
        if (m < 0.0) throw DomainError("experiment 1: negative validation multiplier");
        Regime reg;
        reg.label = (m == 0.0) ? "no_validation" : "validation_" + format_multiplier(m);
        reg.multiplier = m;
        regimes.push_back(std::move(reg));
    }
    Regime oracle;
    oracle.label = "oracle";
    oracle.oracle = true;
    regimes.push_back(std::move(oracle));
    return run_regimes(dgp, regimes, replications, seed, workers);
}

std::vector<MCCell> run_experiment2(const DGPSpec& dgp, const std::vector<ScenarioSpec>& scenarios,
                                    int replications, std::uint64_t seed, int workers) {
    static const char* kRoman[4] = {"i", "ii", "iii", "iv"};
    std::vector<Regime> regimes;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        scenarios[s].validate();
        Regime reg;
        reg.label = "scenario_" +
                    (s < 4 ? std::string(kRoman[s]) : std::to_string(s + 1));
        reg.scenario = scenarios[s];
        reg.multiplier = scenarios[s].validation_multiplier;
        regimes.push_back(std::move(reg));
    }
    return run_regimes(dgp, regimes, replications, seed, workers);
}

void write_mc_csv(const std::vector<MCCell>& cells, std::ostream& out,
                  const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "regime,estimator,estimand,reps,mean,bias,sd,mean_se,coverage\n";
    char buf[200];
    for (const MCCell& c : cells) {
        std::snprintf(buf, sizeof(buf), "%ld,%.10g,%.10g,%.10g,%.10g,%.6g", c.reps, c.mean,
                      c.bias, c.sd, c.mean_se, c.coverage);
        out << c.regime << ',' << c.estimator << ',' << c.estimand << ',' << buf << "\n";
    }
}

}  // namespace shiftfuse
