#include "shiftfuse/shift.hpp"

#include <cmath>
#include <limits>

namespace shiftfuse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double clamp_unit(double v, ClampStats* stats) {
    if (v < kWeightClamp) {
        if (stats) ++stats->clamped;
        return kWeightClamp;
    }
    if (v > 1.0 - kWeightClamp) {
        if (stats) ++stats->clamped;
        return 1.0 - kWeightClamp;
    }
    return v;
}

void check_open_unit(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0))
        throw DomainError(std::string(name) + " must lie strictly in (0,1)");
}

}  // namespace

ShiftWeights eval_weights(const Dataset& ds, const LogisticModel& k_model,
                          const LogisticModel& rho_model) {
    if (k_model.basis.has_outcome())
        throw UsageError("eval_weights: k model basis must not contain Outcome");
    if (!rho_model.basis.has_outcome())
        throw UsageError("eval_weights: rho model basis must contain Outcome");
    const int need = std::max(k_model.basis.max_covariate_index(),
                              rho_model.basis.max_covariate_index());
    if (need >= static_cast<int>(ds.dim()))
        throw DimensionError("eval_weights: model basis needs covariate index " +
                             std::to_string(need) + " but dataset has dimension " +
                             std::to_string(ds.dim()));
    ShiftWeights w;
    w.source = WeightSource::Fitted;
    w.k.resize(ds.n_total());
    w.rho.resize(ds.n_total());
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        w.k[i] = k_model.predict(rec.x);
        w.rho[i] = (rec.t == 0) ? rho_model.predict(rec.x, rec.y) : kNaN;
    }
    return w;
}

ShiftWeights unit_weights(const Dataset& ds) {
    ShiftWeights w;
    w.source = WeightSource::Unit;
    w.k.assign(ds.n_total(), 1.0);
    w.rho.resize(ds.n_total());
    for (std::size_t i = 0; i < ds.n_total(); ++i)
        w.rho[i] = (ds[i].t == 0) ? 1.0 : kNaN;
    return w;
}

ShiftWeights oracle_weights(const Dataset& ds, const DGPSpec& dgp) {
    const LogisticModel km = true_gaussian_k(dgp);
    const LogisticModel rm = true_gaussian_rho(dgp);
    ShiftWeights w = eval_weights(ds, km, rm);
    w.source = WeightSource::Oracle;
    return w;
}

double a_from_k(double k, double kappa, ClampStats* stats) {
    check_open_unit(kappa, "kappa");
    if (!(k > 0.0 && k <= 1.0)) throw DomainError("k must lie in (0,1]");
    k = clamp_unit(k, stats);
    return kappa * (1.0 - k) / ((1.0 - kappa) * k);
}

double ab_from_rho(double rho, double kappa, double pi, ClampStats* stats) {
    check_open_unit(kappa, "kappa");
    check_open_unit(pi, "pi");
    if (!(rho > 0.0 && rho <= 1.0)) throw DomainError("rho must lie in (0,1]");
    rho = clamp_unit(rho, stats);
    return kappa * (1.0 - pi) * (1.0 - rho) / ((1.0 - kappa) * rho);
}

double k_from_a(double a, double kappa) {
    check_open_unit(kappa, "kappa");
    if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("a must be finite and nonnegative");
    return kappa / (kappa + (1.0 - kappa) * a);
}

double rho_from_ab(double ab, double kappa, double pi) {
    check_open_unit(kappa, "kappa");
    check_open_unit(pi, "pi");
    if (!(ab >= 0.0) || !std::isfinite(ab)) throw DomainError("ab must be finite and nonnegative");
    const double c = kappa * (1.0 - pi);
    return c / (c + (1.0 - kappa) * ab);
}

namespace {

// Quadratic expansion of log{ N(x; mq,sq) / N(x; mp,sp) } as
// c0 + c1 x + c2 x^2.
struct LogRatioPoly {
    double c0, c1, c2;
};

LogRatioPoly gaussian_log_ratio(double mp, double sp, double mq, double sq) {
    const double vp = sp * sp, vq = sq * sq;
    LogRatioPoly r;
    r.c2 = -0.5 / vq + 0.5 / vp;
    r.c1 = mq / vq - mp / vp;
    r.c0 = 0.5 * std::log(vp / vq) - mq * mq / (2.0 * vq) + mp * mp / (2.0 * vp);
    return r;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

LogisticModel true_gaussian_k(const DGPSpec& dgp) {
    dgp.validate();
    const double kappa = dgp.kappa();
    // log a(x): EC covariate density over trial covariate density.
    const LogRatioPoly la = gaussian_log_ratio(dgp.trial_x[0], dgp.trial_x[1],
                                               dgp.ec_x[0], dgp.ec_x[1]);
    LogisticModel m;
    m.basis.terms = {intercept(), linear(0), square(0)};
    m.coef.resize(3);
    m.coef << logit(kappa) - la.c0, -la.c1, -la.c2;
    m.converged = true;
    m.iterations = 0;
    return m;
}

LogisticModel true_gaussian_rho(const DGPSpec& dgp) {
    dgp.validate();
    const double kappa = dgp.kappa();
    const double v = dgp.outcome_sd * dgp.outcome_sd;
    const double off = dgp.ec_offset;
    const LogRatioPoly la = gaussian_log_ratio(dgp.trial_x[0], dgp.trial_x[1],
                                               dgp.ec_x[0], dgp.ec_x[1]);
    // log b(x,y) = off/v * {y - mu0(x)} - off^2/(2v); common outcome variance
    // and a pure location shift keep it linear in (1, x, exp(x), y).
    const double by = off / v;
    LogisticModel m;
    m.basis.terms = {intercept(), linear(0), square(0), exp_of(0), outcome()};
    m.coef.resize(5);
    m.coef << std::log(kappa * (1.0 - dgp.pi) / (1.0 - kappa)) - la.c0 +
                  by * dgp.mu0_coef[0] + off * off / (2.0 * v),
        -la.c1 + by * dgp.mu0_coef[1], -la.c2, by * dgp.mu0_coef[2], -by;
    m.converged = true;
    m.iterations = 0;
    return m;
}

std::pair<double, double> calibration_residuals(
    const Dataset& ds, const ShiftWeights& w, double pi,
    const std::function<double(std::span<const double>)>& g1,
    const std::function<double(std::span<const double>, double)>& g2, ClampStats* stats) {
    const std::size_t N = ds.n_total();
    if (N == 0) throw SizeError("calibration_residuals: empty dataset");
    if (w.k.size() != N || w.rho.size() != N)
        throw DimensionError("calibration_residuals: weight arrays do not match dataset");
    const double kappa = ds.kappa_hat();
    check_open_unit(pi, "pi");
    if (!(kappa > 0.0 && kappa < 1.0))
        throw DomainError("calibration_residuals: kappa_hat must lie in (0,1)");
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = ds[i];
        const double a = a_from_k(w.k[i], kappa, stats);
        const double bal1 = (rec.r ? a / kappa : -1.0 / (1.0 - kappa));
        m1 += bal1 * g1(rec.x);
        if (rec.t == 0) {
            if (!w.has_rho(i))
                throw UsageError("calibration_residuals: rho undefined on untreated row " +
                                 std::to_string(i));
            const double ab = ab_from_rho(w.rho[i], kappa, pi, stats);
            const double bal2 = (rec.r ? ab / (kappa * (1.0 - pi)) : -1.0 / (1.0 - kappa));
            m2 += bal2 * g2(rec.x, rec.y);
        }
    }
    return {m1 / static_cast<double>(N), m2 / static_cast<double>(N)};
}

}  // namespace shiftfuse
