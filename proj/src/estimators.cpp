#include "shiftfuse/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shiftfuse/rng.hpp"

namespace shiftfuse {

const char* method_name(Method m) {
    switch (m) {
        case Method::GoldStandard: return "GoldStandard";
        case Method::TrialDR: return "TrialDR";
        case Method::Augmented: return "Augmented";
        case Method::Shrinkage: return "Shrinkage";
    }
    return "?";
}

const char* arm_name(ArmTag a) {
    switch (a) {
        case ArmTag::Tau1: return "tau1";
        case ArmTag::Tau0: return "tau0";
        case ArmTag::Tau: return "tau";
    }
    return "?";
}

Estimate make_estimate(double value, double se, Method method, ArmTag arm) {
    Estimate e;
    e.value = value;
    e.se = se;
    e.ci_lo = value - kNormalQuantile975 * se;
    e.ci_hi = value + kNormalQuantile975 * se;
    e.method = method;
    e.arm = arm;
    return e;
}

namespace {

void check_pi(double pi_hat) {
    if (!(pi_hat > 0.0 && pi_hat < 1.0))
        throw DomainError("pi_hat must lie strictly in (0,1)");
}

double mean_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
}

// Per-row mu predictions, computed once.
std::vector<double> predict_all(const Dataset& ds, const OutcomeModel& m) {
    std::vector<double> out(ds.n_total());
    for (std::size_t i = 0; i < ds.n_total(); ++i) out[i] = m.predict(ds[i].x);
    return out;
}

void check_weights(const Dataset& ds, const ShiftWeights& w) {
    if (w.k.size() != ds.n_total() || w.rho.size() != ds.n_total())
        throw DimensionError("shift weights do not match dataset size");
}

}  // namespace

EstimateTriple tau_gold(const Dataset& ds) {
    double s1 = 0.0, s0 = 0.0, ss1 = 0.0, ss0 = 0.0;
    std::size_t n1 = 0, n0 = 0;
    for (const Record& rec : ds.records()) {
        if (rec.r != 1) continue;
        if (rec.t == 1) {
            s1 += rec.y;
            ss1 += rec.y * rec.y;
            ++n1;
        } else {
            s0 += rec.y;
            ss0 += rec.y * rec.y;
            ++n0;
        }
    }
    if (n1 == 0 || n0 == 0) throw SizeError("tau_gold: a trial arm is empty");
    const double m1 = s1 / n1, m0 = s0 / n0;
    const double var1 = (n1 > 1) ? (ss1 - n1 * m1 * m1) / (n1 - 1.0) : 0.0;
    const double var0 = (n0 > 1) ? (ss0 - n0 * m0 * m0) / (n0 - 1.0) : 0.0;
    const double se1 = std::sqrt(std::max(var1, 0.0) / n1);
    const double se0 = std::sqrt(std::max(var0, 0.0) / n0);
    EstimateTriple out;
    out.tau1 = make_estimate(m1, se1, Method::GoldStandard, ArmTag::Tau1);
    out.tau0 = make_estimate(m0, se0, Method::GoldStandard, ArmTag::Tau0);
    out.tau = make_estimate(m1 - m0, std::sqrt(se1 * se1 + se0 * se0), Method::GoldStandard,
                            ArmTag::Tau);
    return out;
}

EstimateTriple tau_trial_dr(const Dataset& ds, const OutcomeModel& mu1, const OutcomeModel& mu0,
                            double pi_hat) {
    check_pi(pi_hat);
    const std::size_t n = ds.n_trial();
    if (n == 0) throw SizeError("tau_trial_dr: no trial rows");
    double t1 = 0.0, t0 = 0.0;
    std::vector<double> m1v = predict_all(ds, mu1), m0v = predict_all(ds, mu0);
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        if (rec.r != 1) continue;
        t1 += rec.t * (rec.y - m1v[i]) / pi_hat + m1v[i];
        t0 += (1 - rec.t) * (rec.y - m0v[i]) / (1.0 - pi_hat) + m0v[i];
    }
    t1 /= static_cast<double>(n);
    t0 /= static_cast<double>(n);
    // Plug-in SEs from the trial-only influence functions at (t1, t0).
    const ShiftWeights unit = unit_weights(ds);
    InfluenceValues iv = influence_values(ds, unit, mu1, mu0, pi_hat, t1, t0);
    EstimateTriple out;
    out.tau1 = make_estimate(t1, var_plugin_trial(iv, ArmTag::Tau1), Method::TrialDR, ArmTag::Tau1);
    out.tau0 = make_estimate(t0, var_plugin_trial(iv, ArmTag::Tau0), Method::TrialDR, ArmTag::Tau0);
    out.tau = make_estimate(t1 - t0, var_plugin_trial(iv, ArmTag::Tau), Method::TrialDR,
                            ArmTag::Tau);
    return out;
}

namespace {

// Shared core of the augmented estimators: numerator terms and sum of k.
struct AugParts {
    double resid1 = 0.0;   // sum r t (y - mu1) / pi
    double resid0 = 0.0;   // sum (1-t) rho (y - mu0) / (1-pi)
    double kmu1 = 0.0;     // sum k mu1
    double kmu0 = 0.0;     // sum k mu0
    double ksum = 0.0;     // sum k
};

AugParts augmented_parts(const Dataset& ds, const ShiftWeights& w, const std::vector<double>& m1v,
                         const std::vector<double>& m0v, double pi_hat) {
    AugParts p;
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        const double k = w.k[i];
        if (!(k > 0.0 && k <= 1.0))
            throw DomainError("augmented estimator: k weight outside (0,1] at row " +
                              std::to_string(i));
        if (rec.r == 1 && rec.t == 1) p.resid1 += (rec.y - m1v[i]) / pi_hat;
        if (rec.t == 0) {
            if (!w.has_rho(i))
                throw UsageError("augmented estimator: rho undefined on untreated row " +
                                 std::to_string(i));
            p.resid0 += w.rho[i] * (rec.y - m0v[i]) / (1.0 - pi_hat);
        }
        p.kmu1 += k * m1v[i];
        p.kmu0 += k * m0v[i];
        p.ksum += k;
    }
    if (!(p.ksum > 0.0)) throw DomainError("augmented estimator: sum of k weights is zero");
    return p;
}

}  // namespace

namespace {

double plugin_se_psi1(const Dataset& ds, const ShiftWeights& w, const std::vector<double>& m1v,
                      double pi_hat, double tau1) {
    const double kappa = ds.kappa_hat();
    const std::size_t N = ds.n_total();
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = ds[i];
        const double psi = rec.r * rec.t * (rec.y - m1v[i]) / (kappa * pi_hat) +
                           w.k[i] * (m1v[i] - tau1) / kappa;
        s += psi * psi;
    }
    return std::sqrt(s / static_cast<double>(N)) / std::sqrt(static_cast<double>(N));
}

double plugin_se_psi0(const Dataset& ds, const ShiftWeights& w, const std::vector<double>& m0v,
                      double pi_hat, double tau0) {
    const double kappa = ds.kappa_hat();
    const std::size_t N = ds.n_total();
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = ds[i];
        double psi = w.k[i] * (m0v[i] - tau0) / kappa;
        if (rec.t == 0) psi += w.rho[i] * (rec.y - m0v[i]) / (kappa * (1.0 - pi_hat));
        s += psi * psi;
    }
    return std::sqrt(s / static_cast<double>(N)) / std::sqrt(static_cast<double>(N));
}

}  // namespace

Estimate tau1_aug(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                  double pi_hat) {
    check_pi(pi_hat);
    check_weights(ds, w);
    const std::vector<double> m1v = predict_all(ds, mu1);
    double resid1 = 0.0, kmu1 = 0.0, ksum = 0.0;
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        const double k = w.k[i];
        if (!(k > 0.0 && k <= 1.0))
            throw DomainError("tau1_aug: k weight outside (0,1] at row " + std::to_string(i));
        if (rec.r == 1 && rec.t == 1) resid1 += (rec.y - m1v[i]) / pi_hat;
        kmu1 += k * m1v[i];
        ksum += k;
    }
    if (!(ksum > 0.0)) throw DomainError("tau1_aug: sum of k weights is zero");
    const double tau1 = (resid1 + kmu1) / ksum;
    return make_estimate(tau1, plugin_se_psi1(ds, w, m1v, pi_hat, tau1), Method::Augmented,
                         ArmTag::Tau1);
}

Estimate tau0_aug(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu0,
                  double pi_hat) {
    check_pi(pi_hat);
    check_weights(ds, w);
    const std::vector<double> m0v = predict_all(ds, mu0);
    double resid0 = 0.0, kmu0 = 0.0, ksum = 0.0;
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        const double k = w.k[i];
        if (!(k > 0.0 && k <= 1.0))
            throw DomainError("tau0_aug: k weight outside (0,1] at row " + std::to_string(i));
        if (rec.t == 0) {
            if (!w.has_rho(i))
                throw UsageError("tau0_aug: rho undefined on untreated row " + std::to_string(i));
            resid0 += w.rho[i] * (rec.y - m0v[i]) / (1.0 - pi_hat);
        }
        kmu0 += k * m0v[i];
        ksum += k;
    }
    if (!(ksum > 0.0)) throw DomainError("tau0_aug: sum of k weights is zero");
    const double tau0 = (resid0 + kmu0) / ksum;
    return make_estimate(tau0, plugin_se_psi0(ds, w, m0v, pi_hat, tau0), Method::Augmented,
                         ArmTag::Tau0);
}

Estimate tau1_aug(const Dataset& ds, const LogisticModel& k_model, const OutcomeModel& mu1,
                  double pi_hat) {
    ShiftWeights w;
    w.k.resize(ds.n_total());
    w.rho.assign(ds.n_total(), 1.0);
    for (std::size_t i = 0; i < ds.n_total(); ++i) w.k[i] = k_model.predict(ds[i].x);
    return tau1_aug(ds, w, mu1, pi_hat);
}

Estimate tau0_aug(const Dataset& ds, const LogisticModel& k_model, const LogisticModel& rho_model,
                  const OutcomeModel& mu0, double pi_hat) {
    return tau0_aug(ds, eval_weights(ds, k_model, rho_model), mu0, pi_hat);
}

EstimateTriple tau_augmented(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                             const OutcomeModel& mu0, double pi_hat) {
    check_pi(pi_hat);
    check_weights(ds, w);
    const std::vector<double> m1v = predict_all(ds, mu1);
    const std::vector<double> m0v = predict_all(ds, mu0);
    const AugParts p = augmented_parts(ds, w, m1v, m0v, pi_hat);
    const double t1 = (p.resid1 + p.kmu1) / p.ksum;
    const double t0 = (p.resid0 + p.kmu0) / p.ksum;
    InfluenceValues iv = influence_values(ds, w, mu1, mu0, pi_hat, t1, t0);
    EstimateTriple out;
    out.tau1 = make_estimate(t1, var_plugin(iv, ArmTag::Tau1), Method::Augmented, ArmTag::Tau1);
    out.tau0 = make_estimate(t0, var_plugin(iv, ArmTag::Tau0), Method::Augmented, ArmTag::Tau0);
    out.tau = make_estimate(t1 - t0, var_plugin(iv, ArmTag::Tau), Method::Augmented, ArmTag::Tau);
    return out;
}

InfluenceValues influence_values(const Dataset& ds, const ShiftWeights& w, const OutcomeModel& mu1,
                                 const OutcomeModel& mu0, double pi_hat, double tau1,
                                 double tau0) {
    check_pi(pi_hat);
    check_weights(ds, w);
    const std::size_t N = ds.n_total();
    if (N == 0) throw SizeError("influence_values: empty dataset");
    const double kappa = ds.kappa_hat();
    InfluenceValues iv;
    iv.kappa_hat = kappa;
    iv.pi_hat = pi_hat;
    iv.tau1 = tau1;
    iv.tau0 = tau0;
    iv.psi_tilde1.resize(N);
    iv.psi_tilde0.resize(N);
    iv.psi1.resize(N);
    iv.psi0.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = ds[i];
        const double m1 = mu1.predict(rec.x);
        const double m0 = mu0.predict(rec.x);
        const double r = static_cast<double>(rec.r);
        const double t = static_cast<double>(rec.t);
        const double resid1 = r * t * (rec.y - m1) / (kappa * pi_hat);
        iv.psi_tilde1[i] = resid1 + r * (m1 - tau1) / kappa;
        iv.psi1[i] = resid1 + w.k[i] * (m1 - tau1) / kappa;
        double resid0_trial = 0.0, resid0_aug = 0.0;
        if (rec.t == 0) {
            const double dy = (rec.y - m0) / (kappa * (1.0 - pi_hat));
            resid0_trial = r * dy;
            if (!w.has_rho(i))
                throw UsageError("influence_values: rho undefined on untreated row " +
                                 std::to_string(i));
            resid0_aug = w.rho[i] * dy;
        }
        iv.psi_tilde0[i] = resid0_trial + r * (m0 - tau0) / kappa;
        iv.psi0[i] = resid0_aug + w.k[i] * (m0 - tau0) / kappa;
    }
    return iv;
}

namespace {

double se_from(const std::vector<double>& a, const std::vector<double>& b, bool diff) {
    // sqrt(mean(psi^2)/N), with psi = a - b for the tau target.
    const std::size_t N = a.size();
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double v = diff ? a[i] - b[i] : a[i];
        s += v * v;
    }
    return std::sqrt(s / static_cast<double>(N)) / std::sqrt(static_cast<double>(N));
}

}  // namespace

double var_plugin(const InfluenceValues& iv, ArmTag target) {
    switch (target) {
        case ArmTag::Tau1: return se_from(iv.psi1, iv.psi0, false);
        case ArmTag::Tau0: return se_from(iv.psi0, iv.psi1, false);
        case ArmTag::Tau: return se_from(iv.psi1, iv.psi0, true);
    }
    return 0.0;
}

double var_plugin_trial(const InfluenceValues& iv, ArmTag target) {
    switch (target) {
        case ArmTag::Tau1: return se_from(iv.psi_tilde1, iv.psi_tilde0, false);
        case ArmTag::Tau0: return se_from(iv.psi_tilde0, iv.psi_tilde1, false);
        case ArmTag::Tau: return se_from(iv.psi_tilde1, iv.psi_tilde0, true);
    }
    return 0.0;
}

double ValidationVariance::se_tau1(std::size_t N) const {
    return std::sqrt(sigma2_val_tau1 / static_cast<double>(N));
}
double ValidationVariance::se_tau0(std::size_t N) const {
    return std::sqrt(sigma2_val_tau0 / static_cast<double>(N));
}
double ValidationVariance::se_tau(std::size_t N) const {
    return std::sqrt(sigma2_val_tau / static_cast<double>(N));
}

ValidationVariance var_validation(const Dataset& primary, const InfluenceValues& iv,
                                  const Dataset& validation, const LogisticModel& k_model,
                                  const LogisticModel& rho_model, const OutcomeModel& mu0,
                                  const OutcomeModel& mu1, double pi_hat) {
    check_pi(pi_hat);
    const std::size_t N = primary.n_total(), m = validation.n_total();
    if (m == 0) throw SizeError("var_validation: empty validation sample");
    if (iv.size() != N) throw DimensionError("var_validation: influence values do not match primary");
    const double kappa = iv.kappa_hat;
    const Eigen::Index qk = static_cast<Eigen::Index>(k_model.basis.size());
    const Eigen::Index qr = static_cast<Eigen::Index>(rho_model.basis.size());

    // Gamma blocks: primary-sample means of the derivative of the estimating
    // function in (alpha, beta); logistic gradient is p(1-p) * design.
    Eigen::RowVectorXd g1 = Eigen::RowVectorXd::Zero(qk);
    Eigen::RowVectorXd g0 = Eigen::RowVectorXd::Zero(qk);
    Eigen::RowVectorXd grho = Eigen::RowVectorXd::Zero(qr);
    for (std::size_t i = 0; i < N; ++i) {
        const Record& rec = primary[i];
        const Eigen::VectorXd dk = design_row(k_model.basis, rec.x);
        const double k = expit(dk.dot(k_model.coef));
        const double gk = k * (1.0 - k);
        g1 += (mu1.predict(rec.x) - iv.tau1) / kappa * gk * dk.transpose();
        g0 += (mu0.predict(rec.x) - iv.tau0) / kappa * gk * dk.transpose();
        if (rec.t == 0) {
            const Eigen::VectorXd dr = design_row(rho_model.basis, rec.x, rec.y);
            const double rho = expit(dr.dot(rho_model.coef));
            grho += (rec.y - mu0.predict(rec.x)) / (kappa * (1.0 - pi_hat)) * rho * (1.0 - rho) *
                    dr.transpose();
        }
    }
    g1 /= static_cast<double>(N);
    g0 /= static_cast<double>(N);
    grho /= static_cast<double>(N);

    // Validation-sample MLE influence functions phi = I^{-1} score.
    Eigen::MatrixXd info_a = Eigen::MatrixXd::Zero(qk, qk);
    Eigen::MatrixXd info_b = Eigen::MatrixXd::Zero(qr, qr);
    Eigen::MatrixXd scores(m, qk + qr);
    for (std::size_t j = 0; j < m; ++j) {
        const Record& rec = validation[j];
        const Eigen::VectorXd dk = design_row(k_model.basis, rec.x);
        const double k = expit(dk.dot(k_model.coef));
        info_a += k * (1.0 - k) * dk * dk.transpose();
        scores.row(j).head(qk) = (rec.r - k) * dk.transpose();
        if (rec.t == 0) {
            const Eigen::VectorXd dr = design_row(rho_model.basis, rec.x, rec.y);
            const double rho = expit(dr.dot(rho_model.coef));
            info_b += rho * (1.0 - rho) * dr * dr.transpose();
            scores.row(j).tail(qr) = (rec.r - rho) * dr.transpose();
        } else {
            scores.row(j).tail(qr).setZero();
        }
    }
    info_a /= static_cast<double>(m);
    info_b /= static_cast<double>(m);
    Eigen::LDLT<Eigen::MatrixXd> la(info_a), lb(info_b);
    if (la.info() != Eigen::Success || lb.info() != Eigen::Success ||
        la.rcond() < 1e-14 || lb.rcond() < 1e-14)
        throw SingularityError("var_validation: singular Fisher information");
    Eigen::MatrixXd phi(m, qk + qr);
    phi.leftCols(qk) = la.solve(scores.leftCols(qk).transpose()).transpose();
    phi.rightCols(qr) = lb.solve(scores.rightCols(qr).transpose()).transpose();
    Eigen::MatrixXd phi_var = phi.transpose() * phi / static_cast<double>(m);

    ValidationVariance out;
    out.gamma1 = g1;
    out.gamma0 = g0;
    out.gamma_rho = grho;
    out.phi_var = phi_var;
    out.xi_hat = static_cast<double>(m) / static_cast<double>(N);

    const double e1 = mean_sq(iv.psi1);
    const double e0 = mean_sq(iv.psi0);
    double etau = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double d = iv.psi1[i] - iv.psi0[i];
        etau += d * d;
    }
    etau /= static_cast<double>(N);

    Eigen::RowVectorXd row1 = Eigen::RowVectorXd::Zero(qk + qr);
    row1.head(qk) = g1;
    Eigen::RowVectorXd row0 = Eigen::RowVectorXd::Zero(qk + qr);
    row0.head(qk) = g0;
    row0.tail(qr) = grho;
    Eigen::RowVectorXd rowt = row1 - row0;

    const double inv_xi = 1.0 / out.xi_hat;
    out.sigma2_val_tau1 = e1 + inv_xi * (row1 * phi_var * row1.transpose())(0, 0);
    out.sigma2_val_tau0 = e0 + inv_xi * (row0 * phi_var * row0.transpose())(0, 0);
    out.sigma2_val_tau = etau + inv_xi * (rowt * phi_var * rowt.transpose())(0, 0);
    return out;
}

InfluenceMoments influence_moments(const InfluenceValues& iv, ArmTag arm) {
    const std::size_t N = iv.size();
    if (N == 0) throw DimensionError("influence_moments: empty influence arrays");
    const double invN2 = 1.0 / (static_cast<double>(N) * static_cast<double>(N));
    InfluenceMoments m;
    for (std::size_t i = 0; i < N; ++i) {
        double pt = 0.0, ph = 0.0;
        switch (arm) {
            case ArmTag::Tau1: pt = iv.psi_tilde1[i]; ph = iv.psi1[i]; break;
            case ArmTag::Tau0: pt = iv.psi_tilde0[i]; ph = iv.psi0[i]; break;
            case ArmTag::Tau:
                pt = iv.psi_tilde1[i] - iv.psi_tilde0[i];
                ph = iv.psi1[i] - iv.psi0[i];
                break;
        }
        const double d = ph - pt;
        m.var_tilde += pt * pt;
        m.var_hat += ph * ph;
        m.cov += ph * pt;
        m.var_diff += d * d;
        m.cov_diff += d * pt;
    }
    m.var_tilde *= invN2;
    m.var_hat *= invN2;
    m.cov *= invN2;
    m.var_diff *= invN2;
    m.cov_diff *= invN2;
    return m;
}

std::pair<Estimate, ShrinkageDiagnostics> shrink(const Estimate& tau_tilde,
                                                 const Estimate& tau_hat,
                                                 const InfluenceValues& iv, ArmTag arm) {
    if (tau_tilde.arm != arm || tau_hat.arm != arm)
        throw UsageError("shrink: estimates do not target the requested arm");
    const InfluenceMoments m = influence_moments(iv, arm);
    ShrinkageDiagnostics diag;
    diag.var_diff = m.var_diff;
    diag.cov_term = m.cov_diff;
    const double gap = tau_hat.value - tau_tilde.value;
    if (m.var_diff < 1e-14) {
        // Degenerate: tau_hat coincides with tau_tilde, so any lambda yields
        // the same estimator; take zero and report the trial-only variance.
        diag.lambda_star = 0.0;
        diag.delta = 1.0;
        diag.lambda_n = 0.0;
        diag.sigma2 = std::min(m.var_tilde, m.var_hat);
    } else {
        diag.lambda_star = -m.cov_diff / m.var_diff;
        diag.delta = m.var_diff / (m.var_diff + gap * gap * gap * gap);
        diag.lambda_n = diag.delta * diag.lambda_star;
        diag.sigma2 = (m.var_tilde * m.var_hat - m.cov * m.cov) / m.var_diff;
    }
    const double value = tau_tilde.value + diag.lambda_n * gap;
    const double se = std::sqrt(std::max(std::min(diag.sigma2, m.var_tilde), 0.0));
    return {make_estimate(value, se, Method::Shrinkage, arm), diag};
}

std::pair<Estimate, ShrinkageDiagnostics> shrink_combined(const Estimate& tau_tilde,
                                                          const Estimate& tau_hat,
                                                          const InfluenceValues& iv) {
    return shrink(tau_tilde, tau_hat, iv, ArmTag::Tau);
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

BootstrapResult bootstrap_se(const Dataset& ds, const BootstrapSpec& spec, int B,
                             std::uint64_t seed) {
    if (B < 100) throw UsageError("bootstrap_se: need at least 100 replicates");
    // Row indices per (r,t) cell, in a fixed order.
    std::array<std::vector<std::size_t>, 3> cells;  // (1,1), (1,0), (0,0)
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        if (rec.r == 1 && rec.t == 1) cells[0].push_back(i);
        else if (rec.r == 1) cells[1].push_back(i);
        else cells[2].push_back(i);
    }
    std::vector<std::array<double, 12>> estimates;  // 4 methods x 3 estimands
    estimates.reserve(B);
    for (int b = 0; b < B; ++b) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(b)));
        std::vector<Record> recs;
        recs.reserve(ds.n_total());
        bool ok = false;
        for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
            recs.clear();
            std::array<std::size_t, 3> counts{0, 0, 0};
            for (std::size_t c = 0; c < cells.size(); ++c)
                for (std::size_t j = 0; j < cells[c].size(); ++j) {
                    recs.push_back(ds[cells[c][rng.below(cells[c].size())]]);
                    ++counts[c];
                }
            // Stratified resampling preserves cell counts; the redraw guard
            // covers future sampler changes.
            ok = true;
            for (std::size_t c = 0; c < cells.size(); ++c)
                if (!cells[c].empty() && counts[c] == 0) ok = false;
        }
        if (!ok) throw SizeError("bootstrap_se: resample kept producing an empty (r,t) cell");
        Dataset rs(std::move(recs));
        const double pi_hat = estimate_pi(rs);
        const EstimateTriple gold = tau_gold(rs);
        const OutcomeModel mu1 = fit_outcome(rs, 1, spec.mu_basis, spec.mu_population);
        const OutcomeModel mu0 = fit_outcome(rs, 0, spec.mu_basis, spec.mu_population);
        const EstimateTriple dr = tau_trial_dr(rs, mu1, mu0, pi_hat);
        const LogisticModel km = fit_k(rs, spec.k_basis);
        const LogisticModel rm = fit_rho(rs, spec.rho_basis);
        const ShiftWeights w = eval_weights(rs, km, rm);
        const EstimateTriple aug = tau_augmented(rs, w, mu1, mu0, pi_hat);
        InfluenceValues iv =
            influence_values(rs, w, mu1, mu0, pi_hat, aug.tau1.value, aug.tau0.value);
        const auto s1 = shrink(dr.tau1, aug.tau1, iv, ArmTag::Tau1);
        const auto s0 = shrink(dr.tau0, aug.tau0, iv, ArmTag::Tau0);
        const auto st = shrink_combined(dr.tau, aug.tau, iv);
        estimates.push_back({gold.tau1.value, gold.tau0.value, gold.tau.value,
                             dr.tau1.value, dr.tau0.value, dr.tau.value,
                             aug.tau1.value, aug.tau0.value, aug.tau.value,
                             s1.first.value, s0.first.value, st.first.value});
    }
    auto sd_of = [&](int col) {
        double mean = 0.0;
        for (const auto& row : estimates) mean += row[col];
        mean /= estimates.size();
        double ss = 0.0;
        for (const auto& row : estimates) {
            const double d = row[col] - mean;
            ss += d * d;
        }
        return std::sqrt(ss / (estimates.size() - 1.0));
    };
    BootstrapResult out;
    out.replicates = B;
    out.gold = {sd_of(0), sd_of(1), sd_of(2)};
    out.trial_dr = {sd_of(3), sd_of(4), sd_of(5)};
    out.augmented = {sd_of(6), sd_of(7), sd_of(8)};
    out.shrinkage = {sd_of(9), sd_of(10), sd_of(11)};
    return out;
}

}  // namespace shiftfuse
