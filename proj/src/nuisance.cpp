#include "shiftfuse/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace shiftfuse {

bool FeatureBasis::has_outcome() const noexcept {
    return std::any_of(terms.begin(), terms.end(),
                       [](const Term& t) { return t.kind == TermKind::Outcome; });
}

int FeatureBasis::max_covariate_index() const noexcept {
    int m = -1;
    for (const Term& t : terms)
        if (t.kind == TermKind::Linear || t.kind == TermKind::Square || t.kind == TermKind::Exp)
            m = std::max(m, t.index);
    return m;
}

void FeatureBasis::validate(bool outcome_allowed) const {
    if (terms.empty()) throw UsageError("feature basis must contain at least one term");
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const Term& t = terms[i];
        if ((t.kind == TermKind::Linear || t.kind == TermKind::Square || t.kind == TermKind::Exp) &&
            t.index < 0)
            throw UsageError("covariate term with negative index");
        for (std::size_t j = i + 1; j < terms.size(); ++j)
            if (terms[i] == terms[j])
                throw UsageError("duplicate term '" + term_to_string(t) + "' in basis");
    }
    if (!outcome_allowed && has_outcome())
        throw UsageError("Outcome term is only allowed in rho-model bases");
}

std::string term_to_string(const Term& term) {
    switch (term.kind) {
        case TermKind::Intercept: return "Intercept";
        case TermKind::Linear: return "Linear(" + std::to_string(term.index) + ")";
        case TermKind::Square: return "Square(" + std::to_string(term.index) + ")";
        case TermKind::Exp: return "Exp(" + std::to_string(term.index) + ")";
        case TermKind::Outcome: return "Outcome";
    }
    return "?";
}

Term term_from_string(const std::string& s) {
    if (s == "Intercept") return intercept();
    if (s == "Outcome") return outcome();
    auto parse_indexed = [&](const std::string& name, TermKind kind) -> std::optional<Term> {
        if (s.size() > name.size() + 2 && s.compare(0, name.size() + 1, name + "(") == 0 &&
            s.back() == ')') {
            const std::string digits = s.substr(name.size() + 1, s.size() - name.size() - 2);
            if (!digits.empty() &&
                std::all_of(digits.begin(), digits.end(),
                            [](unsigned char c) { return std::isdigit(c); }))
                return Term{kind, std::stoi(digits)};
        }
        return std::nullopt;
    };
    if (auto t = parse_indexed("Linear", TermKind::Linear)) return *t;
    if (auto t = parse_indexed("Square", TermKind::Square)) return *t;
    if (auto t = parse_indexed("Exp", TermKind::Exp)) return *t;
    throw ConfigError("cannot parse basis term '" + s + "'");
}

Eigen::VectorXd design_row(const FeatureBasis& basis, std::span<const double> x,
                           std::optional<double> y) {
    if (basis.has_outcome() != y.has_value())
        throw UsageError(basis.has_outcome()
                             ? "basis contains Outcome but no outcome value was supplied"
                             : "outcome value supplied to a basis without an Outcome term");
    if (basis.max_covariate_index() >= static_cast<int>(x.size()))
        throw DimensionError("basis refers to covariate index " +
                             std::to_string(basis.max_covariate_index()) + " but row has " +
                             std::to_string(x.size()) + " covariates");
    Eigen::VectorXd row(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.terms.size(); ++i) {
        const Term& t = basis.terms[i];
        switch (t.kind) {
            case TermKind::Intercept: row[i] = 1.0; break;
            case TermKind::Linear: row[i] = x[t.index]; break;
            case TermKind::Square: row[i] = x[t.index] * x[t.index]; break;
            case TermKind::Exp: row[i] = std::exp(x[t.index]); break;
            case TermKind::Outcome: row[i] = *y; break;
        }
    }
    return row;
}

double LogisticModel::predict(std::span<const double> x, std::optional<double> y) const {
    return expit(design_row(basis, x, y).dot(coef));
}

double OutcomeModel::predict(std::span<const double> x) const {
    return design_row(basis, x).dot(coef);
}

namespace {

double weighted_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // y*eta - log(1+exp(eta)), stable for large |eta|
        const double e = eta[i];
        const double log1pe = (e > 0) ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += w[i] * (y[i] * e - log1pe);
    }
    return ll;
}

}  // namespace

LogisticModel fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w, FeatureBasis basis) {
    const Eigen::Index N = X.rows(), q = X.cols();
    if (y.size() != N || w.size() != N)
        throw DimensionError("fit_logistic: feature/label/weight sizes disagree");
    if (static_cast<std::size_t>(q) != basis.size())
        throw DimensionError("fit_logistic: basis size does not match feature columns");
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < N; ++i) {
        if (w[i] < 0.0) throw DomainError("fit_logistic: negative weight");
        if (y[i] != 0.0 && y[i] != 1.0) throw DomainError("fit_logistic: labels must be 0 or 1");
        if (w[i] > 0.0) (y[i] > 0.5 ? has1 : has0) = true;
    }
    if (!has0 || !has1)
        throw SeparationError("fit_logistic: need both labels with positive weight");

    // Rank check on the weighted support.
    {
        Eigen::MatrixXd Xw = X;
        for (Eigen::Index i = 0; i < N; ++i) Xw.row(i) *= std::sqrt(w[i]);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
        qr.setThreshold(1e-10);
        if (qr.rank() < q)
            throw SingularityError("fit_logistic: feature matrix is rank deficient");
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
    double ll = weighted_loglik(X, y, w, beta);
    const double n_scale = static_cast<double>(N);
    bool converged = false;
    int iter = 0;
    while (iter < 100) {
        ++iter;
        Eigen::VectorXd p(N), wg(N);
        for (Eigen::Index i = 0; i < N; ++i) {
            p[i] = expit(X.row(i).dot(beta));
            wg[i] = w[i] * p[i] * (1.0 - p[i]);
        }
        const Eigen::VectorXd score = X.transpose() * (w.array() * (y - p).array()).matrix();
        if (score.lpNorm<Eigen::Infinity>() / n_scale < 1e-8) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd H = X.transpose() * wg.asDiagonal() * X;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd dir = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !dir.allFinite())
            throw SingularityError("fit_logistic: information matrix not invertible");
        // Step-halving keeps the likelihood monotone.
        double eta = 1.0;
        double ll_new = weighted_loglik(X, y, w, beta + dir);
        while (ll_new < ll && eta > 1e-14) {
            eta *= 0.5;
            ll_new = weighted_loglik(X, y, w, beta + eta * dir);
        }
        if (ll_new < ll) {
            // No ascent along the Newton direction: numerically at the optimum.
            converged = score.lpNorm<Eigen::Infinity>() / n_scale < 1e-6;
            break;
        }
        beta += eta * dir;
        ll = ll_new;
        if (beta.lpNorm<Eigen::Infinity>() > 1e6)
            throw SeparationError("fit_logistic: coefficients diverged (complete separation)");
        if ((eta * dir).norm() < 1e-10) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw SeparationError("fit_logistic: no convergence in 100 iterations "
                              "(likelihood appears unbounded)");
    LogisticModel m;
    m.basis = std::move(basis);
    m.coef = std::move(beta);
    m.converged = true;
    m.iterations = iter;
    return m;
}

OutcomeModel fit_outcome(const Dataset& ds, int arm, const FeatureBasis& basis,
                         FitPopulation population) {
    basis.validate(/*outcome_allowed=*/false);
    if (arm != 0 && arm != 1) throw UsageError("fit_outcome: arm must be 0 or 1");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        if (rec.t != arm) continue;
        if (population == FitPopulation::TrialOnly && rec.r != 1) continue;
        rows.push_back(i);
    }
    const std::size_t q = basis.size();
    if (rows.empty()) throw SizeError("fit_outcome: empty subsample for arm " + std::to_string(arm));
    if (rows.size() < q)
        throw SizeError("fit_outcome: " + std::to_string(rows.size()) + " rows for " +
                        std::to_string(q) + " basis terms");
    Eigen::MatrixXd X(rows.size(), q);
    Eigen::VectorXd yv(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        X.row(i) = design_row(basis, ds[rows[i]].x);
        yv[i] = ds[rows[i]].y;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(q))
        throw SingularityError("fit_outcome: design matrix is rank deficient");
    OutcomeModel m;
    m.arm = arm;
    m.basis = basis;
    m.coef = qr.solve(yv);
    return m;
}

LogisticModel fit_k(const Dataset& ds, const FeatureBasis& basis) {
    basis.validate(/*outcome_allowed=*/false);
    const std::size_t N = ds.n_total();
    if (N == 0) throw SizeError("fit_k: empty dataset");
    Eigen::MatrixXd X(N, basis.size());
    Eigen::VectorXd y(N);
    for (std::size_t i = 0; i < N; ++i) {
        X.row(i) = design_row(basis, ds[i].x);
        y[i] = static_cast<double>(ds[i].r);
    }
    return fit_logistic(X, y, Eigen::VectorXd::Ones(N), basis);
}

LogisticModel fit_rho(const Dataset& ds, const FeatureBasis& basis) {
    basis.validate(/*outcome_allowed=*/true);
    if (!basis.has_outcome())
        throw UsageError("fit_rho: basis must include the Outcome term");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n_total(); ++i)
        if (ds[i].t == 0) rows.push_back(i);
    if (rows.empty()) throw SizeError("fit_rho: no untreated rows");
    Eigen::MatrixXd X(rows.size(), basis.size());
    Eigen::VectorXd y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Record& rec = ds[rows[i]];
        X.row(i) = design_row(basis, rec.x, rec.y);
        y[i] = static_cast<double>(rec.r);
    }
    return fit_logistic(X, y, Eigen::VectorXd::Ones(rows.size()), basis);
}

double estimate_pi(const Dataset& ds) {
    std::size_t n = 0, treated = 0;
    for (const Record& rec : ds.records()) {
        if (rec.r != 1) continue;
        ++n;
        treated += static_cast<std::size_t>(rec.t);
    }
    if (n == 0) throw SizeError("estimate_pi: no trial rows");
    return static_cast<double>(treated) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json basis_to_json(const FeatureBasis& basis) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Term& t : basis.terms) arr.push_back(term_to_string(t));
    return arr;
}

FeatureBasis basis_from_json(const nlohmann::json& arr) {
    FeatureBasis basis;
    for (const auto& item : arr) basis.terms.push_back(term_from_string(item.get<std::string>()));
    return basis;
}

Eigen::VectorXd coef_from_json(const nlohmann::json& arr) {
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
    return v;
}

}  // namespace

std::string logistic_model_to_json(const LogisticModel& m) {
    nlohmann::json j;
    j["basis"] = basis_to_json(m.basis);
    j["coef"] = std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size());
    j["converged"] = m.converged;
    j["iterations"] = m.iterations;
    return j.dump(2);
}

LogisticModel logistic_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    LogisticModel m;
    m.basis = basis_from_json(j.at("basis"));
    m.coef = coef_from_json(j.at("coef"));
    m.converged = j.at("converged").get<bool>();
    m.iterations = j.at("iterations").get<int>();
    if (m.coef.size() != static_cast<Eigen::Index>(m.basis.size()))
        throw ParseError("logistic model JSON: coef length does not match basis");
    return m;
}

std::string outcome_model_to_json(const OutcomeModel& m) {
    nlohmann::json j;
    j["arm"] = m.arm;
    j["basis"] = basis_to_json(m.basis);
    j["coef"] = std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size());
    return j.dump(2);
}

OutcomeModel outcome_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    OutcomeModel m;
    m.arm = j.at("arm").get<int>();
    m.basis = basis_from_json(j.at("basis"));
    m.coef = coef_from_json(j.at("coef"));
    if (m.coef.size() != static_cast<Eigen::Index>(m.basis.size()))
        throw ParseError("outcome model JSON: coef length does not match basis");
    return m;
}

}  // namespace shiftfuse
