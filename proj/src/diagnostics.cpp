#include "shiftfuse/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace shiftfuse {

std::vector<std::string> default_covariate_names(std::size_t p) {
    std::vector<std::string> names(p);
    for (std::size_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
    return names;
}

namespace {

std::vector<std::string> resolve_names(const Dataset& ds, const std::vector<std::string>& names) {
    if (names.empty()) return default_covariate_names(ds.dim());
    if (names.size() != ds.dim())
        throw DimensionError("covariate names do not match dataset dimension");
    return names;
}

}  // namespace

PcaBlock pca_project(const Dataset& ds, const std::vector<std::string>& names) {
    const auto resolved = resolve_names(ds, names);
    if (ds.dim() < 2) throw SizeError("pca_project: need at least 2 covariates");
    if (ds.n_total() < 3) throw SizeError("pca_project: need at least 3 rows");
    const std::size_t N = ds.n_total(), p = ds.dim();

    // Standardize; zero-variance columns are flagged and dropped.
    std::vector<double> mean(p, 0.0), sd(p, 0.0);
    for (const Record& rec : ds.records())
        for (std::size_t j = 0; j < p; ++j) mean[j] += rec.x[j];
    for (std::size_t j = 0; j < p; ++j) mean[j] /= static_cast<double>(N);
    for (const Record& rec : ds.records())
        for (std::size_t j = 0; j < p; ++j) {
            const double d = rec.x[j] - mean[j];
            sd[j] += d * d;
        }
    PcaBlock out;
    for (std::size_t j = 0; j < p; ++j) {
        sd[j] = std::sqrt(sd[j] / static_cast<double>(N - 1));
        if (sd[j] > 0.0)
            out.kept_covariates.push_back(j);
        else
            out.dropped.push_back(resolved[j]);
    }
    const std::size_t q = out.kept_covariates.size();
    if (q < 2) throw SizeError("pca_project: fewer than 2 covariates with positive variance");

    Eigen::MatrixXd Z(N, q);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t c = 0; c < q; ++c) {
            const std::size_t j = out.kept_covariates[c];
            Z(i, c) = (ds[i].x[j] - mean[j]) / sd[j];
        }
    const Eigen::MatrixXd corr = Z.transpose() * Z / static_cast<double>(N - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.info() != Eigen::Success) throw SingularityError("pca_project: eigensolver failed");

    // Eigenvalues ascending; take the top two.
    const Eigen::VectorXd evals = eig.eigenvalues();
    const double total = evals.sum();
    Eigen::MatrixXd loadings(q, 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(q) - 1 - c);
        for (Eigen::Index r = 0; r < v.size(); ++r) {
            if (v[r] != 0.0) {
                if (v[r] < 0.0) v = -v;
                break;
            }
        }
        loadings.col(c) = v;
        out.explained_variance[c] = evals[static_cast<Eigen::Index>(q) - 1 - c] / total;
    }
    const Eigen::MatrixXd sc = Z * loadings;
    out.scores.resize(N);
    for (std::size_t i = 0; i < N; ++i) out.scores[i] = {sc(i, 0), sc(i, 1)};
    return out;
}

MarginalShift marginal_shift(const Dataset& ds, const std::vector<std::string>& names) {
    const auto resolved = resolve_names(ds, names);
    if (ds.n_total() == 0) throw SizeError("marginal_shift: empty dataset");
    MarginalShift out;
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        bool binary = true;
        for (const Record& rec : ds.records())
            if (rec.x[j] != 0.0 && rec.x[j] != 1.0) {
                binary = false;
                break;
            }
        if (binary) {
            ProportionRow row;
            row.covariate = resolved[j];
            std::size_t nt = 0, ne = 0, st = 0, se = 0;
            for (const Record& rec : ds.records()) {
                if (rec.r == 1) {
                    ++nt;
                    st += static_cast<std::size_t>(rec.x[j] != 0.0);
                } else {
                    ++ne;
                    se += static_cast<std::size_t>(rec.x[j] != 0.0);
                }
            }
            row.trial_prop = nt ? static_cast<double>(st) / nt : 0.0;
            row.ec_prop = ne ? static_cast<double>(se) / ne : 0.0;
            out.proportions.push_back(std::move(row));
        } else {
            EcdfBlock block;
            block.covariate = resolved[j];
            std::vector<double> trial, ec, pooled;
            for (const Record& rec : ds.records()) {
                (rec.r == 1 ? trial : ec).push_back(rec.x[j]);
                pooled.push_back(rec.x[j]);
            }
            std::sort(trial.begin(), trial.end());
            std::sort(ec.begin(), ec.end());
            std::sort(pooled.begin(), pooled.end());
            pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
            block.grid = pooled;
            block.trial_cdf.resize(pooled.size());
            block.ec_cdf.resize(pooled.size());
            for (std::size_t g = 0; g < pooled.size(); ++g) {
                const double v = pooled[g];
                block.trial_cdf[g] =
                    trial.empty() ? 0.0
                                  : static_cast<double>(std::upper_bound(trial.begin(), trial.end(),
                                                                         v) -
                                                        trial.begin()) /
                                        static_cast<double>(trial.size());
                block.ec_cdf[g] =
                    ec.empty() ? 0.0
                               : static_cast<double>(std::upper_bound(ec.begin(), ec.end(), v) -
                                                     ec.begin()) /
                                     static_cast<double>(ec.size());
                block.max_gap = std::max(block.max_gap,
                                         std::abs(block.trial_cdf[g] - block.ec_cdf[g]));
            }
            out.ecdfs.push_back(std::move(block));
        }
    }
    return out;
}

namespace {

// Five-number summary; quartiles by linear interpolation (type 7).
std::array<double, 5> five_number(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        if (v.size() == 1) return v[0];
        const double pos = q * static_cast<double>(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return (lo + 1 < v.size()) ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
    };
    return {v.front(), quantile(0.25), quantile(0.5), quantile(0.75), v.back()};
}

}  // namespace

std::vector<DecileCell> decile_outcome_summary(const Dataset& ds, const OutcomeModel& mu0_pooled,
                                               bool* single_bin) {
    if (single_bin) *single_bin = false;
    struct Row {
        double score;
        std::size_t index;
        bool trial;
        double y;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < ds.n_total(); ++i) {
        const Record& rec = ds[i];
        if (rec.t != 0) continue;
        rows.push_back({mu0_pooled.predict(rec.x), i, rec.r == 1, rec.y});
    }
    if (rows.empty()) throw SizeError("decile_outcome_summary: no untreated rows");

    // Ties broken by row order.
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.score < b.score; });
    std::size_t bins = std::min<std::size_t>(10, rows.size());
    if (rows.front().score == rows.back().score && rows.size() > 1) {
        bins = 1;  // constant score
        if (single_bin) *single_bin = true;
    }

    std::vector<DecileCell> out;
    const std::size_t base = rows.size() / bins, extra = rows.size() % bins;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t size = base + (b < extra ? 1 : 0);
        std::vector<double> ytrial, yec;
        for (std::size_t i = pos; i < pos + size; ++i)
            (rows[i].trial ? ytrial : yec).push_back(rows[i].y);
        pos += size;
        for (int grp = 0; grp < 2; ++grp) {
            const auto& ys = grp == 0 ? ytrial : yec;
            DecileCell cell;
            cell.decile = static_cast<int>(b + 1);
            cell.group = grp == 0 ? "trial_control" : "external_control";
            cell.count = static_cast<long>(ys.size());
            cell.sparse = ys.size() < 3;
            if (!ys.empty()) {
                const auto f = five_number(ys);
                cell.min = f[0];
                cell.q1 = f[1];
                cell.median = f[2];
                cell.q3 = f[3];
                cell.max = f[4];
            }
            out.push_back(std::move(cell));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void write_pca_csv(const PcaBlock& pca, const Dataset& ds, std::ostream& out,
                   const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "row,source,pc1,pc2,evr1,evr2\n";
    for (std::size_t i = 0; i < pca.scores.size(); ++i)
        out << i << ',' << ds[i].r << ',' << fmt(pca.scores[i][0]) << ',' << fmt(pca.scores[i][1])
            << ',' << fmt(pca.explained_variance[0]) << ',' << fmt(pca.explained_variance[1])
            << "\n";
}

void write_proportions_csv(const std::vector<ProportionRow>& rows, std::ostream& out,
                           const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "covariate,trial_prop,ec_prop\n";
    for (const auto& r : rows)
        out << r.covariate << ',' << fmt(r.trial_prop) << ',' << fmt(r.ec_prop) << "\n";
}

void write_ecdf_csv(const std::vector<EcdfBlock>& blocks, std::ostream& out,
                    const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "covariate,value,trial_cdf,ec_cdf,max_gap\n";
    for (const auto& b : blocks)
        for (std::size_t g = 0; g < b.grid.size(); ++g)
            out << b.covariate << ',' << fmt(b.grid[g]) << ',' << fmt(b.trial_cdf[g]) << ','
                << fmt(b.ec_cdf[g]) << ',' << fmt(b.max_gap) << "\n";
}

void write_deciles_csv(const std::vector<DecileCell>& cells, std::ostream& out,
                       const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "decile,group,count,min,q1,median,q3,max,sparse\n";
    for (const auto& c : cells)
        out << c.decile << ',' << c.group << ',' << c.count << ',' << fmt(c.min) << ','
            << fmt(c.q1) << ',' << fmt(c.median) << ',' << fmt(c.q3) << ',' << fmt(c.max) << ','
            << (c.sparse ? 1 : 0) << "\n";
}

}  // namespace shiftfuse
