#pragma once

// Distribution-shift diagnostics between trial and external-control rows:
// correlation PCA of pooled covariates, marginal shift summaries, and
// outcome distributions within deciles of a pooled prediction score.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "shiftfuse/data.hpp"
#include "shiftfuse/nuisance.hpp"

namespace shiftfuse {

struct PcaBlock {
    std::vector<std::array<double, 2>> scores;   // per row, components 1-2
    std::array<double, 2> explained_variance{};  // fractions, nonincreasing
    std::vector<std::size_t> kept_covariates;    // zero-variance columns drop
    std::vector<std::string> dropped;            // names of dropped columns
};

struct ProportionRow {
    std::string covariate;
    double trial_prop = 0.0;
    double ec_prop = 0.0;
};

struct EcdfBlock {
    std::string covariate;
    std::vector<double> grid;       // pooled sorted unique values
    std::vector<double> trial_cdf;  // P(X <= v) within trial rows
    std::vector<double> ec_cdf;
    double max_gap = 0.0;  // two-sample KS statistic
};

struct DecileCell {
    int decile = 0;          // 1-based bin
    std::string group;       // "trial_control" | "external_control"
    long count = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    bool sparse = false;  // fewer than 3 rows of this group in the bin
};

struct MarginalShift {
    std::vector<ProportionRow> proportions;  // binary covariates
    std::vector<EcdfBlock> ecdfs;            // continuous covariates
};

struct ShiftReport {
    PcaBlock pca;
    MarginalShift marginal;
    std::vector<DecileCell> deciles;
    bool pca_skipped = false;  // p < 2
    bool single_bin_fallback = false;
};

// Standardized pooled covariates projected on the top-2 eigenvectors of the
// correlation matrix. Sign convention: first nonzero loading positive.
PcaBlock pca_project(const Dataset& ds, const std::vector<std::string>& names = {});

// A column is binary iff all its values are 0 or 1.
MarginalShift marginal_shift(const Dataset& ds, const std::vector<std::string>& names = {});

// Untreated rows binned by empirical deciles of s(x) = mu0_pooled(x); per
// bin and group the five-number outcome summary. A constant score falls
// back to a single flagged bin.
std::vector<DecileCell> decile_outcome_summary(const Dataset& ds, const OutcomeModel& mu0_pooled,
                                               bool* single_bin = nullptr);

std::vector<std::string> default_covariate_names(std::size_t p);

// CSV emission; each writer emits the documented header for its block.
void write_pca_csv(const PcaBlock& pca, const Dataset& ds, std::ostream& out,
                   const std::string& header_comment);
void write_proportions_csv(const std::vector<ProportionRow>& rows, std::ostream& out,
                           const std::string& header_comment);
void write_ecdf_csv(const std::vector<EcdfBlock>& blocks, std::ostream& out,
                    const std::string& header_comment);
void write_deciles_csv(const std::vector<DecileCell>& cells, std::ostream& out,
                       const std::string& header_comment);

}  // namespace shiftfuse
