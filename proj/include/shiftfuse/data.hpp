#pragma once

// Observation model and dataset plumbing: CSV ingestion, stratified
// half-splitting, concatenation.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shiftfuse/errors.hpp"

namespace shiftfuse {

// One observation (r, t, x, y). r=1 marks a trial row; external controls
// (r=0) are untreated by construction.
struct Record {
    int r = 1;
    int t = 0;
    std::vector<double> x;
    double y = 0.0;
};

// Pooled trial+EC sample. Immutable after construction; safe for
// concurrent reads. The default-constructed empty dataset acts as the
// identity for concat.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<Record> records);

    const std::vector<Record>& records() const noexcept { return records_; }
    const Record& operator[](std::size_t i) const noexcept { return records_[i]; }

    std::size_t n_total() const noexcept { return records_.size(); }  // N
    std::size_t n_trial() const noexcept { return n_; }               // n
    std::size_t dim() const noexcept { return p_; }                   // p
    double kappa_hat() const noexcept { return kappa_hat_; }          // n/N
    bool empty() const noexcept { return records_.empty(); }

private:
    std::vector<Record> records_;
    std::size_t p_ = 0;
    std::size_t n_ = 0;
    double kappa_hat_ = 0.0;
};

// Column mapping for CSV ingestion. When outcome_difference is set the
// outcome is computed as minuend - subtrahend and outcome_column is unused.
struct CsvSchema {
    std::string source_column;
    std::string treatment_column;
    std::string outcome_column;
    std::vector<std::string> covariate_columns;
    std::optional<std::pair<std::string, std::string>> outcome_difference;

    void validate() const;
};

// UTF-8, comma-separated, header row required, '.' decimal separator.
// Lines starting with '#' are skipped so tool-emitted files round-trip.
Dataset load_csv(std::istream& stream, const CsvSchema& schema);
Dataset load_csv_file(const std::string& path, const CsvSchema& schema);

// Canonical column order r,t,y,x1..xp with 12 significant digits.
void write_csv(const Dataset& ds, std::ostream& out);

// Deterministic stratified half split: every (r,t) cell is divided as
// evenly as possible and overall sizes differ by at most one row. Row
// order within each half follows the input dataset.
std::pair<Dataset, Dataset> split_half(const Dataset& ds, std::uint64_t seed);

Dataset concat(const Dataset& a, const Dataset& b);

}  // namespace shiftfuse
