#include "shiftfuse/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "shiftfuse/rng.hpp"

namespace shiftfuse {

Dataset::Dataset(std::vector<Record> records) : records_(std::move(records)) {
    if (records_.empty()) return;
    p_ = records_.front().x.size();
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const Record& rec = records_[i];
        if (rec.r != 0 && rec.r != 1)
            throw IntegrityError("row " + std::to_string(i) + ": source indicator must be 0 or 1");
        if (rec.t != 0 && rec.t != 1)
            throw IntegrityError("row " + std::to_string(i) + ": treatment indicator must be 0 or 1");
        if (rec.r == 0 && rec.t == 1)
            throw IntegrityError("row " + std::to_string(i) + ": external-control row marked treated");
        if (rec.x.size() != p_)
            throw DimensionError("row " + std::to_string(i) + ": covariate length " +
                                 std::to_string(rec.x.size()) + " != " + std::to_string(p_));
        for (double v : rec.x)
            if (!std::isfinite(v))
                throw IntegrityError("row " + std::to_string(i) + ": non-finite covariate");
        if (!std::isfinite(rec.y))
            throw IntegrityError("row " + std::to_string(i) + ": non-finite outcome");
        n_ += static_cast<std::size_t>(rec.r);
    }
    if (n_ == 0)
        throw IntegrityError("dataset contains no trial rows");
    kappa_hat_ = static_cast<double>(n_) / static_cast<double>(records_.size());
}

void CsvSchema::validate() const {
    std::vector<std::string> used{source_column, treatment_column};
    if (outcome_difference) {
        used.push_back(outcome_difference->first);
        used.push_back(outcome_difference->second);
    } else {
        used.push_back(outcome_column);
    }
    for (const auto& c : covariate_columns) used.push_back(c);
    if (covariate_columns.empty())
        throw SchemaError("schema needs at least one covariate column");
    for (const auto& c : used)
        if (c.empty()) throw SchemaError("schema contains an empty column name");
    auto sorted = used;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end())
        throw SchemaError("duplicate column name in schema: " + *dup);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& raw, std::size_t row, const std::string& col) {
    const std::string s = trim(raw);
    if (s.empty())
        throw ParseError("row " + std::to_string(row) + ", column '" + col + "': empty cell");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column '" + col +
                         "': cannot parse '" + s + "' as a finite number");
    return v;
}

int parse_binary(const std::string& raw, std::size_t row, const std::string& col) {
    const double v = parse_double(raw, row, col);
    if (v != 0.0 && v != 1.0)
        throw ParseError("row " + std::to_string(row) + ", column '" + col +
                         "': expected 0 or 1, got '" + trim(raw) + "'");
    return static_cast<int>(v);
}

}  // namespace

Dataset load_csv(std::istream& stream, const CsvSchema& schema) {
    schema.validate();
    std::string line;
    // Header (skipping comment lines).
    while (std::getline(stream, line)) {
        if (!line.empty() && line[0] == '#') continue;
        break;
    }
    if (line.empty() && stream.eof())
        throw ParseError("empty CSV stream");
    const auto header = split_line(line);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < header.size(); ++j) index[trim(header[j])] = j;

    auto need = [&](const std::string& name) -> std::size_t {
        auto it = index.find(name);
        if (it == index.end())
            throw SchemaError("missing column '" + name + "' in CSV header");
        return it->second;
    };
    const std::size_t src_i = need(schema.source_column);
    const std::size_t trt_i = need(schema.treatment_column);
    std::size_t out_i = 0, min_i = 0, sub_i = 0;
    if (schema.outcome_difference) {
        min_i = need(schema.outcome_difference->first);
        sub_i = need(schema.outcome_difference->second);
    } else {
        out_i = need(schema.outcome_column);
    }
    std::vector<std::size_t> cov_i;
    cov_i.reserve(schema.covariate_columns.size());
    for (const auto& c : schema.covariate_columns) cov_i.push_back(need(c));

    std::vector<Record> records;
    std::size_t row = 0;
    while (std::getline(stream, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        Record rec;
        rec.r = parse_binary(cells[src_i], row, schema.source_column);
        rec.t = parse_binary(cells[trt_i], row, schema.treatment_column);
        if (rec.r == 0 && rec.t == 1)
            throw IntegrityError("row " + std::to_string(row) +
                                 ": external-control row marked treated");
        if (schema.outcome_difference) {
            rec.y = parse_double(cells[min_i], row, schema.outcome_difference->first) -
                    parse_double(cells[sub_i], row, schema.outcome_difference->second);
        } else {
            rec.y = parse_double(cells[out_i], row, schema.outcome_column);
        }
        rec.x.reserve(cov_i.size());
        for (std::size_t j = 0; j < cov_i.size(); ++j)
            rec.x.push_back(parse_double(cells[cov_i[j]], row, schema.covariate_columns[j]));
        records.push_back(std::move(rec));
        ++row;
    }
    return Dataset(std::move(records));
}

Dataset load_csv_file(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return load_csv(in, schema);
}

void write_csv(const Dataset& ds, std::ostream& out) {
    out << "r,t,y";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << (j + 1);
    out << "\n";
    char buf[32];
    for (const Record& rec : ds.records()) {
        out << rec.r << ',' << rec.t << ',';
        std::snprintf(buf, sizeof(buf), "%.12g", rec.y);
        out << buf;
        for (double v : rec.x) {
            std::snprintf(buf, sizeof(buf), "%.12g", v);
            out << ',' << buf;
        }
        out << "\n";
    }
}

std::pair<Dataset, Dataset> split_half(const Dataset& ds, std::uint64_t seed) {
    if (ds.n_total() < 2)
        throw SizeError("split_half needs at least 2 rows");
    // Collect row indices per (r,t) cell in a fixed cell order.
    const std::array<std::pair<int, int>, 3> cells{{{1, 1}, {1, 0}, {0, 0}}};
    std::vector<char> to_primary(ds.n_total(), 0);
    std::size_t size_a = 0, size_b = 0;
    Rng rng(seed);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.n_total(); ++i)
            if (ds[i].r == cells[c].first && ds[i].t == cells[c].second) idx.push_back(i);
        if (idx.empty()) continue;
        // Fisher-Yates shuffle, then the first half goes to the primary part.
        for (std::size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.below(i + 1)]);
        std::size_t take = idx.size() / 2;
        if (idx.size() % 2 == 1) {
            // Give the odd row to whichever half is currently smaller so the
            // overall sizes differ by at most one.
            if (size_a <= size_b) ++take;
        }
        for (std::size_t i = 0; i < idx.size(); ++i)
            to_primary[idx[i]] = (i < take) ? 1 : 0;
        size_a += take;
        size_b += idx.size() - take;
    }
    std::vector<Record> a, b;
    a.reserve(size_a);
    b.reserve(size_b);
    for (std::size_t i = 0; i < ds.n_total(); ++i)
        (to_primary[i] ? a : b).push_back(ds[i]);
    return {Dataset(std::move(a)), Dataset(std::move(b))};
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.dim() != b.dim())
        throw DimensionError("concat: covariate dimensions differ (" +
                             std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
    std::vector<Record> recs;
    recs.reserve(a.n_total() + b.n_total());
    recs.insert(recs.end(), a.records().begin(), a.records().end());
    recs.insert(recs.end(), b.records().begin(), b.records().end());
    return Dataset(std::move(recs));
}

}  // namespace shiftfuse
