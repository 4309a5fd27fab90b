#ifndef FAIRX_DATA_HPP
#define FAIRX_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fairx::data {

struct DatasetManifest {
    std::string csv_path;
    std::string target_column;
    std::string positive_value;
    std::string protected_column;
    std::string group1_value;
    std::vector<std::string> drop_columns;
    std::vector<std::string> categorical_columns;

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.csv_path = j.at("csv_path").get<std::string>();
        m.target_column = j.at("target_column").get<std::string>();
        m.positive_value = j.at("positive_value").get<std::string>();
        m.protected_column = j.at("protected_column").get<std::string>();
        m.group1_value = j.at("group1_value").get<std::string>();
        if (j.contains("drop_columns"))
            m.drop_columns = j.at("drop_columns").get<std::vector<std::string>>();
        if (j.contains("categorical_columns"))
            m.categorical_columns = j.at("categorical_columns").get<std::vector<std::string>>();
        return m;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["csv_path"] = csv_path;
        j["target_column"] = target_column;
        j["positive_value"] = positive_value;
        j["protected_column"] = protected_column;
        j["group1_value"] = group1_value;
        j["drop_columns"] = drop_columns;
        j["categorical_columns"] = categorical_columns;
        return j;
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open manifest: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // cell strings, post-drop
    std::vector<int> y;                          // mapped labels, one per kept row
    std::vector<int> a;                          // mapped protected attribute
    std::size_t dropped_rows = 0;                // rows dropped for missing y/a

    std::size_t n() const { return rows.size(); }

    std::size_t column_index(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw std::runtime_error("column not found: " + name);
        return static_cast<std::size_t>(it - columns.begin());
    }
};

namespace detail {

// RFC-4180 record reader: handles quoted fields with embedded commas,
// escaped quotes, and embedded newlines.
inline bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string cell;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    cell.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(ch);
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(cell);
            cell.clear();
        } else if (ch == '\r') {
            // swallow; handled at \n
        } else if (ch == '\n') {
            fields.push_back(cell);
            return true;
        } else {
            cell.push_back(ch);
        }
    }
    if (any) fields.push_back(cell);
    return any;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& s) {
    std::string t = trim(s);
    return t.empty() || t == "?" || t == "NA" || t == "nan" || t == "NaN";
}

inline std::optional<double> parse_double(const std::string& s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Loads the manifest's CSV, maps target/protected values to {0,1}, and drops
/// rows whose target or protected cell is missing (counted in dropped_rows).
inline RawTable load_csv(const DatasetManifest& manifest, const std::string& data_dir = "") {
    std::string path = manifest.csv_path;
    if (!data_dir.empty() && !path.empty() && path.front() != '/')
        path = data_dir + "/" + path;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset csv: " + path);

    RawTable t;
    std::vector<std::string> fields;
    if (!detail::read_record(in, t.columns))
        throw std::runtime_error("empty csv: " + path);
    for (auto& c : t.columns) c = detail::trim(c);

    const std::size_t ti = t.column_index(manifest.target_column);
    const std::size_t pi = t.column_index(manifest.protected_column);

    std::size_t line = 1;
    while (detail::read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && detail::trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != t.columns.size())
            throw std::runtime_error("csv line " + std::to_string(line) + ": expected " +
                                     std::to_string(t.columns.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        if (detail::is_missing(fields[ti]) || detail::is_missing(fields[pi])) {
            ++t.dropped_rows;
            continue;
        }
        t.y.push_back(detail::trim(fields[ti]) == manifest.positive_value ? 1 : 0);
        t.a.push_back(detail::trim(fields[pi]) == manifest.group1_value ? 1 : 0);
        t.rows.push_back(std::move(fields));
        fields = {};
    }
    return t;
}

struct ColumnStats {
    std::string name;
    bool categorical = false;
    bool dropped = false;  // zero-variance continuous columns
    double mean = 0.0;
    double stddev = 1.0;
    double median = 0.0;                   // imputation value for missing cells
    std::vector<std::string> categories;   // fitting-split categories, sorted
};

struct PreprocStats {
    std::vector<ColumnStats> columns;
};

struct Dataset {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> X;  // n x p row-major
    std::vector<int> y;
    std::vector<int> a;
    std::vector<std::string> feature_names;
    PreprocStats stats;

    const double* row(std::size_t i) const { return X.data() + i * p; }
    std::span<const double> x(std::size_t i) const { return {row(i), p}; }

    std::size_t cell_count(int label, int group) const {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (y[i] == label && a[i] == group) ++c;
        return c;
    }
};

/// Fits standardization / one-hot dictionaries on `fit_indices` only and
/// applies them to every row.  Categories unseen during fitting map to an
/// all-zero block; missing continuous cells are imputed with the fit median.
inline Dataset preprocess(const RawTable& raw, const DatasetManifest& manifest,
                          const std::vector<std::size_t>& fit_indices) {
    if (fit_indices.empty())
        throw std::invalid_argument("preprocess: fitting index set is empty");

    auto in_list = [](const std::vector<std::string>& v, const std::string& s) {
        return std::find(v.begin(), v.end(), s) != v.end();
    };

    Dataset ds;
    ds.n = raw.n();
    ds.y = raw.y;
    ds.a = raw.a;

    // Fit per-column statistics.
    std::vector<std::size_t> active_cols;
    for (std::size_t c = 0; c < raw.columns.size(); ++c) {
        const std::string& name = raw.columns[c];
        if (name == manifest.target_column || name == manifest.protected_column) continue;
        if (in_list(manifest.drop_columns, name)) continue;

        ColumnStats cs;
        cs.name = name;
        if (in_list(manifest.categorical_columns, name)) {
            cs.categorical = true;
            std::set<std::string> cats;
            for (std::size_t i : fit_indices) cats.insert(detail::trim(raw.rows[i][c]));
            cs.categories.assign(cats.begin(), cats.end());
        } else {
            std::vector<double> vals;
            for (std::size_t i : fit_indices) {
                auto v = detail::parse_double(raw.rows[i][c]);
                if (v) vals.push_back(*v);
            }
            if (vals.empty())
                throw std::runtime_error("column " + name + ": no numeric values in fit split");
            std::vector<double> sorted = vals;
            std::sort(sorted.begin(), sorted.end());
            cs.median = sorted.size() % 2 == 1
                            ? sorted[sorted.size() / 2]
                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
            double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            var /= vals.size();
            cs.mean = mean;
            cs.stddev = std::sqrt(var);
            if (cs.stddev == 0.0) {
                cs.dropped = true;
                std::cerr << "warning: dropping zero-variance column " << name << "\n";
            }
        }
        ds.stats.columns.push_back(cs);
        active_cols.push_back(c);
    }

    // Feature layout.
    for (const auto& cs : ds.stats.columns) {
        if (cs.dropped) continue;
        if (cs.categorical)
            for (const auto& cat : cs.categories) ds.feature_names.push_back(cs.name + "=" + cat);
        else
            ds.feature_names.push_back(cs.name);
    }
    ds.p = ds.feature_names.size();
    ds.X.assign(ds.n * ds.p, 0.0);

    for (std::size_t i = 0; i < ds.n; ++i) {
        double* out = ds.X.data() + i * ds.p;
        std::size_t f = 0;
        for (std::size_t k = 0; k < ds.stats.columns.size(); ++k) {
            const ColumnStats& cs = ds.stats.columns[k];
            if (cs.dropped) continue;
            const std::string& cell = raw.rows[i][active_cols[k]];
            if (cs.categorical) {
                std::string v = detail::trim(cell);
                auto it = std::lower_bound(cs.categories.begin(), cs.categories.end(), v);
                if (it != cs.categories.end() && *it == v)
                    out[f + static_cast<std::size_t>(it - cs.categories.begin())] = 1.0;
                f += cs.categories.size();
            } else {
                auto v = detail::parse_double(cell);
                double x = v ? *v : cs.median;
                out[f++] = (x - cs.mean) / cs.stddev;
            }
        }
    }
    return ds;
}

/// Re-applies frozen preprocessing statistics to a raw table (model evaluation
/// path).  Throws if a fitted column is missing from the table.
inline Dataset apply_preprocessing(const RawTable& raw, const PreprocStats& stats) {
    Dataset ds;
    ds.n = raw.n();
    ds.y = raw.y;
    ds.a = raw.a;
    ds.stats = stats;

    std::vector<std::size_t> col_idx;
    for (const auto& cs : stats.columns) col_idx.push_back(raw.column_index(cs.name));

    for (const auto& cs : stats.columns) {
        if (cs.dropped) continue;
        if (cs.categorical)
            for (const auto& cat : cs.categories) ds.feature_names.push_back(cs.name + "=" + cat);
        else
            ds.feature_names.push_back(cs.name);
    }
    ds.p = ds.feature_names.size();
    ds.X.assign(ds.n * ds.p, 0.0);

    for (std::size_t i = 0; i < ds.n; ++i) {
        double* out = ds.X.data() + i * ds.p;
        std::size_t f = 0;
        for (std::size_t k = 0; k < stats.columns.size(); ++k) {
            const ColumnStats& cs = stats.columns[k];
            if (cs.dropped) continue;
            const std::string& cell = raw.rows[i][col_idx[k]];
            if (cs.categorical) {
                std::string v = detail::trim(cell);
                auto it = std::lower_bound(cs.categories.begin(), cs.categories.end(), v);
                if (it != cs.categories.end() && *it == v)
                    out[f + static_cast<std::size_t>(it - cs.categories.begin())] = 1.0;
                f += cs.categories.size();
            } else {
                auto v = detail::parse_double(cell);
                double x = v ? *v : cs.median;
                out[f++] = (x - cs.mean) / cs.stddev;
            }
        }
    }
    return ds;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::array<std::vector<std::size_t>, 4> strata(const std::vector<int>& y,
                                                      const std::vector<int>& a) {
    std::array<std::vector<std::size_t>, 4> cells;
    for (std::size_t i = 0; i < y.size(); ++i)
        cells[static_cast<std::size_t>(y[i] * 2 + a[i])].push_back(i);
    return cells;
}

// Largest-remainder allocation of m items over the given ratios; remainder
// ties broken by a seeded draw so the result is deterministic per seed.
inline std::vector<std::size_t> largest_remainder(std::size_t m, const std::vector<double>& ratios,
                                                  std::mt19937_64& rng) {
    std::vector<std::size_t> alloc(ratios.size());
    std::vector<double> rem(ratios.size());
    std::size_t used = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
        double exact = ratios[k] * static_cast<double>(m);
        alloc[k] = static_cast<std::size_t>(std::floor(exact));
        rem[k] = exact - std::floor(exact);
        used += alloc[k];
    }
    std::vector<std::size_t> order(ratios.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> tie(ratios.size());
    for (auto& t : tie) t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t z) {
        if (rem[x] != rem[z]) return rem[x] > rem[z];
        return tie[x] > tie[z];
    });
    for (std::size_t k = 0; used < m; ++k, ++used) alloc[order[k % order.size()]]++;
    return alloc;
}

}  // namespace detail

/// 60/20/20 (or custom) split, stratified by the (label, group) cell.
inline SplitIndices stratified_split(const std::vector<int>& y, const std::vector<int>& a,
                                     std::uint64_t seed,
                                     double train_ratio = 0.6, double val_ratio = 0.2) {
    SplitIndices s;
    s.seed = seed;
    std::mt19937_64 rng(seed);
    auto cells = detail::strata(y, a);
    for (std::size_t c = 0; c < 4; ++c) {
        auto& cell = cells[c];
        if (cell.empty())
            throw std::runtime_error("stratified_split: empty (y,a) cell " + std::to_string(c));
        std::shuffle(cell.begin(), cell.end(), rng);
        auto alloc = detail::largest_remainder(
            cell.size(), {train_ratio, val_ratio, 1.0 - train_ratio - val_ratio}, rng);
        std::size_t off = 0;
        s.train.insert(s.train.end(), cell.begin(), cell.begin() + alloc[0]);
        off += alloc[0];
        s.validation.insert(s.validation.end(), cell.begin() + off, cell.begin() + off + alloc[1]);
        off += alloc[1];
        s.test.insert(s.test.end(), cell.begin() + off, cell.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified k-fold assignment; folds are disjoint and cover all indices.
inline std::vector<Fold> kfold(const std::vector<int>& y, const std::vector<int>& a, int k,
                               std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    std::mt19937_64 rng(seed);
    auto cells = detail::strata(y, a);
    std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(k));
    for (auto& cell : cells) {
        if (cell.size() < static_cast<std::size_t>(k))
            throw std::runtime_error("kfold: a (y,a) cell has fewer than k instances");
        std::shuffle(cell.begin(), cell.end(), rng);
        for (std::size_t i = 0; i < cell.size(); ++i)
            fold_members[i % static_cast<std::size_t>(k)].push_back(cell[i]);
    }
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        auto& fm = fold_members[static_cast<std::size_t>(f)];
        std::sort(fm.begin(), fm.end());
        folds[static_cast<std::size_t>(f)].test = fm;
        for (int g = 0; g < k; ++g)
            if (g != f)
                folds[static_cast<std::size_t>(f)].train.insert(
                    folds[static_cast<std::size_t>(f)].train.end(),
                    fold_members[static_cast<std::size_t>(g)].begin(),
                    fold_members[static_cast<std::size_t>(g)].end());
        auto& tr = folds[static_cast<std::size_t>(f)].train;
        std::sort(tr.begin(), tr.end());
    }
    return folds;
}

/// Epoch minibatch schedule: one shuffle per epoch, last short batch kept.
inline std::vector<std::vector<std::size_t>> minibatches(const std::vector<std::size_t>& indices,
                                                         std::size_t batch_size,
                                                         std::uint64_t epoch_seed) {
    if (batch_size < 2) throw std::invalid_argument("minibatches: batch size must be >= 2");
    std::vector<std::size_t> perm = indices;
    std::mt19937_64 rng(epoch_seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < perm.size(); i += batch_size) {
        std::size_t end = std::min(i + batch_size, perm.size());
        batches.emplace_back(perm.begin() + i, perm.begin() + end);
    }
    return batches;
}

/// Synthetic tabular generator with known procedural bias: two designated
/// features carry group-dependent coefficients (+beta,-beta) vs (-beta,+beta)
/// while the remaining coefficients are shared; group 1 additionally has a
/// small mean shift on the designated features.  beta=0 collapses to a
/// group-invariant labeling mechanism.
struct SynthSpec {
    std::size_t n = 4000;
    std::size_t p = 8;
    double beta = 2.0;
    double noise = 0.5;   // std of Gaussian noise added to the label logit
    std::uint64_t seed = 0;
    double mean_shift = 1.0;
    double shared_coef = 1.0;
};

struct SynthData {
    RawTable raw;
    DatasetManifest manifest;
};

inline SynthData synth_biased_raw(const SynthSpec& spec) {
    if (spec.p < 4) throw std::invalid_argument("synth_biased: p must be >= 4");
    if (spec.beta < 0.0) throw std::invalid_argument("synth_biased: beta must be >= 0");

    std::mt19937_64 rng(spec.seed);
    std::bernoulli_distribution group(0.5);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SynthData out;
    out.manifest.csv_path = "synth.csv";
    out.manifest.target_column = "label";
    out.manifest.positive_value = "1";
    out.manifest.protected_column = "group";
    out.manifest.group1_value = "1";

    out.raw.columns.push_back("label");
    out.raw.columns.push_back("group");
    for (std::size_t j = 0; j < spec.p; ++j)
        out.raw.columns.push_back("f" + std::to_string(j));

    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };

    for (std::size_t i = 0; i < spec.n; ++i) {
        int g = group(rng) ? 1 : 0;
        std::vector<double> x(spec.p);
        for (std::size_t j = 0; j < spec.p; ++j) x[j] = gauss(rng);
        if (g == 1) {
            x[0] += spec.mean_shift;
            x[1] += spec.mean_shift;
        }
        double z = 0.0;
        z += (g == 0 ? spec.beta : -spec.beta) * x[0];
        z += (g == 0 ? -spec.beta : spec.beta) * x[1];
        for (std::size_t j = 2; j < spec.p; ++j) z += spec.shared_coef * x[j];
        z += spec.noise * gauss(rng);
        double pr = 1.0 / (1.0 + std::exp(-z));
        int label = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < pr ? 1 : 0;

        std::vector<std::string> row;
        row.push_back(std::to_string(label));
        row.push_back(std::to_string(g));
        for (std::size_t j = 0; j < spec.p; ++j) row.push_back(fmt(x[j]));
        out.raw.y.push_back(label);
        out.raw.a.push_back(g);
        out.raw.rows.push_back(std::move(row));
    }
    return out;
}

inline Dataset synth_biased(std::size_t n, std::size_t p, double beta, double noise,
                            std::uint64_t seed) {
    SynthSpec spec;
    spec.n = n;
    spec.p = p;
    spec.beta = beta;
    spec.noise = noise;
    spec.seed = seed;
    SynthData sd = synth_biased_raw(spec);
    std::vector<std::size_t> all(sd.raw.n());
    std::iota(all.begin(), all.end(), 0);
    return preprocess(sd.raw, sd.manifest, all);
}

/// Writes a RawTable back out as RFC-4180 CSV.
inline void write_csv(const RawTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv: " + path);
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q.push_back(c);
        }
        q += "\"";
        return q;
    };
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        out << (c ? "," : "") << quote(t.columns[c]);
    out << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c ? "," : "") << quote(row[c]);
        out << "\n";
    }
}

}  // namespace fairx::data

#endif  // FAIRX_DATA_HPP
