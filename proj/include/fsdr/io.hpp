#pragma once

// Text formats: dense matrix CSV, sparse long CSV with a response file, the
// Tecator spectra table and Monte Carlo reports.

#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "fsdr/error.hpp"
#include "fsdr/fpca.hpp"
#include "fsdr/funcbase.hpp"
#include "fsdr/simlab.hpp"
#include "fsdr/sparse.hpp"

namespace fsdr {

/// 17 significant digits; parses back to the same double.
inline std::string format_double(double x) { return fmt::format("{:.17g}", x); }

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, bool whitespace = false) {
    std::vector<std::string_view> out;
    if (whitespace) {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == ',' || line[i] == '\r')) ++i;
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != ',' && line[j] != '\r') ++j;
            if (j > i) out.push_back(line.substr(i, j - i));
            i = j;
        }
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline bool try_parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline double parse_double(std::string_view s, const std::string& file, std::size_t line) {
    double v = 0.0;
    if (!try_parse_double(s, v))
        throw DataError(fmt::format("{}:{}: cannot parse '{}' as a number", file, line, std::string(s)));
    return v;
}

inline bool numeric_row(const std::vector<std::string_view>& fields) {
    double tmp = 0.0;
    for (auto f : fields)
        if (!try_parse_double(f, tmp)) return false;
    return true;
}

/// Non-empty lines with their 1-based line numbers; '#' starts a comment line.
inline std::vector<std::pair<std::size_t, std::string>> read_lines(std::istream& in) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        out.emplace_back(no, std::string(t));
    }
    return out;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path));
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path));
    return out;
}

}  // namespace detail

/// Dense CSV: the first row holds the grid points; each further row is one
/// curve, followed by its response when the row has one extra column.
inline DenseFunctionalSample read_dense_csv(std::istream& in, const std::string& name = "<input>") {
    const auto lines = detail::read_lines(in);
    if (lines.empty()) throw DataError(fmt::format("{}: empty file", name));
    std::vector<double> pts;
    for (auto f : detail::split_fields(lines[0].second)) pts.push_back(detail::parse_double(f, name, lines[0].first));
    GridPtr grid;
    try {
        grid = std::make_shared<const Grid>(pts);
    } catch (const Error& e) {
        throw DataError(fmt::format("{}:{}: invalid grid row: {}", name, lines[0].first, e.what()));
    }
    const auto p = static_cast<Eigen::Index>(pts.size());
    if (lines.size() < 2) throw DataError(fmt::format("{}: no curves after the grid row", name));
    const auto n = static_cast<Eigen::Index>(lines.size() - 1);
    DenseFunctionalSample s{grid, Eigen::MatrixXd(n, p), {}};
    Eigen::Index width = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [no, text] = lines[static_cast<std::size_t>(i + 1)];
        const auto fields = detail::split_fields(text);
        const auto w = static_cast<Eigen::Index>(fields.size());
        if (w != p && w != p + 1)
            throw DataError(fmt::format("{}:{}: expected {} or {} columns, found {}", name, no, p, p + 1, w));
        if (width < 0) {
            width = w;
            if (w == p + 1) s.responses.resize(n);
        } else if (w != width) {
            throw DataError(fmt::format("{}:{}: expected {} columns like the first curve row, found {}", name, no, width, w));
        }
        for (Eigen::Index j = 0; j < p; ++j) s.curves(i, j) = detail::parse_double(fields[static_cast<std::size_t>(j)], name, no);
        if (w == p + 1) s.responses[i] = detail::parse_double(fields.back(), name, no);
    }
    s.validate(1);
    return s;
}

inline DenseFunctionalSample read_dense_csv(const std::string& path) {
    auto in = detail::open_input(path);
    return read_dense_csv(in, path);
}

inline void write_dense_csv(std::ostream& out, const DenseFunctionalSample& s) {
    const auto& pts = s.grid->points();
    for (std::size_t j = 0; j < pts.size(); ++j) out << (j ? "," : "") << format_double(pts[j]);
    out << '\n';
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        for (Eigen::Index j = 0; j < s.curves.cols(); ++j) out << (j ? "," : "") << format_double(s.curves(i, j));
        if (s.has_responses()) out << ',' << format_double(s.responses[i]);
        out << '\n';
    }
}

/// Subject identifiers in order of first appearance in the long file.
struct SparseRecords {
    SparseFunctionalSample sample;
    std::vector<std::string> ids;
};

/// Long CSV with columns (id, t, u); an optional header row is skipped.
/// Observations of a subject are sorted by time.
inline SparseRecords read_sparse_csv(std::istream& in, const std::string& name = "<input>") {
    const auto lines = detail::read_lines(in);
    SparseRecords rec;
    std::map<std::string, std::size_t> index;
    std::vector<std::vector<std::pair<double, double>>> obs;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& [no, text] = lines[k];
        const auto fields = detail::split_fields(text);
        if (fields.size() != 3) throw DataError(fmt::format("{}:{}: expected 3 columns (id,t,u), found {}", name, no, fields.size()));
        double t = 0.0;
        if (k == 0 && !detail::try_parse_double(fields[1], t)) continue;
        t = detail::parse_double(fields[1], name, no);
        const double u = detail::parse_double(fields[2], name, no);
        if (!(t >= 0.0 && t <= 1.0)) throw DataError(fmt::format("{}:{}: time {} outside [0,1]", name, no, t));
        const std::string id(fields[0]);
        auto [it, inserted] = index.emplace(id, rec.ids.size());
        if (inserted) {
            rec.ids.push_back(id);
            obs.emplace_back();
        }
        obs[it->second].emplace_back(t, u);
    }
    if (obs.empty()) throw DataError(fmt::format("{}: no observations", name));
    for (std::size_t i = 0; i < obs.size(); ++i) {
        auto& o = obs[i];
        std::stable_sort(o.begin(), o.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t j = 1; j < o.size(); ++j)
            if (o[j].first == o[j - 1].first)
                throw DataError(fmt::format("{}: subject '{}' has two observations at time {}", name, rec.ids[i], o[j].first));
        SubjectObservations s{Eigen::VectorXd(static_cast<Eigen::Index>(o.size())), Eigen::VectorXd(static_cast<Eigen::Index>(o.size()))};
        for (std::size_t j = 0; j < o.size(); ++j) {
            s.times[static_cast<Eigen::Index>(j)] = o[j].first;
            s.values[static_cast<Eigen::Index>(j)] = o[j].second;
        }
        rec.sample.subjects.push_back(std::move(s));
    }
    return rec;
}

/// Attaches responses from an (id, y) CSV; every subject needs exactly one.
inline void read_sparse_responses(std::istream& in, SparseRecords& rec, const std::string& name = "<responses>") {
    const auto lines = detail::read_lines(in);
    std::map<std::string, double> y;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& [no, text] = lines[k];
        const auto fields = detail::split_fields(text);
        if (fields.size() != 2) throw DataError(fmt::format("{}:{}: expected 2 columns (id,y), found {}", name, no, fields.size()));
        double v = 0.0;
        if (k == 0 && !detail::try_parse_double(fields[1], v)) continue;
        v = detail::parse_double(fields[1], name, no);
        if (!y.emplace(std::string(fields[0]), v).second)
            throw DataError(fmt::format("{}:{}: duplicate response for subject '{}'", name, no, std::string(fields[0])));
    }
    rec.sample.responses.resize(static_cast<Eigen::Index>(rec.ids.size()));
    for (std::size_t i = 0; i < rec.ids.size(); ++i) {
        const auto it = y.find(rec.ids[i]);
        if (it == y.end()) throw DataError(fmt::format("{}: no response for subject '{}'", name, rec.ids[i]));
        rec.sample.responses[static_cast<Eigen::Index>(i)] = it->second;
    }
}

inline SparseRecords read_sparse_files(const std::string& long_path, const std::string& response_path = {}) {
    auto in = detail::open_input(long_path);
    auto rec = read_sparse_csv(in, long_path);
    if (!response_path.empty()) {
        auto rin = detail::open_input(response_path);
        read_sparse_responses(rin, rec, response_path);
    }
    rec.sample.validate();
    return rec;
}

inline void write_sparse_csv(std::ostream& long_out, std::ostream* response_out, const SparseFunctionalSample& s) {
    long_out << "id,t,u\n";
    for (std::size_t i = 0; i < s.subjects.size(); ++i)
        for (Eigen::Index j = 0; j < s.subjects[i].size(); ++j)
            long_out << i << ',' << format_double(s.subjects[i].times[j]) << ',' << format_double(s.subjects[i].values[j])
                     << '\n';
    if (response_out && s.has_responses()) {
        *response_out << "id,y\n";
        for (Eigen::Index i = 0; i < s.n(); ++i) *response_out << i << ',' << format_double(s.responses[i]) << '\n';
    }
}

/// Fat percentage to log10(u / (1 - u)) with u = fat / 100.
inline double tecator_response(double fat_percent) {
    const double u = fat_percent / 100.0;
    return std::log10(u / (1.0 - u));
}

/// Tecator table: each record holds 100 absorbances followed by the fat
/// percentage (101 columns), or the full 125-column layout (absorbances,
/// 22 principal components, moisture, fat, protein). Comma or whitespace
/// separated. Channels are mapped to a uniform grid on [0,1].
inline DenseFunctionalSample read_tecator(std::istream& in, const std::string& name = "<tecator>") {
    constexpr Eigen::Index channels = 100;
    const auto lines = detail::read_lines(in);
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& [no, text] = lines[k];
        const auto fields = detail::split_fields(text, true);
        if (k == 0 && !detail::numeric_row(fields)) continue;
        if (fields.size() != 101 && fields.size() != 125)
            throw DataError(fmt::format("{}:{}: expected 101 or 125 columns, found {}", name, no, fields.size()));
        std::vector<double> r;
        for (auto f : fields) r.push_back(detail::parse_double(f, name, no));
        const double fat = fields.size() == 101 ? r[100] : r[123];
        if (!(fat > 0.0 && fat < 100.0))
            throw DataError(fmt::format("{}:{}: record {} has fat {} outside (0,100)", name, no, rows.size(), fat));
        r.resize(channels);
        r.push_back(fat);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw DataError(fmt::format("{}: no records", name));
    const auto n = static_cast<Eigen::Index>(rows.size());
    DenseFunctionalSample s{Grid::uniform(static_cast<std::size_t>(channels)), Eigen::MatrixXd(n, channels), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < channels; ++j) s.curves(i, j) = r[static_cast<std::size_t>(j)];
        s.responses[i] = tecator_response(r.back());
    }
    s.validate(1);
    return s;
}

inline DenseFunctionalSample read_tecator(const std::string& path) {
    auto in = detail::open_input(path);
    return read_tecator(in, path);
}

/// One row per replicate. The runtime column is optional because it breaks
/// byte-for-byte reproducibility.
inline void write_monte_carlo_csv(std::ostream& out, const MonteCarloReport& r, bool runtime_column = false) {
    out << "model,n,design,replicate,seed,status,error,truncation";
    if (runtime_column) out << ",runtime_ms";
    out << '\n';
    for (const auto& row : r.rows) {
        out << r.config.model_id << ',' << r.config.n << ',' << to_string(r.config.design) << ',' << row.replicate << ','
            << row.seed << ',' << (row.ok ? "ok" : "failed") << ',' << (row.ok ? format_double(row.error) : "") << ','
            << row.truncation;
        if (runtime_column) out << ',' << fmt::format("{:.3f}", row.runtime_ms);
        out << '\n';
    }
}

inline nlohmann::ordered_json monte_carlo_summary(const MonteCarloReport& r) {
    nlohmann::ordered_json j;
    const auto& c = r.config;
    j["model"] = c.model_id;
    j["n"] = c.n;
    j["design"] = to_string(c.design);
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["grid_points"] = c.grid_points;
    j["fve"] = c.components.fve;
    j["max_components"] = c.components.max_components;
    j["restarts"] = c.solver.restarts;
    j["max_iterations"] = c.solver.nelder_mead.max_iterations;
    j["ftol"] = c.solver.nelder_mead.ftol;
    j["valid"] = r.valid();
    j["failures"] = r.failures;
    j["mean"] = r.mean;
    j["sd"] = r.sd;
    j["se"] = r.se;
    j["invalid"] = r.invalid;
    nlohmann::ordered_json failed = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        if (!row.ok) failed.push_back({{"replicate", row.replicate}, {"message", row.message}});
    j["failed_replicates"] = failed;
    return j;
}

}  // namespace fsdr
