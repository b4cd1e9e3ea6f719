#pragma once

// JSON model files: components, coefficients, direction curves and the
// training projections used for prediction.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "fsdr/error.hpp"
#include "fsdr/predict.hpp"

namespace fsdr {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

/// Row-major nested arrays.
inline Json matrix_json(const Eigen::MatrixXd& m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
    return a;
}

inline Eigen::VectorXd json_vector(const Json& j, const char* what) {
    if (!j.is_array()) throw DataError(fmt::format("model file: '{}' must be an array", what));
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

inline Eigen::MatrixXd json_matrix(const Json& j, Eigen::Index cols, const char* what) {
    if (!j.is_array()) throw DataError(fmt::format("model file: '{}' must be an array of rows", what));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Eigen::VectorXd row = json_vector(j[i], what);
        if (row.size() != cols)
            throw DataError(fmt::format("model file: '{}' row {} has {} entries, expected {}", what, i, row.size(), cols));
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

}  // namespace detail

struct ModelArtifact {
    PredictionModel model;
    std::uint64_t seed = 0;
    Json config = Json::object();
    std::vector<std::string> warnings;
};

inline Json to_json(const ModelArtifact& a) {
    const auto& m = a.model;
    const auto& es = m.eigensystem;
    Json j;
    j["kind"] = "fsdr-model";
    j["version"] = 1;
    j["source"] = to_string(m.source);
    j["grid"] = es.mean.grid->points();
    j["mean"] = detail::vector_json(es.mean.values);
    j["eigenvalues"] = detail::vector_json(es.eigenvalues);
    j["truncation"] = es.truncation;
    j["fve_threshold"] = es.fve_threshold;
    j["eigenfunctions"] = detail::matrix_json(es.basis().transpose());
    j["noise_sigma2"] = m.noise.sigma2;
    j["bandwidths"] = {{"h_mu", m.bandwidths.h_mu}, {"h_sigma", m.bandwidths.h_sigma}};
    j["k"] = m.k();
    j["coefficients"] = detail::matrix_json(m.basis.coefficients.coefficients);
    j["white_directions"] = detail::matrix_json(m.basis.coefficients.white_directions);
    j["objective_values"] = detail::vector_json(m.basis.coefficients.objective_values);
    Json dirs = Json::array();
    for (const auto& d : m.basis.directions) dirs.push_back(detail::vector_json(d.values));
    j["directions"] = dirs;
    j["projections"] = detail::matrix_json(m.projections);
    j["responses"] = detail::vector_json(m.responses);
    j["k_nn"] = m.k_nn;
    j["seed"] = a.seed;
    j["config"] = a.config;
    j["warnings"] = a.warnings;
    return j;
}

inline ModelArtifact artifact_from_json(const Json& j) {
    try {
        if (j.value("kind", std::string()) != "fsdr-model") throw DataError("model file: not an fsdr model");
        ModelArtifact a;
        auto& m = a.model;
        const auto grid = std::make_shared<const Grid>(j.at("grid").get<std::vector<double>>());
        const auto p = static_cast<Eigen::Index>(grid->size());
        auto& es = m.eigensystem;
        es.mean = Curve(grid, detail::json_vector(j.at("mean"), "mean"));
        es.eigenvalues = detail::json_vector(j.at("eigenvalues"), "eigenvalues");
        es.truncation = j.at("truncation").get<int>();
        es.fve_threshold = j.at("fve_threshold").get<double>();
        const Eigen::MatrixXd phi = detail::json_matrix(j.at("eigenfunctions"), p, "eigenfunctions");
        if (phi.rows() != es.truncation) throw DataError("model file: eigenfunction count differs from truncation");
        for (Eigen::Index r = 0; r < phi.rows(); ++r) es.eigenfunctions.emplace_back(grid, phi.row(r).transpose());
        const std::string source = j.at("source").get<std::string>();
        if (source != "exact" && source != "pace") throw DataError(fmt::format("model file: unknown source '{}'", source));
        m.source = source == "exact" ? ScoreSource::exact : ScoreSource::pace;
        m.noise.sigma2 = j.at("noise_sigma2").get<double>();
        m.bandwidths.h_mu = j.at("bandwidths").at("h_mu").get<double>();
        m.bandwidths.h_sigma = j.at("bandwidths").at("h_sigma").get<double>();
        const auto k = j.at("k").get<Eigen::Index>();
        auto& cm = m.basis.coefficients;
        cm.coefficients = detail::json_matrix(j.at("coefficients"), k, "coefficients");
        cm.white_directions = detail::json_matrix(j.at("white_directions"), k, "white_directions");
        cm.objective_values = detail::json_vector(j.at("objective_values"), "objective_values");
        for (const auto& d : j.at("directions")) m.basis.directions.emplace_back(grid, detail::json_vector(d, "directions"));
        if (static_cast<Eigen::Index>(m.basis.directions.size()) != k) throw DataError("model file: direction count differs from k");
        m.projections = detail::json_matrix(j.at("projections"), k, "projections");
        m.responses = detail::json_vector(j.at("responses"), "responses");
        m.k_nn = j.at("k_nn").get<int>();
        a.seed = j.at("seed").get<std::uint64_t>();
        a.config = j.at("config");
        a.warnings = j.at("warnings").get<std::vector<std::string>>();
        m.validate();
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("model file: {}", e.what()));
    } catch (const PreconditionError& e) {
        throw DataError(fmt::format("model file: {}", e.what()));
    }
}

inline void save_artifact(const ModelArtifact& a, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path));
    out << to_json(a).dump(1) << '\n';
}

inline ModelArtifact load_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path));
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: {}", path, e.what()));
    }
    return artifact_from_json(j);
}

}  // namespace fsdr
