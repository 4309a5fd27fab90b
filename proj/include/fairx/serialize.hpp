#ifndef FAIRX_SERIALIZE_HPP
#define FAIRX_SERIALIZE_HPP

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fairx/attribution.hpp"
#include "fairx/data.hpp"
#include "fairx/model.hpp"
#include "fairx/training.hpp"

namespace fairx::serialize {

using nlohmann::json;
using nlohmann::ordered_json;

inline ordered_json baselines_to_json(const attribution::BaselineState& st) {
    ordered_json j;
    j["baseline_y0_g0"] = st.baseline(0, 0);
    j["baseline_y0_g1"] = st.baseline(0, 1);
    j["baseline_y1_g0"] = st.baseline(1, 0);
    j["baseline_y1_g1"] = st.baseline(1, 1);
    j["gamma"] = st.gamma;
    j["update_counts"] = {st.update_count[0][0], st.update_count[0][1], st.update_count[1][0],
                          st.update_count[1][1]};
    return j;
}

inline attribution::BaselineState baselines_from_json(const json& j) {
    attribution::BaselineState st;
    st.baseline(0, 0) = j.at("baseline_y0_g0").get<std::vector<double>>();
    st.baseline(0, 1) = j.at("baseline_y0_g1").get<std::vector<double>>();
    st.baseline(1, 0) = j.at("baseline_y1_g0").get<std::vector<double>>();
    st.baseline(1, 1) = j.at("baseline_y1_g1").get<std::vector<double>>();
    st.gamma = j.at("gamma").get<double>();
    st.dim = st.baseline(0, 0).size();
    if (j.contains("update_counts")) {
        auto c = j.at("update_counts").get<std::vector<long>>();
        st.update_count = {{{c[0], c[1]}, {c[2], c[3]}}};
    }
    return st;
}

inline ordered_json stats_to_json(const data::PreprocStats& stats) {
    ordered_json arr = ordered_json::array();
    for (const auto& c : stats.columns) {
        ordered_json j;
        j["name"] = c.name;
        j["categorical"] = c.categorical;
        j["dropped"] = c.dropped;
        if (c.categorical) {
            j["categories"] = c.categories;
        } else {
            j["mean"] = c.mean;
            j["std"] = c.stddev;
            j["median"] = c.median;
        }
        arr.push_back(j);
    }
    return arr;
}

inline data::PreprocStats stats_from_json(const json& arr) {
    data::PreprocStats stats;
    for (const auto& j : arr) {
        data::ColumnStats c;
        c.name = j.at("name").get<std::string>();
        c.categorical = j.at("categorical").get<bool>();
        c.dropped = j.at("dropped").get<bool>();
        if (c.categorical) {
            c.categories = j.at("categories").get<std::vector<std::string>>();
        } else {
            c.mean = j.at("mean").get<double>();
            c.stddev = j.at("std").get<double>();
            c.median = j.at("median").get<double>();
        }
        stats.columns.push_back(std::move(c));
    }
    return stats;
}

/// Self-contained trained-model document: architecture, weights, frozen
/// baselines, preprocessing statistics, and the config used to train.
struct ModelDocument {
    model::MlpParams params;
    attribution::BaselineState baselines;
    data::PreprocStats stats;
    std::vector<std::string> feature_names;
    training::TrainConfig config;
    std::uint64_t split_seed = 0;

    ordered_json to_json() const {
        ordered_json j;
        j["layer_sizes"] = params.layer_sizes;
        j["activation"] = model::to_string(params.activation);
        j["weights"] = params.weights;
        j["init_seed"] = params.seed;
        j["baselines"] = baselines_to_json(baselines);
        j["preprocessing"] = stats_to_json(stats);
        j["feature_names"] = feature_names;
        j["config"] = config.to_json();
        j["split_seed"] = split_seed;
        return j;
    }

    static ModelDocument from_json(const json& j) {
        ModelDocument d;
        d.params.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        d.params.activation = model::activation_from_string(j.at("activation").get<std::string>());
        d.params.weights = j.at("weights").get<std::vector<double>>();
        d.params.seed = j.value("init_seed", std::uint64_t{0});
        d.baselines = baselines_from_json(j.at("baselines"));
        d.stats = stats_from_json(j.at("preprocessing"));
        d.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        d.config = training::TrainConfig::from_json(j.at("config"));
        d.split_seed = j.value("split_seed", std::uint64_t{0});
        return d;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write model file: " + path);
        out << to_json().dump(2) << "\n";
    }

    static ModelDocument load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open model file: " + path);
        json j;
        in >> j;
        return from_json(j);
    }
};

}  // namespace fairx::serialize

#endif  // FAIRX_SERIALIZE_HPP
