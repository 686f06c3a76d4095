// Declarative experiment configuration: one JSON file describes either an
// NDM model or an explicit schedule, plus run sizes, tolerances and output
// locations. Unknown keys are rejected with their full field path so typos
// fail fast instead of silently running defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qnd/errors.hpp"
#include "qnd/ndm.hpp"
#include "qnd/operators.hpp"

namespace qnd {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

struct ModelConfig {
    int max_label = 1;
    std::optional<std::vector<std::vector<double>>> outcome_law;
    std::optional<std::vector<double>> weights;
    std::optional<std::vector<Eigen::Index>> block_dims;

    NdmModel build() const {
        if (outcome_law)
            return NdmModel(max_label, *outcome_law,
                            block_dims.value_or(std::vector<Eigen::Index>{}));
        if (block_dims) return NdmModel(max_label, default_law(), *block_dims);
        return NdmModel(max_label);
    }
    MixtureState mixture() const {
        if (weights) return MixtureState{*weights, {}};
        return MixtureState::uniform(max_label + 1);
    }

  private:
    std::vector<std::vector<double>> default_law() const {
        return NdmModel(max_label).outcome_law();
    }
};

struct ScheduleConfig {
    std::vector<std::string> alphabet;
    int dim = 2;
    bool stationary = false;
    // steps[t][s] is the projection for symbol s at step t+1, row-major
    // [re, im] pairs
    std::vector<std::vector<std::vector<std::pair<double, double>>>> steps;

    MeasurementSchedule build() const {
        Alphabet ab(alphabet);
        std::vector<Instrument> instruments;
        for (const auto& step : steps) {
            std::vector<Matrix> projections;
            for (const auto& flat : step) {
                if (flat.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim))
                    throw ConfigError("schedule: projection needs dim*dim entries");
                Matrix m(dim, dim);
                for (int r = 0; r < dim; ++r)
                    for (int c = 0; c < dim; ++c) {
                        const auto& z = flat[static_cast<std::size_t>(r * dim + c)];
                        m(r, c) = Complex(z.first, z.second);
                    }
                projections.push_back(std::move(m));
            }
            instruments.emplace_back(ab, std::move(projections));
        }
        if (instruments.empty()) throw ConfigError("schedule: at least one step required");
        if (stationary) {
            if (instruments.size() != 1)
                throw ConfigError("schedule: stationary form takes exactly one step");
            return MeasurementSchedule::stationary(instruments.front());
        }
        return MeasurementSchedule::from_steps(std::move(instruments));
    }
};

struct ExperimentConfig {
    std::string kind = "verify";
    std::optional<ModelConfig> model;
    std::optional<ScheduleConfig> schedule;
    int horizon = 1000;
    int trajectories = 1000;
    std::uint64_t seed = 1;
    int depth = 3;
    std::vector<int> tv_depths = {1, 5, 10, 20, 120};
    double tv_goal = 0.99;
    double epsilon_mol = 0.1;
    std::pair<double, double> zero_one_interval = {0.25, 0.42};
    bool record_path = false;
    int pairs = 20;
    int partitions = 50;
    int random_schedules = 100;
    int jobs = 1;
    bool strict = false;
    std::string out_dir = "out";
};

namespace detail {

inline void require_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError("unknown config key '" +
                              (path.empty() ? item.key() : path + "." + item.key()) + "'");
}

template <typename T>
T field_as(const Json& j, const std::string& key, const std::string& path) {
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError("config field '" + (path.empty() ? key : path + "." + key) +
                          "': " + e.what());
    }
}

}  // namespace detail

inline ModelConfig parse_model_config(const Json& j, const std::string& path = "model") {
    detail::require_keys(j, {"N", "outcome_law", "weights", "block_dims"}, path);
    ModelConfig m;
    if (!j.contains("N")) throw ConfigError("config field '" + path + ".N' is required");
    m.max_label = detail::field_as<int>(j, "N", path);
    if (j.contains("outcome_law"))
        m.outcome_law = detail::field_as<std::vector<std::vector<double>>>(j, "outcome_law", path);
    if (j.contains("weights"))
        m.weights = detail::field_as<std::vector<double>>(j, "weights", path);
    if (j.contains("block_dims"))
        m.block_dims = detail::field_as<std::vector<Eigen::Index>>(j, "block_dims", path);
    return m;
}

inline ScheduleConfig parse_schedule_config(const Json& j, const std::string& path = "schedule") {
    detail::require_keys(j, {"alphabet", "dim", "stationary", "steps"}, path);
    ScheduleConfig s;
    s.alphabet = detail::field_as<std::vector<std::string>>(j, "alphabet", path);
    s.dim = detail::field_as<int>(j, "dim", path);
    if (j.contains("stationary")) s.stationary = detail::field_as<bool>(j, "stationary", path);
    s.steps = detail::field_as<std::vector<std::vector<std::vector<std::pair<double, double>>>>>(
        j, "steps", path);
    return s;
}

inline ExperimentConfig parse_config(const Json& j) {
    detail::require_keys(
        j,
        {"kind", "model", "schedule", "horizon", "trajectories", "seed", "depth", "tv_depths",
         "tv_goal", "epsilon_mol", "zero_one_interval", "record_path", "pairs", "partitions",
         "random_schedules", "jobs", "strict", "out_dir"},
        "");
    ExperimentConfig c;
    if (j.contains("kind")) {
        c.kind = detail::field_as<std::string>(j, "kind", "");
        if (c.kind != "verify" && c.kind != "sample" && c.kind != "disintegrate" &&
            c.kind != "checks")
            throw ConfigError("config field 'kind': must be verify, sample, disintegrate or checks");
    }
    if (j.contains("model")) c.model = parse_model_config(j.at("model"));
    if (j.contains("schedule")) c.schedule = parse_schedule_config(j.at("schedule"));
    if (c.model && c.schedule)
        throw ConfigError("config: give either 'model' or 'schedule', not both");
    if (j.contains("horizon")) c.horizon = detail::field_as<int>(j, "horizon", "");
    if (j.contains("trajectories")) c.trajectories = detail::field_as<int>(j, "trajectories", "");
    if (j.contains("seed")) c.seed = detail::field_as<std::uint64_t>(j, "seed", "");
    if (j.contains("depth")) c.depth = detail::field_as<int>(j, "depth", "");
    if (j.contains("tv_depths")) c.tv_depths = detail::field_as<std::vector<int>>(j, "tv_depths", "");
    if (j.contains("tv_goal")) c.tv_goal = detail::field_as<double>(j, "tv_goal", "");
    if (j.contains("epsilon_mol")) c.epsilon_mol = detail::field_as<double>(j, "epsilon_mol", "");
    if (j.contains("zero_one_interval")) {
        auto v = detail::field_as<std::vector<double>>(j, "zero_one_interval", "");
        if (v.size() != 2) throw ConfigError("config field 'zero_one_interval': need [lo, hi]");
        c.zero_one_interval = {v[0], v[1]};
    }
    if (j.contains("record_path")) c.record_path = detail::field_as<bool>(j, "record_path", "");
    if (j.contains("pairs")) c.pairs = detail::field_as<int>(j, "pairs", "");
    if (j.contains("partitions")) c.partitions = detail::field_as<int>(j, "partitions", "");
    if (j.contains("random_schedules"))
        c.random_schedules = detail::field_as<int>(j, "random_schedules", "");
    if (j.contains("jobs")) c.jobs = detail::field_as<int>(j, "jobs", "");
    if (j.contains("strict")) c.strict = detail::field_as<bool>(j, "strict", "");
    if (j.contains("out_dir")) c.out_dir = detail::field_as<std::string>(j, "out_dir", "");

    if (c.horizon < 1) throw ConfigError("config field 'horizon': must be >= 1");
    if (c.trajectories < 1) throw ConfigError("config field 'trajectories': must be >= 1");
    if (c.depth < 1) throw ConfigError("config field 'depth': must be >= 1");
    if (c.jobs < 1) throw ConfigError("config field 'jobs': must be >= 1");
    if (c.pairs < 1 || c.partitions < 1 || c.random_schedules < 1)
        throw ConfigError("config: check counts must be >= 1");
    if (!(c.epsilon_mol > 0.0)) throw ConfigError("config field 'epsilon_mol': must be positive");
    if (!(c.tv_goal > 0.0)) throw ConfigError("config field 'tv_goal': must be positive");
    return c;
}

inline ExperimentConfig load_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file '" + file + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ConfigError("config file '" + file + "': " + e.what());
    }
    return parse_config(j);
}

inline OrderedJson config_to_json(const ExperimentConfig& c) {
    OrderedJson j;
    j["kind"] = c.kind;
    if (c.model) {
        OrderedJson m;
        m["N"] = c.model->max_label;
        if (c.model->outcome_law) m["outcome_law"] = *c.model->outcome_law;
        if (c.model->weights) m["weights"] = *c.model->weights;
        if (c.model->block_dims) m["block_dims"] = *c.model->block_dims;
        j["model"] = m;
    }
    if (c.schedule) {
        OrderedJson s;
        s["alphabet"] = c.schedule->alphabet;
        s["dim"] = c.schedule->dim;
        s["stationary"] = c.schedule->stationary;
        s["steps"] = c.schedule->steps;
        j["schedule"] = s;
    }
    j["horizon"] = c.horizon;
    j["trajectories"] = c.trajectories;
    j["seed"] = c.seed;
    j["depth"] = c.depth;
    j["tv_depths"] = c.tv_depths;
    j["tv_goal"] = c.tv_goal;
    j["epsilon_mol"] = c.epsilon_mol;
    j["zero_one_interval"] = {c.zero_one_interval.first, c.zero_one_interval.second};
    j["record_path"] = c.record_path;
    j["pairs"] = c.pairs;
    j["partitions"] = c.partitions;
    j["random_schedules"] = c.random_schedules;
    j["jobs"] = c.jobs;
    j["strict"] = c.strict;
    j["out_dir"] = c.out_dir;
    return j;
}

}  // namespace qnd
