#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fourcrop/image.hpp"
#include "fourcrop/model.hpp"
#include "fourcrop/train.hpp"

namespace fourcrop::cli {

// Configuration for a whole run, addressable as flat dotted keys
// (model.input_size, train.epochs, ...) from a JSON file or overrides.
struct RunConfig {
    ModelConfig model;
    train::TrainConfig training;
    img::AugmentConfig augment;
    train::GradCheckConfig gradcheck;
    std::string data_root;
    std::string out_dir = "out";
    std::string checkpoint_path;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    // one dotted key; unknown keys and wrong types fail loudly
    void set(const std::string& key, const nlohmann::json& value);
    nlohmann::ordered_json to_json() const;
};

// defaults, then the file's keys when a path is given
RunConfig load_run_config(const std::string& path);

// "key=value" pairs; values parse as JSON when they can, else as strings
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

void write_effective_config(const RunConfig& cfg, const std::string& path);

} // namespace fourcrop::cli
