#include "fourcrop/runconfig.hpp"

#include <fstream>

#include "fourcrop/errors.hpp"

namespace fourcrop::cli {

namespace {

template <class T>
T get_as(const nlohmann::json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type (" + value.dump() + ")");
    }
}

Shape get_plan(const nlohmann::json& value, const std::string& key, std::size_t want) {
    auto plan = get_as<std::vector<std::size_t>>(value, key);
    if (plan.size() != want)
        throw ConfigError("config key '" + key + "' needs exactly " + std::to_string(want) +
                          " entries");
    return plan;
}

} // namespace

void RunConfig::set(const std::string& key, const nlohmann::json& value) {
    if (key == "seed") seed = get_as<std::uint64_t>(value, key);
    else if (key == "threads") threads = get_as<std::size_t>(value, key);
    else if (key == "data.root") data_root = get_as<std::string>(value, key);
    else if (key == "out.dir") out_dir = get_as<std::string>(value, key);
    else if (key == "checkpoint.path") checkpoint_path = get_as<std::string>(value, key);

    else if (key == "model.input_size") model.input_size = get_as<std::size_t>(value, key);
    else if (key == "model.channel_plan") model.channel_plan = get_plan(value, key, 4);
    else if (key == "model.fc_plan") model.fc_plan = get_plan(value, key, 2);
    else if (key == "model.dropout") model.dropout = get_as<double>(value, key);
    else if (key == "model.num_classes") model.num_classes = get_as<std::size_t>(value, key);
    else if (key == "model.se_reduction") model.se_reduction = get_as<std::size_t>(value, key);
    else if (key == "model.head") model.head = head_from_name(get_as<std::string>(value, key));

    else if (key == "train.epochs") training.epochs = get_as<std::size_t>(value, key);
    else if (key == "train.batch_size") training.batch_size = get_as<std::size_t>(value, key);
    else if (key == "train.optimizer") training.optimizer = get_as<std::string>(value, key);
    else if (key == "train.learning_rate") training.learning_rate = get_as<double>(value, key);
    else if (key == "train.beta1") training.beta1 = get_as<double>(value, key);
    else if (key == "train.beta2") training.beta2 = get_as<double>(value, key);
    else if (key == "train.eps") training.eps = get_as<double>(value, key);
    else if (key == "train.patience") training.patience = get_as<std::size_t>(value, key);
    else if (key == "train.stop_train_acc") training.stop_train_acc = get_as<double>(value, key);

    else if (key == "augment.rotation_degrees")
        augment.rotation_degrees = get_as<double>(value, key);
    else if (key == "augment.horizontal_flip_prob")
        augment.horizontal_flip_prob = get_as<double>(value, key);
    else if (key == "augment.vertical_flip_prob")
        augment.vertical_flip_prob = get_as<double>(value, key);
    else if (key == "augment.brightness_delta")
        augment.brightness_delta = get_as<double>(value, key);

    else if (key == "gradcheck.input_size") gradcheck.input_size = get_as<std::size_t>(value, key);
    else if (key == "gradcheck.batch_size") gradcheck.batch_size = get_as<std::size_t>(value, key);
    else if (key == "gradcheck.per_param") gradcheck.per_param = get_as<std::size_t>(value, key);
    else if (key == "gradcheck.tolerance") gradcheck.tolerance = get_as<double>(value, key);
    else if (key == "gradcheck.step") gradcheck.step = get_as<double>(value, key);

    else
        throw ConfigError("unknown config key '" + key + "'");
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["data.root"] = data_root;
    j["out.dir"] = out_dir;
    j["checkpoint.path"] = checkpoint_path;
    j["model.input_size"] = model.input_size;
    j["model.channel_plan"] = model.channel_plan;
    j["model.fc_plan"] = model.fc_plan;
    j["model.dropout"] = model.dropout;
    j["model.num_classes"] = model.num_classes;
    j["model.se_reduction"] = model.se_reduction;
    j["model.head"] = head_name(model.head);
    j["train.epochs"] = training.epochs;
    j["train.batch_size"] = training.batch_size;
    j["train.optimizer"] = training.optimizer;
    j["train.learning_rate"] = training.learning_rate;
    j["train.beta1"] = training.beta1;
    j["train.beta2"] = training.beta2;
    j["train.eps"] = training.eps;
    j["train.patience"] = training.patience;
    j["train.stop_train_acc"] = training.stop_train_acc;
    j["augment.rotation_degrees"] = augment.rotation_degrees;
    j["augment.horizontal_flip_prob"] = augment.horizontal_flip_prob;
    j["augment.vertical_flip_prob"] = augment.vertical_flip_prob;
    j["augment.brightness_delta"] = augment.brightness_delta;
    j["gradcheck.input_size"] = gradcheck.input_size;
    j["gradcheck.batch_size"] = gradcheck.batch_size;
    j["gradcheck.per_param"] = gradcheck.per_param;
    j["gradcheck.tolerance"] = gradcheck.tolerance;
    j["gradcheck.step"] = gradcheck.step;
    return j;
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;

    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
    for (const auto& [key, value] : j.items()) cfg.set(key, value);
    return cfg;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
        if (value.is_discarded()) value = raw; // unquoted strings like "adam"
        cfg.set(key, value);
    }
}

void write_effective_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << cfg.to_json().dump(2) << '\n';
    if (!out) throw DataError("failed writing '" + path + "'");
}

} // namespace fourcrop::cli
