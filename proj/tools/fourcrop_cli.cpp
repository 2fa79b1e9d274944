// Command-line front end: dataset synthesis, training, evaluation, prediction,
// model summaries and gradient checking over one shared configuration.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fourcrop/checkpoint.hpp"
#include "fourcrop/dataset.hpp"
#include "fourcrop/runconfig.hpp"
#include "fourcrop/train.hpp"

using namespace fourcrop;
namespace fs = std::filesystem;

namespace {

std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

void ensure_out_dir(const cli::RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw DataError("cannot create output directory '" + cfg.out_dir + "'");
}

const std::vector<data::Sample>& pick_part(const data::Split& split, const std::string& part) {
    if (part == "train") return split.train;
    if (part == "valid") return split.valid;
    if (part == "test") return split.test;
    throw ConfigError("unknown split part '" + part + "' (want train, valid or test)");
}

template <class T>
int run_train(cli::RunConfig cfg) {
    if (cfg.data_root.empty())
        throw ConfigError("train needs a dataset root (--data or data.root)");
    cfg.training.seed = cfg.seed;
    cfg.training.validate();

    data::DatasetIndex index = data::scan_dataset(cfg.data_root);
    // the directory tree is authoritative for the class count
    cfg.model.num_classes = index.class_count();
    data::Split split = data::split_dataset(index, cfg.seed);

    ensure_out_dir(cfg);
    const fs::path out(cfg.out_dir);
    data::write_split_manifest(split, (out / "split_manifest.csv").string());
    cli::write_effective_config(cfg, (out / "effective_config.json").string());

    Model<T> model = build_model<T>(cfg.model, cfg.seed);
    std::printf("training on %zu classes: %zu train / %zu valid / %zu test samples\n",
                index.class_count(), split.train.size(), split.valid.size(), split.test.size());

    data::ImageCache cache;
    train::TrainResult<T> result = train::train(model, split, cfg.training, cfg.augment, &cache);
    train::write_curves_csv(result.curve, (out / "curves.csv").string());

    save_checkpoint(model, index.class_names, (out / "model_last.fcn").string());
    train::restore_params(model, result.best_params);
    save_checkpoint(model, index.class_names, (out / "model_best.fcn").string());

    const auto& last = result.curve.back();
    std::printf("epoch %zu: train acc %.4f, valid acc %.4f%s\n", last.epoch, last.train_acc,
                last.valid_acc, result.stopped_early ? " (stopped early)" : "");
    std::printf("best valid acc %.4f at epoch %zu\n", result.best_valid_accuracy,
                result.best_epoch);
    std::printf("wrote %s\n", (out / "model_best.fcn").c_str());
    return 0;
}

template <class T>
int run_eval(const cli::RunConfig& cfg, const std::string& manifest, const std::string& part) {
    LoadedCheckpoint<T> loaded = load_checkpoint<T>(cfg.checkpoint_path);
    data::Split split = data::read_split_manifest(manifest);
    const std::vector<data::Sample>& samples = pick_part(split, part);
    if (samples.empty()) throw DataError("manifest part '" + part + "' is empty");

    std::size_t max_label = 0;
    for (const auto& s : samples) max_label = std::max(max_label, s.class_index);
    if (max_label >= loaded.class_names.size())
        throw ConfigError("checkpoint knows " + std::to_string(loaded.class_names.size()) +
                          " classes but the manifest uses label " + std::to_string(max_label));

    data::ImageCache cache;
    train::EvalOutputs<T> ev =
        train::evaluate(loaded.model, samples, cfg.training.batch_size, &cache);
    train::Confusion confusion = train::confusion_from_predictions(
        ev.labels, ev.predictions, loaded.cfg.num_classes);
    train::Metrics metrics = train::metrics_from_confusion(confusion);
    train::RocResult roc = train::roc_curve(ev.probs, ev.labels);

    ensure_out_dir(cfg);
    const fs::path out(cfg.out_dir);
    train::write_confusion_csv(confusion, loaded.class_names, (out / "confusion.csv").string());
    train::write_metrics_json(metrics, roc, loaded.class_names, (out / "metrics.json").string());
    for (std::size_t k = 0; k < roc.classes.size(); ++k) {
        if (!roc.classes[k].evaluated) continue;
        train::write_roc_csv(roc.classes[k],
                             (out / ("roc_" + sanitize(loaded.class_names[k]) + ".csv")).string());
    }
    for (const auto& w : metrics.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const auto& w : roc.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

    std::printf("%s: %zu samples, accuracy %.4f, macro F1 %.4f, macro AUC %.4f\n", part.c_str(),
                samples.size(), metrics.accuracy, metrics.macro_f1, roc.macro_auc);
    return 0;
}

template <class T>
int run_predict(const cli::RunConfig& cfg, const std::string& image_path) {
    LoadedCheckpoint<T> loaded = load_checkpoint<T>(cfg.checkpoint_path);
    Tensor<float> image = img::load_image(image_path, loaded.cfg.input_size);
    Tensor<T> batch({1, loaded.cfg.input_size, loaded.cfg.input_size, 3});
    for (std::size_t i = 0; i < image.size(); ++i) batch[i] = static_cast<T>(image[i]);

    const auto prediction = loaded.model.predict(batch).front();
    std::printf("%s\t%.6f\n", loaded.class_names[prediction.class_index].c_str(),
                static_cast<double>(prediction.confidence));
    return 0;
}

int run_summary(const cli::RunConfig& cfg) {
    if (!cfg.checkpoint_path.empty()) {
        const std::string dtype = peek_checkpoint_dtype(cfg.checkpoint_path);
        if (dtype == "f64") {
            std::cout << load_checkpoint<double>(cfg.checkpoint_path).model.summary();
        } else {
            std::cout << load_checkpoint<float>(cfg.checkpoint_path).model.summary();
        }
        return 0;
    }
    Model<float> model(cfg.model); // uninitialized weights; shapes and counts only
    std::cout << model.summary();
    return 0;
}

int run_gradcheck(const cli::RunConfig& cfg) {
    train::GradCheckReport report = train::gradient_check(cfg.model, cfg.gradcheck);
    std::printf("%-24s %8s %14s\n", "parameter", "sampled", "max rel err");
    for (const auto& e : report.per_param)
        std::printf("%-24s %8zu %14.3e\n", e.param.c_str(), e.checked, e.max_rel);
    std::printf("checked %zu scalars, worst %.3e (%s), tolerance %.1e\n", report.total_checked,
                report.worst, report.worst_param.c_str(), report.tolerance);
    if (!report.passed)
        throw VerificationError("gradient check failed: " + report.worst_param +
                                " has relative error " + std::to_string(report.worst));
    std::printf("gradient check passed\n");
    return 0;
}

int run_make_synth(const cli::RunConfig& cfg, std::size_t classes, std::size_t per_class,
                   std::size_t size, std::string dest) {
    if (dest.empty()) dest = (fs::path(cfg.out_dir) / "synthetic").string();
    data::generate_synthetic_dataset(classes, per_class, cfg.seed, dest, size);
    std::printf("wrote %zu classes x %zu images (%zux%zu) under %s\n", classes, per_class, size,
                size, dest.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FourCropNet: train and evaluate a residual+SE image classifier"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t threads = 0;
    bool f64 = false;
    app.add_option("--config", config_file, "JSON config file with flat dotted keys");
    app.add_option("--set", overrides, "override one key, e.g. --set train.epochs=20");
    auto* seed_opt = app.add_option("--seed", seed, "seed for split, init and shuffles");
    auto* out_opt = app.add_option("--out", out_dir, "output directory");
    auto* threads_opt = app.add_option("--threads", threads, "worker threads (currently 1)");
    app.add_flag("--f64", f64, "use 64-bit parameters");

    auto* cmd_train = app.add_subcommand("train", "scan, split and train on a dataset tree");
    std::string data_root;
    cmd_train->add_option("--data", data_root, "dataset root (one directory per class)");

    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a recorded split");
    std::string checkpoint, manifest, part = "test";
    cmd_eval->add_option("--checkpoint", checkpoint, "model checkpoint");
    cmd_eval->add_option("--manifest", manifest, "split manifest from training");
    cmd_eval->add_option("--part", part, "train, valid or test")->capture_default_str();

    auto* cmd_predict = app.add_subcommand("predict", "classify one image");
    std::string image_path;
    cmd_predict->add_option("--checkpoint", checkpoint, "model checkpoint");
    cmd_predict->add_option("image", image_path, "image file (png/jpg/bmp)");

    auto* cmd_summary = app.add_subcommand("summary", "print the layer table");
    cmd_summary->add_option("--checkpoint", checkpoint, "read shapes from a checkpoint");

    auto* cmd_gradcheck =
        app.add_subcommand("gradcheck", "finite-difference audit of every layer's gradients");

    auto* cmd_synth = app.add_subcommand("make-synth", "generate the synthetic dataset");
    std::size_t classes = 15, per_class = 20, image_size = 224;
    std::string dest;
    cmd_synth->add_option("--classes", classes, "number of classes")->capture_default_str();
    cmd_synth->add_option("--per-class", per_class, "images per class")->capture_default_str();
    cmd_synth->add_option("--size", image_size, "image edge length")->capture_default_str();
    cmd_synth->add_option("--dest", dest, "target directory (default <out>/synthetic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // bad flags are configuration errors
    }

    try {
        cli::RunConfig cfg = cli::load_run_config(config_file);
        cli::apply_overrides(cfg, overrides);
        if (seed_opt->count()) cfg.seed = seed;
        if (out_opt->count()) cfg.out_dir = out_dir;
        if (threads_opt->count()) cfg.threads = threads;
        if (cfg.threads < 1) throw ConfigError("threads must be at least 1");
        if (!data_root.empty()) cfg.data_root = data_root;
        if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;

        if (cmd_train->parsed()) return f64 ? run_train<double>(cfg) : run_train<float>(cfg);
        if (cmd_eval->parsed()) {
            if (cfg.checkpoint_path.empty())
                throw ConfigError("eval needs --checkpoint (or checkpoint.path)");
            if (manifest.empty()) manifest = (fs::path(cfg.out_dir) / "split_manifest.csv").string();
            const std::string dtype = peek_checkpoint_dtype(cfg.checkpoint_path);
            return dtype == "f64" ? run_eval<double>(cfg, manifest, part)
                                  : run_eval<float>(cfg, manifest, part);
        }
        if (cmd_predict->parsed()) {
            if (cfg.checkpoint_path.empty())
                throw ConfigError("predict needs --checkpoint (or checkpoint.path)");
            if (image_path.empty()) throw ConfigError("predict needs an image path");
            const std::string dtype = peek_checkpoint_dtype(cfg.checkpoint_path);
            return dtype == "f64" ? run_predict<double>(cfg, image_path)
                                  : run_predict<float>(cfg, image_path);
        }
        if (cmd_summary->parsed()) return run_summary(cfg);
        if (cmd_gradcheck->parsed()) return run_gradcheck(cfg);
        if (cmd_synth->parsed())
            return run_make_synth(cfg, classes, per_class, image_size, dest);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
}
