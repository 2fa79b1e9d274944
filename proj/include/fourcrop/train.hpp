#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fourcrop/dataset.hpp"
#include "fourcrop/model.hpp"

namespace fourcrop::train {

struct TrainConfig {
    std::size_t epochs = 110;
    std::size_t batch_size = 32;
    std::string optimizer = "adam"; // adam | sgd
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 1;
    std::size_t patience = 0;    // stop after this many epochs without a valid-accuracy
                                 // improvement; 0 disables
    double stop_train_acc = 0.0; // stop once train accuracy reaches this; 0 disables

    void validate() const {
        if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
        if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
        // 0 is allowed so a no-op epoch can be used to prove update identity
        if (learning_rate < 0) throw ConfigError("train.learning_rate must not be negative");
        if (optimizer != "adam" && optimizer != "sgd")
            throw ConfigError("train.optimizer must be 'adam' or 'sgd', got '" + optimizer + "'");
        if (stop_train_acc < 0 || stop_train_acc > 1)
            throw ConfigError("train.stop_train_acc must lie in [0,1]");
    }
};

struct CurveRow {
    std::size_t epoch; // 1-based
    double train_loss, train_acc, valid_loss, valid_acc;
};
using TrainingCurve = std::vector<CurveRow>;

template <class T>
struct LossOut {
    double value;
    Tensor<T> dlogits; // gradient of the mean NLL with respect to the logits
};

// probabilities are softmax outputs; the returned gradient is the fused
// softmax + cross-entropy form (p - onehot)/N
template <class T>
LossOut<T> cross_entropy_loss(const Tensor<T>& probs, const std::vector<std::size_t>& labels) {
    require_axis(probs.rank() == 2, "batch", "probabilities must be (N,C), got " +
                                                 shape_str(probs.shape()));
    const std::size_t n = probs.extent(0), c = probs.extent(1);
    require_axis(labels.size() == n, "batch",
                 "got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");

    LossOut<T> out{0.0, Tensor<T>({n, c})};
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c)
            throw DataError("label " + std::to_string(labels[i]) + " out of range for " +
                            std::to_string(c) + " classes");
        out.value -= std::log(std::max(static_cast<double>(probs.at2(i, labels[i])), 1e-12));
        for (std::size_t j = 0; j < c; ++j) {
            const double p = static_cast<double>(probs.at2(i, j));
            const double grad = (p - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
            out.dlogits.at2(i, j) = static_cast<T>(grad);
        }
    }
    out.value /= static_cast<double>(n);
    return out;
}

template <class T>
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const ParamList<T>& params) = 0;
};

template <class T>
class Sgd final : public Optimizer<T> {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    void step(const ParamList<T>& params) override {
        for (const auto& p : params) {
            if (!p.trainable) continue;
            T* value = p.value->data();
            const T* grad = p.grad->data();
            for (std::size_t i = 0; i < p.value->size(); ++i)
                value[i] = static_cast<T>(static_cast<double>(value[i]) -
                                          lr_ * static_cast<double>(grad[i]));
        }
    }

private:
    double lr_;
};

// moments are kept in double regardless of the parameter precision
template <class T>
class Adam final : public Optimizer<T> {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const ParamList<T>& params) override {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t k = 0; k < params.size(); ++k) {
                if (!params[k].trainable) continue;
                m_[k].assign(params[k].value->size(), 0.0);
                v_[k].assign(params[k].value->size(), 0.0);
            }
        }
        if (m_.size() != params.size())
            throw ConfigError("optimizer state does not match the parameter list");

        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            const auto& p = params[k];
            if (!p.trainable) continue;
            T* value = p.value->data();
            const T* grad = p.grad->data();
            for (std::size_t i = 0; i < p.value->size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g;
                v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g * g;
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                value[i] = static_cast<T>(static_cast<double>(value[i]) -
                                          lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

template <class T>
std::unique_ptr<Optimizer<T>> make_optimizer(const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.optimizer == "sgd") return std::make_unique<Sgd<T>>(cfg.learning_rate);
    return std::make_unique<Adam<T>>(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
}

template <class T>
Tensor<T> to_precision(const Tensor<float>& x) {
    if constexpr (std::is_same_v<T, float>) {
        return x;
    } else {
        Tensor<T> out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(x[i]);
        return out;
    }
}

// every parameter tensor including batch-norm running statistics, so a
// restored snapshot reproduces inference bit for bit
template <class T>
std::vector<std::vector<T>> snapshot_params(Model<T>& model) {
    std::vector<std::vector<T>> snap;
    for (const auto& p : model.params())
        snap.emplace_back(p.value->data(), p.value->data() + p.value->size());
    return snap;
}

template <class T>
void restore_params(Model<T>& model, const std::vector<std::vector<T>>& snap) {
    ParamList<T> params = model.params();
    if (snap.size() != params.size())
        throw VersionError("parameter snapshot does not match the model layout");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (snap[k].size() != params[k].value->size())
            throw VersionError("parameter snapshot entry '" + params[k].name +
                               "' has the wrong size");
        std::copy(snap[k].begin(), snap[k].end(), params[k].value->data());
    }
}

template <class T>
struct EvalOutputs {
    double loss = 0.0, accuracy = 0.0;
    Tensor<double> probs; // (N, num_classes), rows in sample-list order
    std::vector<std::size_t> labels, predictions;
};

// deterministic pass in list order, inference mode, no augmentation
template <class T>
EvalOutputs<T> evaluate(Model<T>& model, const std::vector<data::Sample>& samples,
                        std::size_t batch_size, data::ImageCache* cache = nullptr) {
    if (samples.empty()) throw DataError("evaluation over an empty sample list");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    const std::size_t input = model.config().input_size;
    const std::size_t classes = model.config().num_classes;

    data::ImageCache local;
    data::ImageCache& images = cache ? *cache : local;

    EvalOutputs<T> out;
    out.probs = Tensor<double>({samples.size(), classes});
    out.labels.reserve(samples.size());
    out.predictions.reserve(samples.size());

    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t b = std::min(batch_size, samples.size() - start);
        Tensor<T> batch({b, input, input, 3});
        for (std::size_t j = 0; j < b; ++j) {
            const Tensor<float>& image = images.get(samples[start + j].path, input);
            T* dst = batch.data() + j * image.size();
            for (std::size_t i = 0; i < image.size(); ++i) dst[i] = static_cast<T>(image[i]);
        }
        Tensor<T> probs = ops::softmax(model.forward(batch, Mode::infer));
        for (std::size_t j = 0; j < b; ++j) {
            const std::size_t label = samples[start + j].class_index;
            if (label >= classes)
                throw DataError("sample label " + std::to_string(label) +
                                " out of range for " + std::to_string(classes) + " classes");
            std::size_t best = 0;
            for (std::size_t k = 0; k < classes; ++k) {
                const double p = static_cast<double>(probs.at2(j, k));
                out.probs.at2(start + j, k) = p;
                if (p > static_cast<double>(probs.at2(j, best))) best = k;
            }
            loss -= std::log(std::max(out.probs.at2(start + j, label), 1e-12));
            out.labels.push_back(label);
            out.predictions.push_back(best);
            if (best == label) ++correct;
        }
    }
    out.loss = loss / static_cast<double>(samples.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return out;
}

template <class T>
struct TrainResult {
    TrainingCurve curve;
    std::size_t best_epoch = 0; // 1-based; 0 means no epoch completed
    double best_valid_accuracy = 0.0;
    std::vector<std::vector<T>> best_params;
    bool stopped_early = false;
};

// One optimizer per call; the model is left holding the last-epoch weights
// while the returned snapshot holds the best-validation-accuracy weights.
template <class T>
TrainResult<T> train(Model<T>& model, const data::Split& split, const TrainConfig& tcfg,
                     const img::AugmentConfig& acfg, data::ImageCache* cache = nullptr) {
    tcfg.validate();
    if (split.train.empty() || split.valid.empty())
        throw DataError("training needs non-empty train and valid partitions");
    const std::size_t classes = model.config().num_classes;
    for (const auto* part : {&split.train, &split.valid})
        for (const auto& s : *part)
            if (s.class_index >= classes)
                throw DataError("sample label " + std::to_string(s.class_index) +
                                " out of range for " + std::to_string(classes) + " classes");

    data::ImageCache local;
    data::ImageCache& images = cache ? *cache : local;
    auto optimizer = make_optimizer<T>(tcfg);
    ParamList<T> params = model.params();

    TrainResult<T> result;
    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        data::BatchStream stream(split.train, tcfg.batch_size, model.config().input_size,
                                 tcfg.seed, epoch - 1, /*augment=*/true, acfg, &images);
        Tensor<float> raw;
        std::vector<std::size_t> labels;
        std::size_t batch_index = 0;
        while (stream.next(raw, labels)) {
            ++batch_index;
            Tensor<T> batch = to_precision<T>(raw);
            model.zero_grads();
            Tensor<T> probs = ops::softmax(model.forward(batch, Mode::train));
            LossOut<T> loss = cross_entropy_loss(probs, labels);
            if (!std::isfinite(loss.value))
                throw NumericalError("training loss became non-finite at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index) + " (learning rate " +
                                     std::to_string(tcfg.learning_rate) + ")");
            model.backward(loss.dlogits);
            optimizer->step(params);
        }

        EvalOutputs<T> on_train = evaluate(model, split.train, tcfg.batch_size, &images);
        EvalOutputs<T> on_valid = evaluate(model, split.valid, tcfg.batch_size, &images);
        result.curve.push_back(
            {epoch, on_train.loss, on_train.accuracy, on_valid.loss, on_valid.accuracy});

        if (result.best_epoch == 0 || on_valid.accuracy > result.best_valid_accuracy) {
            result.best_epoch = epoch;
            result.best_valid_accuracy = on_valid.accuracy;
            result.best_params = snapshot_params(model);
        }
        if (tcfg.stop_train_acc > 0 && on_train.accuracy >= tcfg.stop_train_acc) {
            result.stopped_early = epoch < tcfg.epochs;
            break;
        }
        if (tcfg.patience > 0 && epoch >= result.best_epoch + tcfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

using Confusion = std::vector<std::vector<std::size_t>>; // [true][predicted]

Confusion confusion_from_predictions(const std::vector<std::size_t>& labels,
                                     const std::vector<std::size_t>& predictions,
                                     std::size_t num_classes);

template <class T>
Confusion confusion_matrix(Model<T>& model, const std::vector<data::Sample>& samples,
                           std::size_t batch_size, data::ImageCache* cache = nullptr) {
    EvalOutputs<T> ev = evaluate(model, samples, batch_size, cache);
    return confusion_from_predictions(ev.labels, ev.predictions, model.config().num_classes);
}

struct Metrics {
    double accuracy = 0.0;
    std::vector<double> sensitivity, specificity, precision, f1;
    double macro_sensitivity = 0.0, macro_specificity = 0.0;
    double macro_precision = 0.0, macro_f1 = 0.0;
    std::vector<std::string> warnings; // one per degenerate denominator
};

Metrics metrics_from_confusion(const Confusion& confusion);

struct RocClass {
    std::vector<std::pair<double, double>> points; // (fpr, tpr), (0,0) .. (1,1)
    double auc = 0.0;
    bool evaluated = false; // false when the class lacks positives or negatives
};

struct RocResult {
    std::vector<RocClass> classes;
    double macro_auc = 0.0; // mean over evaluated classes
    std::vector<std::string> warnings;
};

// one-vs-rest sweep over each class's sorted distinct scores; trapezoidal AUC
// accumulated in integer counts so it agrees exactly with pairwise ordering
RocResult roc_curve(const Tensor<double>& scores, const std::vector<std::size_t>& labels);

struct GradCheckConfig {
    std::size_t input_size = 8;
    std::size_t batch_size = 2;
    std::size_t per_param = 3; // scalars sampled from each parameter tensor
    double tolerance = 1e-3;
    double step = 1e-5;
    std::uint64_t seed = 20240915;
};

struct GradCheckEntry {
    std::string param;
    std::size_t checked;
    double max_rel;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    std::string worst_param;
    double worst = 0.0;
    std::size_t total_checked = 0;
    double tolerance = 0.0;
    bool passed = false;
};

// Central finite differences against the analytic gradients on a fresh
// 64-bit model with dropout disabled; every trainable tensor is sampled.
GradCheckReport gradient_check(ModelConfig cfg, const GradCheckConfig& gcfg);

void write_curves_csv(const TrainingCurve& curve, const std::string& path);
void write_confusion_csv(const Confusion& confusion, const std::vector<std::string>& class_names,
                         const std::string& path);
void write_roc_csv(const RocClass& roc, const std::string& path);
void write_metrics_json(const Metrics& metrics, const RocResult& roc,
                        const std::vector<std::string>& class_names, const std::string& path);

} // namespace fourcrop::train
