#include "fourcrop/train.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "fourcrop/rng.hpp"

namespace fourcrop::train {

Confusion confusion_from_predictions(const std::vector<std::size_t>& labels,
                                     const std::vector<std::size_t>& predictions,
                                     std::size_t num_classes) {
    require_axis(labels.size() == predictions.size(), "batch",
                 "got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(predictions.size()) + " predictions");
    Confusion confusion(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes)
            throw DataError("class index out of range at sample " + std::to_string(i));
        ++confusion[labels[i]][predictions[i]];
    }
    return confusion;
}

Metrics metrics_from_confusion(const Confusion& confusion) {
    const std::size_t c = confusion.size();
    if (c == 0) throw ShapeError("confusion matrix is empty");
    for (const auto& row : confusion)
        if (row.size() != c) throw ShapeError("confusion matrix is not square");

    std::size_t total = 0, diagonal = 0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) total += confusion[i][j];
    if (total == 0) throw DataError("confusion matrix counts no samples");
    for (std::size_t i = 0; i < c; ++i) diagonal += confusion[i][i];

    Metrics m;
    m.accuracy = static_cast<double>(diagonal) / static_cast<double>(total);
    auto ratio = [&m](std::size_t num, std::size_t den, std::size_t cls, const char* what) {
        if (den == 0) {
            m.warnings.push_back("class " + std::to_string(cls) + ": " + what +
                                 " has a zero denominator, reported as 0");
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };

    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = confusion[k][k], fn = 0, fp = 0;
        for (std::size_t j = 0; j < c; ++j) {
            if (j == k) continue;
            fn += confusion[k][j];
            fp += confusion[j][k];
        }
        const std::size_t tn = total - tp - fn - fp;
        const double sens = ratio(tp, tp + fn, k, "sensitivity");
        const double spec = ratio(tn, tn + fp, k, "specificity");
        const double prec = ratio(tp, tp + fp, k, "precision");
        double f1 = 0.0;
        if (prec + sens > 0) {
            f1 = 2.0 * prec * sens / (prec + sens);
        } else {
            m.warnings.push_back("class " + std::to_string(k) +
                                 ": F1 has a zero denominator, reported as 0");
        }
        m.sensitivity.push_back(sens);
        m.specificity.push_back(spec);
        m.precision.push_back(prec);
        m.f1.push_back(f1);
        m.macro_sensitivity += sens / static_cast<double>(c);
        m.macro_specificity += spec / static_cast<double>(c);
        m.macro_precision += prec / static_cast<double>(c);
        m.macro_f1 += f1 / static_cast<double>(c);
    }
    return m;
}

RocResult roc_curve(const Tensor<double>& scores, const std::vector<std::size_t>& labels) {
    require_axis(scores.rank() == 2, "batch",
                 "scores must be (N,C), got " + shape_str(scores.shape()));
    const std::size_t n = scores.extent(0), c = scores.extent(1);
    require_axis(labels.size() == n, "batch",
                 "got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " score rows");

    RocResult result;
    result.classes.resize(c);
    std::size_t evaluated = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t positives = 0;
        for (std::size_t i = 0; i < n; ++i) positives += labels[i] == k ? 1 : 0;
        const std::size_t negatives = n - positives;
        if (positives == 0 || negatives == 0) {
            result.warnings.push_back("class " + std::to_string(k) +
                                      " lacks positives or negatives; ROC skipped");
            continue;
        }

        std::vector<std::pair<double, bool>> ranked(n);
        for (std::size_t i = 0; i < n; ++i) ranked[i] = {scores.at2(i, k), labels[i] == k};
        std::sort(ranked.begin(), ranked.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });

        RocClass& roc = result.classes[k];
        roc.evaluated = true;
        roc.points.emplace_back(0.0, 0.0);
        // grouping tied scores yields the step curve whose trapezoids equal
        // (#correctly ordered pairs + ties/2); keep the sum in integers
        std::size_t tp = 0, fp = 0;
        std::uint64_t twice_area = 0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t dtp = 0, dfp = 0;
            const double score = ranked[i].first;
            for (; i < n && ranked[i].first == score; ++i) (ranked[i].second ? dtp : dfp)++;
            twice_area += static_cast<std::uint64_t>(dfp) * (2 * tp + dtp);
            tp += dtp;
            fp += dfp;
            roc.points.emplace_back(static_cast<double>(fp) / static_cast<double>(negatives),
                                    static_cast<double>(tp) / static_cast<double>(positives));
        }
        roc.auc = static_cast<double>(twice_area) /
                  (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
        result.macro_auc += roc.auc;
        ++evaluated;
    }
    if (evaluated > 0) result.macro_auc /= static_cast<double>(evaluated);
    return result;
}

GradCheckReport gradient_check(ModelConfig cfg, const GradCheckConfig& gcfg) {
    if (gcfg.per_param == 0)
        throw ConfigError("gradient check needs at least one scalar per parameter tensor");
    if (gcfg.batch_size == 0) throw ConfigError("gradient check batch size must be positive");

    cfg.input_size = gcfg.input_size;
    cfg.dropout = 0.0; // deterministic loss surface
    Model<double> model(cfg);
    model.init(gcfg.seed);

    std::mt19937_64 eng(derive_seed(gcfg.seed, 0xFDull));
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> label(0, cfg.num_classes - 1);
    Tensor<double> x({gcfg.batch_size, cfg.input_size, cfg.input_size, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = pixel(eng);
    std::vector<std::size_t> labels(gcfg.batch_size);
    for (auto& l : labels) l = label(eng);

    auto loss_value = [&]() {
        Tensor<double> probs = ops::softmax(model.forward(x, Mode::train));
        return cross_entropy_loss(probs, labels).value;
    };

    model.zero_grads();
    Tensor<double> probs = ops::softmax(model.forward(x, Mode::train));
    LossOut<double> loss = cross_entropy_loss(probs, labels);
    model.backward(loss.dlogits);

    GradCheckReport report;
    report.tolerance = gcfg.tolerance;
    for (const auto& p : model.params()) {
        if (!p.trainable) continue;
        std::set<std::size_t> picks;
        if (p.value->size() <= gcfg.per_param) {
            for (std::size_t i = 0; i < p.value->size(); ++i) picks.insert(i);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, p.value->size() - 1);
            while (picks.size() < gcfg.per_param) picks.insert(pick(eng));
        }

        GradCheckEntry entry{p.name, picks.size(), 0.0};
        for (std::size_t idx : picks) {
            double* theta = p.value->data() + idx;
            const double saved = *theta;
            *theta = saved + gcfg.step;
            const double up = loss_value();
            *theta = saved - gcfg.step;
            const double down = loss_value();
            *theta = saved;
            const double fd = (up - down) / (2.0 * gcfg.step);
            const double analytic = (*p.grad)[idx];
            const double rel =
                std::abs(analytic - fd) / std::max(1.0, std::abs(analytic) + std::abs(fd));
            entry.max_rel = std::max(entry.max_rel, rel);
            if (rel > report.worst) {
                report.worst = rel;
                report.worst_param = p.name;
            }
            ++report.total_checked;
        }
        report.per_param.push_back(std::move(entry));
    }
    report.passed = report.worst < gcfg.tolerance;
    return report;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    return out;
}

} // namespace

void write_curves_csv(const TrainingCurve& curve, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "epoch,train_loss,train_acc,valid_loss,valid_acc\n";
    char line[160];
    for (const auto& row : curve) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", row.epoch, row.train_loss,
                      row.train_acc, row.valid_loss, row.valid_acc);
        out << line;
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

void write_confusion_csv(const Confusion& confusion, const std::vector<std::string>& class_names,
                         const std::string& path) {
    require_axis(class_names.size() == confusion.size(), "classes",
                 "confusion matrix and class-name list disagree");
    std::ofstream out = open_out(path);
    out << "true\\predicted";
    for (const auto& name : class_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        out << class_names[i];
        for (std::size_t j = 0; j < confusion[i].size(); ++j) out << ',' << confusion[i][j];
        out << '\n';
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

void write_roc_csv(const RocClass& roc, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "fpr,tpr\n";
    char line[80];
    for (const auto& [fpr, tpr] : roc.points) {
        std::snprintf(line, sizeof line, "%.10g,%.10g\n", fpr, tpr);
        out << line;
    }
    if (!out) throw DataError("failed writing '" + path + "'");
}

void write_metrics_json(const Metrics& metrics, const RocResult& roc,
                        const std::vector<std::string>& class_names, const std::string& path) {
    nlohmann::ordered_json doc;
    doc["accuracy"] = metrics.accuracy;
    doc["macro"] = {{"sensitivity", metrics.macro_sensitivity},
                    {"specificity", metrics.macro_specificity},
                    {"precision", metrics.macro_precision},
                    {"f1", metrics.macro_f1},
                    {"auc", roc.macro_auc}};
    doc["per_class"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < class_names.size(); ++k) {
        nlohmann::ordered_json row;
        row["name"] = class_names[k];
        row["sensitivity"] = metrics.sensitivity[k];
        row["specificity"] = metrics.specificity[k];
        row["precision"] = metrics.precision[k];
        row["f1"] = metrics.f1[k];
        if (k < roc.classes.size() && roc.classes[k].evaluated)
            row["auc"] = roc.classes[k].auc;
        else
            row["auc"] = nullptr;
        doc["per_class"].push_back(row);
    }
    doc["warnings"] = metrics.warnings;
    for (const auto& w : roc.warnings) doc["warnings"].push_back(w);

    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw DataError("failed writing '" + path + "'");
}

} // namespace fourcrop::train
