#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "fourcrop/train.hpp"
#include "testutil.hpp"

using namespace fourcrop;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// small model + 3-class synthetic tree shared by the training-loop tests
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_size = 16;
    cfg.channel_plan = {8, 8, 16, 32};
    cfg.fc_plan = {32, 16};
    cfg.num_classes = 3;
    cfg.se_reduction = 16;
    return cfg;
}

data::Split tiny_split(const fs::path& dir) {
    data::generate_synthetic_dataset(3, 10, 7, dir.string(), 16);
    return data::split_dataset(data::scan_dataset(dir.string()), 21);
}

img::AugmentConfig no_augment() {
    img::AugmentConfig a;
    a.rotation_degrees = 0;
    a.horizontal_flip_prob = 0;
    a.vertical_flip_prob = 0;
    a.brightness_delta = 0;
    return a;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("cross entropy of near-one-hot predictions is near zero") {
    Tensor<double> probs({2, 3});
    probs.at2(0, 1) = 1.0;
    probs.at2(1, 2) = 1.0;
    auto out = train::cross_entropy_loss(probs, {1, 2});
    CHECK(out.value <= 1e-10);
}

TEST_CASE("cross entropy of uniform predictions is ln C") {
    Tensor<double> probs({4, 15}, 1.0 / 15.0);
    auto out = train::cross_entropy_loss(probs, {0, 5, 9, 14});
    CHECK(out.value == doctest::Approx(std::log(15.0)).epsilon(1e-9));
}

TEST_CASE("cross entropy rejects out-of-range labels and bad shapes") {
    Tensor<double> probs({2, 3}, 1.0 / 3.0);
    CHECK_THROWS_AS(train::cross_entropy_loss(probs, {0, 3}), DataError);
    CHECK_THROWS_AS(train::cross_entropy_loss(probs, {0}), ShapeError);
    CHECK_THROWS_AS(train::cross_entropy_loss(probs.reshaped({6}), {0}), ShapeError);
}

TEST_CASE("fused softmax gradient matches finite differences of the composed loss") {
    Tensor<double> logits = testutil::random_tensor<double>({3, 5}, 17, -2.0, 2.0);
    const std::vector<std::size_t> labels = {4, 0, 2};

    Tensor<double> probs = ops::softmax(logits);
    auto out = train::cross_entropy_loss(probs, labels);

    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double saved = logits[i];
        logits[i] = saved + h;
        const double up = train::cross_entropy_loss(ops::softmax(logits), labels).value;
        logits[i] = saved - h;
        const double down = train::cross_entropy_loss(ops::softmax(logits), labels).value;
        logits[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        CHECK(out.dlogits[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("sgd applies the plain update rule") {
    Tensor<double> p({1}), g({1});
    p[0] = 1.0;
    g[0] = 2.0;
    ParamList<double> params = {{"p", &p, &g, true}};
    train::Sgd<double> opt(0.1);
    opt.step(params);
    CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("optimizers skip non-trainable tensors") {
    Tensor<double> p({2}, 3.0), g({2}, 5.0);
    Tensor<double> stat({2}, 1.0);
    ParamList<double> params = {{"p", &p, &g, true}, {"stat", &stat, nullptr, false}};
    train::Adam<double> opt(0.5, 0.9, 0.999, 1e-8);
    opt.step(params);
    CHECK(stat[0] == 1.0);
    CHECK(p[0] != 3.0);
}

TEST_CASE("first adam update has magnitude near lr regardless of gradient scale") {
    Tensor<double> p1({1}, 1.0), g1({1}, 0.003);
    Tensor<double> p2({1}, 1.0), g2({1}, 300.0);
    ParamList<double> a = {{"p", &p1, &g1, true}};
    ParamList<double> b = {{"p", &p2, &g2, true}};
    train::Adam<double> opt_a(1e-3, 0.9, 0.999, 1e-8), opt_b(1e-3, 0.9, 0.999, 1e-8);
    opt_a.step(a);
    opt_b.step(b);
    CHECK(1.0 - p1[0] == doctest::Approx(1e-3).epsilon(1e-4));
    CHECK(1.0 - p2[0] == doctest::Approx(1e-3).epsilon(1e-4));
}

TEST_CASE("adam drives a quadratic to its minimum") {
    Tensor<double> p({1}, 3.0), g({1});
    ParamList<double> params = {{"p", &p, &g, true}};
    train::Adam<double> opt(0.1, 0.9, 0.999, 1e-8);
    for (int step = 0; step < 200; ++step) {
        g[0] = 2.0 * p[0]; // d/dp of p^2
        opt.step(params);
    }
    CHECK(std::abs(p[0]) < 0.1);
}

TEST_CASE("zero learning rate leaves trainable parameters bit-identical") {
    TempDir dir("fcn_train_lr0");
    auto split = tiny_split(dir.path);
    auto model = build_model<float>(tiny_config(), 3);

    std::vector<std::vector<float>> before;
    for (const auto& p : model.params())
        if (p.trainable) before.emplace_back(p.value->data(), p.value->data() + p.value->size());

    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    tcfg.learning_rate = 0.0;
    train::train(model, split, tcfg, no_augment());

    std::size_t k = 0;
    for (const auto& p : model.params()) {
        if (!p.trainable) continue;
        bool same = true;
        for (std::size_t i = 0; i < p.value->size(); ++i)
            same = same && (*p.value)[i] == before[k][i];
        CHECK_MESSAGE(same, p.name);
        ++k;
    }
}

TEST_CASE("training twice with one seed gives byte-identical curves") {
    TempDir dir("fcn_train_det");
    auto split = tiny_split(dir.path);
    train::TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.seed = 5;

    auto run = [&]() {
        auto model = build_model<float>(tiny_config(), 11);
        return train::train(model, split, tcfg, img::AugmentConfig{}).curve;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].epoch == i + 1);
        CHECK(a[i].train_loss == b[i].train_loss);
        CHECK(a[i].train_acc == b[i].train_acc);
        CHECK(a[i].valid_loss == b[i].valid_loss);
        CHECK(a[i].valid_acc == b[i].valid_acc);
    }

    TempDir out("fcn_train_det_out");
    train::write_curves_csv(a, (out.path / "a.csv").string());
    train::write_curves_csv(b, (out.path / "b.csv").string());
    CHECK(file_bytes(out.path / "a.csv") == file_bytes(out.path / "b.csv"));
}

TEST_CASE("the loop learns a separable toy problem") {
    TempDir dir("fcn_train_learn");
    auto split = tiny_split(dir.path);
    auto model = build_model<float>(tiny_config(), 19);

    train::TrainConfig tcfg;
    tcfg.epochs = 40;
    tcfg.batch_size = 8;
    tcfg.learning_rate = 1e-3;
    tcfg.seed = 2;
    tcfg.stop_train_acc = 0.999;
    auto result = train::train(model, split, tcfg, no_augment());

    REQUIRE(!result.curve.empty());
    const auto& last = result.curve.back();
    CHECK(last.train_acc > 0.9);
    CHECK(last.train_loss < result.curve.front().train_loss);
    CHECK(result.best_epoch >= 1);

    // restoring the best snapshot reproduces its recorded validation accuracy
    train::restore_params(model, result.best_params);
    auto ev = train::evaluate(model, split.valid, 8);
    CHECK(ev.accuracy == result.best_valid_accuracy);
}

TEST_CASE("evaluation mutates neither parameters nor running statistics") {
    TempDir dir("fcn_eval_pure");
    auto split = tiny_split(dir.path);
    auto model = build_model<float>(tiny_config(), 23);
    // a train pass first so running stats are nontrivial
    train::TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 8;
    train::train(model, split, tcfg, no_augment());

    auto before = train::snapshot_params(model);
    train::evaluate(model, split.valid, 4);
    train::evaluate(model, split.train, 32);
    auto after = train::snapshot_params(model);
    REQUIRE(before.size() == after.size());
    for (std::size_t k = 0; k < before.size(); ++k) {
        REQUIRE(before[k].size() == after[k].size());
        bool same = true;
        for (std::size_t i = 0; i < before[k].size(); ++i)
            same = same && before[k][i] == after[k][i];
        CHECK(same);
    }
}

TEST_CASE("exploding updates abort with epoch and batch diagnostics") {
    TempDir dir("fcn_train_nan");
    auto split = tiny_split(dir.path);
    auto model = build_model<float>(tiny_config(), 29);
    train::TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.batch_size = 8;
    tcfg.optimizer = "sgd";
    tcfg.learning_rate = 1e18;
    try {
        train::train(model, split, tcfg, no_augment());
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        std::string msg = e.what();
        CHECK(msg.find("epoch") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
        CHECK(msg.find("learning rate") != std::string::npos);
    }
}

TEST_CASE("patience stops a run that cannot improve") {
    TempDir dir("fcn_train_patience");
    auto split = tiny_split(dir.path);
    auto model = build_model<float>(tiny_config(), 31);
    train::TrainConfig tcfg;
    tcfg.epochs = 10;
    tcfg.batch_size = 8;
    tcfg.learning_rate = 0.0; // accuracy is frozen, so no epoch improves on the first
    tcfg.patience = 2;
    auto result = train::train(model, split, tcfg, no_augment());
    CHECK(result.curve.size() == 3); // epoch 1 sets the best, epochs 2-3 exhaust patience
    CHECK(result.best_epoch == 1);
    CHECK(result.stopped_early);
}

TEST_CASE("train config validation rejects bad values") {
    train::TrainConfig tcfg;
    tcfg.epochs = 0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = {};
    tcfg.optimizer = "adagrad";
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = {};
    tcfg.learning_rate = -1.0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = {};
    tcfg.batch_size = 0;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
    tcfg = {};
    tcfg.stop_train_acc = 1.5;
    CHECK_THROWS_AS(tcfg.validate(), ConfigError);
}

TEST_CASE("confusion counting matches hand tallies") {
    // labels echoed back: pure diagonal
    std::vector<std::size_t> labels = {0, 1, 2, 1, 0, 2, 2};
    auto echo = train::confusion_from_predictions(labels, labels, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(echo[i][j] == (i == j ? (i == 0 ? 2u : i == 1 ? 2u : 3u) : 0u));

    // constant predictor: all mass in column 0
    std::vector<std::size_t> zeros(labels.size(), 0);
    auto constant = train::confusion_from_predictions(labels, zeros, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 1; j < 3; ++j) CHECK(constant[i][j] == 0);
    CHECK(constant[0][0] == 2);
    CHECK(constant[1][0] == 2);
    CHECK(constant[2][0] == 3);

    // 20 samples tallied by hand
    std::vector<std::size_t> t = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    std::vector<std::size_t> p = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0};
    auto conf = train::confusion_from_predictions(t, p, 2);
    CHECK(conf[0][0] == 8);
    CHECK(conf[0][1] == 2);
    CHECK(conf[1][0] == 3);
    CHECK(conf[1][1] == 7);

    CHECK_THROWS_AS(train::confusion_from_predictions({0}, {5}, 3), DataError);
    CHECK_THROWS_AS(train::confusion_from_predictions({0, 1}, {0}, 3), ShapeError);
}

TEST_CASE("metric formulas match the hand-computed binary matrix") {
    train::Confusion conf = {{8, 2}, {1, 9}};
    auto m = train::metrics_from_confusion(conf);
    CHECK(m.accuracy == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(m.sensitivity[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(m.specificity[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.sensitivity[1] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.specificity[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(m.precision[0] == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    const double p = 8.0 / 9.0, r = 0.8;
    CHECK(m.f1[0] == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
    CHECK(m.warnings.empty());
    CHECK(m.macro_sensitivity == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("a perfect diagonal scores 1.0 on every metric") {
    train::Confusion conf = {{5, 0, 0}, {0, 7, 0}, {0, 0, 3}};
    auto m = train::metrics_from_confusion(conf);
    CHECK(m.accuracy == 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(m.sensitivity[k] == 1.0);
        CHECK(m.specificity[k] == 1.0);
        CHECK(m.f1[k] == 1.0);
    }
    CHECK(m.macro_f1 == 1.0);
}

TEST_CASE("degenerate confusion denominators warn and report zero") {
    train::Confusion conf = {{0, 0}, {0, 5}}; // class 0 never occurs, never predicted
    auto m = train::metrics_from_confusion(conf);
    CHECK(m.sensitivity[0] == 0.0);
    CHECK(m.precision[0] == 0.0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.warnings.size() >= 2);

    CHECK_THROWS_AS(train::metrics_from_confusion({}), ShapeError);
    CHECK_THROWS_AS(train::metrics_from_confusion({{1, 2}, {3}}), ShapeError);
    CHECK_THROWS_AS(train::metrics_from_confusion({{0, 0}, {0, 0}}), DataError);
}

TEST_CASE("roc endpoints, monotonicity and the extreme aucs") {
    // perfectly separating scores for class 0
    Tensor<double> sep({4, 2});
    const double s0[] = {0.9, 0.8, 0.2, 0.1};
    for (std::size_t i = 0; i < 4; ++i) {
        sep.at2(i, 0) = s0[i];
        sep.at2(i, 1) = 1 - s0[i];
    }
    auto perfect = train::roc_curve(sep, {0, 0, 1, 1});
    CHECK(perfect.classes[0].auc == 1.0);
    CHECK(perfect.classes[1].auc == 1.0);
    CHECK(perfect.macro_auc == 1.0);

    // constant scores: every threshold is one big tie
    Tensor<double> flat({6, 2}, 0.5);
    auto coin = train::roc_curve(flat, {0, 1, 0, 1, 0, 1});
    CHECK(coin.classes[0].auc == 0.5);
    CHECK(coin.classes[1].auc == 0.5);

    for (const auto& roc : {perfect.classes[0], coin.classes[0]}) {
        REQUIRE(!roc.points.empty());
        CHECK(roc.points.front() == std::pair<double, double>(0.0, 0.0));
        CHECK(roc.points.back() == std::pair<double, double>(1.0, 1.0));
        for (std::size_t i = 1; i < roc.points.size(); ++i) {
            CHECK(roc.points[i].first >= roc.points[i - 1].first);
            CHECK(roc.points[i].second >= roc.points[i - 1].second);
        }
    }
}

TEST_CASE("classes without both outcomes are skipped with a warning") {
    Tensor<double> scores({3, 3}, 1.0 / 3.0);
    auto roc = train::roc_curve(scores, {0, 0, 1}); // class 2 has no positives
    CHECK(roc.classes[0].evaluated);
    CHECK(roc.classes[1].evaluated);
    CHECK_FALSE(roc.classes[2].evaluated);
    REQUIRE(roc.warnings.size() == 1);
    CHECK(roc.warnings[0].find("class 2") != std::string::npos);
    CHECK(roc.macro_auc == doctest::Approx(0.5).epsilon(1e-12)); // ties everywhere
}

TEST_CASE("trapezoidal auc equals pairwise counting on random score sets") {
    std::mt19937_64 eng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<std::size_t> size_dist(4, 24);
        const std::size_t n = size_dist(eng);
        // coarse grid so ties happen often
        std::uniform_int_distribution<int> grid(0, 4);
        std::uniform_int_distribution<int> coin(0, 1);

        Tensor<double> scores({n, 2});
        std::vector<std::size_t> labels(n);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = grid(eng) / 4.0;
            scores.at2(i, 0) = s;
            scores.at2(i, 1) = 1.0 - s;
            labels[i] = static_cast<std::size_t>(coin(eng));
            pos += labels[i] == 0 ? 1 : 0;
        }
        if (pos == 0 || pos == n) continue;

        auto roc = train::roc_curve(scores, labels);

        // brute force over all positive-negative pairs, in integer halves
        std::uint64_t twice = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != 0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] == 0) continue;
                if (scores.at2(i, 0) > scores.at2(j, 0)) twice += 2;
                else if (scores.at2(i, 0) == scores.at2(j, 0)) twice += 1;
            }
        }
        const double pairwise =
            static_cast<double>(twice) / (2.0 * static_cast<double>(pos) *
                                          static_cast<double>(n - pos));
        CHECK(roc.classes[0].auc == pairwise); // exact, both are integer ratios
    }
}

TEST_CASE("gradient check passes on a stock model and samples every layer type") {
    train::GradCheckConfig gcfg;
    auto report = train::gradient_check(ModelConfig{}, gcfg);
    CHECK(report.passed);
    CHECK(report.worst < 1e-3);
    CHECK(report.total_checked >= 64);

    bool conv = false, bn = false, dense = false, se = false, proj = false;
    for (const auto& e : report.per_param) {
        conv = conv || e.param.find("conv.w") != std::string::npos;
        bn = bn || e.param.find("bn.gamma") != std::string::npos;
        dense = dense || e.param.find("fc1.w") != std::string::npos;
        se = se || e.param.find("se.w1") != std::string::npos ||
             e.param.find("se.w2") != std::string::npos;
        proj = proj || e.param.find("proj.w") != std::string::npos;
    }
    CHECK(conv);
    CHECK(bn);
    CHECK(dense);
    CHECK(se);
    CHECK(proj);
}

TEST_CASE("gradient check rejects an empty sampling request") {
    train::GradCheckConfig gcfg;
    gcfg.per_param = 0;
    CHECK_THROWS_AS(train::gradient_check(ModelConfig{}, gcfg), ConfigError);
}

TEST_CASE("report writers emit stable well-formed files") {
    TempDir dir("fcn_writers");

    train::TrainingCurve curve = {{1, 1.5, 0.25, 1.6, 0.2}, {2, 0.9, 0.5, 1.1, 0.4}};
    const auto curves_path = dir.path / "curves.csv";
    train::write_curves_csv(curve, curves_path.string());
    std::string text = file_bytes(curves_path);
    CHECK(text.find("epoch,train_loss,train_acc,valid_loss,valid_acc\n") == 0);
    CHECK(text.find("1,1.500000,0.250000,1.600000,0.200000\n") != std::string::npos);
    CHECK(text.find("2,0.900000,0.500000,1.100000,0.400000\n") != std::string::npos);

    train::Confusion conf = {{8, 2}, {1, 9}};
    const auto conf_path = dir.path / "confusion.csv";
    train::write_confusion_csv(conf, {"healthy", "blight"}, conf_path.string());
    text = file_bytes(conf_path);
    CHECK(text == "true\\predicted,healthy,blight\nhealthy,8,2\nblight,1,9\n");

    Tensor<double> scores({4, 2});
    const double s0[] = {0.9, 0.8, 0.2, 0.1};
    for (std::size_t i = 0; i < 4; ++i) {
        scores.at2(i, 0) = s0[i];
        scores.at2(i, 1) = 1 - s0[i];
    }
    auto roc = train::roc_curve(scores, {0, 0, 1, 1});
    const auto roc_path = dir.path / "roc_healthy.csv";
    train::write_roc_csv(roc.classes[0], roc_path.string());
    text = file_bytes(roc_path);
    CHECK(text.find("fpr,tpr\n") == 0);
    CHECK(text.find("0,0\n") != std::string::npos);
    CHECK(text.find("1,1\n") != std::string::npos);

    auto metrics = train::metrics_from_confusion(conf);
    const auto json_path = dir.path / "metrics.json";
    train::write_metrics_json(metrics, roc, {"healthy", "blight"}, json_path.string());
    auto doc = nlohmann::json::parse(file_bytes(json_path));
    CHECK(doc["accuracy"].get<double>() == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(doc["per_class"].size() == 2);
    CHECK(doc["per_class"][0]["name"] == "healthy");
    CHECK(doc["per_class"][0]["auc"].get<double>() == 1.0);
    CHECK(doc["macro"]["auc"].get<double>() == 1.0);

    // byte stability: a second write is identical
    const auto json2 = dir.path / "metrics2.json";
    train::write_metrics_json(metrics, roc, {"healthy", "blight"}, json2.string());
    CHECK(file_bytes(json_path) == file_bytes(json2));
}
