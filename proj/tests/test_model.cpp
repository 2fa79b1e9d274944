#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fourcrop/model.hpp"
#include "testutil.hpp"

using namespace fourcrop;
using testutil::random_tensor;

TEST_CASE("default config forwards a batch of two to 15 logits") {
    auto model = build_model<float>(ModelConfig{}, 1234);
    auto x = random_tensor<float>({2, 224, 224, 3}, 1, 0.f, 1.f);
    auto logits = model.forward(x, Mode::infer);
    CHECK(logits.shape() == Shape{2, 15});

    auto probs = ops::softmax(logits);
    for (std::size_t r = 0; r < 2; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 15; ++c) sum += probs.at2(r, c);
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("duplicate images in a batch produce identical logit rows") {
    auto model = build_model<float>(ModelConfig{}, 99);
    auto one = random_tensor<float>({1, 224, 224, 3}, 2, 0.f, 1.f);
    Tensor<float> two({2, 224, 224, 3});
    for (std::size_t i = 0; i < one.size(); ++i) {
        two[i] = one[i];
        two[one.size() + i] = one[i];
    }
    auto logits = model.forward(two, Mode::infer);
    for (std::size_t c = 0; c < 15; ++c)
        CHECK(std::abs(logits.at2(0, c) - logits.at2(1, c)) < 1e-6f);
}

TEST_CASE("model refuses inputs of the wrong spatial size") {
    auto model = build_model<float>(ModelConfig{}, 7);
    Tensor<float> small({1, 112, 112, 3});
    CHECK_THROWS_WITH_AS(model.forward(small, Mode::infer), doctest::Contains("no implicit resize"),
                         ShapeError);
}

TEST_CASE("initialization is deterministic per seed") {
    auto a = build_model<float>(ModelConfig{}, 42);
    auto b = build_model<float>(ModelConfig{}, 42);
    auto c = build_model<float>(ModelConfig{}, 43);
    auto pa = a.params(), pb = b.params(), pc = c.params();
    REQUIRE(pa.size() == pb.size());
    bool any_diff_c = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].name == pb[i].name);
        for (std::size_t k = 0; k < pa[i].value->size(); ++k) {
            CHECK((*pa[i].value)[k] == (*pb[i].value)[k]);
            if ((*pa[i].value)[k] != (*pc[i].value)[k]) any_diff_c = true;
        }
    }
    CHECK(any_diff_c);
}

TEST_CASE("uniform logits make predict fall back to the lowest class index") {
    ModelConfig cfg;
    cfg.input_size = 32; // small probe; ladder scales with input size
    auto model = build_model<float>(cfg, 5);
    for (auto& p : model.params())
        if (p.name == "fc3.w" || p.name == "fc3.b") p.value->fill(0.f);

    auto x = random_tensor<float>({3, 32, 32, 3}, 6, 0.f, 1.f);
    auto preds = model.predict(x);
    for (const auto& pr : preds) {
        CHECK(pr.class_index == 0);
        CHECK(pr.confidence == doctest::Approx(1.f / 15.f));
    }
}

TEST_CASE("predict reports the argmax class and its probability") {
    ModelConfig cfg;
    cfg.input_size = 32;
    cfg.num_classes = 4;
    auto model = build_model<float>(cfg, 8);
    auto x = random_tensor<float>({5, 32, 32, 3}, 9, 0.f, 1.f);
    auto probs = ops::softmax(model.forward(x, Mode::infer));
    auto preds = model.predict(x);
    for (std::size_t r = 0; r < 5; ++r) {
        float best = 0;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < 4; ++c)
            if (probs.at2(r, c) > best) {
                best = probs.at2(r, c);
                arg = c;
            }
        CHECK(preds[r].class_index == arg);
        CHECK(preds[r].confidence == doctest::Approx(best));
    }
}

TEST_CASE("parameter counts: stem 896, SE 2048, and both head totals") {
    auto model = build_model<float>(ModelConfig{}, 10);
    std::size_t stem_conv = 0, se = 0;
    for (const auto& p : model.params()) {
        if (p.name == "stem.conv.w" || p.name == "stem.conv.b") stem_conv += p.value->size();
        if (p.name == "block3.se.w1" || p.name == "block3.se.w2") se += p.value->size();
    }
    CHECK(stem_conv == 896);
    CHECK(se == 2048);

    // hand sum: stem 960, block1 18624, block2 57920, block3 232576,
    // gap head 33024 + 32896 + 1935
    CHECK(model.count_parameters() == 377935);

    ModelConfig flat;
    flat.head = ModelConfig::Head::flatten;
    auto fmodel = build_model<float>(flat, 10);
    CHECK(fmodel.count_parameters() == 26035279); // fc1 swells to 100352*256+256
}

TEST_CASE("parameter count is independent of batch size and mode") {
    ModelConfig cfg;
    cfg.input_size = 16;
    auto model = build_model<float>(cfg, 11);
    const std::size_t before = model.count_parameters();
    auto x1 = random_tensor<float>({1, 16, 16, 3}, 12, 0.f, 1.f);
    auto x3 = random_tensor<float>({3, 16, 16, 3}, 13, 0.f, 1.f);
    model.forward(x1, Mode::infer);
    model.forward(x3, Mode::train);
    CHECK(model.count_parameters() == before);
}

TEST_CASE("summary lists both head totals and flags the 6.5 million figure") {
    auto model = build_model<float>(ModelConfig{}, 14);
    const std::string s = model.summary();
    CHECK(s.find("377935") != std::string::npos);
    CHECK(s.find("26035279") != std::string::npos);
    CHECK(s.find("6.5 million") != std::string::npos);
    CHECK(s.find("stem.conv.w") != std::string::npos);
    CHECK(s.find("block3.se.w1") != std::string::npos);
    CHECK(s.find("(3,3,3,32)") != std::string::npos);
}

TEST_CASE("summary walks the probe through the documented stage outputs") {
    auto model = build_model<float>(ModelConfig{}, 14);
    const std::string s = model.summary();
    CHECK(s.find("(224,224,3)") != std::string::npos);
    CHECK(s.find("(112,112,32)") != std::string::npos);
    CHECK(s.find("(56,56,64)") != std::string::npos);
    CHECK(s.find("(28,28,128)") != std::string::npos);
    CHECK(s.find("head (gap)") != std::string::npos);
    CHECK(s.find("(128)") != std::string::npos);

    ModelConfig flat;
    flat.head = ModelConfig::Head::flatten;
    auto fmodel = build_model<float>(flat, 14);
    const std::string f = fmodel.summary();
    CHECK(f.find("head (flatten)") != std::string::npos);
    CHECK(f.find("(100352)") != std::string::npos);
}

TEST_CASE("config validation rejects bad plans") {
    ModelConfig cfg;
    cfg.num_classes = 1;
    CHECK_THROWS_AS(Model<float>{cfg}, ConfigError);

    cfg = ModelConfig{};
    cfg.input_size = 100; // not divisible by 8
    CHECK_THROWS_AS(Model<float>{cfg}, ConfigError);

    cfg = ModelConfig{};
    cfg.channel_plan = {32, 64};
    CHECK_THROWS_AS(Model<float>{cfg}, ConfigError);

    cfg = ModelConfig{};
    cfg.se_reduction = 7; // does not divide 128
    CHECK_THROWS_AS(Model<float>{cfg}, ConfigError);

    cfg = ModelConfig{};
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(Model<float>{cfg}, ConfigError);
}

TEST_CASE("flatten head forwards and backwards at a reduced input size") {
    ModelConfig cfg;
    cfg.input_size = 16;
    cfg.head = ModelConfig::Head::flatten;
    cfg.num_classes = 3;
    auto model = build_model<float>(cfg, 15);
    auto x = random_tensor<float>({2, 16, 16, 3}, 16, 0.f, 1.f);
    auto logits = model.forward(x, Mode::train);
    CHECK(logits.shape() == Shape{2, 3});
    model.zero_grads();
    model.backward(random_tensor<float>({2, 3}, 17));
}
