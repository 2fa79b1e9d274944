#pragma once

#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fourcrop/layers.hpp"

namespace fourcrop {

struct ModelConfig {
    std::size_t input_size = 224; // must be divisible by 8 (three 2x2 pools)
    std::vector<std::size_t> channel_plan{32, 32, 64, 128};
    std::vector<std::size_t> fc_plan{256, 128};
    double dropout = 0.5;
    std::size_t num_classes = 15;
    std::size_t se_reduction = 16;
    enum class Head { gap, flatten };
    Head head = Head::gap;

    void validate() const {
        if (num_classes < 2)
            throw ConfigError("model.num_classes must be >= 2, got " +
                              std::to_string(num_classes));
        if (channel_plan.size() != 4)
            throw ConfigError("model.channel_plan must list 4 widths, got " +
                              std::to_string(channel_plan.size()));
        if (fc_plan.size() != 2)
            throw ConfigError("model.fc_plan must list 2 widths, got " +
                              std::to_string(fc_plan.size()));
        for (std::size_t c : channel_plan)
            if (c < 1) throw ConfigError("model.channel_plan entries must be >= 1");
        if (input_size < 8 || input_size % 8 != 0)
            throw ConfigError("model.input_size must be a positive multiple of 8, got " +
                              std::to_string(input_size));
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ConfigError("model.dropout must be in [0,1), got " + std::to_string(dropout));
        if (se_reduction < 1 || channel_plan[3] % se_reduction != 0)
            throw ConfigError("model.se_reduction must divide the last channel width");
    }

    std::size_t head_width() const {
        const std::size_t s = input_size / 8;
        return head == Head::gap ? channel_plan[3] : s * s * channel_plan[3];
    }

    bool operator==(const ModelConfig&) const = default;
};

inline const char* head_name(ModelConfig::Head h) {
    return h == ModelConfig::Head::gap ? "gap" : "flatten";
}

inline ModelConfig::Head head_from_name(const std::string& s) {
    if (s == "gap") return ModelConfig::Head::gap;
    if (s == "flatten") return ModelConfig::Head::flatten;
    throw ConfigError("model.head must be 'gap' or 'flatten', got '" + s + "'");
}

template <class T>
struct Prediction {
    std::size_t class_index;
    T confidence; // maximum softmax probability
};

// The full network: stem conv -> pool -> three residual blocks (the last with
// squeeze-and-excitation) with pools after blocks two and three -> head ->
// two hidden dense layers with dropout -> class logits.
template <class T>
class Model {
public:
    explicit Model(ModelConfig cfg)
        : cfg_((cfg.validate(), cfg)),
          stem_conv_("stem.conv", ops::ConvSpec{3, 3, 1, 1, 3, cfg.channel_plan[0]}),
          stem_bn_("stem.bn", cfg.channel_plan[0]),
          block1_("block1", cfg.channel_plan[0], cfg.channel_plan[1], false, cfg.se_reduction),
          block2_("block2", cfg.channel_plan[1], cfg.channel_plan[2], false, cfg.se_reduction),
          block3_("block3", cfg.channel_plan[2], cfg.channel_plan[3], true, cfg.se_reduction),
          fc1_("fc1", cfg.head_width(), cfg.fc_plan[0]),
          fc2_("fc2", cfg.fc_plan[0], cfg.fc_plan[1]),
          fc3_("fc3", cfg.fc_plan[1], cfg.num_classes),
          drop1_(static_cast<T>(cfg.dropout), 1),
          drop2_(static_cast<T>(cfg.dropout), 2) {
        ParamList<T> ps = params();
        std::set<std::string> names;
        for (const auto& p : ps)
            if (!names.insert(p.name).second)
                throw ConfigError("duplicate parameter name " + p.name);
    }

    const ModelConfig& config() const { return cfg_; }

    void init(std::uint64_t seed) {
        auto eng = make_engine(seed);
        stem_conv_.init(eng);
        block1_.init(eng);
        block2_.init(eng);
        block3_.init(eng);
        fc1_.init(eng);
        fc2_.init(eng);
        fc3_.init(eng);
        drop1_.eng.seed(derive_seed(seed, 101));
        drop2_.eng.seed(derive_seed(seed, 102));
    }

    Tensor<T> forward(const Tensor<T>& images, Mode mode) {
        const std::size_t s = cfg_.input_size;
        require_axis(images.rank() == 4 && images.extent(1) == s && images.extent(2) == s &&
                         images.extent(3) == 3,
                     "input",
                     "expected (N," + std::to_string(s) + "," + std::to_string(s) +
                         ",3), got " + shape_str(images.shape()) + "; no implicit resize");

        Tensor<T> x = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(images, mode), mode),
                                         mode);
        x = pool1_.forward(x, mode);
        probe(x, s / 2, cfg_.channel_plan[0], "after stem pool");
        x = block1_.forward(x, mode);
        probe(x, s / 2, cfg_.channel_plan[1], "after block1");
        x = block2_.forward(x, mode);
        x = pool2_.forward(x, mode);
        probe(x, s / 4, cfg_.channel_plan[2], "after block2 pool");
        x = block3_.forward(x, mode);
        x = pool3_.forward(x, mode);
        probe(x, s / 8, cfg_.channel_plan[3], "after block3 pool");

        const std::size_t n = x.extent(0);
        Tensor<T> flat = cfg_.head == ModelConfig::Head::gap
                             ? ops::global_avg_pool(x)
                             : x.reshaped({n, cfg_.head_width()});
        if (cfg_.head == ModelConfig::Head::flatten) head_in_shape_ = x.shape();

        flat = drop1_.forward(fc_relu1_.forward(fc1_.forward(flat, mode), mode), mode);
        flat = drop2_.forward(fc_relu2_.forward(fc2_.forward(flat, mode), mode), mode);
        return fc3_.forward(flat, mode);
    }

    // Gradients accumulate into each layer's grad buffers; call zero_grads()
    // before a fresh step. Run only after a train-mode forward.
    void backward(const Tensor<T>& dlogits) {
        Tensor<T> d = fc3_.backward(dlogits);
        d = fc2_.backward(fc_relu2_.backward(drop2_.backward(d)));
        d = fc1_.backward(fc_relu1_.backward(drop1_.backward(d)));

        const std::size_t s = cfg_.input_size;
        Tensor<T> dmap = cfg_.head == ModelConfig::Head::gap
                             ? ops::global_avg_pool_backward(
                                   {d.extent(0), s / 8, s / 8, cfg_.channel_plan[3]}, d)
                             : d.reshaped(head_in_shape_);

        dmap = block3_.backward(pool3_.backward(dmap));
        dmap = block2_.backward(pool2_.backward(dmap));
        dmap = block1_.backward(dmap);
        dmap = stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(pool1_.backward(dmap))));
    }

    ParamList<T> params() {
        ParamList<T> out;
        stem_conv_.collect(out);
        stem_bn_.collect(out);
        block1_.collect(out);
        block2_.collect(out);
        block3_.collect(out);
        fc1_.collect(out);
        fc2_.collect(out);
        fc3_.collect(out);
        return out;
    }

    void zero_grads() {
        for (auto& p : params())
            if (p.grad) p.grad->fill(T(0));
    }

    std::vector<Prediction<T>> predict(const Tensor<T>& images) {
        Tensor<T> probs = ops::softmax(forward(images, Mode::infer));
        const std::size_t n = probs.extent(0), c = probs.extent(1);
        std::vector<Prediction<T>> out(n);
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < c; ++j)
                if (probs.at2(r, j) > probs.at2(r, best)) best = j; // ties keep the lowest index
            out[r] = {best, probs.at2(r, best)};
        }
        return out;
    }

    std::size_t count_parameters() {
        std::size_t total = 0;
        for (const auto& p : params())
            if (p.trainable) total += p.value->size();
        return total;
    }

    // stage outputs for a single-image probe, then name, shape and trainable
    // scalar count per parameter plus the grand total
    std::string summary() {
        std::ostringstream os;
        const std::size_t s = cfg_.input_size;
        const auto& c = cfg_.channel_plan;
        auto hwc = [](std::size_t hw, std::size_t ch) {
            return "(" + std::to_string(hw) + "," + std::to_string(hw) + "," +
                   std::to_string(ch) + ")";
        };
        os << "stage                 output\n";
        os << std::left << std::setw(22) << "input" << hwc(s, 3) << "\n";
        os << std::left << std::setw(22) << "stem conv+bn+relu" << hwc(s, c[0]) << "\n";
        os << std::left << std::setw(22) << "pool1" << hwc(s / 2, c[0]) << "\n";
        os << std::left << std::setw(22) << "block1" << hwc(s / 2, c[1]) << "\n";
        os << std::left << std::setw(22) << "block2" << hwc(s / 2, c[2]) << "\n";
        os << std::left << std::setw(22) << "pool2" << hwc(s / 4, c[2]) << "\n";
        os << std::left << std::setw(22) << "block3 (se)" << hwc(s / 4, c[3]) << "\n";
        os << std::left << std::setw(22) << "pool3" << hwc(s / 8, c[3]) << "\n";
        os << std::left << std::setw(22)
           << (cfg_.head == ModelConfig::Head::gap ? "head (gap)" : "head (flatten)") << "("
           << cfg_.head_width() << ")\n";
        os << std::left << std::setw(22) << "fc1+relu+dropout"
           << "(" << cfg_.fc_plan[0] << ")\n";
        os << std::left << std::setw(22) << "fc2+relu+dropout"
           << "(" << cfg_.fc_plan[1] << ")\n";
        os << std::left << std::setw(22) << "logits"
           << "(" << cfg_.num_classes << ")\n\n";

        os << "parameter                        shape              count\n";
        std::size_t total = 0;
        for (const auto& p : params()) {
            if (!p.trainable) continue;
            os << std::left << std::setw(33) << p.name << std::setw(19)
               << shape_str(p.value->shape()) << p.value->size() << "\n";
            total += p.value->size();
        }
        os << "total trainable (head=" << head_name(cfg_.head) << "): " << total << "\n";

        // the heads differ only in fc1's input width
        ModelConfig other = cfg_;
        other.head = cfg_.head == ModelConfig::Head::gap ? ModelConfig::Head::flatten
                                                         : ModelConfig::Head::gap;
        const std::size_t alt_total = total - cfg_.head_width() * cfg_.fc_plan[0] +
                                      other.head_width() * cfg_.fc_plan[0];
        os << "total trainable (head=" << head_name(other.head) << "): " << alt_total << "\n";
        os << "note: this architecture is sometimes quoted at 6.5 million learnable\n"
              "parameters; neither head variant yields that figure (see totals above).\n"
              "The enumeration here is exact.\n";
        return os.str();
    }

private:
    ModelConfig cfg_;
    layers::Conv2d<T> stem_conv_;
    layers::BatchNorm<T> stem_bn_;
    layers::Relu<T> stem_relu_;
    layers::MaxPool<T> pool1_, pool2_, pool3_;
    layers::ResidualBlock<T> block1_, block2_, block3_;
    layers::Dense<T> fc1_, fc2_, fc3_;
    layers::Relu<T> fc_relu1_, fc_relu2_;
    layers::Dropout<T> drop1_, drop2_;
    Shape head_in_shape_;

    static void probe(const Tensor<T>& x, std::size_t hw, std::size_t c, const char* stage) {
        require_axis(x.extent(1) == hw && x.extent(2) == hw && x.extent(3) == c, "probe",
                     std::string(stage) + " expected (N," + std::to_string(hw) + "," +
                         std::to_string(hw) + "," + std::to_string(c) + "), got " +
                         shape_str(x.shape()));
    }
};

template <class T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model<T> m(cfg);
    m.init(seed);
    return m;
}

} // namespace fourcrop
