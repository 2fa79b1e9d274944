#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fourcrop/ops.hpp"
#include "fourcrop/rng.hpp"

namespace fourcrop {

enum class Mode { train, infer };

template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
    bool trainable;
};

template <class T>
using ParamList = std::vector<ParamRef<T>>;

namespace layers {

template <class T>
void he_normal(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& eng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(eng));
}

template <class T>
struct Conv2d {
    std::string name;
    ops::ConvSpec spec;
    Tensor<T> w, b, dw, db;
    Tensor<T> x_cache;
    ops::ConvScratch<T> scratch;

    Conv2d(std::string n, ops::ConvSpec s)
        : name(std::move(n)),
          spec(s),
          w({s.kh, s.kw, s.in_channels, s.out_channels}),
          b({s.out_channels}),
          dw(w.shape()),
          db(b.shape()) {}

    void init(std::mt19937_64& eng) { he_normal(w, spec.kh * spec.kw * spec.in_channels, eng); }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (mode == Mode::train) x_cache = x;
        return ops::conv2d(x, w, b, spec, &scratch);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        auto g = ops::conv2d_backward(x_cache, w, spec, dy, &scratch);
        simd::add(dw.data(), g.dw.data(), dw.data(), dw.size());
        simd::add(db.data(), g.db.data(), db.data(), db.size());
        return std::move(g.dx);
    }

    void collect(ParamList<T>& out) {
        out.push_back({name + ".w", &w, &dw, true});
        out.push_back({name + ".b", &b, &db, true});
    }
};

// Channelwise batch normalization over N*H*W positions. Train mode
// normalizes with biased batch statistics and folds them into the running
// averages; infer mode reads only the running averages.
template <class T>
struct BatchNorm {
    std::string name;
    std::size_t channels;
    T momentum = T(0.9);
    T epsilon = T(1e-5);
    Tensor<T> gamma, beta, dgamma, dbeta;
    Tensor<T> running_mean, running_var;
    Tensor<T> xhat_cache;
    std::vector<T> inv_std_cache;

    BatchNorm(std::string n, std::size_t c)
        : name(std::move(n)),
          channels(c),
          gamma({c}, T(1)),
          beta({c}),
          dgamma({c}),
          dbeta({c}),
          running_mean({c}),
          running_var({c}, T(1)) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        require_axis(x.extent(x.rank() - 1) == channels, "channel",
                     name + " expects " + std::to_string(channels) + " channels, got " +
                         shape_str(x.shape()));
        const std::size_t rows = x.size() / channels;
        Tensor<T> y(x.shape());

        if (mode == Mode::infer) {
            std::vector<T> sc(channels), sh(channels);
            for (std::size_t c = 0; c < channels; ++c) {
                const T is = T(1) / std::sqrt(running_var[c] + epsilon);
                sc[c] = gamma[c] * is;
                sh[c] = beta[c] - gamma[c] * running_mean[c] * is;
            }
            simd::channel_affine(x.data(), sc.data(), sh.data(), rows, channels, y.data());
            check_finite(y, "batchnorm");
            return y;
        }

        if (rows < 2)
            throw ShapeError("axis 'batch': " + name + " needs at least 2 positions per channel "
                             "in train mode, got " + std::to_string(rows));

        std::vector<T> sum(channels), sumsq(channels);
        simd::channel_sums(x.data(), rows, channels, sum.data(), sumsq.data());

        inv_std_cache.resize(channels);
        std::vector<T> sc(channels), sh(channels);
        const T inv_m = T(1) / static_cast<T>(rows);
        for (std::size_t c = 0; c < channels; ++c) {
            const T mean = sum[c] * inv_m;
            T var = sumsq[c] * inv_m - mean * mean;
            if (var < T(0)) var = T(0); // roundoff guard
            const T is = T(1) / std::sqrt(var + epsilon);
            inv_std_cache[c] = is;
            sc[c] = is;
            sh[c] = -mean * is;
            running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * mean;
            running_var[c] = momentum * running_var[c] + (T(1) - momentum) * var;
        }
        xhat_cache = Tensor<T>(x.shape());
        simd::channel_affine(x.data(), sc.data(), sh.data(), rows, channels, xhat_cache.data());
        for (std::size_t c = 0; c < channels; ++c) {
            sc[c] = gamma[c];
            sh[c] = beta[c];
        }
        simd::channel_affine(xhat_cache.data(), sc.data(), sh.data(), rows, channels, y.data());
        check_finite(y, "batchnorm");
        return y;
    }

    // dx = (gamma*inv_std) * (dy - mean(dy) - xhat*mean(dy*xhat)), means per channel
    Tensor<T> backward(const Tensor<T>& dy) {
        require_axis(dy.same_shape(xhat_cache), "grad", name + " backward shape mismatch");
        const std::size_t rows = dy.size() / channels;
        const T inv_m = T(1) / static_cast<T>(rows);

        std::vector<T> sum_dy(channels, T(0)), sum_dyx(channels, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
            const T* d = dy.data() + r * channels;
            const T* xh = xhat_cache.data() + r * channels;
            for (std::size_t c = 0; c < channels; ++c) {
                sum_dy[c] += d[c];
                sum_dyx[c] += d[c] * xh[c];
            }
        }
        for (std::size_t c = 0; c < channels; ++c) {
            dbeta[c] += sum_dy[c];
            dgamma[c] += sum_dyx[c];
        }

        Tensor<T> dx(dy.shape());
        std::vector<T> k(channels), mdy(channels), mdyx(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            k[c] = gamma[c] * inv_std_cache[c];
            mdy[c] = sum_dy[c] * inv_m;
            mdyx[c] = sum_dyx[c] * inv_m;
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const T* d = dy.data() + r * channels;
            const T* xh = xhat_cache.data() + r * channels;
            T* o = dx.data() + r * channels;
            for (std::size_t c = 0; c < channels; ++c)
                o[c] = k[c] * (d[c] - mdy[c] - xh[c] * mdyx[c]);
        }
        return dx;
    }

    void collect(ParamList<T>& out) {
        out.push_back({name + ".gamma", &gamma, &dgamma, true});
        out.push_back({name + ".beta", &beta, &dbeta, true});
        out.push_back({name + ".running_mean", &running_mean, nullptr, false});
        out.push_back({name + ".running_var", &running_var, nullptr, false});
    }
};

template <class T>
struct Relu {
    Tensor<T> x_cache;

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (mode == Mode::train) x_cache = x;
        return ops::relu(x);
    }
    Tensor<T> backward(const Tensor<T>& dy) { return ops::relu_backward(x_cache, dy); }
};

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
// inference is a plain identity.
template <class T>
struct Dropout {
    T rate;
    std::mt19937_64 eng;
    Tensor<T> mask;

    Dropout(T r, std::uint64_t seed) : rate(r), eng(seed) {
        if (!(r >= T(0) && r < T(1)))
            throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(r));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (mode == Mode::infer || rate == T(0)) return x;
        mask = Tensor<T>(x.shape());
        const T keep_scale = T(1) / (T(1) - rate);
        std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(eng) ? keep_scale : T(0);
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (rate == T(0)) return dy;
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
        return dx;
    }
};

template <class T>
struct Dense {
    std::string name;
    Tensor<T> w, b, dw, db;
    Tensor<T> x_cache;

    Dense(std::string n, std::size_t din, std::size_t dout)
        : name(std::move(n)), w({din, dout}), b({dout}), dw(w.shape()), db(b.shape()) {}

    void init(std::mt19937_64& eng) { he_normal(w, w.extent(0), eng); }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (mode == Mode::train) x_cache = x;
        return ops::dense_affine(x, w, b);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        auto g = ops::dense_backward(x_cache, w, dy);
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += g.dw[i];
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g.db[i];
        return std::move(g.dx);
    }

    void collect(ParamList<T>& out) {
        out.push_back({name + ".w", &w, &dw, true});
        out.push_back({name + ".b", &b, &db, true});
    }
};

template <class T>
struct MaxPool {
    ops::PoolResult<T> cache;

    Tensor<T> forward(const Tensor<T>& x, Mode) {
        cache = ops::maxpool2d(x);
        return cache.y;
    }
    Tensor<T> backward(const Tensor<T>& dy) { return ops::maxpool2d_backward(cache, dy); }
};

// Squeeze-and-excitation: per-channel scale s = sigmoid(W2 relu(W1 gap(F)))
// applied multiplicatively to the features. No biases on either projection.
template <class T>
struct SEBlock {
    std::string name;
    std::size_t channels, hidden;
    Tensor<T> w1, w2, dw1, dw2;
    Tensor<T> f_cache, z_cache, h_cache, pre_cache, s_cache;

    static std::size_t checked_hidden(std::size_t c, std::size_t reduction) {
        require_axis(reduction >= 1 && c % reduction == 0, "se_reduction",
                     std::to_string(reduction) + " does not divide " + std::to_string(c));
        return c / reduction;
    }

    SEBlock(std::string n, std::size_t c, std::size_t reduction)
        : name(std::move(n)),
          channels(c),
          hidden(checked_hidden(c, reduction)),
          w1({c, hidden}),
          w2({hidden, c}),
          dw1(w1.shape()),
          dw2(w2.shape()) {}

    void init(std::mt19937_64& eng) {
        he_normal(w1, channels, eng);
        he_normal(w2, hidden, eng);
    }

    Tensor<T> forward(const Tensor<T>& f, Mode mode) {
        const std::size_t n = f.extent(0), c = f.extent(3);
        require_axis(c == channels, "channel",
                     name + " expects " + std::to_string(channels) + " channels");
        Tensor<T> z = ops::global_avg_pool(f);

        Tensor<T> pre({n, hidden});
        simd::gemm(n, hidden, c, z.data(), c, w1.data(), hidden, T(0), pre.data(), hidden);
        Tensor<T> h = ops::relu(pre);

        Tensor<T> logits({n, c});
        simd::gemm(n, c, hidden, h.data(), hidden, w2.data(), c, T(0), logits.data(), c);
        Tensor<T> s = ops::sigmoid(logits);

        Tensor<T> y(f.shape());
        const std::size_t hw = f.extent(1) * f.extent(2);
        for (std::size_t img = 0; img < n; ++img) {
            const T* sp = s.data() + img * c;
            for (std::size_t p = 0; p < hw; ++p) {
                const T* fp = f.data() + (img * hw + p) * c;
                T* yp = y.data() + (img * hw + p) * c;
                for (std::size_t ch = 0; ch < c; ++ch) yp[ch] = sp[ch] * fp[ch];
            }
        }
        if (mode == Mode::train) {
            f_cache = f;
            z_cache = std::move(z);
            h_cache = std::move(h);
            pre_cache = std::move(pre);
            s_cache = std::move(s);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::size_t n = dy.extent(0), c = channels;
        const std::size_t hw = dy.extent(1) * dy.extent(2);

        // scale path: dF += s*dy; ds = sum_hw dy*F
        Tensor<T> dx(dy.shape());
        Tensor<T> ds({n, c});
        for (std::size_t img = 0; img < n; ++img) {
            const T* sp = s_cache.data() + img * c;
            T* dsp = ds.data() + img * c;
            for (std::size_t p = 0; p < hw; ++p) {
                const std::size_t off = (img * hw + p) * c;
                const T* dyp = dy.data() + off;
                const T* fp = f_cache.data() + off;
                T* dxp = dx.data() + off;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    dxp[ch] = sp[ch] * dyp[ch];
                    dsp[ch] += dyp[ch] * fp[ch];
                }
            }
        }

        // excitation path back to z
        Tensor<T> dlogits(ds.shape());
        for (std::size_t i = 0; i < ds.size(); ++i)
            dlogits[i] = ds[i] * s_cache[i] * (T(1) - s_cache[i]);

        std::vector<T> ht(hidden * n), w2t(c * hidden), zt(c * n), w1t(hidden * c);
        ops::detail::transpose(h_cache.data(), n, hidden, ht.data());
        ops::detail::transpose(w2.data(), hidden, c, w2t.data());
        simd::gemm(hidden, c, n, ht.data(), n, dlogits.data(), c, T(1), dw2.data(), c);

        Tensor<T> dh({n, hidden});
        simd::gemm(n, hidden, c, dlogits.data(), c, w2t.data(), hidden, T(0), dh.data(), hidden);
        Tensor<T> dpre = ops::relu_backward(pre_cache, dh);

        ops::detail::transpose(z_cache.data(), n, c, zt.data());
        ops::detail::transpose(w1.data(), c, hidden, w1t.data());
        simd::gemm(c, hidden, n, zt.data(), n, dpre.data(), hidden, T(1), dw1.data(), hidden);

        Tensor<T> dz({n, c});
        simd::gemm(n, c, hidden, dpre.data(), hidden, w1t.data(), c, T(0), dz.data(), c);

        // squeeze path spreads dz/(H*W) back over the map
        const T inv = T(1) / static_cast<T>(hw);
        for (std::size_t img = 0; img < n; ++img) {
            const T* dzp = dz.data() + img * c;
            for (std::size_t p = 0; p < hw; ++p) {
                T* dxp = dx.data() + (img * hw + p) * c;
                for (std::size_t ch = 0; ch < c; ++ch) dxp[ch] += inv * dzp[ch];
            }
        }
        return dx;
    }

    void collect(ParamList<T>& out) {
        out.push_back({name + ".w1", &w1, &dw1, true});
        out.push_back({name + ".w2", &w2, &dw2, true});
    }
};

// Two 3x3 convs (each Conv->BN->ReLU) plus a skip connection. The skip is the
// identity when channels match, otherwise a 1x1 conv + BN projection. With
// attach_se the branch output is rescaled by the SE block before the addition;
// there is no activation after the addition.
template <class T>
struct ResidualBlock {
    std::string name;
    std::size_t in_channels, out_channels;
    bool use_projection, attach_se;
    Conv2d<T> conv1, conv2;
    BatchNorm<T> bn1, bn2;
    Relu<T> relu1, relu2;
    std::unique_ptr<Conv2d<T>> proj;
    std::unique_ptr<BatchNorm<T>> proj_bn;
    std::unique_ptr<SEBlock<T>> se;

    ResidualBlock(std::string n, std::size_t cin, std::size_t cout, bool with_se,
                  std::size_t se_reduction)
        : name(std::move(n)),
          in_channels(cin),
          out_channels(cout),
          use_projection(cin != cout),
          attach_se(with_se),
          conv1(name + ".conv1", ops::ConvSpec{3, 3, 1, 1, cin, cout}),
          conv2(name + ".conv2", ops::ConvSpec{3, 3, 1, 1, cout, cout}),
          bn1(name + ".bn1", cout),
          bn2(name + ".bn2", cout) {
        if (use_projection) {
            proj = std::make_unique<Conv2d<T>>(name + ".proj", ops::ConvSpec{1, 1, 1, 0, cin, cout});
            proj_bn = std::make_unique<BatchNorm<T>>(name + ".proj_bn", cout);
        }
        if (attach_se) se = std::make_unique<SEBlock<T>>(name + ".se", cout, se_reduction);
    }

    void init(std::mt19937_64& eng) {
        conv1.init(eng);
        conv2.init(eng);
        if (proj) proj->init(eng);
        if (se) se->init(eng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        require_axis(x.extent(3) == in_channels, "channel",
                     name + " expects " + std::to_string(in_channels) + " channels, got " +
                         shape_str(x.shape()));
        Tensor<T> f = relu1.forward(bn1.forward(conv1.forward(x, mode), mode), mode);
        f = relu2.forward(bn2.forward(conv2.forward(f, mode), mode), mode);
        if (se) f = se->forward(f, mode);

        Tensor<T> skip = use_projection
                             ? proj_bn->forward(proj->forward(x, mode), mode)
                             : x;
        Tensor<T> y(f.shape());
        simd::add(f.data(), skip.data(), y.data(), y.size());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> df = dy;
        if (se) df = se->backward(df);
        df = conv1.backward(bn1.backward(relu1.backward(
            conv2.backward(bn2.backward(relu2.backward(df))))));

        if (use_projection) {
            Tensor<T> dskip = proj->backward(proj_bn->backward(dy));
            Tensor<T> dx(df.shape());
            simd::add(df.data(), dskip.data(), dx.data(), dx.size());
            return dx;
        }
        Tensor<T> dx(df.shape());
        simd::add(df.data(), dy.data(), dx.data(), dx.size());
        return dx;
    }

    void collect(ParamList<T>& out) {
        conv1.collect(out);
        bn1.collect(out);
        conv2.collect(out);
        bn2.collect(out);
        if (proj) {
            proj->collect(out);
            proj_bn->collect(out);
        }
        if (se) se->collect(out);
    }
};

} // namespace layers
} // namespace fourcrop
