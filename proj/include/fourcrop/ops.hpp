#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <vector>

#include "fourcrop/simd.hpp"
#include "fourcrop/tensor.hpp"

namespace fourcrop::ops {

struct ConvSpec {
    std::size_t kh = 3, kw = 3;
    std::size_t stride = 1, pad = 1;
    std::size_t in_channels = 0, out_channels = 0;

    // out = floor((in - k + 2p)/s) + 1
    static std::size_t out_extent(std::size_t in, std::size_t k, std::size_t pad,
                                  std::size_t stride) {
        const long num = static_cast<long>(in) - static_cast<long>(k) + 2 * static_cast<long>(pad);
        if (num < 0 || stride < 1)
            throw ShapeError("axis 'spatial': extent " + std::to_string(in) +
                             " too small for kernel " + std::to_string(k) + " with pad " +
                             std::to_string(pad));
        return static_cast<std::size_t>(num / static_cast<long>(stride)) + 1;
    }

    std::size_t out_h(std::size_t in_h) const { return out_extent(in_h, kh, pad, stride); }
    std::size_t out_w(std::size_t in_w) const { return out_extent(in_w, kw, pad, stride); }
};

namespace detail {

template <class T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                     const ConvSpec& s) {
    require_axis(x.rank() == 4, "input", "conv2d expects NxHxWxC, got " + shape_str(x.shape()));
    require_axis(x.extent(3) == s.in_channels, "channel",
                 "input has " + std::to_string(x.extent(3)) + " channels, spec expects " +
                     std::to_string(s.in_channels));
    const Shape expect_w{s.kh, s.kw, s.in_channels, s.out_channels};
    require_axis(w.shape() == expect_w, "weights",
                 "expected " + shape_str(expect_w) + ", got " + shape_str(w.shape()));
    require_axis(b.rank() == 1 && b.extent(0) == s.out_channels, "bias",
                 "expected (" + std::to_string(s.out_channels) + "), got " + shape_str(b.shape()));
}

// One image's receptive fields as rows: col is (OH*OW) x (KH*KW*Cin), the
// column order matching the KxKxCinxCout weight layout.
template <class T>
void im2col(const T* x, std::size_t h, std::size_t w, std::size_t cin, const ConvSpec& s,
            std::size_t oh, std::size_t ow, T* col) {
    const std::size_t row_len = s.kh * s.kw * cin;
    for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t q = 0; q < ow; ++q) {
            T* dst = col + (r * ow + q) * row_len;
            for (std::size_t kr = 0; kr < s.kh; ++kr) {
                const long ih = static_cast<long>(r * s.stride + kr) - static_cast<long>(s.pad);
                if (ih < 0 || ih >= static_cast<long>(h)) {
                    std::memset(dst, 0, s.kw * cin * sizeof(T));
                    dst += s.kw * cin;
                    continue;
                }
                const long iw0 = static_cast<long>(q * s.stride) - static_cast<long>(s.pad);
                if (iw0 >= 0 && iw0 + static_cast<long>(s.kw) <= static_cast<long>(w)) {
                    std::memcpy(dst, x + (static_cast<std::size_t>(ih) * w + iw0) * cin,
                                s.kw * cin * sizeof(T));
                    dst += s.kw * cin;
                } else {
                    for (std::size_t kq = 0; kq < s.kw; ++kq) {
                        const long iw = iw0 + static_cast<long>(kq);
                        if (iw < 0 || iw >= static_cast<long>(w))
                            std::memset(dst, 0, cin * sizeof(T));
                        else
                            std::memcpy(dst, x + (static_cast<std::size_t>(ih) * w + iw) * cin,
                                        cin * sizeof(T));
                        dst += cin;
                    }
                }
            }
        }
    }
}

// scatter-add of column gradients back onto the input image
template <class T>
void col2im_add(const T* col, std::size_t h, std::size_t w, std::size_t cin, const ConvSpec& s,
                std::size_t oh, std::size_t ow, T* dx) {
    const std::size_t row_len = s.kh * s.kw * cin;
    for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t q = 0; q < ow; ++q) {
            const T* src = col + (r * ow + q) * row_len;
            for (std::size_t kr = 0; kr < s.kh; ++kr) {
                const long ih = static_cast<long>(r * s.stride + kr) - static_cast<long>(s.pad);
                if (ih < 0 || ih >= static_cast<long>(h)) {
                    src += s.kw * cin;
                    continue;
                }
                for (std::size_t kq = 0; kq < s.kw; ++kq) {
                    const long iw =
                        static_cast<long>(q * s.stride + kq) - static_cast<long>(s.pad);
                    if (iw >= 0 && iw < static_cast<long>(w))
                        simd::axpy(T(1), src,
                                   dx + (static_cast<std::size_t>(ih) * w + iw) * cin, cin);
                    src += cin;
                }
            }
        }
    }
}

template <class T>
void transpose(const T* a, std::size_t rows, std::size_t cols, T* at) {
    constexpr std::size_t B = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += B) {
        const std::size_t i1 = std::min(i0 + B, rows);
        for (std::size_t j0 = 0; j0 < cols; j0 += B) {
            const std::size_t j1 = std::min(j0 + B, cols);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) at[j * rows + i] = a[i * cols + j];
        }
    }
}

template <class T>
void bias_add(T* y, const T* b, std::size_t rows, std::size_t c) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* yr = y + r * c;
        for (std::size_t j = 0; j < c; ++j) yr[j] += b[j];
    }
}

// test hook: FCN_FAULT_CONV_BWD=1 plants an off-by-one padding bug in the
// weight-gradient path so the gradient checker can be shown to catch it
inline bool conv_backward_fault() {
    static const bool on = [] {
        const char* v = std::getenv("FCN_FAULT_CONV_BWD");
        return v != nullptr && v[0] == '1';
    }();
    return on;
}

} // namespace detail

template <class T>
struct ConvScratch {
    std::vector<T> col;  // (OH*OW) x (KH*KW*Cin)
    std::vector<T> colt; // transpose of col
    std::vector<T> wt;   // Cout x (KH*KW*Cin)
};

// Zero-padded cross-correlation plus bias, im2col + GEMM route.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvSpec& s,
                 ConvScratch<T>* scratch = nullptr) {
    detail::check_conv_args(x, w, b, s);
    const std::size_t n = x.extent(0), h = x.extent(1), wid = x.extent(2);
    const std::size_t oh = s.out_h(h), ow = s.out_w(wid);
    const std::size_t k = s.kh * s.kw * s.in_channels;
    const std::size_t rows = oh * ow;

    Tensor<T> y({n, oh, ow, s.out_channels});
    ConvScratch<T> local;
    ConvScratch<T>& ws = scratch ? *scratch : local;
    ws.col.resize(rows * k);

    for (std::size_t img = 0; img < n; ++img) {
        detail::im2col(x.data() + img * h * wid * s.in_channels, h, wid, s.in_channels, s, oh, ow,
                       ws.col.data());
        simd::gemm(rows, s.out_channels, k, ws.col.data(), k, w.data(), s.out_channels, T(0),
                   y.data() + img * rows * s.out_channels, s.out_channels);
        detail::bias_add(y.data() + img * rows * s.out_channels, b.data(), rows, s.out_channels);
    }
    check_finite(y, "conv2d");
    return y;
}

// Direct-loop reference; defines correctness for the im2col route.
template <class T>
Tensor<T> conv2d_direct(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                        const ConvSpec& s) {
    detail::check_conv_args(x, w, b, s);
    const std::size_t n = x.extent(0), h = x.extent(1), wid = x.extent(2);
    const std::size_t oh = s.out_h(h), ow = s.out_w(wid);
    Tensor<T> y({n, oh, ow, s.out_channels});

    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q)
                for (std::size_t co = 0; co < s.out_channels; ++co) {
                    T acc = b[co];
                    for (std::size_t kr = 0; kr < s.kh; ++kr) {
                        const long ih =
                            static_cast<long>(r * s.stride + kr) - static_cast<long>(s.pad);
                        if (ih < 0 || ih >= static_cast<long>(h)) continue;
                        for (std::size_t kq = 0; kq < s.kw; ++kq) {
                            const long iw =
                                static_cast<long>(q * s.stride + kq) - static_cast<long>(s.pad);
                            if (iw < 0 || iw >= static_cast<long>(wid)) continue;
                            for (std::size_t ci = 0; ci < s.in_channels; ++ci)
                                acc += x.at4(img, static_cast<std::size_t>(ih),
                                             static_cast<std::size_t>(iw), ci) *
                                       w[((kr * s.kw + kq) * s.in_channels + ci) *
                                             s.out_channels +
                                         co];
                        }
                    }
                    y.at4(img, r, q, co) = acc;
                }
    return y;
}

template <class T>
struct ConvGrads {
    Tensor<T> dx, dw, db;
};

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& s,
                             const Tensor<T>& dy, ConvScratch<T>* scratch = nullptr) {
    const std::size_t n = x.extent(0), h = x.extent(1), wid = x.extent(2);
    const std::size_t oh = s.out_h(h), ow = s.out_w(wid);
    require_axis(dy.shape() == Shape{n, oh, ow, s.out_channels}, "grad",
                 "conv2d_backward got dy " + shape_str(dy.shape()));
    const std::size_t k = s.kh * s.kw * s.in_channels;
    const std::size_t rows = oh * ow;

    ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({s.out_channels})};
    ConvScratch<T> local;
    ConvScratch<T>& ws = scratch ? *scratch : local;
    ws.col.resize(rows * k);
    ws.colt.resize(rows * k);
    ws.wt.resize(k * s.out_channels);
    detail::transpose(w.data(), k, s.out_channels, ws.wt.data());

    ConvSpec sm = s;
    if (detail::conv_backward_fault() && sm.pad > 0) sm.pad -= 1; // planted bug, see above

    for (std::size_t img = 0; img < n; ++img) {
        const T* dyp = dy.data() + img * rows * s.out_channels;

        // db
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t co = 0; co < s.out_channels; ++co)
                g.db[co] += dyp[r * s.out_channels + co];

        // dW += col^T * dY
        detail::im2col(x.data() + img * h * wid * s.in_channels, h, wid, s.in_channels, sm, oh,
                       ow, ws.col.data());
        detail::transpose(ws.col.data(), rows, k, ws.colt.data());
        simd::gemm(k, s.out_channels, rows, ws.colt.data(), rows, dyp, s.out_channels,
                   img == 0 ? T(0) : T(1), g.dw.data(), s.out_channels);

        // dX = col2im(dY * W^T)
        simd::gemm(rows, k, s.out_channels, dyp, s.out_channels, ws.wt.data(), k, T(0),
                   ws.col.data(), k);
        detail::col2im_add(ws.col.data(), h, wid, s.in_channels, s, oh, ow,
                           g.dx.data() + img * h * wid * s.in_channels);
    }
    check_finite(g.dx, "conv2d_backward");
    return g;
}

template <class T>
struct PoolResult {
    Tensor<T> y;
    std::vector<std::int32_t> argmax; // window position 2*dh+dw per output element
    Shape in_shape;
};

// 2x2 window, stride 2; odd spatial extents are rejected, no implicit padding.
template <class T>
PoolResult<T> maxpool2d(const Tensor<T>& x) {
    require_axis(x.rank() == 4, "input", "maxpool2d expects NxHxWxC");
    const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    require_axis(h % 2 == 0, "height", "extent " + std::to_string(h) + " not divisible by 2");
    require_axis(w % 2 == 0, "width", "extent " + std::to_string(w) + " not divisible by 2");

    PoolResult<T> out{Tensor<T>({n, h / 2, w / 2, c}), {}, x.shape()};
    out.argmax.resize(out.y.size());
    simd::maxpool2x2(x.data(), n, h, w, c, out.y.data(), out.argmax.data());
    check_finite(out.y, "maxpool2d");
    return out;
}

template <class T>
Tensor<T> maxpool2d_backward(const PoolResult<T>& fwd, const Tensor<T>& dy) {
    require_axis(dy.shape() == fwd.y.shape(), "grad", "maxpool2d_backward got dy " +
                                                          shape_str(dy.shape()));
    const std::size_t n = dy.extent(0), oh = dy.extent(1), ow = dy.extent(2), c = dy.extent(3);
    const std::size_t w = fwd.in_shape[2];
    Tensor<T> dx(fwd.in_shape);
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t q = 0; q < ow; ++q) {
                const std::size_t o = ((img * oh + r) * ow + q) * c;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::int32_t pos = fwd.argmax[o + ch];
                    const std::size_t ih = 2 * r + static_cast<std::size_t>(pos >> 1);
                    const std::size_t iw = 2 * q + static_cast<std::size_t>(pos & 1);
                    dx[((img * 2 * oh + ih) * w + iw) * c + ch] += dy[o + ch];
                }
            }
    return dx;
}

// squeeze step: per-channel spatial mean
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require_axis(x.rank() == 4, "input", "global_avg_pool expects NxHxWxC");
    const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
    Tensor<T> y({n, c});
    const T inv = T(1) / static_cast<T>(h * w);
    for (std::size_t img = 0; img < n; ++img) {
        const T* base = x.data() + img * h * w * c;
        T* yr = y.data() + img * c;
        for (std::size_t p = 0; p < h * w; ++p) simd::axpy(inv, base + p * c, yr, c);
    }
    check_finite(y, "global_avg_pool");
    return y;
}

template <class T>
Tensor<T> global_avg_pool_backward(const Shape& in_shape, const Tensor<T>& dy) {
    const std::size_t n = in_shape[0], h = in_shape[1], w = in_shape[2], c = in_shape[3];
    require_axis(dy.shape() == Shape{n, c}, "grad", "gap backward got dy " + shape_str(dy.shape()));
    Tensor<T> dx(in_shape);
    const T inv = T(1) / static_cast<T>(h * w);
    for (std::size_t img = 0; img < n; ++img) {
        const T* dyr = dy.data() + img * c;
        T* base = dx.data() + img * h * w * c;
        for (std::size_t p = 0; p < h * w; ++p) simd::scale(inv, dyr, base + p * c, c);
    }
    return dx;
}

template <class T>
Tensor<T> dense_affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_axis(x.rank() == 2 && w.rank() == 2, "input", "dense_affine expects matrices");
    require_axis(x.extent(1) == w.extent(0), "inner",
                 "input width " + std::to_string(x.extent(1)) + " vs weight height " +
                     std::to_string(w.extent(0)));
    require_axis(b.rank() == 1 && b.extent(0) == w.extent(1), "bias",
                 "expected (" + std::to_string(w.extent(1)) + "), got " + shape_str(b.shape()));
    const std::size_t n = x.extent(0), din = x.extent(1), dout = w.extent(1);
    Tensor<T> y({n, dout});
    simd::gemm(n, dout, din, x.data(), din, w.data(), dout, T(0), y.data(), dout);
    detail::bias_add(y.data(), b.data(), n, dout);
    check_finite(y, "dense_affine");
    return y;
}

template <class T>
struct DenseGrads {
    Tensor<T> dx, dw, db;
};

template <class T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
    const std::size_t n = x.extent(0), din = x.extent(1), dout = w.extent(1);
    require_axis(dy.shape() == Shape{n, dout}, "grad",
                 "dense_backward got dy " + shape_str(dy.shape()));
    DenseGrads<T> g{Tensor<T>({n, din}), Tensor<T>({din, dout}), Tensor<T>({dout})};

    std::vector<T> wt(dout * din), xt(din * n);
    detail::transpose(w.data(), din, dout, wt.data());
    detail::transpose(x.data(), n, din, xt.data());
    simd::gemm(n, din, dout, dy.data(), dout, wt.data(), din, T(0), g.dx.data(), din);
    simd::gemm(din, dout, n, xt.data(), n, dy.data(), dout, T(0), g.dw.data(), dout);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < dout; ++j) g.db[j] += dy[r * dout + j];
    return g;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    simd::relu(x.data(), y.data(), x.size());
    return y;
}

// subgradient at 0 is 0
template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    require_axis(x.same_shape(dy), "grad", "relu_backward shape mismatch");
    Tensor<T> dx(x.shape());
    simd::relu_grad(x.data(), dy.data(), dx.data(), x.size());
    return dx;
}

// clamped away from {0,1} so downstream logs and the SE strict bound hold
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    const T lo = std::numeric_limits<T>::min();
    const T hi = T(1) - std::numeric_limits<T>::epsilon();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        T s;
        if (v >= T(0)) {
            const T e = std::exp(-v);
            s = T(1) / (T(1) + e);
        } else {
            const T e = std::exp(v);
            s = e / (T(1) + e);
        }
        y[i] = std::min(hi, std::max(lo, s));
    }
    check_finite(y, "sigmoid");
    return y;
}

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    require_axis(y.same_shape(dy), "grad", "sigmoid_backward shape mismatch");
    Tensor<T> dx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
    return dx;
}

// rowwise, max-subtracted for stability
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
    require_axis(logits.rank() == 2, "input", "softmax expects NxC");
    require_axis(logits.extent(1) >= 2, "classes", "softmax needs C >= 2");
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    Tensor<T> p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const T* z = logits.data() + r * c;
        T* pr = p.data() + r * c;
        T mx = z[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            pr[j] = std::exp(z[j] - mx);
            sum += pr[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < c; ++j) pr[j] *= inv;
    }
    check_finite(p, "softmax");
    return p;
}

} // namespace fourcrop::ops
