#include "fourcrop/image.hpp"

#include <algorithm>
#include <cmath>

#include "fourcrop/errors.hpp"

namespace fourcrop::img {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_hwc(const Tensor<float>& t, const char* who) {
    require_axis(t.rank() == 3 && t.extent(2) == 3, "image",
                 std::string(who) + " expects HxWx3, got " + shape_str(t.shape()));
}

// bilinear fetch at (y,x) in pixel coordinates; zero outside the source.
// Fractions under 1e-9 are snapped so pure grid hits stay exact.
void sample_bilinear(const Tensor<float>& src, double y, double x, float* out3) {
    const std::size_t h = src.extent(0), w = src.extent(1);
    // pull near-boundary coordinates onto the edge before the range test
    if (y > -1e-9 && y < 0) y = 0;
    if (x > -1e-9 && x < 0) x = 0;
    if (y > static_cast<double>(h - 1) && y < static_cast<double>(h - 1) + 1e-9)
        y = static_cast<double>(h - 1);
    if (x > static_cast<double>(w - 1) && x < static_cast<double>(w - 1) + 1e-9)
        x = static_cast<double>(w - 1);
    if (y < 0 || x < 0 || y > static_cast<double>(h - 1) || x > static_cast<double>(w - 1)) {
        out3[0] = out3[1] = out3[2] = 0.f;
        return;
    }
    std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
    double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    if (fy < 1e-9) fy = 0;
    if (fx < 1e-9) fx = 0;
    if (fy > 1 - 1e-9) {
        ++y0;
        fy = 0;
    }
    if (fx > 1 - 1e-9) {
        ++x0;
        fx = 0;
    }
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const float* p00 = src.data() + (y0 * w + x0) * 3;
    const float* p01 = src.data() + (y0 * w + x1) * 3;
    const float* p10 = src.data() + (y1 * w + x0) * 3;
    const float* p11 = src.data() + (y1 * w + x1) * 3;
    for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + fx * (p01[c] - p00[c]);
        const double bot = p10[c] + fx * (p11[c] - p10[c]);
        out3[c] = static_cast<float>(top + fy * (bot - top));
    }
}

} // namespace

Tensor<float> to_float(const RawImage& image) {
    if (image.h == 0 || image.w == 0 || image.rgb.size() != image.h * image.w * 3)
        throw DataError("decoded image has inconsistent dimensions");
    Tensor<float> out({image.h, image.w, 3});
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(image.rgb[i]) / 255.f;
    return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& src, std::size_t out_h, std::size_t out_w) {
    check_hwc(src, "resize_bilinear");
    const std::size_t h = src.extent(0), w = src.extent(1);
    if (h == out_h && w == out_w) return src;

    auto axis_map = [](std::size_t out_n, std::size_t in_n, std::vector<std::size_t>& i0,
                       std::vector<std::size_t>& i1, std::vector<double>& frac) {
        i0.resize(out_n);
        i1.resize(out_n);
        frac.resize(out_n);
        const double scale =
            out_n > 1 ? static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1) : 0.0;
        for (std::size_t i = 0; i < out_n; ++i) {
            const double s = static_cast<double>(i) * scale;
            std::size_t lo = static_cast<std::size_t>(s);
            double f = s - static_cast<double>(lo);
            if (f < 1e-9) f = 0;
            if (f > 1 - 1e-9) {
                ++lo;
                f = 0;
            }
            i0[i] = std::min(lo, in_n - 1);
            i1[i] = std::min(lo + 1, in_n - 1);
            frac[i] = f;
        }
    };

    std::vector<std::size_t> y0, y1, x0, x1;
    std::vector<double> fy, fx;
    axis_map(out_h, h, y0, y1, fy);
    axis_map(out_w, w, x0, x1, fx);

    Tensor<float> out({out_h, out_w, 3});
    for (std::size_t r = 0; r < out_h; ++r) {
        for (std::size_t q = 0; q < out_w; ++q) {
            const float* p00 = src.data() + (y0[r] * w + x0[q]) * 3;
            const float* p01 = src.data() + (y0[r] * w + x1[q]) * 3;
            const float* p10 = src.data() + (y1[r] * w + x0[q]) * 3;
            const float* p11 = src.data() + (y1[r] * w + x1[q]) * 3;
            float* dst = out.data() + (r * out_w + q) * 3;
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + fx[q] * (p01[c] - p00[c]);
                const double bot = p10[c] + fx[q] * (p11[c] - p10[c]);
                dst[c] = static_cast<float>(top + fy[r] * (bot - top));
            }
        }
    }
    return out;
}

Tensor<float> load_image(const std::string& path, std::size_t target) {
    return resize_bilinear(to_float(decode_image(path)), target, target);
}

Tensor<float> rotate_bilinear(const Tensor<float>& src, double degrees) {
    check_hwc(src, "rotate_bilinear");
    if (degrees == 0.0) return src;
    const std::size_t h = src.extent(0), w = src.extent(1);
    const double rad = degrees * kPi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double rc = static_cast<double>(h - 1) / 2.0, cc = static_cast<double>(w - 1) / 2.0;

    Tensor<float> out(src.shape());
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t q = 0; q < w; ++q) {
            const double dr = static_cast<double>(r) - rc, dc = static_cast<double>(q) - cc;
            const double sy = rc + dr * cs - dc * sn;
            const double sx = cc + dr * sn + dc * cs;
            sample_bilinear(src, sy, sx, out.data() + (r * w + q) * 3);
        }
    }
    return out;
}

Tensor<float> flip_horizontal(const Tensor<float>& src) {
    check_hwc(src, "flip_horizontal");
    const std::size_t h = src.extent(0), w = src.extent(1);
    Tensor<float> out(src.shape());
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t q = 0; q < w; ++q)
            for (int c = 0; c < 3; ++c)
                out[(r * w + q) * 3 + c] = src[(r * w + (w - 1 - q)) * 3 + c];
    return out;
}

Tensor<float> flip_vertical(const Tensor<float>& src) {
    check_hwc(src, "flip_vertical");
    const std::size_t h = src.extent(0), w = src.extent(1);
    Tensor<float> out(src.shape());
    for (std::size_t r = 0; r < h; ++r)
        std::copy_n(src.data() + (h - 1 - r) * w * 3, w * 3, out.data() + r * w * 3);
    return out;
}

void scale_brightness(Tensor<float>& image, float factor) {
    for (std::size_t i = 0; i < image.size(); ++i)
        image[i] = std::clamp(image[i] * factor, 0.f, 1.f);
}

Tensor<float> augment(const Tensor<float>& image, const AugmentConfig& cfg, std::mt19937_64& rng) {
    check_hwc(image, "augment");
    std::uniform_real_distribution<double> angle_dist(-cfg.rotation_degrees, cfg.rotation_degrees);
    const double angle = angle_dist(rng);
    std::bernoulli_distribution hflip(cfg.horizontal_flip_prob);
    std::bernoulli_distribution vflip(cfg.vertical_flip_prob);
    const bool do_h = hflip(rng);
    const bool do_v = vflip(rng);
    std::uniform_real_distribution<double> bright(1.0 - cfg.brightness_delta,
                                                  1.0 + cfg.brightness_delta);
    const float factor = static_cast<float>(bright(rng));

    Tensor<float> out = rotate_bilinear(image, angle);
    if (do_h) out = flip_horizontal(out);
    if (do_v) out = flip_vertical(out);
    if (factor != 1.f) scale_brightness(out, factor);
    return out;
}

} // namespace fourcrop::img
