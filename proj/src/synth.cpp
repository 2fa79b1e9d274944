#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "fourcrop/dataset.hpp"
#include "fourcrop/errors.hpp"
#include "fourcrop/rng.hpp"

namespace fourcrop::data {

namespace {

// h in [0,1); standard sextant conversion
void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    const double x = h * 6.0;
    const int sextant = static_cast<int>(x) % 6;
    const double f = x - std::floor(x);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sextant) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

} // namespace

void generate_synthetic_dataset(std::size_t num_classes, std::size_t per_class,
                                std::uint64_t seed, const std::string& out_dir,
                                std::size_t image_size) {
    if (num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (per_class == 0) throw ConfigError("synthetic dataset needs at least 1 image per class");
    if (image_size < 8) throw ConfigError("synthetic image size must be at least 8");

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const double two_pi = 2.0 * std::acos(-1.0);
    for (std::size_t k = 0; k < num_classes; ++k) {
        char dir_name[32];
        std::snprintf(dir_name, sizeof dir_name, "class_%02zu", k);
        const fs::path class_dir = fs::path(out_dir) / dir_name;
        fs::create_directories(class_dir);

        // class identity: a hue plus a stripe orientation and frequency
        double base[3];
        hsv_to_rgb(static_cast<double>(k) / static_cast<double>(num_classes), 0.85, 0.9, base);
        const double alpha = std::acos(-1.0) * static_cast<double>(k) / static_cast<double>(num_classes);
        const double freq = 4.0 + 2.0 * static_cast<double>(k % 5);
        const double ca = std::cos(alpha), sa = std::sin(alpha);

        for (std::size_t i = 0; i < per_class; ++i) {
            std::mt19937_64 eng(derive_seed(seed, k, i));
            std::uniform_real_distribution<double> phase_dist(0.0, two_pi);
            std::uniform_real_distribution<double> noise_dist(-0.05, 0.05);
            const double phase = phase_dist(eng);

            img::RawImage raw;
            raw.h = image_size;
            raw.w = image_size;
            raw.rgb.resize(image_size * image_size * 3);
            for (std::size_t y = 0; y < image_size; ++y) {
                for (std::size_t x = 0; x < image_size; ++x) {
                    const double t = (static_cast<double>(x) * ca + static_cast<double>(y) * sa) /
                                     static_cast<double>(image_size);
                    const double m = 0.55 + 0.3 * std::sin(two_pi * freq * t + phase);
                    const double noise = noise_dist(eng);
                    unsigned char* px = &raw.rgb[(y * image_size + x) * 3];
                    for (int c = 0; c < 3; ++c) {
                        const double v = std::clamp(base[c] * m + noise, 0.0, 1.0);
                        px[c] = static_cast<unsigned char>(std::lround(v * 255.0));
                    }
                }
            }

            char file_name[32];
            std::snprintf(file_name, sizeof file_name, "img_%04zu.png", i);
            img::write_png((class_dir / file_name).string(), raw);
        }
    }
}

} // namespace fourcrop::data
