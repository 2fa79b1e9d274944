#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fourcrop/errors.hpp"
#include "fourcrop/image.hpp"
#include "testutil.hpp"

using namespace fourcrop;

namespace {

// 8x8 solid (200,30,60) JPEG, frozen so the decoder path is exercised
// without an encoder in the library
const unsigned char kTinyJpeg[] = {
    0xff, 0xd8, 0xff, 0xe0, 0x00, 0x10, 0x4a, 0x46, 0x49, 0x46, 0x00, 0x01, 0x01, 0x00, 0x00, 0x01,
    0x00, 0x01, 0x00, 0x00, 0xff, 0xdb, 0x00, 0x43, 0x00, 0x03, 0x02, 0x02, 0x03, 0x02, 0x02, 0x03,
    0x03, 0x03, 0x03, 0x04, 0x03, 0x03, 0x04, 0x05, 0x08, 0x05, 0x05, 0x04, 0x04, 0x05, 0x0a, 0x07,
    0x07, 0x06, 0x08, 0x0c, 0x0a, 0x0c, 0x0c, 0x0b, 0x0a, 0x0b, 0x0b, 0x0d, 0x0e, 0x12, 0x10, 0x0d,
    0x0e, 0x11, 0x0e, 0x0b, 0x0b, 0x10, 0x16, 0x10, 0x11, 0x13, 0x14, 0x15, 0x15, 0x15, 0x0c, 0x0f,
    0x17, 0x18, 0x16, 0x14, 0x18, 0x12, 0x14, 0x15, 0x14, 0xff, 0xdb, 0x00, 0x43, 0x01, 0x03, 0x04,
    0x04, 0x05, 0x04, 0x05, 0x09, 0x05, 0x05, 0x09, 0x14, 0x0d, 0x0b, 0x0d, 0x14, 0x14, 0x14, 0x14,
    0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14,
    0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14,
    0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0x14, 0xff, 0xc0,
    0x00, 0x11, 0x08, 0x00, 0x08, 0x00, 0x08, 0x03, 0x01, 0x22, 0x00, 0x02, 0x11, 0x01, 0x03, 0x11,
    0x01, 0xff, 0xc4, 0x00, 0x1f, 0x00, 0x00, 0x01, 0x05, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x00,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09,
    0x0a, 0x0b, 0xff, 0xc4, 0x00, 0xb5, 0x10, 0x00, 0x02, 0x01, 0x03, 0x03, 0x02, 0x04, 0x03, 0x05,
    0x05, 0x04, 0x04, 0x00, 0x00, 0x01, 0x7d, 0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21,
    0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23,
    0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17,
    0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a,
    0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a,
    0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a,
    0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99,
    0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7,
    0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5,
    0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1,
    0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa, 0xff, 0xc4, 0x00, 0x1f, 0x01, 0x00, 0x03,
    0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x01,
    0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0xff, 0xc4, 0x00, 0xb5, 0x11, 0x00,
    0x02, 0x01, 0x02, 0x04, 0x04, 0x03, 0x04, 0x07, 0x05, 0x04, 0x04, 0x00, 0x01, 0x02, 0x77, 0x00,
    0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71, 0x13,
    0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15,
    0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26, 0x27,
    0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88,
    0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6,
    0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4,
    0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9,
    0xfa, 0xff, 0xda, 0x00, 0x0c, 0x03, 0x01, 0x00, 0x02, 0x11, 0x03, 0x11, 0x00, 0x3f, 0x00, 0xf0,
    0xaa, 0x28, 0xa2, 0xbe, 0x68, 0xfe, 0xdd, 0x3f, 0xff, 0xd9};

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    REQUIRE(bool(out));
}

} // namespace

TEST_CASE("to_float divides bytes by 255") {
    img::RawImage raw;
    raw.h = 1;
    raw.w = 2;
    raw.rgb = {0, 51, 102, 153, 204, 255};
    Tensor<float> t = img::to_float(raw);
    CHECK(t.shape() == Shape{1, 2, 3});
    CHECK(t[0] == 0.0f);
    CHECK(t[1] == doctest::Approx(51.0 / 255.0).epsilon(1e-7));
    CHECK(t[5] == 1.0f);
}

TEST_CASE("resize to the same size is an exact copy") {
    Tensor<float> src = testutil::random_tensor<float>({7, 5, 3}, 11, 0.0, 1.0);
    Tensor<float> dst = img::resize_bilinear(src, 7, 5);
    REQUIRE(dst.shape() == src.shape());
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(dst[i] == src[i]);
}

TEST_CASE("resize preserves a constant image exactly") {
    Tensor<float> src({448, 448, 3}, 0.4f);
    Tensor<float> dst = img::resize_bilinear(src, 224, 224);
    REQUIRE(dst.shape() == Shape{224, 224, 3});
    for (std::size_t i = 0; i < dst.size(); ++i) REQUIRE(dst[i] == 0.4f);
}

TEST_CASE("2x2 checkerboard upsamples to the analytic bilinear surface") {
    // corners 0,1 / 1,0: the unique bilinear interpolant is f(u,v) = u+v-2uv
    Tensor<float> src({2, 2, 3});
    auto px = [&](std::size_t y, std::size_t x) { return (y * 2 + x) * 3; };
    for (std::size_t c = 0; c < 3; ++c) {
        src[px(0, 1) + c] = 1.0f;
        src[px(1, 0) + c] = 1.0f;
    }

    Tensor<float> dst = img::resize_bilinear(src, 4, 4);
    const double grid[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            const double u = grid[x], v = grid[y];
            const double want = u + v - 2.0 * u * v;
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(dst[(y * 4 + x) * 3 + c] == doctest::Approx(want).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("corner pixels survive resize exactly") {
    Tensor<float> src = testutil::random_tensor<float>({6, 9, 3}, 7, 0.0, 1.0);
    Tensor<float> dst = img::resize_bilinear(src, 13, 4);
    auto at = [](const Tensor<float>& t, std::size_t y, std::size_t x, std::size_t c) {
        return t[(y * t.extent(1) + x) * 3 + c];
    };
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(at(dst, 0, 0, c) == at(src, 0, 0, c));
        CHECK(at(dst, 0, 3, c) == at(src, 0, 8, c));
        CHECK(at(dst, 12, 0, c) == at(src, 5, 0, c));
        CHECK(at(dst, 12, 3, c) == at(src, 5, 8, c));
    }
}

TEST_CASE("rotation by 0 degrees is the identity") {
    Tensor<float> src = testutil::random_tensor<float>({5, 5, 3}, 3, 0.0, 1.0);
    Tensor<float> dst = img::rotate_bilinear(src, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(dst[i] == src[i]);
}

TEST_CASE("rotation by 90 degrees permutes pixels") {
    Tensor<float> src = testutil::random_tensor<float>({4, 4, 3}, 5, 0.0, 1.0);
    Tensor<float> dst = img::rotate_bilinear(src, 90.0);
    auto at = [](const Tensor<float>& t, std::size_t y, std::size_t x, std::size_t c) {
        return t[(y * 4 + x) * 3 + c];
    };
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t col = 0; col < 4; ++col) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(at(dst, r, col, c) ==
                      doctest::Approx(at(src, 3 - col, r, c)).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("rotation fills uncovered corners with zero") {
    Tensor<float> src({9, 9, 3}, 1.0f);
    Tensor<float> dst = img::rotate_bilinear(src, 45.0);
    // the source corner pixels map outside the rotated frame
    CHECK(dst[0] == 0.0f);
    CHECK(dst[(0 * 9 + 8) * 3] == 0.0f);
    CHECK(dst[(8 * 9 + 0) * 3] == 0.0f);
    CHECK(dst[(8 * 9 + 8) * 3] == 0.0f);
    // the center is untouched
    CHECK(dst[(4 * 9 + 4) * 3] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("flips are involutions and move the right pixels") {
    Tensor<float> src = testutil::random_tensor<float>({3, 4, 3}, 9, 0.0, 1.0);
    Tensor<float> h = img::flip_horizontal(src);
    Tensor<float> v = img::flip_vertical(src);
    auto at = [](const Tensor<float>& t, std::size_t y, std::size_t x, std::size_t c) {
        return t[(y * 4 + x) * 3 + c];
    };
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(at(h, y, x, c) == at(src, y, 3 - x, c));
                CHECK(at(v, y, x, c) == at(src, 2 - y, x, c));
            }
        }
    }
    Tensor<float> hh = img::flip_horizontal(h);
    Tensor<float> vv = img::flip_vertical(v);
    for (std::size_t i = 0; i < src.size(); ++i) {
        CHECK(hh[i] == src[i]);
        CHECK(vv[i] == src[i]);
    }
}

TEST_CASE("brightness scaling clamps to [0,1]") {
    Tensor<float> t({1, 1, 3});
    t[0] = 0.8f;
    t[1] = 0.2f;
    t[2] = 0.5f;
    img::scale_brightness(t, 1.5f);
    CHECK(t[0] == 1.0f);
    CHECK(t[1] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(t[2] == doctest::Approx(0.75).epsilon(1e-6));
    img::scale_brightness(t, 0.0f);
    for (int i = 0; i < 3; ++i) CHECK(t[i] == 0.0f);
}

TEST_CASE("augment with an all-zero config is the exact identity") {
    Tensor<float> src = testutil::random_tensor<float>({16, 16, 3}, 21, 0.0, 1.0);
    img::AugmentConfig cfg;
    cfg.rotation_degrees = 0.0;
    cfg.horizontal_flip_prob = 0.0;
    cfg.vertical_flip_prob = 0.0;
    cfg.brightness_delta = 0.0;
    std::mt19937_64 eng(77);
    Tensor<float> out = img::augment(src, cfg, eng);
    for (std::size_t i = 0; i < src.size(); ++i) REQUIRE(out[i] == src[i]);
}

TEST_CASE("augment with certain flips equals the plain flip") {
    Tensor<float> src = testutil::random_tensor<float>({8, 8, 3}, 23, 0.0, 1.0);
    img::AugmentConfig cfg;
    cfg.rotation_degrees = 0.0;
    cfg.horizontal_flip_prob = 1.0;
    cfg.vertical_flip_prob = 0.0;
    cfg.brightness_delta = 0.0;
    std::mt19937_64 eng(31);
    Tensor<float> out = img::augment(src, cfg, eng);
    Tensor<float> want = img::flip_horizontal(src);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(out[i] == want[i]);

    cfg.horizontal_flip_prob = 0.0;
    cfg.vertical_flip_prob = 1.0;
    std::mt19937_64 eng2(31);
    out = img::augment(src, cfg, eng2);
    want = img::flip_vertical(src);
    for (std::size_t i = 0; i < src.size(); ++i) CHECK(out[i] == want[i]);
}

TEST_CASE("augment is deterministic for a fixed engine seed") {
    Tensor<float> src = testutil::random_tensor<float>({12, 12, 3}, 29, 0.0, 1.0);
    img::AugmentConfig cfg; // defaults: everything on
    std::mt19937_64 a(123), b(123), c(124);
    Tensor<float> out_a = img::augment(src, cfg, a);
    Tensor<float> out_b = img::augment(src, cfg, b);
    Tensor<float> out_c = img::augment(src, cfg, c);
    bool same_ab = true, same_ac = true;
    for (std::size_t i = 0; i < src.size(); ++i) {
        same_ab = same_ab && out_a[i] == out_b[i];
        same_ac = same_ac && out_a[i] == out_c[i];
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
}

TEST_CASE("png round-trips through write and decode") {
    img::RawImage raw;
    raw.h = 5;
    raw.w = 3;
    raw.rgb.resize(5 * 3 * 3);
    for (std::size_t i = 0; i < raw.rgb.size(); ++i)
        raw.rgb[i] = static_cast<unsigned char>((i * 37 + 11) % 256);

    const auto path = temp_file("fcn_roundtrip.png");
    img::write_png(path.string(), raw);
    img::RawImage back = img::decode_image(path.string());
    REQUIRE(back.h == raw.h);
    REQUIRE(back.w == raw.w);
    CHECK(back.rgb == raw.rgb);
    std::filesystem::remove(path);
}

TEST_CASE("jpeg decoding recovers a solid color") {
    const auto path = temp_file("fcn_tiny.jpg");
    write_bytes(path, kTinyJpeg, sizeof kTinyJpeg);
    img::RawImage raw = img::decode_image(path.string());
    REQUIRE(raw.h == 8);
    REQUIRE(raw.w == 8);
    const int want[3] = {200, 30, 60};
    for (std::size_t i = 0; i < raw.rgb.size(); ++i) {
        const int diff = std::abs(int(raw.rgb[i]) - want[i % 3]);
        REQUIRE(diff <= 4);
    }
    std::filesystem::remove(path);
}

TEST_CASE("bmp decoding handles bottom-up rows, padding and BGR order") {
    // 2x2 24-bit BMP: red green / blue white, rows padded to 8 bytes,
    // stored bottom-up in BGR
    const unsigned char bmp[] = {
        'B',  'M',  70,  0,   0,   0,   0,   0,   0,   0,   54,  0,   0,   0, // file header
        40,   0,    0,   0,   2,   0,   0,   0,   2,   0,   0,   0,   1,   0,
        24,   0,    0,   0,   0,   0,   16,  0,   0,   0,   0,   0,   0,   0,
        0,    0,    0,   0,   0,   0,   0,   0,   0,   0,   0,   0, // info header
        255,  0,    0,   255, 255, 255, 0,   0,                     // bottom row: blue, white
        0,    0,    255, 0,   255, 0,   0,   0,                     // top row: red, green
    };
    const auto path = temp_file("fcn_tiny.bmp");
    write_bytes(path, bmp, sizeof bmp);
    img::RawImage raw = img::decode_image(path.string());
    REQUIRE(raw.h == 2);
    REQUIRE(raw.w == 2);
    const unsigned char want[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    CHECK(raw.rgb == std::vector<unsigned char>(want, want + 12));
    std::filesystem::remove(path);
}

TEST_CASE("unrecognized file content is a data error naming the path") {
    const auto path = temp_file("fcn_not_an_image.png");
    const char junk[] = "this is not image data at all";
    write_bytes(path, junk, sizeof junk - 1);
    try {
        img::decode_image(path.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("fcn_not_an_image") != std::string::npos);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(img::decode_image("/nonexistent/missing.png"), DataError);
}

TEST_CASE("load_image resizes to the requested square") {
    img::RawImage raw;
    raw.h = 4;
    raw.w = 4;
    raw.rgb.resize(4 * 4 * 3);
    for (std::size_t i = 0; i < raw.rgb.size(); ++i)
        raw.rgb[i] = static_cast<unsigned char>((i * 13) % 256);
    const auto path = temp_file("fcn_load.png");
    img::write_png(path.string(), raw);

    Tensor<float> same = img::load_image(path.string(), 4);
    Tensor<float> direct = img::to_float(raw);
    REQUIRE(same.shape() == Shape{4, 4, 3});
    for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i] == direct[i]);

    Tensor<float> big = img::load_image(path.string(), 8);
    CHECK(big.shape() == Shape{8, 8, 3});
    std::filesystem::remove(path);
}
