// Micro-benchmark for the dispatched kernels; not part of the test suite.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "fourcrop/simd.hpp"

using Clock = std::chrono::steady_clock;

static double bench_gemm(std::size_t m, std::size_t n, std::size_t k, int reps) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    std::vector<float> a(m * k), b(k * n), c(m * n, 0.0f);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);

    fourcrop::simd::gemm(m, n, k, a.data(), k, b.data(), n, 0.0f, c.data(), n); // warm
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
        fourcrop::simd::gemm(m, n, k, a.data(), k, b.data(), n, 0.0f, c.data(), n);
    const auto t1 = Clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    return (2.0 * m * n * k * reps) / secs / 1e9;
}

int main() {
    std::printf("backend: %s\n", fourcrop::simd::backend_name(fourcrop::simd::active_backend()));
    struct Case { std::size_t m, n, k; int reps; const char* what; };
    const Case cases[] = {
        {12544, 32, 288, 20, "conv 112x112 32->32"},
        {12544, 64, 576, 10, "conv 112x112 64->64"},
        {3136, 128, 1152, 20, "conv 56x56 128->128"},
        {576, 64, 12544, 10, "conv dW 64ch"},
        {12544, 576, 64, 10, "conv dX col"},
        {512, 512, 512, 40, "square 512"},
    };
    for (const auto& c : cases)
        std::printf("%-22s M=%5zu N=%4zu K=%5zu  %7.2f GFLOP/s\n", c.what, c.m, c.n, c.k,
                    bench_gemm(c.m, c.n, c.k, c.reps));
    return 0;
}
