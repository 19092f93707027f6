// Times the OpenMP kernels against the serial reference loops on shapes taken
// from the default models and reports the largest output difference.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "lnca/kernels.hpp"
#include "lnca/rng.hpp"

using namespace lnca;

namespace {

std::vector<real> random_buffer(std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<real> v(static_cast<std::size_t>(n));
    for (real& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
    return v;
}

double seconds(const std::function<void()>& fn, int repeats) {
    fn();  // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / repeats;
}

double max_diff(const std::vector<real>& a, const std::vector<real>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

void report(const char* name, const std::string& shape, double t_kernel, double t_ref, double diff) {
    std::printf("%-22s %-26s %11.6f %11.6f %8.2fx %10.2e\n", name, shape.c_str(), t_kernel, t_ref,
                t_ref / t_kernel, diff);
}

void bench_gemm(std::int64_t m, std::int64_t n, std::int64_t k, int repeats) {
    const auto a = random_buffer(m * k, 1), b = random_buffer(k * n, 2);
    std::vector<real> c1(static_cast<std::size_t>(m * n)), c2(c1.size());
    const double tk = seconds([&] { kernels::gemm(m, n, k, a.data(), b.data(), c1.data(), false); }, repeats);
    const double tr = seconds([&] { reference::gemm(m, n, k, a.data(), b.data(), c2.data()); }, repeats);
    report("gemm", std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(k), tk, tr, max_diff(c1, c2));
}

void bench_conv(std::int64_t b, std::int64_t hw, std::int64_t cin, std::int64_t cout, std::int64_t ksize,
                std::int64_t stride, int repeats) {
    const ConvGeometry g =
        ConvGeometry::forward(Shape{b, hw, hw, cin}, Shape{ksize, ksize, cin, cout}, stride, Padding::kZero);
    const auto x = random_buffer(b * hw * hw * cin, 3), w = random_buffer(ksize * ksize * cin * cout, 4);
    const auto bias = random_buffer(cout, 5), dy = random_buffer(g.batch * g.out_h * g.out_w * cout, 6);
    const std::string shape = std::to_string(b) + "x" + std::to_string(hw) + "^2x" + std::to_string(cin) + "->" +
                              std::to_string(cout) + " k" + std::to_string(ksize) + "s" + std::to_string(stride);
    std::vector<real> y1(dy.size()), y2(dy.size());
    double tk = seconds([&] { kernels::conv2d_forward(g, x.data(), w.data(), bias.data(), y1.data()); }, repeats);
    double tr = seconds([&] { reference::conv2d_forward(g, x.data(), w.data(), bias.data(), y2.data()); }, repeats);
    report("conv2d_forward", shape, tk, tr, max_diff(y1, y2));

    std::vector<real> dx1(x.size()), dx2(x.size());
    tk = seconds([&] { kernels::conv2d_backward_input(g, dy.data(), w.data(), dx1.data()); }, repeats);
    tr = seconds([&] { reference::conv2d_backward_input(g, dy.data(), w.data(), dx2.data()); }, repeats);
    report("conv2d_backward_input", shape, tk, tr, max_diff(dx1, dx2));

    std::vector<real> dw1(w.size()), dw2(w.size());
    tk = seconds([&] {
        std::fill(dw1.begin(), dw1.end(), real(0));
        kernels::conv2d_backward_kernel(g, x.data(), dy.data(), dw1.data());
    }, repeats);
    tr = seconds([&] {
        std::fill(dw2.begin(), dw2.end(), real(0));
        reference::conv2d_backward_kernel(g, x.data(), dy.data(), dw2.data());
    }, repeats);
    report("conv2d_backward_kernel", shape, tk, tr, max_diff(dw1, dw2));
}

void bench_attention(std::int64_t b, std::int64_t hw, std::int64_t e, int heads, int repeats) {
    const Dims4 d{b, hw, hw, e};
    const std::int64_t n = d.cells() * e;
    const auto q = random_buffer(n, 7), k = random_buffer(n, 8), v = random_buffer(n, 9);
    std::vector<real> o1(static_cast<std::size_t>(n)), o2(o1.size()), wts(static_cast<std::size_t>(d.cells() * heads * 9));
    const double tk = seconds([&] { kernels::attention_forward(d, heads, q.data(), k.data(), v.data(), o1.data(), wts.data()); }, repeats);
    const double tr = seconds([&] { reference::attention_forward(d, heads, q.data(), k.data(), v.data(), o2.data()); }, repeats);
    report("attention_forward", std::to_string(b) + "x" + std::to_string(hw) + "^2x" + std::to_string(e) + " h" +
                                    std::to_string(heads), tk, tr, max_diff(o1, o2));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compare lnca::kernels with the lnca::reference loops"};
    int repeats = 5;
    app.add_option("--repeats", repeats, "timed runs per kernel after one warm-up")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-22s %-26s %11s %11s %9s %10s\n", "kernel", "shape", "kernel_s", "reference_s", "speedup", "max_diff");
    bench_gemm(256, 256, 256, repeats);
    bench_gemm(8192, 192, 64, repeats);
    bench_conv(8, 32, 3, 32, 3, 1, repeats);
    bench_conv(8, 32, 32, 64, 3, 2, repeats);
    bench_conv(8, 8, 128, 16, 3, 1, repeats);
    bench_conv(8, 32, 48, 96, 1, 1, repeats);
    bench_attention(8, 32, 64, 4, repeats);
    return 0;
}
