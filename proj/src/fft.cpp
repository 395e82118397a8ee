#include "magdc/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

namespace magdc {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

struct Radix2Plan {
    std::vector<std::size_t> bitrev;
    std::vector<Complex> twiddle;  // exp(-2 pi i k / n), k < n/2
};

const Radix2Plan& radix2_plan(std::size_t n) {
    thread_local std::map<std::size_t, Radix2Plan> cache;
    auto it = cache.find(n);
    if (it != cache.end())
        return it->second;
    Radix2Plan plan;
    plan.bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n)
        ++bits;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b)
            if (i & (std::size_t{1} << b))
                r |= std::size_t{1} << (bits - 1 - b);
        plan.bitrev[i] = r;
    }
    plan.twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        plan.twiddle[k] = Complex(std::cos(angle), std::sin(angle));
    }
    return cache.emplace(n, std::move(plan)).first->second;
}

void radix2(std::span<Complex> a, int sign) {
    const std::size_t n = a.size();
    if (n <= 1)
        return;
    const Radix2Plan& plan = radix2_plan(n);
    for (std::size_t i = 0; i < n; ++i)
        if (i < plan.bitrev[i])
            std::swap(a[i], a[plan.bitrev[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                Complex w = plan.twiddle[k * stride];
                if (sign > 0)
                    w = std::conj(w);
                const Complex u = a[start + k];
                const Complex v = a[start + k + half] * w;
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
}

struct BluesteinPlan {
    std::size_t padded = 0;
    std::vector<Complex> chirp;         // exp(-i pi k^2 / n)
    std::vector<Complex> kernel_fft;    // DFT of conj(chirp) wrapped to padded length
};

const BluesteinPlan& bluestein_plan(std::size_t n) {
    thread_local std::map<std::size_t, BluesteinPlan> cache;
    auto it = cache.find(n);
    if (it != cache.end())
        return it->second;
    BluesteinPlan plan;
    plan.padded = 1;
    while (plan.padded < 2 * n - 1)
        plan.padded <<= 1;
    plan.chirp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small.
        const std::size_t k2 = (k * k) % (2 * n);
        const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        plan.chirp[k] = Complex(std::cos(angle), std::sin(angle));
    }
    plan.kernel_fft.assign(plan.padded, Complex{});
    plan.kernel_fft[0] = std::conj(plan.chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        plan.kernel_fft[k] = std::conj(plan.chirp[k]);
        plan.kernel_fft[plan.padded - k] = std::conj(plan.chirp[k]);
    }
    radix2(plan.kernel_fft, -1);
    return cache.emplace(n, std::move(plan)).first->second;
}

void bluestein(std::span<Complex> a, int sign) {
    const std::size_t n = a.size();
    const BluesteinPlan& plan = bluestein_plan(n);
    // The inverse transform is conj(DFT(conj(x))).
    std::vector<Complex> work(plan.padded, Complex{});
    for (std::size_t k = 0; k < n; ++k) {
        const Complex x = sign > 0 ? std::conj(a[k]) : a[k];
        work[k] = x * plan.chirp[k];
    }
    radix2(work, -1);
    for (std::size_t k = 0; k < plan.padded; ++k)
        work[k] *= plan.kernel_fft[k];
    radix2(work, +1);
    const double inv = 1.0 / static_cast<double>(plan.padded);
    for (std::size_t k = 0; k < n; ++k) {
        const Complex y = work[k] * inv * plan.chirp[k];
        a[k] = sign > 0 ? std::conj(y) : y;
    }
}

// out[i] = in[(i + shift) mod n] along one axis of a row-major plane.
void roll_rows(std::span<Complex> data, std::size_t height, std::size_t width, std::size_t shift,
               std::vector<Complex>& scratch) {
    if (shift % height == 0)
        return;
    scratch.assign(data.begin(), data.end());
    for (std::size_t r = 0; r < height; ++r) {
        const std::size_t src = (r + shift) % height;
        std::copy_n(scratch.begin() + static_cast<std::ptrdiff_t>(src * width), width,
                    data.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
}

void roll_cols(std::span<Complex> data, std::size_t height, std::size_t width, std::size_t shift,
               std::vector<Complex>& scratch) {
    if (shift % width == 0)
        return;
    scratch.resize(width);
    for (std::size_t r = 0; r < height; ++r) {
        Complex* row = data.data() + r * width;
        std::copy_n(row, width, scratch.begin());
        for (std::size_t c = 0; c < width; ++c)
            row[c] = scratch[(c + shift) % width];
    }
}

}  // namespace

void dft_inplace(std::span<Complex> data, int sign) {
    if (data.size() <= 1)
        return;
    if (is_power_of_two(data.size()))
        radix2(data, sign);
    else
        bluestein(data, sign);
}

void fft2_centered_inplace(std::span<Complex> data, std::size_t height, std::size_t width, int sign) {
    std::vector<Complex> scratch;
    // ifftshift moves index floor(n/2) to 0.
    roll_rows(data, height, width, height / 2, scratch);
    roll_cols(data, height, width, width / 2, scratch);

    for (std::size_t r = 0; r < height; ++r)
        dft_inplace(data.subspan(r * width, width), sign);
    std::vector<Complex> column(height);
    for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t r = 0; r < height; ++r)
            column[r] = data[r * width + c];
        dft_inplace(column, sign);
        for (std::size_t r = 0; r < height; ++r)
            data[r * width + c] = column[r];
    }

    // fftshift moves index 0 to floor(n/2), i.e. out[i] = in[(i + n - floor(n/2)) mod n].
    roll_rows(data, height, width, height - height / 2, scratch);
    roll_cols(data, height, width, width - width / 2, scratch);

    const double scale = 1.0 / std::sqrt(static_cast<double>(height * width));
    for (Complex& v : data)
        v *= scale;
}

KSpaceGrid fft2_centered(const ComplexImage& img) {
    std::vector<Complex> data(img.storage());
    fft2_centered_inplace(data, img.height(), img.width(), -1);
    return KSpaceGrid(img.height(), img.width(), std::move(data));
}

ComplexImage ifft2_centered(const KSpaceGrid& k) {
    std::vector<Complex> data(k.storage());
    fft2_centered_inplace(data, k.height(), k.width(), +1);
    return ComplexImage(k.height(), k.width(), std::move(data));
}

}  // namespace magdc
