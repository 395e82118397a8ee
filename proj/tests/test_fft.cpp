#include "doctest.h"

#include "magdc/fft.hpp"
#include "oracles.hpp"

using namespace magdc;

TEST_CASE("zero image maps to zero k-space and back") {
    const ComplexImage zero(4, 4);
    const KSpaceGrid k = fft2_centered(zero);
    for (const Complex& z : k.data())
        CHECK(z == Complex(0.0, 0.0));
    const ComplexImage back = ifft2_centered(KSpaceGrid(4, 4));
    for (const Complex& z : back.data())
        CHECK(z == Complex(0.0, 0.0));
}

TEST_CASE("constant 4x4 image concentrates at the center index") {
    const double c = 2.5;
    const ComplexImage img(4, 4, Complex(c, 0.0));
    const KSpaceGrid k = fft2_centered(img);
    const auto ref = oracle::centered_dft(oracle::as_vector(img.data()), 4, 4, -1);
    CHECK(oracle::max_abs_diff(oracle::as_vector(k.data()), ref) < 1e-13);
    CHECK(std::abs(k(2, 2) - Complex(4.0 * c, 0.0)) < 1e-13);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            if (i != 2 || j != 2)
                CHECK(std::abs(k(i, j)) < 1e-13);
}

TEST_CASE("centered delta inverts to a constant image") {
    KSpaceGrid k(4, 4);
    k(2, 2) = 1.0;
    const ComplexImage img = ifft2_centered(k);
    const auto ref = oracle::centered_dft(oracle::as_vector(k.data()), 4, 4, +1);
    CHECK(oracle::max_abs_diff(oracle::as_vector(img.data()), ref) < 1e-14);
    for (const Complex& z : img.data())
        CHECK(std::abs(z - Complex(0.25, 0.0)) < 1e-14);
}

TEST_CASE("1D transform matches direct summation for every length up to 40") {
    Rng rng(11);
    for (std::size_t n = 1; n <= 40; ++n) {
        std::vector<Complex> x(n);
        for (Complex& z : x)
            z = Complex(rng.normal(), rng.normal());
        for (int sign : {-1, +1}) {
            std::vector<Complex> y = x;
            dft_inplace(y, sign);
            const auto ref = oracle::dft_1d(x, sign);
            CAPTURE(n);
            CHECK(oracle::max_abs_diff(y, ref) <= 1e-12 * (1.0 + oracle::norm(ref)));
        }
    }
}

TEST_CASE("2D transforms match the direct centered DFT on mixed sizes") {
    Rng rng(12);
    const std::size_t sizes[][2] = {{1, 1}, {1, 5}, {3, 1}, {4, 4}, {5, 7}, {8, 6}, {6, 9}, {12, 10}, {16, 16}};
    for (const auto& s : sizes) {
        const ComplexImage x = oracle::random_complex(s[0], s[1], rng);
        const auto fwd_ref = oracle::centered_dft(oracle::as_vector(x.data()), s[0], s[1], -1);
        const auto fwd = oracle::as_vector(fft2_centered(x).data());
        CAPTURE(s[0]);
        CAPTURE(s[1]);
        CHECK(oracle::max_abs_diff(fwd, fwd_ref) <= 1e-12 * oracle::norm(fwd_ref));
        KSpaceGrid k(s[0], s[1], oracle::as_vector(x.data()));
        const auto inv_ref = oracle::centered_dft(oracle::as_vector(x.data()), s[0], s[1], +1);
        CHECK(oracle::max_abs_diff(oracle::as_vector(ifft2_centered(k).data()), inv_ref) <=
              1e-12 * oracle::norm(inv_ref));
    }
}

TEST_CASE("round trip on a random 8x6 image") {
    Rng rng(13);
    const ComplexImage x = oracle::random_complex(8, 6, rng);
    const ComplexImage y = ifft2_centered(fft2_centered(x));
    const auto xv = oracle::as_vector(x.data());
    CHECK(oracle::max_abs_diff(oracle::as_vector(y.data()), xv) / oracle::norm(xv) < 1e-12);
}

TEST_CASE("unitarity, round trip and conjugate symmetry hold on random sizes") {
    Rng rng(14);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t h = 1 + rng.below(20), w = 1 + rng.below(20);
        const ComplexImage x = oracle::random_complex(h, w, rng);
        const KSpaceGrid k = fft2_centered(x);
        CHECK(std::abs(l2_norm(k.data()) - l2_norm(x.data())) <= 1e-12 * l2_norm(x.data()));

        RealImage r(h, w);
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = rng.normal();
        const KSpaceGrid kr = fft2_centered(to_complex(r));
        const std::size_t ch = h / 2, cw = w / 2;
        double worst = 0.0;
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t mi = (2 * ch + h - i) % h, mj = (2 * cw + w - j) % w;
                worst = std::max(worst, std::abs(kr(i, j) - std::conj(kr(mi, mj))));
            }
        CHECK(worst <= 1e-10 * l2_norm(kr.data()));
    }
}

TEST_CASE("magnitude examples") {
    ComplexImage z(1, 3);
    z[0] = Complex(3.0, 4.0);
    z[1] = Complex(0.0, 0.0);
    z[2] = Complex(-2.0, 0.0);
    const RealImage m = magnitude(z);
    CHECK(m[0] == 5.0);
    CHECK(m[1] == 0.0);
    CHECK(m[2] == 2.0);

    Rng rng(15);
    const RealImage r = oracle::random_real(5, 4, rng);
    CHECK(magnitude(to_complex(r)) == r);
}

TEST_CASE("grids reject inconsistent dimensions") {
    CHECK_THROWS_AS(RealImage(0, 3), ShapeError);
    CHECK_THROWS_AS(RealImage(2, 2, std::vector<double>(3, 0.0)), ShapeError);
}
