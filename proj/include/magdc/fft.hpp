#pragma once

#include <span>

#include "magdc/image.hpp"

namespace magdc {

// In-place unnormalized 1D DFT: X[k] = sum_n x[n] exp(sign * 2 pi i k n / N), sign = -1 forward.
// Power-of-two lengths use iterative radix-2; other lengths go through Bluestein's chirp-z.
void dft_inplace(std::span<Complex> data, int sign);

// Orthonormal centered transforms: K = fftshift(DFT(ifftshift(x))) / sqrt(H*W).
KSpaceGrid fft2_centered(const ComplexImage& img);
ComplexImage ifft2_centered(const KSpaceGrid& k);

// Row-major plane variants used by the autodiff nodes (no type tagging, same convention).
void fft2_centered_inplace(std::span<Complex> data, std::size_t height, std::size_t width, int sign);

}  // namespace magdc
