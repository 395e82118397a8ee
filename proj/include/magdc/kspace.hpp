#pragma once

#include <cstddef>
#include <vector>

#include "magdc/image.hpp"

namespace magdc {

// Phase-encode lines (k-space columns) kept by the acquisition.
struct SamplingMask {
    std::size_t grid_height = 0;
    std::size_t grid_width = 0;
    std::vector<std::size_t> retained_lines;  // sorted, unique, each < grid_width

    SamplingMask() = default;
    SamplingMask(std::size_t height, std::size_t width, std::vector<std::size_t> lines);

    bool contains(std::size_t column) const noexcept;
    bool is_full() const noexcept { return retained_lines.size() == grid_width; }
    // True when column j retained implies column (2c - j) mod W retained, c = W/2.
    bool is_center_symmetric() const noexcept;

    friend bool operator==(const SamplingMask&, const SamplingMask&) = default;

private:
    std::vector<char> lookup_;
};

// Keeps m = round(width / factor) contiguous columns starting at width/2 - m/2.
SamplingMask central_mask(std::size_t grid_height, std::size_t grid_width, double factor);

// Zero-filled projection onto the retained lines.
KSpaceGrid apply_mask(const KSpaceGrid& k, const SamplingMask& mask);

// |F^-1 M F x|, kept on the full grid.
RealImage degrade(const ComplexImage& x_hr, const SamplingMask& mask);

// Central 95% span of the phase over pixels brighter than 10% of the maximum, in degrees.
double phase_variation_deg(const ComplexImage& x);

// Relative error, on the retained lines, between the k-space of the magnitude
// low-resolution image and the true masked k-space.
double magnitude_kspace_gap(const ComplexImage& x_hr, const SamplingMask& mask);

// Percentile with linear interpolation between order statistics (rank = p/100 * (n - 1)).
double percentile(std::vector<double> values, double p);

}  // namespace magdc
