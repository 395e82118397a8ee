#include "magdc/kspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "magdc/fft.hpp"

namespace magdc {

SamplingMask::SamplingMask(std::size_t height, std::size_t width, std::vector<std::size_t> lines)
    : grid_height(height), grid_width(width), retained_lines(std::move(lines)), lookup_(width, 0) {
    if (height == 0 || width == 0)
        throw std::invalid_argument("sampling mask: grid dimensions must be positive");
    std::sort(retained_lines.begin(), retained_lines.end());
    retained_lines.erase(std::unique(retained_lines.begin(), retained_lines.end()), retained_lines.end());
    if (retained_lines.empty())
        throw std::invalid_argument("sampling mask: no retained lines");
    if (retained_lines.back() >= width)
        throw std::invalid_argument("sampling mask: line " + std::to_string(retained_lines.back()) +
                                    " outside width " + std::to_string(width));
    for (std::size_t c : retained_lines)
        lookup_[c] = 1;
}

bool SamplingMask::contains(std::size_t column) const noexcept {
    return column < lookup_.size() && lookup_[column] != 0;
}

bool SamplingMask::is_center_symmetric() const noexcept {
    const std::size_t c = grid_width / 2;
    for (std::size_t j : retained_lines)
        if (!contains((2 * c + grid_width - j) % grid_width))
            return false;
    return true;
}

SamplingMask central_mask(std::size_t grid_height, std::size_t grid_width, double factor) {
    if (!(factor >= 1.0))
        throw std::invalid_argument("central_mask: factor must be >= 1");
    if (factor > static_cast<double>(grid_width))
        throw std::invalid_argument("central_mask: factor " + std::to_string(factor) + " exceeds grid width " +
                                    std::to_string(grid_width));
    const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(grid_width) / factor));
    const long center = static_cast<long>(grid_width / 2);
    const long first = std::max(0L, center - static_cast<long>(m / 2));
    const long last = std::min(static_cast<long>(grid_width), first + static_cast<long>(m));
    std::vector<std::size_t> lines;
    for (long j = first; j < last; ++j)
        lines.push_back(static_cast<std::size_t>(j));
    return SamplingMask(grid_height, grid_width, std::move(lines));
}

KSpaceGrid apply_mask(const KSpaceGrid& k, const SamplingMask& mask) {
    if (!k.same_shape(mask.grid_height, mask.grid_width))
        throw ShapeError("apply_mask: k-space is " + std::to_string(k.height()) + "x" + std::to_string(k.width()) +
                         ", mask grid is " + std::to_string(mask.grid_height) + "x" +
                         std::to_string(mask.grid_width));
    KSpaceGrid out(k.height(), k.width());
    for (std::size_t r = 0; r < k.height(); ++r)
        for (std::size_t c : mask.retained_lines)
            out(r, c) = k(r, c);
    return out;
}

RealImage degrade(const ComplexImage& x_hr, const SamplingMask& mask) {
    if (!x_hr.same_shape(mask.grid_height, mask.grid_width))
        throw ShapeError("degrade: image does not match mask grid");
    // M = I makes the transform pair an identity; skip it so the result is exact.
    if (mask.is_full())
        return magnitude(x_hr);
    return magnitude(ifft2_centered(apply_mask(fft2_centered(x_hr), mask)));
}

double percentile(std::vector<double> values, double p) {
    if (values.empty())
        throw std::invalid_argument("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

double wrap_pi(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a;
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

}  // namespace

double phase_variation_deg(const ComplexImage& x) {
    double peak = 0.0;
    for (const Complex& v : x.data())
        peak = std::max(peak, std::abs(v));
    if (peak == 0.0)
        throw std::invalid_argument("phase_variation_deg: image is identically zero");
    std::vector<double> phases;
    Complex resultant{};
    for (const Complex& v : x.data()) {
        if (std::abs(v) > 0.1 * peak) {
            const double a = std::arg(v);
            phases.push_back(a);
            resultant += std::polar(1.0, a);
        }
    }
    if (phases.empty())
        throw std::invalid_argument("phase_variation_deg: empty support");

    // Circular median: recenter on the mean direction, then on the linear median of the
    // recentered angles, so the bulk of the distribution is away from the +-180 cut.
    const double mean_dir = std::abs(resultant) > 0.0 ? std::arg(resultant) : 0.0;
    std::vector<double> centered(phases.size());
    for (std::size_t i = 0; i < phases.size(); ++i)
        centered[i] = wrap_pi(phases[i] - mean_dir);
    const double med = wrap_pi(mean_dir + median(centered));
    for (std::size_t i = 0; i < phases.size(); ++i)
        centered[i] = wrap_pi(phases[i] - med);

    const double span = percentile(centered, 97.5) - percentile(centered, 2.5);
    return span * 180.0 / std::numbers::pi;
}

double magnitude_kspace_gap(const ComplexImage& x_hr, const SamplingMask& mask) {
    const KSpaceGrid truth = apply_mask(fft2_centered(x_hr), mask);
    const KSpaceGrid approx = apply_mask(fft2_centered(to_complex(degrade(x_hr, mask))), mask);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        num += std::norm(approx[i] - truth[i]);
        den += std::norm(truth[i]);
    }
    if (den == 0.0)
        throw std::invalid_argument("magnitude_kspace_gap: masked k-space of the reference is zero");
    return std::sqrt(num / den);
}

}  // namespace magdc
