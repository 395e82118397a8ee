#include "magdc/image.hpp"

#include <cmath>

namespace magdc {

RealImage magnitude(const ComplexImage& img) {
    RealImage out(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = std::abs(img[i]);
    return out;
}

ComplexImage to_complex(const RealImage& img) {
    ComplexImage out(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = Complex(img[i], 0.0);
    return out;
}

ComplexImage real_part_as_complex(const ComplexImage& img) {
    ComplexImage out(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = Complex(img[i].real(), 0.0);
    return out;
}

double l2_norm(std::span<const double> values) {
    double s = 0.0;
    for (double v : values)
        s += v * v;
    return std::sqrt(s);
}

double l2_norm(std::span<const Complex> values) {
    double s = 0.0;
    for (const Complex& v : values)
        s += std::norm(v);
    return std::sqrt(s);
}

bool all_finite(std::span<const double> values) {
    for (double v : values)
        if (!std::isfinite(v))
            return false;
    return true;
}

bool all_finite(std::span<const Complex> values) {
    for (const Complex& v : values)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            return false;
    return true;
}

}  // namespace magdc
