#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace magdc {

using Complex = std::complex<double>;

// Thrown when operand dimensions disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Row-major height x width grid. The tag keeps image-domain and k-space grids
// from being mixed up at compile time even though their storage is identical.
template <typename T, typename Tag>
class Grid {
public:
    using value_type = T;

    Grid() = default;

    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {
        if (height == 0 || width == 0)
            throw ShapeError("grid dimensions must be positive, got " + std::to_string(height) + "x" +
                             std::to_string(width));
    }

    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height == 0 || width == 0)
            throw ShapeError("grid dimensions must be positive");
        if (data_.size() != height * width)
            throw ShapeError("grid data length " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(height) + "x" + std::to_string(width));
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const noexcept { return data_[row * width_ + col]; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(std::size_t h, std::size_t w) const noexcept { return h == height_ && w == width_; }
    template <typename U, typename OtherTag>
    bool same_shape(const Grid<U, OtherTag>& other) const noexcept {
        return other.height() == height_ && other.width() == width_;
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

struct RealImageTag;
struct ComplexImageTag;
struct KSpaceTag;

using RealImage = Grid<double, RealImageTag>;
using ComplexImage = Grid<Complex, ComplexImageTag>;
// Centered-DFT convention: the zero frequency sits at (height/2, width/2), integer division.
using KSpaceGrid = Grid<Complex, KSpaceTag>;

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": expected " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()) + ", got " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()));
}

RealImage magnitude(const ComplexImage& img);
ComplexImage to_complex(const RealImage& img);
ComplexImage real_part_as_complex(const ComplexImage& img);

// Frobenius norms.
double l2_norm(std::span<const double> values);
double l2_norm(std::span<const Complex> values);

bool all_finite(std::span<const double> values);
bool all_finite(std::span<const Complex> values);

}  // namespace magdc
