#include "magdc/dc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "magdc/fft.hpp"

namespace magdc {

double softplus(double x) {
    if (x > 0.0)
        return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (!(y > 0.0))
        throw std::invalid_argument("softplus_inverse: argument must be positive");
    // log(exp(y) - 1) = y + log(1 - exp(-y))
    return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void check_grid(const KSpaceGrid& s0, const SamplingMask& mask, std::size_t height, std::size_t width,
                const char* what) {
    if (!s0.same_shape(height, width))
        throw ShapeError(std::string(what) + ": s0 is " + std::to_string(s0.height()) + "x" +
                         std::to_string(s0.width()) + ", expected " + std::to_string(height) + "x" +
                         std::to_string(width));
    if (mask.grid_height != height || mask.grid_width != width)
        throw ShapeError(std::string(what) + ": mask grid does not match image");
}

}  // namespace

KSpaceGrid dc_kspace(const KSpaceGrid& s_cnn, const KSpaceGrid& s0, const SamplingMask& mask, double lambda) {
    check_grid(s0, mask, s_cnn.height(), s_cnn.width(), "dc_kspace");
    if (!(lambda >= 0.0))
        throw std::invalid_argument("dc_kspace: lambda must be non-negative");
    KSpaceGrid out = s_cnn;
    const double inv = 1.0 / (1.0 + lambda);
    for (std::size_t r = 0; r < out.height(); ++r)
        for (std::size_t c : mask.retained_lines)
            out(r, c) = (lambda * s_cnn(r, c) + s0(r, c)) * inv;
    return out;
}

RealImage dc_apply(const RealImage& x_cnn, const KSpaceGrid& s0, const SamplingMask& mask, const DcParams& params) {
    return magnitude(ifft2_centered(dc_kspace(fft2_centered(to_complex(x_cnn)), s0, mask, params.lambda())));
}

RealImage dc_apply_hard(const RealImage& x_cnn, const KSpaceGrid& s0, const SamplingMask& mask) {
    return magnitude(ifft2_centered(dc_kspace(fft2_centered(to_complex(x_cnn)), s0, mask, 0.0)));
}

KSpaceGrid magnitude_s0(const RealImage& x_lr, const SamplingMask& mask) {
    return apply_mask(fft2_centered(to_complex(x_lr)), mask);
}

namespace {

Var blend(Var s_cnn, Var* theta, const KSpaceGrid& s0, const SamplingMask& mask) {
    const Tensor& sv = s_cnn.value();
    if (sv.shape.size() != 3 || sv.shape[0] != 2)
        throw ShapeError("dc_blend: expected (2, H, W) k-space node, got " + sv.shape_string());
    const std::size_t height = sv.shape[1];
    const std::size_t width = sv.shape[2];
    check_grid(s0, mask, height, width, "dc_blend");
    double lambda = 0.0;
    if (theta != nullptr) {
        if (!theta->value().is_scalar())
            throw ShapeError("dc_blend: theta must be a one-element node, got " + theta->value().shape_string());
        lambda = softplus(theta->value().data[0]);
    }
    const std::size_t plane = height * width;
    Tensor out = sv;
    const double inv = 1.0 / (1.0 + lambda);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c : mask.retained_lines) {
            const std::size_t i = r * width + c;
            out.data[i] = (lambda * sv.data[i] + s0[i].real()) * inv;
            out.data[plane + i] = (lambda * sv.data[plane + i] + s0[i].imag()) * inv;
        }
    }

    std::vector<Var> parents{s_cnn};
    if (theta != nullptr)
        parents.push_back(*theta);
    const KSpaceGrid s0_copy = s0;
    const SamplingMask mask_copy = mask;
    return s_cnn.graph().make(
        std::move(out), std::move(parents),
        [s0_copy, mask_copy, lambda, height, width, plane](Graph& g, std::size_t self) {
            const auto& ps = g.parents(self);
            const Var s = ps[0];
            const Tensor& go = g.grad(self);
            const double on_omega = lambda / (1.0 + lambda);
            if (g.needs_grad(s.id())) {
                Tensor& gs = g.grad_buffer(s.id());
                for (std::size_t r = 0; r < height; ++r) {
                    for (std::size_t c = 0; c < width; ++c) {
                        const std::size_t i = r * width + c;
                        const double f = mask_copy.contains(c) ? on_omega : 1.0;
                        gs.data[i] += f * go.data[i];
                        gs.data[plane + i] += f * go.data[plane + i];
                    }
                }
            }
            if (ps.size() > 1 && g.needs_grad(ps[1].id())) {
                // d out / d lambda = (s_cnn - s0) / (1 + lambda)^2 on the retained lines.
                const Tensor& sv = g.value(s.id());
                const double theta = g.value(ps[1].id()).data[0];
                double acc = 0.0;
                for (std::size_t r = 0; r < height; ++r) {
                    for (std::size_t c : mask_copy.retained_lines) {
                        const std::size_t i = r * width + c;
                        acc += go.data[i] * (sv.data[i] - s0_copy[i].real()) +
                               go.data[plane + i] * (sv.data[plane + i] - s0_copy[i].imag());
                    }
                }
                g.grad_buffer(ps[1].id()).data[0] += acc / ((1.0 + lambda) * (1.0 + lambda)) * sigmoid(theta);
            }
        });
}

}  // namespace

Var dc_blend(Var s_cnn, Var theta, const KSpaceGrid& s0, const SamplingMask& mask) {
    return blend(s_cnn, &theta, s0, mask);
}

Var dc_blend_hard(Var s_cnn, const KSpaceGrid& s0, const SamplingMask& mask) {
    return blend(s_cnn, nullptr, s0, mask);
}

DcNodes dc_apply_node(Var x_cnn, const KSpaceGrid& s0, const SamplingMask& mask, Var theta) {
    const Var k = dc_blend(fft2c(lift_complex(x_cnn)), theta, s0, mask);
    return DcNodes{complex_abs(ifft2c(k)), k};
}

DcNodes dc_apply_hard_node(Var x_cnn, const KSpaceGrid& s0, const SamplingMask& mask) {
    const Var k = dc_blend_hard(fft2c(lift_complex(x_cnn)), s0, mask);
    return DcNodes{complex_abs(ifft2c(k)), k};
}

}  // namespace magdc
