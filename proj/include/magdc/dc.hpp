#pragma once

#include "magdc/autodiff.hpp"
#include "magdc/image.hpp"
#include "magdc/kspace.hpp"

namespace magdc {

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

// Trainable fidelity weight. lambda = softplus(theta) is always derived, never stored.
struct DcParams {
    double theta = 0.0;

    double lambda() const { return softplus(theta); }
    static DcParams from_lambda(double lambda) { return DcParams{softplus_inverse(lambda)}; }
    // lambda = 1.
    static DcParams initial() { return from_lambda(1.0); }
};

// Per-frequency blend: off the retained lines s_cnn is kept, on them
// (lambda * s_cnn + s0) / (1 + lambda). lambda = 0 gives hard consistency.
KSpaceGrid dc_kspace(const KSpaceGrid& s_cnn, const KSpaceGrid& s0, const SamplingMask& mask, double lambda);

// |F^-1 dc_kspace(F x_cnn, s0)|, the minimizer of ||MFx - s0||^2 + lambda ||x - x_cnn||^2 followed by magnitude.
RealImage dc_apply(const RealImage& x_cnn, const KSpaceGrid& s0, const SamplingMask& mask, const DcParams& params);
RealImage dc_apply_hard(const RealImage& x_cnn, const KSpaceGrid& s0, const SamplingMask& mask);

// s0 for the magnitude-image layer: the masked k-space of the low-resolution magnitude image.
KSpaceGrid magnitude_s0(const RealImage& x_lr, const SamplingMask& mask);

struct DcNodes {
    Var output;   // (1, H, W) magnitude image
    Var kspace;   // (2, H, W) blended k-space before the inverse transform
};

// Differentiable blend on a (2, H, W) k-space node. theta is a one-element node.
Var dc_blend(Var s_cnn, Var theta, const KSpaceGrid& s0, const SamplingMask& mask);
Var dc_blend_hard(Var s_cnn, const KSpaceGrid& s0, const SamplingMask& mask);

// Full layer on a (1, H, W) image node.
DcNodes dc_apply_node(Var x_cnn, const KSpaceGrid& s0, const SamplingMask& mask, Var theta);
DcNodes dc_apply_hard_node(Var x_cnn, const KSpaceGrid& s0, const SamplingMask& mask);

}  // namespace magdc
