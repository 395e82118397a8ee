#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "magdc/autodiff.hpp"
#include "magdc/dc.hpp"
#include "magdc/kspace.hpp"

namespace magdc {

struct ConvParams {
    Tensor weight;  // (Cout, Cin, 3, 3)
    Tensor bias;    // (Cout)
};

// head conv (1 -> n) + ReLU, n_blocks residual blocks (conv, ReLU, conv, identity skip),
// tail conv (n -> 1), global skip from the input.
struct ResNetParams {
    std::size_t n_filters = 64;
    std::size_t n_blocks = 5;
    ConvParams head;
    std::vector<std::array<ConvParams, 2>> blocks;
    ConvParams tail;

    static ResNetParams zeros(std::size_t n_filters, std::size_t n_blocks);
    // Kaiming fan-in normal weights (std = sqrt(2 / (Cin * 9))) for the head and block convs,
    // zero tail conv, zero biases.
    static ResNetParams kaiming(std::size_t n_filters, std::size_t n_blocks, std::uint64_t seed);

    std::size_t parameter_count() const;
};

struct UnrolledConfig {
    int n_iterations = 1;
    std::size_t n_filters = 64;
    std::size_t n_blocks = 5;
    // Use lambda = 0 in the last data-consistency step.
    bool hard_last_dc = false;
};

// Named view of one trainable array, in a fixed order shared by all ModelParams with the same layout.
struct ParamRef {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<double> values;
};

struct ModelParams {
    ResNetParams resnet;
    DcParams dc;

    std::vector<ParamRef> parameters();
    std::size_t parameter_count() const { return resnet.parameter_count() + 1; }
    // Same layout, every value zero.
    ModelParams zeros_like() const;
};

struct ResNetVars {
    Var head_weight, head_bias;
    std::vector<std::array<Var, 4>> blocks;  // conv1 w, conv1 b, conv2 w, conv2 b
    Var tail_weight, tail_bias;
};

struct ModelVars {
    ResNetVars resnet;
    Var theta;
};

// Places the parameters on the graph; trainable leaves collect gradients.
ModelVars bind_parameters(Graph& graph, const ModelParams& params, bool trainable);
// grads += scale * d(loss)/d(params) after graph.backward().
void accumulate_gradients(const ModelVars& vars, ModelParams& grads, double scale);

Var resnet_forward(Var x, const ResNetVars& p);

// x <- x_lr; repeat N times: x <- DC(ResNet(x)). Every iteration uses the same parameters.
// When dc_kspaces is given, the blended k-space node of each iteration is appended to it.
Var unrolled_forward(Var x_lr, const KSpaceGrid& s0, const SamplingMask& mask, const ModelVars& vars,
                     const UnrolledConfig& cfg, std::vector<Var>* dc_kspaces = nullptr);

RealImage resnet_only_forward(const RealImage& x_lr, const ResNetParams& p);
RealImage unrolled_forward(const RealImage& x_lr, const KSpaceGrid& s0, const SamplingMask& mask,
                           const ResNetParams& p, const DcParams& dc, const UnrolledConfig& cfg);

struct UnrolledTrace {
    RealImage output;
    KSpaceGrid last_dc_kspace;
};
UnrolledTrace unrolled_forward_traced(const RealImage& x_lr, const KSpaceGrid& s0, const SamplingMask& mask,
                                      const ResNetParams& p, const DcParams& dc, const UnrolledConfig& cfg);

}  // namespace magdc
