#include "magdc/model.hpp"

#include <cmath>
#include <stdexcept>

#include "magdc/rng.hpp"

namespace magdc {
namespace {

ConvParams zero_conv(std::size_t cout, std::size_t cin) {
    return ConvParams{Tensor({cout, cin, 3, 3}, 0.0), Tensor({cout}, 0.0)};
}

ConvParams kaiming_conv(std::size_t cout, std::size_t cin, Rng& rng) {
    ConvParams p = zero_conv(cout, cin);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(cin * 9));
    for (double& w : p.weight.data)
        w = std_dev * rng.normal();
    return p;
}

void check_config(const UnrolledConfig& cfg) {
    if (cfg.n_iterations < 1)
        throw std::invalid_argument("unrolled model: n_iterations must be >= 1, got " +
                                    std::to_string(cfg.n_iterations));
}

}  // namespace

ResNetParams ResNetParams::zeros(std::size_t n_filters, std::size_t n_blocks) {
    if (n_filters == 0)
        throw std::invalid_argument("resnet: n_filters must be positive");
    ResNetParams p;
    p.n_filters = n_filters;
    p.n_blocks = n_blocks;
    p.head = zero_conv(n_filters, 1);
    for (std::size_t b = 0; b < n_blocks; ++b)
        p.blocks.push_back({zero_conv(n_filters, n_filters), zero_conv(n_filters, n_filters)});
    p.tail = zero_conv(1, n_filters);
    return p;
}

ResNetParams ResNetParams::kaiming(std::size_t n_filters, std::size_t n_blocks, std::uint64_t seed) {
    if (n_filters == 0)
        throw std::invalid_argument("resnet: n_filters must be positive");
    Rng rng(seed);
    ResNetParams p;
    p.n_filters = n_filters;
    p.n_blocks = n_blocks;
    p.head = kaiming_conv(n_filters, 1, rng);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        ConvParams c1 = kaiming_conv(n_filters, n_filters, rng);
        ConvParams c2 = kaiming_conv(n_filters, n_filters, rng);
        p.blocks.push_back({std::move(c1), std::move(c2)});
    }
    // Zero tail: the global skip makes the untrained network an identity map.
    p.tail = zero_conv(1, n_filters);
    return p;
}

std::size_t ResNetParams::parameter_count() const {
    std::size_t n = head.weight.numel() + head.bias.numel() + tail.weight.numel() + tail.bias.numel();
    for (const auto& block : blocks)
        for (const ConvParams& c : block)
            n += c.weight.numel() + c.bias.numel();
    return n;
}

std::vector<ParamRef> ModelParams::parameters() {
    std::vector<ParamRef> refs;
    auto push = [&refs](std::string name, Tensor& t) { refs.push_back(ParamRef{std::move(name), t.shape, t.data}); };
    push("head.weight", resnet.head.weight);
    push("head.bias", resnet.head.bias);
    for (std::size_t b = 0; b < resnet.blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b);
        push(prefix + ".conv1.weight", resnet.blocks[b][0].weight);
        push(prefix + ".conv1.bias", resnet.blocks[b][0].bias);
        push(prefix + ".conv2.weight", resnet.blocks[b][1].weight);
        push(prefix + ".conv2.bias", resnet.blocks[b][1].bias);
    }
    push("tail.weight", resnet.tail.weight);
    push("tail.bias", resnet.tail.bias);
    refs.push_back(ParamRef{"dc.theta", {1}, std::span<double>(&dc.theta, 1)});
    return refs;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z{ResNetParams::zeros(resnet.n_filters, resnet.n_blocks), DcParams{0.0}};
    return z;
}

ModelVars bind_parameters(Graph& graph, const ModelParams& params, bool trainable) {
    auto leaf = [&graph, trainable](const Tensor& t) { return trainable ? graph.parameter(t) : graph.constant(t); };
    ModelVars v;
    const ResNetParams& r = params.resnet;
    v.resnet.head_weight = leaf(r.head.weight);
    v.resnet.head_bias = leaf(r.head.bias);
    for (const auto& block : r.blocks)
        v.resnet.blocks.push_back(
            {leaf(block[0].weight), leaf(block[0].bias), leaf(block[1].weight), leaf(block[1].bias)});
    v.resnet.tail_weight = leaf(r.tail.weight);
    v.resnet.tail_bias = leaf(r.tail.bias);
    v.theta = leaf(Tensor::scalar(params.dc.theta));
    return v;
}

void accumulate_gradients(const ModelVars& vars, ModelParams& grads, double scale) {
    auto acc = [scale](const Var& v, std::span<double> dst) {
        const Tensor& g = v.grad();
        if (g.data.empty())
            return;
        if (g.data.size() != dst.size())
            throw ShapeError("accumulate_gradients: layout mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] += scale * g.data[i];
    };
    ResNetParams& r = grads.resnet;
    if (r.blocks.size() != vars.resnet.blocks.size())
        throw ShapeError("accumulate_gradients: block count mismatch");
    acc(vars.resnet.head_weight, r.head.weight.data);
    acc(vars.resnet.head_bias, r.head.bias.data);
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
        acc(vars.resnet.blocks[b][0], r.blocks[b][0].weight.data);
        acc(vars.resnet.blocks[b][1], r.blocks[b][0].bias.data);
        acc(vars.resnet.blocks[b][2], r.blocks[b][1].weight.data);
        acc(vars.resnet.blocks[b][3], r.blocks[b][1].bias.data);
    }
    acc(vars.resnet.tail_weight, r.tail.weight.data);
    acc(vars.resnet.tail_bias, r.tail.bias.data);
    acc(vars.theta, std::span<double>(&grads.dc.theta, 1));
}

Var resnet_forward(Var x, const ResNetVars& p) {
    const Tensor& xv = x.value();
    if (xv.shape.size() != 3 || xv.shape[0] != 1)
        throw ShapeError("resnet_forward: expected single-channel (1, H, W) input, got " + xv.shape_string());
    Var h = relu(conv2d(x, p.head_weight, p.head_bias));
    for (const auto& block : p.blocks) {
        Var r = conv2d(relu(conv2d(h, block[0], block[1])), block[2], block[3]);
        h = add(h, r);
    }
    return add(x, conv2d(h, p.tail_weight, p.tail_bias));
}

Var unrolled_forward(Var x_lr, const KSpaceGrid& s0, const SamplingMask& mask, const ModelVars& vars,
                     const UnrolledConfig& cfg, std::vector<Var>* dc_kspaces) {
    check_config(cfg);
    Var x = x_lr;
    for (int it = 0; it < cfg.n_iterations; ++it) {
        const Var cnn = resnet_forward(x, vars.resnet);
        const bool hard = cfg.hard_last_dc && it + 1 == cfg.n_iterations;
        const DcNodes dc = hard ? dc_apply_hard_node(cnn, s0, mask) : dc_apply_node(cnn, s0, mask, vars.theta);
        if (dc_kspaces != nullptr)
            dc_kspaces->push_back(dc.kspace);
        x = dc.output;
    }
    return x;
}

RealImage resnet_only_forward(const RealImage& x_lr, const ResNetParams& p) {
    Graph g;
    const ModelVars vars = bind_parameters(g, ModelParams{p, DcParams{}}, false);
    return tensor_image(resnet_forward(g.constant(image_tensor(x_lr)), vars.resnet).value());
}

RealImage unrolled_forward(const RealImage& x_lr, const KSpaceGrid& s0, const SamplingMask& mask,
                           const ResNetParams& p, const DcParams& dc, const UnrolledConfig& cfg) {
    return unrolled_forward_traced(x_lr, s0, mask, p, dc, cfg).output;
}

UnrolledTrace unrolled_forward_traced(const RealImage& x_lr, const KSpaceGrid& s0, const SamplingMask& mask,
                                      const ResNetParams& p, const DcParams& dc, const UnrolledConfig& cfg) {
    Graph g;
    const ModelVars vars = bind_parameters(g, ModelParams{p, dc}, false);
    std::vector<Var> ks;
    const Var out = unrolled_forward(g.constant(image_tensor(x_lr)), s0, mask, vars, cfg, &ks);
    return UnrolledTrace{tensor_image(out.value()), tensor_kspace(ks.back().value())};
}

}  // namespace magdc
