#include "magdc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "magdc/dc.hpp"
#include "magdc/fft.hpp"
#include "magdc/kspace.hpp"
#include "magdc/model.hpp"
#include "magdc/rng.hpp"

namespace magdc {

GradCheckEntry gradient_check(std::string name, std::vector<Tensor> inputs, const LossBuilder& build,
                              const GradCheckOptions& opt) {
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> leaves;
        for (const Tensor& t : inputs)
            leaves.push_back(g.parameter(t));
        const Var loss = build(g, leaves);
        g.backward(loss);
        for (const Var& v : leaves)
            analytic.push_back(v.grad());
    }
    auto evaluate = [&]() {
        Graph g;
        std::vector<Var> leaves;
        for (const Tensor& t : inputs)
            leaves.push_back(g.constant(t));
        return build(g, leaves).value().data[0];
    };

    Rng rng(opt.seed);
    GradCheckEntry entry{std::move(name), 0.0, 0};
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<std::size_t> idx(inputs[k].numel());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (opt.max_entries_per_input != 0 && idx.size() > opt.max_entries_per_input) {
            rng.shuffle(std::span<std::size_t>(idx));
            idx.resize(opt.max_entries_per_input);
        }
        for (std::size_t i : idx) {
            const double saved = inputs[k].data[i];
            inputs[k].data[i] = saved + opt.step;
            const double up = evaluate();
            inputs[k].data[i] = saved - opt.step;
            const double down = evaluate();
            inputs[k].data[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double a = analytic[k].data.empty() ? 0.0 : analytic[k].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
            entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
            ++entry.checked;
        }
    }
    return entry;
}

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data)
        v = scale * rng.normal();
    return t;
}

KSpaceGrid random_masked_kspace(std::size_t h, std::size_t w, const SamplingMask& mask, Rng& rng) {
    KSpaceGrid k(h, w);
    for (std::size_t i = 0; i < k.size(); ++i)
        k[i] = Complex(rng.normal(), rng.normal());
    return apply_mask(k, mask);
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6772));
    std::vector<GradCheckEntry> out;
    GradCheckOptions opt;
    opt.seed = seed;

    {
        const Tensor target = random_tensor({3, 8, 8}, rng);
        out.push_back(gradient_check(
            "conv2d", {random_tensor({2, 8, 8}, rng), random_tensor({3, 2, 3, 3}, rng, 0.5), random_tensor({3}, rng)},
            [&](Graph& g, const std::vector<Var>& p) {
                return mae(conv2d(p[0], p[1], p[2]), g.constant(target));
            },
            opt));
    }
    {
        const Tensor probe = random_tensor({1, 6, 5}, rng);
        out.push_back(gradient_check(
            "relu", {random_tensor({1, 6, 5}, rng)},
            [&](Graph&, const std::vector<Var>& p) { return weighted_sum(relu(p[0]), probe); }, opt));
    }
    {
        const Tensor probe = random_tensor({2, 4, 4}, rng);
        out.push_back(gradient_check(
            "add", {random_tensor({2, 4, 4}, rng), random_tensor({2, 4, 4}, rng)},
            [&](Graph&, const std::vector<Var>& p) { return weighted_sum(add(p[0], p[1]), probe); }, opt));
    }
    out.push_back(gradient_check(
        "mae", {random_tensor({1, 5, 7}, rng), random_tensor({1, 5, 7}, rng)},
        [&](Graph&, const std::vector<Var>& p) { return mae(p[0], p[1]); }, opt));
    {
        const Tensor probe = random_tensor({1, 8, 6}, rng);
        out.push_back(gradient_check(
            "fft2c+complex_abs", {random_tensor({2, 8, 6}, rng)},
            [&](Graph&, const std::vector<Var>& p) { return weighted_sum(complex_abs(fft2c(p[0])), probe); }, opt));
    }
    {
        const Tensor probe = random_tensor({1, 7, 5}, rng);
        out.push_back(gradient_check(
            "lift+ifft2c+complex_abs", {random_tensor({1, 7, 5}, rng)},
            [&](Graph&, const std::vector<Var>& p) {
                return weighted_sum(complex_abs(ifft2c(lift_complex(p[0]))), probe);
            },
            opt));
    }
    {
        const SamplingMask mask = central_mask(8, 8, 4);
        const KSpaceGrid s0 = random_masked_kspace(8, 8, mask, rng);
        const Tensor probe = random_tensor({1, 8, 8}, rng);
        out.push_back(gradient_check(
            "dc_apply_node", {random_tensor({1, 8, 8}, rng), Tensor::scalar(0.3)},
            [&](Graph&, const std::vector<Var>& p) {
                return weighted_sum(dc_apply_node(p[0], s0, mask, p[1]).output, probe);
            },
            opt));
    }
    {
        // Small ResNet: every parameter tensor is an input.
        const std::size_t nf = 4, nb = 2;
        ResNetParams rp = ResNetParams::kaiming(nf, nb, derive_seed(seed, 11));
        for (auto& block : rp.blocks)
            for (auto& c : block)
                for (double& b : c.bias.data)
                    b = 0.1 * rng.normal();
        std::vector<Tensor> inputs{random_tensor({1, 8, 8}, rng), rp.head.weight, rp.head.bias};
        for (const auto& block : rp.blocks)
            for (const auto& c : block) {
                inputs.push_back(c.weight);
                inputs.push_back(c.bias);
            }
        inputs.push_back(rp.tail.weight);
        inputs.push_back(rp.tail.bias);
        const Tensor target = random_tensor({1, 8, 8}, rng);
        auto build = [&, nb](Graph& g, const std::vector<Var>& p) {
            ResNetVars v;
            v.head_weight = p[1];
            v.head_bias = p[2];
            for (std::size_t b = 0; b < nb; ++b)
                v.blocks.push_back({p[3 + 4 * b], p[4 + 4 * b], p[5 + 4 * b], p[6 + 4 * b]});
            v.tail_weight = p[3 + 4 * nb];
            v.tail_bias = p[4 + 4 * nb];
            return mae(resnet_forward(p[0], v), g.constant(target));
        };
        out.push_back(gradient_check("resnet_forward", inputs, build, opt));

        // Unrolled N = 2 on top of the same network, theta appended.
        const SamplingMask mask = central_mask(8, 8, 4);
        Tensor x_lr = random_tensor({1, 8, 8}, rng);
        for (double& v : x_lr.data)
            v = std::abs(v);
        const KSpaceGrid s0 = magnitude_s0(tensor_image(x_lr), mask);
        inputs[0] = x_lr;
        inputs.push_back(Tensor::scalar(softplus_inverse(0.8)));
        const std::size_t theta_index = inputs.size() - 1;
        auto build_unrolled = [&, nb, theta_index](Graph& g, const std::vector<Var>& p) {
            ModelVars v;
            v.resnet.head_weight = p[1];
            v.resnet.head_bias = p[2];
            for (std::size_t b = 0; b < nb; ++b)
                v.resnet.blocks.push_back({p[3 + 4 * b], p[4 + 4 * b], p[5 + 4 * b], p[6 + 4 * b]});
            v.resnet.tail_weight = p[3 + 4 * nb];
            v.resnet.tail_bias = p[4 + 4 * nb];
            v.theta = p[theta_index];
            UnrolledConfig cfg;
            cfg.n_iterations = 2;
            cfg.n_filters = nf;
            cfg.n_blocks = nb;
            return mae(unrolled_forward(p[0], s0, mask, v, cfg), g.constant(target));
        };
        out.push_back(gradient_check("unrolled_forward(N=2)", inputs, build_unrolled, opt));
    }
    return out;
}

}  // namespace magdc
