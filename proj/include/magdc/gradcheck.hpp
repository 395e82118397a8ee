#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "magdc/autodiff.hpp"

namespace magdc {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Builds a scalar loss from parameter leaves created for each input tensor.
using LossBuilder = std::function<Var(Graph&, const std::vector<Var>& leaves)>;

struct GradCheckOptions {
    double step = 1e-5;
    // Entries compared per input; 0 compares all of them. Sampled entries are chosen with the seed.
    std::size_t max_entries_per_input = 0;
    std::uint64_t seed = 0;
    // |a - n| / max(|a|, |n|, floor)
    double floor = 1e-6;
};

// Compares reverse-mode gradients with central finite differences.
GradCheckEntry gradient_check(std::string name, std::vector<Tensor> inputs, const LossBuilder& build,
                              const GradCheckOptions& opt = {});

// Every differentiable op plus the unrolled model (N = 2, 8x8).
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed);

}  // namespace magdc
