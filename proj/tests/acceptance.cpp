// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 iff all pass.
// Usage: magdc_acceptance [--work DIR] [criterion ...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "magdc/data.hpp"
#include "magdc/dc.hpp"
#include "magdc/fft.hpp"
#include "magdc/io.hpp"
#include "magdc/kspace.hpp"
#include "magdc/metrics.hpp"
#include "magdc/model.hpp"
#include "magdc/train.hpp"
#include "oracles.hpp"

using namespace magdc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

fs::path g_work;

int cli(const std::string& args, const std::string& log) {
    const std::string cmd = "cd '" + g_work.string() + "' && '" + MAGDC_CLI_PATH + "' " + args + " >> '" + log +
                            "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t env_size(const char* name, std::size_t fallback) {
    const char* v = std::getenv(name);
    return v && *v ? static_cast<std::size_t>(std::stoul(v)) : fallback;
}

// ---- 1 -----------------------------------------------------------------------------

Outcome dc_optimality() {
    Rng rng(1001);
    double worst = 0.0;
    const oracle::DftMatrix f(8, 8);
    for (int trial = 0; trial < 50; ++trial) {
        const double factor = trial % 2 ? 4.0 : 2.0;
        const SamplingMask mask = central_mask(8, 8, factor);
        std::vector<bool> retained(8);
        for (std::size_t j = 0; j < 8; ++j)
            retained[j] = mask.contains(j);
        const RealImage x_cnn = oracle::random_real(8, 8, rng);
        KSpaceGrid s0(8, 8);
        for (std::size_t i = 0; i < s0.size(); ++i)
            s0[i] = Complex(rng.normal(), rng.normal());
        s0 = apply_mask(s0, mask);
        const double lambda = rng.uniform(0.05, 5.0);

        const auto ref = oracle::dc_gradient_descent(f, oracle::as_complex_vector(x_cnn), oracle::as_vector(s0.data()),
                                                     retained, 8, lambda, 10000);
        const KSpaceGrid got = dc_kspace(fft2_centered(to_complex(x_cnn)), s0, mask, lambda);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j : mask.retained_lines) {
                const Complex r = ref[i * 8 + j];
                worst = std::max(worst, std::abs(got(i, j) - r) / std::abs(r));
            }
    }
    return {worst < 1e-5, "50 instances, max relative error " + sci(worst) + " (< 1e-5)"};
}

// ---- 2 -----------------------------------------------------------------------------

Outcome gradient_suite() {
    const std::string log = (g_work / "gradcheck.log").string();
    const int code = cli("gradcheck --seed 0", log);
    const std::string text = read_text(log);
    const auto last = text.find_last_of('\n', text.size() - 2);
    return {code == 0, "cmd_gradcheck exit " + std::to_string(code) + ": " +
                           text.substr(last == std::string::npos ? 0 : last + 1, text.size() - last - 2)};
}

// ---- 3 -----------------------------------------------------------------------------

ComplexImage gaussian_bump(std::size_t h, std::size_t w, double sigma, double offset) {
    ComplexImage img(h, w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double di = static_cast<double>(i) - static_cast<double>(h / 2);
            const double dj = static_cast<double>(j) - static_cast<double>(w / 2);
            img(i, j) = offset + std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
        }
    return img;
}

ComplexImage with_column_ramp(ComplexImage img, double span_deg) {
    const double span = span_deg * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < img.height(); ++i)
        for (std::size_t j = 0; j < img.width(); ++j)
            img(i, j) *= std::polar(1.0, span * (static_cast<double>(j) / static_cast<double>(img.width() - 1) - 0.5));
    return img;
}

Outcome magnitude_substitution() {
    const ComplexImage bump = gaussian_bump(64, 60, 8.0, 0.1);
    const SamplingMask mask = central_mask(64, 60, 4);
    bool nonneg = mask.is_center_symmetric();
    const ComplexImage low = ifft2_centered(apply_mask(fft2_centered(bump), mask));
    for (const Complex& z : low.data())
        nonneg = nonneg && z.real() >= 0.0;
    const double exact = magnitude_kspace_gap(bump, mask);

    ComplexImage step = bump;
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 30; j < 60; ++j)
            step(i, j) = -step(i, j);
    const double broken = magnitude_kspace_gap(step, mask);

    bool monotone = true;
    double previous = -1.0;
    std::string spans;
    for (double span : {0.0, 40.0, 90.0, 180.0}) {
        const double gap = magnitude_kspace_gap(with_column_ramp(bump, span), mask);
        monotone = monotone && gap >= previous;
        previous = gap;
        spans += (spans.empty() ? "" : ", ") + sci(gap);
    }
    return {nonneg && exact < 1e-10 && broken > 0.05 && monotone,
            "bump gap " + sci(exact) + " (< 1e-10), 180 deg step " + sci(broken) + " (> 0.05), spans 0/40/90/180 -> " +
                spans};
}

// ---- 4 -----------------------------------------------------------------------------

Outcome hard_dc() {
    const SamplingMask mask = central_mask(32, 32, 4);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(4004, seed));
        ResNetParams p = ResNetParams::kaiming(6, 2, seed);
        for (double& w : p.tail.weight.data)
            w = 0.3 * rng.normal();
        for (double& b : p.tail.bias.data)
            b = rng.normal();
        const RealImage x = degrade(phantom_generate(seed, 32, 32, 40.0), mask);
        const KSpaceGrid s0 = magnitude_s0(x, mask);
        const DcParams dc = DcParams::from_lambda(rng.uniform(0.1, 3.0));
        const UnrolledTrace t = unrolled_forward_traced(x, s0, mask, p, dc, UnrolledConfig{2, 6, 2, true});
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j : mask.retained_lines)
                worst = std::max(worst, std::abs(t.last_dc_kspace(i, j) - s0(i, j)));
    }
    return {worst < 1e-8, "20 seeds, max |k - s0| on the retained lines " + sci(worst) + " (< 1e-8)"};
}

// ---- 5 -----------------------------------------------------------------------------

Outcome fft_invariants() {
    Rng rng(5005);
    double unitary = 0.0, roundtrip = 0.0, symmetry = 0.0;
    std::size_t non_pow2 = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 1 + rng.below(72), w = 1 + rng.below(72);
        if ((h & (h - 1)) || (w & (w - 1)))
            ++non_pow2;
        const ComplexImage x = oracle::random_complex(h, w, rng);
        const double nx = l2_norm(x.data());
        const KSpaceGrid k = fft2_centered(x);
        unitary = std::max(unitary, std::abs(l2_norm(k.data()) - nx) / nx);
        const ComplexImage back = ifft2_centered(k);
        double diff = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            diff += std::norm(back[i] - x[i]);
        roundtrip = std::max(roundtrip, std::sqrt(diff) / nx);

        const RealImage r = oracle::random_real(h, w, rng);
        const KSpaceGrid kr = fft2_centered(to_complex(r));
        const std::size_t ch = h / 2, cw = w / 2;
        double asym = 0.0;
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                asym += std::norm(kr(i, j) - std::conj(kr((2 * ch + h - i) % h, (2 * cw + w - j) % w)));
        symmetry = std::max(symmetry, std::sqrt(asym) / l2_norm(kr.data()));
    }
    const bool pass = unitary <= 1e-12 && roundtrip <= 1e-12 && symmetry <= 1e-12 && non_pow2 > 0;
    return {pass, "100 images (" + std::to_string(non_pow2) + " non-power-of-two): unitarity " + sci(unitary) +
                      ", round trip " + sci(roundtrip) + ", conjugate symmetry " + sci(symmetry) + " (<= 1e-12)"};
}

// ---- 6 and 7 -------------------------------------------------------------------------

struct Experiment {
    bool ran = false;
    std::string error;
    std::map<std::string, std::map<std::string, ReportRow>> rows;  // method -> metric -> row
    std::string train_args;
};

Experiment g_experiment;

const char* kResnet = "ResNet w/o DC";
const char* kLr = "LR Input";
const char* kUnrolled[] = {"Unrolled model (N=1)", "Unrolled model (N=2)"};

void run_experiment() {
    Experiment& e = g_experiment;
    e.ran = true;
    const std::string log = (g_work / "experiment.log").string();
    const std::size_t filters = env_size("MAGDC_ACCEPT_FILTERS", 16);
    const std::size_t blocks = env_size("MAGDC_ACCEPT_BLOCKS", 3);
    e.train_args = "--data data --epochs 35 --lr 0.0002 --seed 1 --filters " + std::to_string(filters) +
                   " --blocks " + std::to_string(blocks);

    auto step = [&](const std::string& args) {
        if (!e.error.empty())
            return;
        if (const int code = cli(args, log); code != 0)
            e.error = "'" + args + "' exited " + std::to_string(code) + " (see " + log + ")";
    };
    step("gen-data --n 200 --size 64 --phase-span-deg 40 --factor 4 --seed 2024 --out data");
    step("train " + e.train_args + " --model resnet --out resnet");
    step("train " + e.train_args + " --model unrolled --iterations 1 --out n1");
    step("train " + e.train_args + " --model unrolled --iterations 2 --out n2");
    step("eval --data data --checkpoints resnet/final.mdck n1/final.mdck n2/final.mdck --out eval");
    if (!e.error.empty())
        return;
    for (const ReportRow& r : parse_report_csv(read_text(g_work / "eval/report.csv")))
        e.rows[r.method][r.metric] = r;
}

Outcome directional_reproduction() {
    if (!g_experiment.ran)
        run_experiment();
    const Experiment& e = g_experiment;
    if (!e.error.empty())
        return {false, e.error};
    auto m = [&](const std::string& method, const std::string& metric) { return e.rows.at(method).at(metric).mean; };

    const std::string best = m(kUnrolled[0], "nrmse") <= m(kUnrolled[1], "nrmse") ? kUnrolled[0] : kUnrolled[1];
    const double best_nrmse = std::min(m(kUnrolled[0], "nrmse"), m(kUnrolled[1], "nrmse"));
    const double best_ssim = std::max(m(kUnrolled[0], "ssim"), m(kUnrolled[1], "ssim"));
    const bool nrmse_order = best_nrmse < m(kResnet, "nrmse") && m(kResnet, "nrmse") < m(kLr, "nrmse");
    const bool ssim_order = best_ssim > m(kResnet, "ssim") && m(kResnet, "ssim") > m(kLr, "ssim");
    const double p = e.rows.at(best).at("nrmse").p_vs_baseline;

    std::ostringstream d;
    d << "NRMSE LR " << sci(m(kLr, "nrmse")) << ", ResNet " << sci(m(kResnet, "nrmse")) << ", N=1 "
      << sci(m(kUnrolled[0], "nrmse")) << ", N=2 " << sci(m(kUnrolled[1], "nrmse")) << "; SSIM LR "
      << sci(m(kLr, "ssim")) << ", ResNet " << sci(m(kResnet, "ssim")) << ", N=1 " << sci(m(kUnrolled[0], "ssim"))
      << ", N=2 " << sci(m(kUnrolled[1], "ssim")) << "; " << best << " vs ResNet p = " << sci(p);
    return {nrmse_order && ssim_order && p < 0.05, d.str()};
}

Outcome determinism() {
    if (!g_experiment.ran)
        run_experiment();
    const Experiment& e = g_experiment;
    if (!e.error.empty())
        return {false, "criterion 6 run failed: " + e.error};
    const std::string log = (g_work / "rerun.log").string();
    if (const int code = cli("train " + e.train_args + " --model unrolled --iterations 1 --out n1_rerun", log);
        code != 0)
        return {false, "rerun exited " + std::to_string(code)};
    if (const int code = cli("eval --data data --checkpoints resnet/final.mdck n1_rerun/final.mdck n2/final.mdck "
                             "--out eval_rerun",
                             log);
        code != 0)
        return {false, "rerun eval exited " + std::to_string(code)};

    std::vector<std::string> differing;
    const std::pair<const char*, const char*> pairs[] = {{"n1/final.mdck", "n1_rerun/final.mdck"},
                                                         {"n1/loss.csv", "n1_rerun/loss.csv"},
                                                         {"eval/report.csv", "eval_rerun/report.csv"},
                                                         {"eval/per_slice.csv", "eval_rerun/per_slice.csv"}};
    for (const auto& [a, b] : pairs)
        if (read_file(g_work / a) != read_file(g_work / b))
            differing.push_back(a);
    std::string detail = "final checkpoint, loss log, report.csv and per_slice.csv ";
    if (differing.empty())
        return {true, detail + "bit-identical across reruns"};
    for (const std::string& d : differing)
        detail += "; differs: " + d;
    return {false, detail};
}

// ---- 8 -----------------------------------------------------------------------------

double t_density(double x, double df) {
    const double c = std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) / std::sqrt(df * std::numbers::pi);
    return c * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0);
}

double t_two_sided_by_quadrature(double t, double df) {
    const int n = 200000;
    const double h = std::abs(t) / n;
    double s = t_density(0.0, df) + t_density(std::abs(t), df);
    for (int i = 1; i < n; ++i)
        s += (i % 2 ? 4.0 : 2.0) * t_density(i * h, df);
    return 1.0 - 2.0 * s * h / 3.0;
}

Outcome metrics_validity() {
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const char* what) {
        if (!ok)
            failed.push_back(what);
    };
    Rng rng(8008);
    const RealImage ref = oracle::random_real(24, 20, rng, 0.1, 1.0);
    expect(nrmse(ref, ref) == 0.0, "nrmse(ref, ref) = 0");
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {7, 3}, {64, 64}})
        expect(nrmse(RealImage(h, w, 2.0), RealImage(h, w, 1.0)) == 1.0, "nrmse(twos, ones) = 1");
    expect(ssim(ref, ref) == 1.0, "ssim(ref, ref) = 1");
    const RealImage phantom = magnitude(phantom_generate(8, 64, 64, 40.0));
    expect(ssim(phantom, phantom) == 1.0, "ssim(phantom, phantom) = 1");

    const std::vector<double> a{0.3, 0.1, 0.7};
    const TTestResult same = paired_t_test(a, a);
    expect(same.t == 0.0 && same.p == 1.0, "t-test a = b gives t = 0, p = 1");
    const TTestResult deg = paired_t_test(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{0, 1, 2, 3, 4});
    expect(deg.degenerate && deg.p == 0.0, "constant difference is flagged degenerate");
    const std::vector<double> ta{2.1, 1.9, 2.2, 2.0, 1.8}, tb{1.0, 1.1, 0.9, 1.2, 1.0};
    const TTestResult q = paired_t_test(ta, tb);
    expect(std::abs(q.p - t_two_sided_by_quadrature(q.t, 4.0)) <= 1e-8 * t_two_sided_by_quadrature(q.t, 4.0),
           "t-test p matches quadrature");

    const MetricsReport one = aggregate_report({MethodMetrics{"A", {0.1, 0.3}, {0.9, 0.7}}}, "A");
    expect(std::abs(one.rows[0].mean - 0.2) <= 1e-15 && std::abs(one.rows[0].std - std::sqrt(0.02)) <= 1e-15,
           "report mean 0.2, std 0.1414");
    const std::vector<double> n{0.2, 0.25, 0.1}, s{0.8, 0.7, 0.9};
    for (const ReportRow& r : aggregate_report({{"base", n, s}, {"copy", n, s}}, "base").rows)
        expect(r.t_vs_baseline == 0.0 && r.p_vs_baseline == 1.0, "identical columns give t = 0, p = 1");

    std::vector<double> p;
    const std::vector<double> zero(10, 0.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> d(10);
        for (double& v : d)
            v = rng.normal();
        p.push_back(paired_t_test(d, zero).p);
    }
    std::sort(p.begin(), p.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        ks = std::max({ks, static_cast<double>(i + 1) / 1000.0 - p[i], p[i] - static_cast<double>(i) / 1000.0});
    expect(ks < 0.05, "KS distance < 0.05");

    std::string detail = "examples " + std::string(failed.empty() ? "all exact" : "failing:");
    for (const std::string& f : failed)
        detail += " [" + f + "]";
    return {failed.empty(), detail + "; null p-value KS distance " + sci(ks) + " (< 0.05)"};
}

// ---- 9 -----------------------------------------------------------------------------

Outcome format_round_trips() {
    Rng rng(9009);
    const fs::path dir = g_work / "roundtrip";
    fs::create_directories(dir);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t h = 1 + rng.below(40), w = 1 + rng.below(40);
        const fs::path a = dir / "a.mrsl", b = dir / "b.mrsl";
        if (trial % 2) {
            write_slice(a, oracle::random_complex(h, w, rng));
            write_slice(b, read_complex_slice(a));
        } else {
            write_slice(a, oracle::random_real(h, w, rng, -1e3, 1e3));
            write_slice(b, read_real_slice(a));
        }
        mismatches += read_file(a) != read_file(b);

        TrainConfig cfg;
        cfg.n_filters = 1 + rng.below(6);
        cfg.n_blocks = rng.below(3);
        cfg.n_iterations = static_cast<int>(rng.below(5));
        Checkpoint c;
        c.params = initial_params(cfg);
        c.params.dc = DcParams{rng.normal()};
        c.adam = AdamState::zeros_like(c.params);
        for (ModelParams* mp : {&c.params, &c.adam.m, &c.adam.v})
            for (auto& ref : mp->parameters())
                for (double& v : ref.values)
                    v = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
        c.adam.step = rng.below(100000);
        c.epoch = static_cast<int>(rng.below(50));
        c.config = cfg.to_kv();
        c.config.set("factor", "4");
        const fs::path ca = dir / "a.mdck", cb = dir / "b.mdck";
        save_checkpoint(ca, c);
        save_checkpoint(cb, load_checkpoint(ca));
        mismatches += read_file(ca) != read_file(cb);
    }
    return {mismatches == 0, "20 slice and 20 checkpoint payloads, " + std::to_string(mismatches) + " byte mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
    g_work = MAGDC_ACCEPT_WORK;
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--work" && i + 1 < argc)
            g_work = argv[++i];
        else
            selected.insert(std::stoi(arg));
    }
    fs::remove_all(g_work);
    fs::create_directories(g_work);
    g_work = fs::absolute(g_work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"DC closed-form optimality", dc_optimality},
        {"gradient suite", gradient_suite},
        {"magnitude-substitution exactness", magnitude_substitution},
        {"hard data consistency", hard_dc},
        {"FFT correctness", fft_invariants},
        {"directional reproduction of the comparison table", directional_reproduction},
        {"determinism", determinism},
        {"metrics validity", metrics_validity},
        {"format round-trips", format_round_trips},
    };

    bool all = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k + 1);
        if (!selected.empty() && !selected.contains(id))
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[k].first << "): " << o.detail
                  << "  [" << sci(secs) << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
