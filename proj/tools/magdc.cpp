#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magdc/data.hpp"
#include "magdc/dc.hpp"
#include "magdc/gradcheck.hpp"
#include "magdc/io.hpp"
#include "magdc/keyvalue.hpp"
#include "magdc/metrics.hpp"
#include "magdc/train.hpp"

namespace fs = std::filesystem;
using namespace magdc;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr double kGradTolerance = 1e-4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One subcommand whose settings resolve as defaults < config file < flags. MAGDC_SEED
// replaces the built-in seed default.
class Command {
public:
    Command(CLI::App& parent, const std::string& name, const std::string& description)
        : app(parent.add_subcommand(name, description)) {
        app->add_option("--config", config_path_, "key=value file; flags take precedence")->check(CLI::ExistingFile);
    }

    void option(const std::string& key, std::string fallback, const std::string& help) {
        Entry& e = entries_.emplace_back();
        e.key = key;
        e.fallback = std::move(fallback);
        e.opt = app->add_option("--" + key, e.text, help);
    }

    void flag(const std::string& key, const std::string& help) {
        Entry& e = entries_.emplace_back();
        e.key = key;
        e.fallback = "false";
        e.is_flag = true;
        e.opt = app->add_flag("--" + key, e.on, help);
    }

    // Stored in the resolved config as a comma-separated list.
    void list(const std::string& key, const std::string& help) {
        Entry& e = entries_.emplace_back();
        e.key = key;
        e.is_list = true;
        e.opt = app->add_option("--" + key, e.items, help);
    }

    KeyValues resolve() const {
        KeyValues kv;
        for (const Entry& e : entries_) {
            std::string v = e.fallback;
            if (e.key == "seed")
                if (const char* env = std::getenv("MAGDC_SEED"); env && *env)
                    v = env;
            kv.set(e.key, v);
        }
        if (!config_path_.empty()) {
            KeyValues file;
            try {
                file = KeyValues::parse(read_text(config_path_));
            } catch (const std::invalid_argument& e) {
                throw UsageError(config_path_ + ": " + e.what());
            }
            for (const auto& [k, v] : file.items()) {
                if (!kv.contains(k))
                    throw UsageError(config_path_ + ": unknown key '" + k + "' for " + app->get_name());
                kv.set(k, v);
            }
        }
        for (const Entry& e : entries_) {
            if (e.opt->count() == 0)
                continue;
            if (e.is_flag) {
                kv.set(e.key, e.on ? "true" : "false");
            } else if (e.is_list) {
                std::string joined;
                for (const std::string& item : e.items) {
                    if (item.find(',') != std::string::npos)
                        throw UsageError("--" + e.key + ": paths may not contain commas: " + item);
                    joined += (joined.empty() ? "" : ",") + item;
                }
                kv.set(e.key, joined);
            } else {
                kv.set(e.key, e.text);
            }
        }
        return kv;
    }

    CLI::App* app;

private:
    struct Entry {
        std::string key;
        std::string fallback;
        std::string text;
        std::vector<std::string> items;
        bool on = false;
        bool is_flag = false;
        bool is_list = false;
        CLI::Option* opt = nullptr;
    };
    std::deque<Entry> entries_;
    std::string config_path_;
};

// ---- typed access to resolved settings ---------------------------------------

std::string need(const KeyValues& kv, const std::string& key) {
    const std::string v = kv.get_or(key, "");
    if (v.empty())
        throw UsageError("--" + key + " is required");
    return v;
}

template <typename T>
T number(const KeyValues& kv, const std::string& key) {
    const std::string v = need(kv, key);
    T out{};
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || end != v.data() + v.size())
        throw UsageError("--" + key + ": cannot parse '" + v + "'");
    return out;
}

bool boolean(const KeyValues& kv, const std::string& key) {
    const std::string v = kv.get_or(key, "false");
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw UsageError("--" + key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

void echo_config(const fs::path& path, const std::string& command, const KeyValues& kv) {
    write_text_atomic(path, "# magdc " + command + "\n" + kv.to_text());
}

fs::path sibling(fs::path p, const std::string& extension) { return p.replace_extension(extension); }

RealImage read_magnitude(const fs::path& path) {
    const SliceData d = read_slice(path);
    if (const auto* r = std::get_if<RealImage>(&d))
        return *r;
    return magnitude(std::get<ComplexImage>(d));
}

std::string method_name(int n_iterations) {
    return n_iterations == 0 ? "ResNet w/o DC" : "Unrolled model (N=" + std::to_string(n_iterations) + ")";
}

// ---- commands ------------------------------------------------------------------

int run_gen_data(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    DatasetSpec spec;
    spec.n_slices = number<std::size_t>(kv, "n");
    spec.size = number<std::size_t>(kv, "size");
    spec.phase_span_deg = number<double>(kv, "phase-span-deg");
    spec.factor = number<double>(kv, "factor");
    spec.seed = number<std::uint64_t>(kv, "seed");
    const fs::path out = need(kv, "out");
    if (spec.n_slices < 10)
        throw UsageError("--n must be at least 10 for an 8:1:1 split, got " + std::to_string(spec.n_slices));
    if (spec.size < 16)
        throw UsageError("--size must be at least 16");
    if (!(spec.phase_span_deg >= 0.0 && spec.phase_span_deg < 360.0))
        throw UsageError("--phase-span-deg must be in [0, 360)");
    if (!(spec.factor >= 1.0))
        throw UsageError("--factor must be >= 1");

    const DatasetManifest m = build_dataset(spec, out);
    echo_config(out / "gen-data.cfg", "gen-data", kv);
    const SplitCounts c = m.counts();
    std::cout << "wrote " << m.entries.size() << " slices to " << out.string() << " (train " << c.train << ", val "
              << c.val << ", test " << c.test << ")\n";
    return 0;
}

std::optional<fs::path> latest_epoch_checkpoint(const fs::path& dir) {
    std::optional<fs::path> best;
    if (!fs::is_directory(dir))
        return best;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with("epoch_") && name.ends_with(".mdck") && (!best || name > best->filename().string()))
            best = e.path();
    }
    return best;
}

int run_train(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    const std::string model = need(kv, "model");
    const bool any_n = boolean(kv, "allow-any-n");
    TrainConfig cfg;
    if (model == "resnet") {
        if (!kv.get_or("iterations", "").empty())
            throw UsageError("--iterations applies only to --model unrolled");
        cfg.n_iterations = 0;
    } else if (model == "unrolled") {
        cfg.n_iterations = number<int>(kv, "iterations");
        if (cfg.n_iterations < 1 || (!any_n && cfg.n_iterations > 4))
            throw UsageError("--iterations must be in 1..4 (use --allow-any-n for larger values), got " +
                             std::to_string(cfg.n_iterations));
    } else {
        throw UsageError("--model must be resnet or unrolled, got '" + model + "'");
    }
    cfg.epochs = number<int>(kv, "epochs");
    cfg.learning_rate = number<double>(kv, "lr");
    cfg.batch_size = number<std::size_t>(kv, "batch");
    cfg.n_filters = number<std::size_t>(kv, "filters");
    cfg.n_blocks = number<std::size_t>(kv, "blocks");
    cfg.init = need(kv, "init");
    cfg.seed = number<std::uint64_t>(kv, "seed");
    cfg.checkpoint_dir = need(kv, "out");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const Dataset data = load_dataset(need(kv, "data"));
    std::optional<Checkpoint> resume;
    if (boolean(kv, "resume")) {
        const auto path = latest_epoch_checkpoint(cfg.checkpoint_dir);
        if (!path)
            throw std::runtime_error("--resume: no epoch checkpoint in " + cfg.checkpoint_dir.string());
        resume = load_checkpoint(*path);
        if (resume->n_iterations() != cfg.n_iterations)
            throw std::runtime_error(path->string() + ": checkpoint has N=" + std::to_string(resume->n_iterations()) +
                                     ", run asks for N=" + std::to_string(cfg.n_iterations));
        std::cout << "resuming from " << path->string() << " (epoch " << resume->epoch << ")\n";
    }

    fs::create_directories(cfg.checkpoint_dir);
    echo_config(cfg.checkpoint_dir / "train.cfg", "train", kv);
    const TrainResult r = train(data, cfg, resume, [&](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << "/" << cfg.epochs << "  train_mae " << format_double(e.train_mae)
                  << "  val_mae " << format_double(e.val_mae) << std::endl;
    });
    std::cout << method_name(cfg.n_iterations) << ": final checkpoint " << (cfg.checkpoint_dir / "final.mdck").string()
              << ", " << r.log.size() << " epochs logged\n";
    return 0;
}

int run_eval(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    const fs::path out = need(kv, "out");
    const Dataset data = load_dataset(need(kv, "data"));
    if (data.test.empty())
        throw std::runtime_error("test split of " + need(kv, "data") + " is empty");

    std::map<int, Checkpoint> models;
    for (const std::string& path : split_list(kv.get_or("checkpoints", ""))) {
        if (!fs::exists(path))
            throw IoError("checkpoint not found: " + path);
        Checkpoint c = load_checkpoint(path);
        if (c.factor() != data.factor)
            throw std::runtime_error(path + ": trained at factor " + format_double(c.factor()) + ", dataset uses " +
                                     format_double(data.factor));
        const int n = c.n_iterations();
        if (!models.emplace(n, std::move(c)).second)
            throw std::runtime_error(path + ": more than one checkpoint for " + method_name(n));
    }

    std::vector<MethodMetrics> methods;
    MethodMetrics lr{"LR Input", {}, {}};
    for (const Sample& s : data.test) {
        lr.nrmse.push_back(nrmse(s.lr, s.hr));
        lr.ssim.push_back(ssim(s.lr, s.hr));
    }
    methods.push_back(std::move(lr));
    for (const auto& [n, c] : models) {
        MethodMetrics m{method_name(n), {}, {}};
        for (const Sample& s : data.test) {
            const RealImage sr = predict(c.params, n, s.lr, s.s0, data.mask);
            m.nrmse.push_back(nrmse(sr, s.hr));
            m.ssim.push_back(ssim(sr, s.hr));
        }
        methods.push_back(std::move(m));
    }

    std::string baseline = kv.get_or("baseline", "");
    if (baseline.empty())
        baseline = models.contains(0) ? method_name(0) : "LR Input";
    if (std::none_of(methods.begin(), methods.end(), [&](const MethodMetrics& m) { return m.name == baseline; }))
        throw UsageError("--baseline '" + baseline + "' is not among the evaluated methods");

    std::vector<std::string> ids;
    for (const Sample& s : data.test)
        ids.push_back(s.id);
    const MetricsReport report = aggregate_report(std::move(methods), baseline);
    fs::create_directories(out);
    write_text_atomic(out / "report.csv", report.to_csv());
    write_text_atomic(out / "report.txt", report.to_table());
    write_text_atomic(out / "per_slice.csv", report.per_slice_csv(ids));
    echo_config(out / "eval.cfg", "eval", kv);
    std::cout << report.to_table();
    return 0;
}

int run_infer(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    const fs::path ckpt_path = need(kv, "checkpoint");
    const fs::path out = need(kv, "out");
    if (!fs::exists(ckpt_path))
        throw IoError("checkpoint not found: " + ckpt_path.string());
    const Checkpoint c = load_checkpoint(ckpt_path);
    const RealImage lr = read_magnitude(need(kv, "input"));

    const SamplingMask mask = central_mask(lr.height(), lr.width(), c.factor());
    const double scale = normalization_scale(lr);
    RealImage x = lr;
    for (double& v : x.data())
        v /= scale;
    RealImage sr = predict(c.params, c.n_iterations(), x, magnitude_s0(x, mask), mask);
    for (double& v : sr.data())
        v *= scale;

    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    write_slice(out, sr);
    write_png(sibling(out, ".png"), sr);
    echo_config(sibling(out, ".cfg"), "infer", kv);
    std::cout << method_name(c.n_iterations()) << ": wrote " << out.string() << " and "
              << sibling(out, ".png").string() << "\n";
    return 0;
}

int run_export_png(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    const fs::path out = need(kv, "out");
    const RealImage img = read_magnitude(need(kv, "input"));
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    write_png(out, img);
    echo_config(sibling(out, ".cfg"), "export-png", kv);
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int run_gradcheck(const Command& cmd) {
    const KeyValues kv = cmd.resolve();
    std::cout << kv.to_text();
    const auto entries = run_gradcheck_suite(number<std::uint64_t>(kv, "seed"));
    bool ok = true;
    for (const GradCheckEntry& e : entries) {
        const bool pass = e.max_rel_error < kGradTolerance;
        ok = ok && pass;
        std::cout << (pass ? "ok    " : "FAIL  ") << e.name << "  max_rel_error " << format_double(e.max_rel_error)
                  << "  entries " << e.checked << "\n";
    }
    std::cout << (ok ? "all gradients within " : "gradient mismatch above ") << format_double(kGradTolerance) << "\n";
    return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnitude-image data-consistent MRI super-resolution"};
    app.require_subcommand(1);

    Command gen(app, "gen-data", "Generate a phantom dataset with degraded LR partners");
    gen.option("n", "200", "number of slices (>= 10)");
    gen.option("size", "64", "slice height and width");
    gen.option("phase-span-deg", "40", "robust phase span of each phantom");
    gen.option("factor", "4", "phase-encode reduction factor");
    gen.option("seed", "0", "random seed");
    gen.option("out", "", "output directory");

    Command tr(app, "train", "Train ResNet-only or the unrolled model");
    tr.option("data", "", "dataset directory");
    tr.option("model", "", "resnet or unrolled");
    tr.option("iterations", "", "unrolled iterations N (unrolled only)");
    tr.option("epochs", "35", "training epochs");
    tr.option("lr", "0.0002", "Adam learning rate");
    tr.option("batch", "2", "batch size");
    tr.option("filters", "64", "ResNet filters");
    tr.option("blocks", "5", "ResNet residual blocks");
    tr.option("init", "kaiming", "kaiming or zero");
    tr.option("seed", "0", "random seed");
    tr.option("out", "", "checkpoint directory");
    tr.flag("allow-any-n", "accept N > 4");
    tr.flag("resume", "continue from the latest epoch checkpoint in --out");

    Command ev(app, "eval", "Evaluate the LR input and checkpoints on the test split");
    ev.option("data", "", "dataset directory");
    ev.list("checkpoints", "checkpoint files");
    ev.option("baseline", "", "method compared against (default: ResNet w/o DC if present, else LR Input)");
    ev.option("out", "", "report directory");

    Command inf(app, "infer", "Super-resolve one LR slice");
    inf.option("checkpoint", "", "checkpoint file");
    inf.option("input", "", "LR slice file");
    inf.option("out", "", "output slice file; a PNG is written next to it");

    Command png(app, "export-png", "Export a slice as an 8-bit PNG");
    png.option("input", "", "slice file");
    png.option("out", "", "PNG file");

    Command grad(app, "gradcheck", "Compare autodiff gradients with finite differences");
    grad.option("seed", "0", "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (gen.app->parsed())
            return run_gen_data(gen);
        if (tr.app->parsed())
            return run_train(tr);
        if (ev.app->parsed())
            return run_eval(ev);
        if (inf.app->parsed())
            return run_infer(inf);
        if (png.app->parsed())
            return run_export_png(png);
        return run_gradcheck(grad);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
