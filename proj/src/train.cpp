#include "magdc/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "magdc/io.hpp"
#include "magdc/rng.hpp"

namespace magdc {

// ---- Config ------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("train config: learning_rate must be > 0");
    if (epochs < 1)
        throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1)
        throw std::invalid_argument("train config: batch_size must be >= 1");
    if (n_iterations < 0)
        throw std::invalid_argument("train config: n_iterations must be >= 0");
    if (n_filters < 1)
        throw std::invalid_argument("train config: n_filters must be >= 1");
    if (init != "kaiming" && init != "zero")
        throw std::invalid_argument("train config: init must be 'kaiming' or 'zero'");
}

KeyValues TrainConfig::to_kv() const {
    KeyValues kv;
    kv.set("learning_rate", format_double(learning_rate));
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("n_iterations", std::to_string(n_iterations));
    kv.set("seed", std::to_string(seed));
    kv.set("beta1", format_double(beta1));
    kv.set("beta2", format_double(beta2));
    kv.set("epsilon", format_double(epsilon));
    kv.set("n_filters", std::to_string(n_filters));
    kv.set("n_blocks", std::to_string(n_blocks));
    kv.set("init", init);
    return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
    TrainConfig c;
    if (auto v = kv.get("learning_rate")) c.learning_rate = std::stod(*v);
    if (auto v = kv.get("epochs")) c.epochs = std::stoi(*v);
    if (auto v = kv.get("batch_size")) c.batch_size = std::stoul(*v);
    if (auto v = kv.get("n_iterations")) c.n_iterations = std::stoi(*v);
    if (auto v = kv.get("seed")) c.seed = std::stoull(*v);
    if (auto v = kv.get("beta1")) c.beta1 = std::stod(*v);
    if (auto v = kv.get("beta2")) c.beta2 = std::stod(*v);
    if (auto v = kv.get("epsilon")) c.epsilon = std::stod(*v);
    if (auto v = kv.get("n_filters")) c.n_filters = std::stoul(*v);
    if (auto v = kv.get("n_blocks")) c.n_blocks = std::stoul(*v);
    if (auto v = kv.get("init")) c.init = *v;
    return c;
}

// ---- Adam --------------------------------------------------------------------

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 std::uint64_t t, const AdamHyper& h) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
    if (t == 0)
        throw std::invalid_argument("adam_update: step index is 1-based");
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
}

AdamState AdamState::zeros_like(const ModelParams& p) { return AdamState{p.zeros_like(), p.zeros_like(), 0}; }

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state, const AdamHyper& h) {
    auto p = params.parameters();
    auto g = grads.parameters();
    auto m = state.m.parameters();
    auto v = state.v.parameters();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw ShapeError("adam_step: parameter layouts differ");
    ++state.step;
    for (std::size_t i = 0; i < p.size(); ++i)
        adam_update(p[i].values, g[i].values, m[i].values, v[i].values, state.step, h);
}

// ---- Checkpoints -------------------------------------------------------------

int Checkpoint::n_iterations() const { return std::stoi(config.get_or("n_iterations", "1")); }
double Checkpoint::factor() const { return std::stod(config.get_or("factor", "4")); }

namespace {

void write_block(ByteWriter& w, const std::string& name, const std::vector<std::size_t>& shape,
                 std::span<const double> values) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape)
        w.u32(static_cast<std::uint32_t>(d));
    for (double x : values)
        w.f64(x);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Checkpoint c = ckpt;  // parameters() needs mutable access
    c.config.set("epoch", std::to_string(c.epoch));
    c.config.set("adam_step", std::to_string(c.adam.step));
    c.config.set("n_filters", std::to_string(c.params.resnet.n_filters));
    c.config.set("n_blocks", std::to_string(c.params.resnet.n_blocks));
    ByteWriter w;
    w.text("MDCK");
    w.u32(kCheckpointVersion);
    const std::string cfg = c.config.to_text();
    w.u32(static_cast<std::uint32_t>(cfg.size()));
    w.text(cfg);
    auto p = c.params.parameters();
    auto m = c.adam.m.parameters();
    auto v = c.adam.v.parameters();
    w.u32(static_cast<std::uint32_t>(3 * p.size()));
    for (const auto& r : p)
        write_block(w, r.name, r.shape, r.values);
    for (const auto& r : m)
        write_block(w, "adam.m/" + r.name, r.shape, r.values);
    for (const auto& r : v)
        write_block(w, "adam.v/" + r.name, r.shape, r.values);
    return w.buffer();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context) {
    ByteReader r(bytes, context);
    if (r.text(4) != "MDCK")
        throw IoError(context + ": not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError(context + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32();
    Checkpoint c;
    c.config = KeyValues::parse(r.text(cfg_len));
    c.epoch = std::stoi(c.config.get_or("epoch", "0"));
    const std::size_t n_filters = std::stoul(c.config.get_or("n_filters", "64"));
    const std::size_t n_blocks = std::stoul(c.config.get_or("n_blocks", "5"));
    c.params = ModelParams{ResNetParams::zeros(n_filters, n_blocks), DcParams{0.0}};
    c.adam = AdamState::zeros_like(c.params);
    c.adam.step = std::stoull(c.config.get_or("adam_step", "0"));

    auto p = c.params.parameters();
    auto m = c.adam.m.parameters();
    auto v = c.adam.v.parameters();
    const std::uint32_t n_blocks_file = r.u32();
    if (n_blocks_file != 3 * p.size())
        throw IoError(context + ": expected " + std::to_string(3 * p.size()) + " parameter blocks, found " +
                      std::to_string(n_blocks_file));
    auto read_into = [&](const ParamRef& dst, const std::string& expected_name) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.text(name_len);
        if (name != expected_name)
            throw IoError(context + ": expected block '" + expected_name + "', found '" + name + "'");
        const std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape)
            d = r.u32();
        if (shape != dst.shape)
            throw IoError(context + ": block '" + name + "' has the wrong shape");
        for (double& x : dst.values)
            x = r.f64();
    };
    for (const auto& ref : p)
        read_into(ref, ref.name);
    for (const auto& ref : m)
        read_into(ref, "adam.m/" + ref.name);
    for (const auto& ref : v)
        read_into(ref, "adam.v/" + ref.name);
    if (r.remaining() != 0)
        throw IoError(context + ": trailing bytes after parameter blocks");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path), path.string());
}

// ---- Training ----------------------------------------------------------------

Var mae_loss(Var pred, const RealImage& target) {
    return mae(pred, pred.graph().constant(image_tensor(target)));
}

Var predict_node(const ModelVars& vars, int n_iterations, Var x_lr, const KSpaceGrid& s0, const SamplingMask& mask) {
    if (n_iterations == 0)
        return resnet_forward(x_lr, vars.resnet);
    UnrolledConfig cfg;
    cfg.n_iterations = n_iterations;
    return unrolled_forward(x_lr, s0, mask, vars, cfg);
}

RealImage predict(const ModelParams& params, int n_iterations, const RealImage& x_lr, const KSpaceGrid& s0,
                  const SamplingMask& mask) {
    Graph g;
    const ModelVars vars = bind_parameters(g, params, false);
    return tensor_image(predict_node(vars, n_iterations, g.constant(image_tensor(x_lr)), s0, mask).value());
}

std::string loss_log_csv(std::span<const EpochLog> log) {
    std::string out = "epoch,train_mae,val_mae\n";
    for (const auto& e : log)
        out += std::to_string(e.epoch) + "," + format_double(e.train_mae) + "," + format_double(e.val_mae) + "\n";
    return out;
}

namespace {

double parse_number(const std::string& field, std::size_t line_no) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::invalid_argument("loss log line " + std::to_string(line_no) + ": bad number '" + field + "'");
    return v;
}

}  // namespace

std::vector<EpochLog> parse_loss_log_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_mae,val_mae")
        throw std::invalid_argument("loss log: expected header 'epoch,train_mae,val_mae'");
    std::vector<EpochLog> log;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::string f[3];
        for (auto& field : f)
            if (!std::getline(row, field, ','))
                throw std::invalid_argument("loss log line " + std::to_string(line_no) + ": expected 3 fields");
        log.push_back(EpochLog{static_cast<int>(parse_number(f[0], line_no)), parse_number(f[1], line_no),
                               parse_number(f[2], line_no)});
    }
    return log;
}

ModelParams initial_params(const TrainConfig& cfg) {
    ModelParams p;
    p.resnet = cfg.init == "zero" ? ResNetParams::zeros(cfg.n_filters, cfg.n_blocks)
                                  : ResNetParams::kaiming(cfg.n_filters, cfg.n_blocks,
                                                          derive_seed(cfg.seed, streams::init));
    p.dc = DcParams::initial();
    return p;
}

double evaluate_mae(const ModelParams& params, int n_iterations, std::span<const Sample> samples,
                    const SamplingMask& mask) {
    if (samples.empty())
        return 0.0;
    double total = 0.0;
    for (const Sample& s : samples) {
        Graph g;
        const ModelVars vars = bind_parameters(g, params, false);
        const Var pred = predict_node(vars, n_iterations, g.constant(image_tensor(s.lr)), s.s0, mask);
        total += mae_loss(pred, s.hr).value().data[0];
    }
    return total / static_cast<double>(samples.size());
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::optional<Checkpoint>& resume,
                  const ProgressFn& progress) {
    cfg.validate();
    if (data.train.empty())
        throw std::invalid_argument("train: training split is empty");

    KeyValues echo = cfg.to_kv();
    echo.set("factor", format_double(data.factor));

    Checkpoint state;
    if (resume) {
        state = *resume;
        state.config = echo;
    } else {
        state.params = initial_params(cfg);
        state.adam = AdamState::zeros_like(state.params);
        state.epoch = 0;
        state.config = echo;
    }
    const AdamHyper hyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};

    TrainResult result;
    if (cfg.evaluate_initial) {
        result.initial_train_mae = evaluate_mae(state.params, cfg.n_iterations, data.train, data.mask);
        result.initial_val_mae = evaluate_mae(state.params, cfg.n_iterations, data.val, data.mask);
    }

    const bool saving = !cfg.checkpoint_dir.empty();
    if (saving) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        // A resumed run keeps the logged epochs it continues from.
        const auto log_path = cfg.checkpoint_dir / "loss.csv";
        if (resume && std::filesystem::exists(log_path))
            for (const EpochLog& e : parse_loss_log_csv(read_text(log_path)))
                if (e.epoch <= state.epoch)
                    result.log.push_back(e);
    }

    double best_val = std::numeric_limits<double>::infinity();
    result.best_checkpoint = state;
    for (const EpochLog& e : result.log)
        best_val = std::min(best_val, e.val_mae);
    if (!result.log.empty() && std::filesystem::exists(cfg.checkpoint_dir / "best.mdck"))
        result.best_checkpoint = load_checkpoint(cfg.checkpoint_dir / "best.mdck");
    const std::size_t n = data.train.size();
    std::vector<std::size_t> order(n);

    while (state.epoch < cfg.epochs) {
        const int epoch = state.epoch + 1;
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, streams::shuffle + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span<std::size_t>(order));

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double weight = 1.0 / static_cast<double>(stop - start);
            ModelParams grads = state.params.zeros_like();
            for (std::size_t k = start; k < stop; ++k) {
                const Sample& s = data.train[order[k]];
                Graph g;
                const ModelVars vars = bind_parameters(g, state.params, true);
                const Var pred = predict_node(vars, cfg.n_iterations, g.constant(image_tensor(s.lr)), s.s0, data.mask);
                const Var loss = mae_loss(pred, s.hr);
                const double lv = loss.value().data[0];
                if (!std::isfinite(lv))
                    throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batch_index) + " (sample " + s.id + ")");
                g.backward(loss);
                accumulate_gradients(vars, grads, weight);
                loss_sum += lv;
            }
            for (const auto& ref : grads.parameters())
                if (!all_finite(std::span<const double>(ref.values)))
                    throw std::runtime_error("train: non-finite gradient in " + ref.name + " at epoch " +
                                             std::to_string(epoch) + ", batch " + std::to_string(batch_index));
            adam_step(state.params, grads, state.adam, hyper);
        }

        EpochLog entry{epoch, loss_sum / static_cast<double>(n),
                       evaluate_mae(state.params, cfg.n_iterations, data.val, data.mask)};
        if (!std::isfinite(entry.train_mae) || !std::isfinite(entry.val_mae))
            throw std::runtime_error("train: non-finite epoch loss at epoch " + std::to_string(epoch));
        state.epoch = epoch;
        result.log.push_back(entry);
        if (progress)
            progress(entry);

        if (entry.val_mae < best_val) {
            best_val = entry.val_mae;
            result.best_checkpoint = state;
            if (saving)
                save_checkpoint(cfg.checkpoint_dir / "best.mdck", state);
        }
        if (saving) {
            if (cfg.save_every_epoch) {
                char name[32];
                std::snprintf(name, sizeof name, "epoch_%03d.mdck", epoch);
                save_checkpoint(cfg.checkpoint_dir / name, state);
            }
            write_text_atomic(cfg.checkpoint_dir / "loss.csv", loss_log_csv(result.log));
        }
    }
    result.final_checkpoint = state;
    if (saving) {
        save_checkpoint(cfg.checkpoint_dir / "final.mdck", state);
        write_text_atomic(cfg.checkpoint_dir / "loss.csv", loss_log_csv(result.log));
    }
    return result;
}

}  // namespace magdc
