#include "magdc/data.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <sstream>

#include "magdc/dc.hpp"
#include "magdc/io.hpp"
#include "magdc/keyvalue.hpp"
#include "magdc/rng.hpp"

namespace magdc {

// ---- Slice files -------------------------------------------------------------

namespace {

void write_header(ByteWriter& w, SliceDtype dtype, std::size_t height, std::size_t width) {
    w.text("MRSL");
    w.u8(kSliceVersion);
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u32(static_cast<std::uint32_t>(height));
    w.u32(static_cast<std::uint32_t>(width));
}

}  // namespace

std::vector<std::uint8_t> encode_slice(const RealImage& img) {
    ByteWriter w;
    write_header(w, SliceDtype::real64, img.height(), img.width());
    for (double v : img.data())
        w.f64(v);
    return w.buffer();
}

std::vector<std::uint8_t> encode_slice(const ComplexImage& img) {
    ByteWriter w;
    write_header(w, SliceDtype::complex64, img.height(), img.width());
    for (const Complex& v : img.data()) {
        w.f64(v.real());
        w.f64(v.imag());
    }
    return w.buffer();
}

SliceData decode_slice(std::span<const std::uint8_t> bytes, const std::string& context) {
    ByteReader r(bytes, context);
    if (r.text(4) != "MRSL")
        throw IoError(context + ": not a slice file (bad magic)");
    const std::uint8_t version = r.u8();
    if (version != kSliceVersion)
        throw IoError(context + ": unsupported slice version " + std::to_string(version));
    const std::uint8_t dtype = r.u8();
    const std::size_t height = r.u32();
    const std::size_t width = r.u32();
    if (height == 0 || width == 0)
        throw IoError(context + ": zero dimension");
    const std::size_t n = height * width;
    if (dtype == static_cast<std::uint8_t>(SliceDtype::real64)) {
        if (r.remaining() != n * 8)
            throw IoError(context + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * 8));
        std::vector<double> v(n);
        for (double& x : v)
            x = r.f64();
        return RealImage(height, width, std::move(v));
    }
    if (dtype == static_cast<std::uint8_t>(SliceDtype::complex64)) {
        if (r.remaining() != n * 16)
            throw IoError(context + ": payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * 16));
        std::vector<Complex> v(n);
        for (Complex& x : v) {
            const double re = r.f64();
            const double im = r.f64();
            x = Complex(re, im);
        }
        return ComplexImage(height, width, std::move(v));
    }
    throw IoError(context + ": unknown dtype code " + std::to_string(dtype));
}

void write_slice(const std::filesystem::path& path, const RealImage& img) {
    write_file_atomic(path, encode_slice(img));
}

void write_slice(const std::filesystem::path& path, const ComplexImage& img) {
    write_file_atomic(path, encode_slice(img));
}

SliceData read_slice(const std::filesystem::path& path) { return decode_slice(read_file(path), path.string()); }

ComplexImage read_complex_slice(const std::filesystem::path& path) {
    SliceData d = read_slice(path);
    if (auto* r = std::get_if<RealImage>(&d))
        return to_complex(*r);
    return std::get<ComplexImage>(std::move(d));
}

RealImage read_real_slice(const std::filesystem::path& path) {
    SliceData d = read_slice(path);
    if (std::holds_alternative<ComplexImage>(d))
        throw IoError(path.string() + ": expected a real slice, found complex");
    return std::get<RealImage>(std::move(d));
}

// ---- Synthetic phantoms ------------------------------------------------------

namespace {

RealImage phantom_magnitude(Rng& rng, std::size_t height, std::size_t width) {
    RealImage mag(height, width, 0.0);
    const int n_ellipses = 3 + static_cast<int>(rng.below(6));
    for (int e = 0; e < n_ellipses; ++e) {
        // The first ellipse is the body; the rest sit inside it.
        const bool body = e == 0;
        const double cx = body ? rng.uniform(-0.1, 0.1) : rng.uniform(-0.45, 0.45);
        const double cy = body ? rng.uniform(-0.1, 0.1) : rng.uniform(-0.45, 0.45);
        const double ax = body ? rng.uniform(0.6, 0.85) : rng.uniform(0.08, 0.35);
        const double ay = body ? rng.uniform(0.6, 0.85) : rng.uniform(0.08, 0.35);
        const double rot = rng.uniform(0.0, std::numbers::pi);
        const double level = body ? rng.uniform(0.3, 0.6) : rng.uniform(-0.3, 0.5);
        // Gentle linear shading across the ellipse.
        const double gx = rng.uniform(-0.15, 0.15);
        const double gy = rng.uniform(-0.15, 0.15);
        const double cr = std::cos(rot), sr = std::sin(rot);
        for (std::size_t r = 0; r < height; ++r) {
            const double v = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(height) - 1.0;
            for (std::size_t c = 0; c < width; ++c) {
                const double u = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(width) - 1.0;
                const double du = u - cx, dv = v - cy;
                const double pu = (cr * du + sr * dv) / ax;
                const double pv = (-sr * du + cr * dv) / ay;
                if (pu * pu + pv * pv <= 1.0)
                    mag(r, c) += level * (1.0 + gx * pu + gy * pv);
            }
        }
    }
    for (double& v : mag.data())
        v = std::clamp(v, 0.0, 1.0);
    // Two passes of a separable [1 2 1] / 4 blur, zero outside the grid.
    for (int pass = 0; pass < 2; ++pass) {
        RealImage tmp(height, width, 0.0);
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c) {
                const double l = c > 0 ? mag(r, c - 1) : 0.0;
                const double rr = c + 1 < width ? mag(r, c + 1) : 0.0;
                tmp(r, c) = 0.25 * l + 0.5 * mag(r, c) + 0.25 * rr;
            }
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c) {
                const double u = r > 0 ? tmp(r - 1, c) : 0.0;
                const double d = r + 1 < height ? tmp(r + 1, c) : 0.0;
                mag(r, c) = 0.25 * u + 0.5 * tmp(r, c) + 0.25 * d;
            }
    }
    return mag;
}

ComplexImage with_phase(const RealImage& mag, const RealImage& phase, double scale) {
    ComplexImage out(mag.height(), mag.width());
    for (std::size_t i = 0; i < mag.size(); ++i)
        out[i] = std::polar(mag[i], scale * phase[i]);
    return out;
}

}  // namespace

ComplexImage phantom_generate(std::uint64_t seed, std::size_t height, std::size_t width, double phase_span_deg) {
    if (height < 16 || width < 16)
        throw std::invalid_argument("phantom_generate: dimensions must be >= 16");
    if (!(phase_span_deg >= 0.0 && phase_span_deg < 360.0))
        throw std::invalid_argument("phantom_generate: phase_span_deg must be in [0, 360)");
    Rng rng(seed);
    RealImage mag = phantom_magnitude(rng, height, width);

    // Quadratic phase surface in normalized coordinates.
    double coef[5];
    for (double& a : coef)
        a = rng.normal();
    if (phase_span_deg == 0.0)
        return to_complex(mag);

    RealImage phase(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        const double v = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(height) - 1.0;
        for (std::size_t c = 0; c < width; ++c) {
            const double u = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(width) - 1.0;
            phase(r, c) = coef[0] * u + coef[1] * v + 0.5 * (coef[2] * u * u + coef[3] * u * v + coef[4] * v * v);
        }
    }
    double peak = 0.0;
    for (double m : mag.data())
        peak = std::max(peak, m);
    if (peak == 0.0)
        throw std::runtime_error("phantom_generate: empty magnitude");
    std::vector<double> support_phase;
    for (std::size_t i = 0; i < mag.size(); ++i)
        if (mag[i] > 0.1 * peak)
            support_phase.push_back(phase[i]);
    const double raw_span = (percentile(support_phase, 97.5) - percentile(support_phase, 2.5)) * 180.0 / std::numbers::pi;
    if (!(raw_span > 1e-9))
        throw std::runtime_error("phantom_generate: degenerate phase surface");

    // The statistic is linear in the scale until wrap-around; a few secant steps absorb the rest.
    double scale = phase_span_deg / raw_span;
    double measured = phase_variation_deg(with_phase(mag, phase, scale));
    for (int it = 0; it < 20 && std::abs(measured - phase_span_deg) > 0.5; ++it) {
        if (!(measured > 0.0))
            break;
        scale *= phase_span_deg / measured;
        measured = phase_variation_deg(with_phase(mag, phase, scale));
    }
    if (std::abs(measured - phase_span_deg) > 5.0)
        throw std::runtime_error("phantom_generate: cannot reach phase span " + std::to_string(phase_span_deg) +
                                 " deg (measured " + std::to_string(measured) + ")");
    return with_phase(mag, phase, scale);
}

// ---- Dataset layout ----------------------------------------------------------

std::string_view split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split tag '" + std::string(s) + "'");
}

SplitCounts DatasetManifest::counts() const {
    SplitCounts c;
    for (const auto& e : entries) {
        switch (e.split) {
        case Split::train: ++c.train; break;
        case Split::val: ++c.val; break;
        case Split::test: ++c.test; break;
        }
    }
    return c;
}

SplitCounts split_counts(std::size_t n) {
    SplitCounts c;
    c.train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    c.val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    c.val = std::min(c.val, n - std::min(c.train, n));
    c.train = std::min(c.train, n);
    c.test = n - c.train - c.val;
    return c;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    Rng rng(derive_seed(seed, streams::split));
    rng.shuffle(std::span<std::size_t>(order));
    const SplitCounts c = split_counts(n);
    std::vector<Split> out(n, Split::test);
    for (std::size_t k = 0; k < n; ++k)
        out[order[k]] = k < c.train ? Split::train : (k < c.train + c.val ? Split::val : Split::test);
    return out;
}

std::string manifest_csv(const DatasetManifest& m) {
    std::string out = "path,split\n";
    for (const auto& e : m.entries) {
        if (e.path.find_first_of(",\n") != std::string::npos)
            throw std::invalid_argument("manifest path contains a comma or newline: " + e.path);
        out += e.path;
        out += ',';
        out += split_name(e.split);
        out += '\n';
    }
    return out;
}

DatasetManifest parse_manifest_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || (line != "path,split" && line != "path,split\r"))
        throw std::invalid_argument("manifest: expected header 'path,split'");
    DatasetManifest m;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("manifest line " + std::to_string(line_no) + ": missing split column");
        m.entries.push_back(ManifestEntry{line.substr(0, comma), parse_split(line.substr(comma + 1))});
    }
    return m;
}

std::string lr_partner(const std::string& hr_path) {
    const std::string suffix = "_hr.mrsl";
    if (hr_path.size() < suffix.size() || hr_path.compare(hr_path.size() - suffix.size(), suffix.size(), suffix) != 0)
        return hr_path + ".lr";
    return hr_path.substr(0, hr_path.size() - suffix.size()) + "_lr.mrsl";
}

DatasetManifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
    if (spec.n_slices < 10)
        throw std::invalid_argument("build_dataset: need at least 10 slices, got " + std::to_string(spec.n_slices));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const SamplingMask mask = central_mask(spec.size, spec.size, spec.factor);
    const std::vector<Split> splits = assign_splits(spec.n_slices, spec.seed);
    const std::uint64_t phantom_seed = derive_seed(spec.seed, streams::phantom);
    DatasetManifest manifest;
    for (std::size_t i = 0; i < spec.n_slices; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "slice_%04zu", i);
        const std::string hr_name = std::string(stem) + "_hr.mrsl";
        const ComplexImage hr = phantom_generate(derive_seed(phantom_seed, i), spec.size, spec.size, spec.phase_span_deg);
        write_slice(out_dir / hr_name, hr);
        write_slice(out_dir / lr_partner(hr_name), degrade(hr, mask));
        manifest.entries.push_back(ManifestEntry{hr_name, splits[i]});
    }
    write_text_atomic(out_dir / "manifest.csv", manifest_csv(manifest));

    KeyValues cfg;
    cfg.set("n_slices", std::to_string(spec.n_slices));
    cfg.set("seed", std::to_string(spec.seed));
    cfg.set("size", std::to_string(spec.size));
    cfg.set("phase_span_deg", format_double(spec.phase_span_deg));
    cfg.set("factor", format_double(spec.factor));
    write_text_atomic(out_dir / "dataset.cfg", cfg.to_text());
    return manifest;
}

// ---- Normalization -----------------------------------------------------------

double normalization_scale(const RealImage& lr) {
    const double p95 = percentile(std::vector<double>(lr.data().begin(), lr.data().end()), 95.0);
    if (!(p95 > 0.0))
        throw std::invalid_argument("normalize: 95th percentile of the LR image is zero");
    return p95;
}

NormalizedPair normalize_pair(const RealImage& lr, const RealImage& hr) {
    require_same_shape(hr, lr, "normalize_pair hr");
    const double scale = normalization_scale(lr);
    NormalizedPair out{lr, hr, scale};
    for (double& v : out.lr.data())
        v /= scale;
    for (double& v : out.hr.data())
        v /= scale;
    return out;
}

// ---- In-memory dataset -------------------------------------------------------

const std::vector<Sample>& Dataset::split(Split s) const {
    switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
    }
    return test;
}

Sample make_sample(std::string id, const RealImage& lr_raw, const RealImage& hr_raw, const SamplingMask& mask) {
    NormalizedPair n = normalize_pair(lr_raw, hr_raw);
    KSpaceGrid s0 = magnitude_s0(n.lr, mask);
    return Sample{std::move(id), std::move(n.lr), std::move(n.hr), std::move(s0), n.scale};
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const DatasetManifest manifest = parse_manifest_csv(read_text(dir / "manifest.csv"));
    if (manifest.entries.empty())
        throw std::invalid_argument("dataset " + dir.string() + " is empty");
    double factor = 4.0;
    if (std::filesystem::exists(dir / "dataset.cfg")) {
        const KeyValues cfg = KeyValues::parse(read_text(dir / "dataset.cfg"));
        if (auto f = cfg.get("factor"))
            factor = std::stod(*f);
    }
    Dataset ds;
    ds.factor = factor;
    bool have_mask = false;
    for (const auto& e : manifest.entries) {
        const ComplexImage hr = read_complex_slice(dir / e.path);
        if (!have_mask) {
            ds.mask = central_mask(hr.height(), hr.width(), factor);
            have_mask = true;
        } else if (!hr.same_shape(ds.mask.grid_height, ds.mask.grid_width)) {
            throw ShapeError((dir / e.path).string() + ": slice size differs from the first slice");
        }
        const std::filesystem::path lr_path = dir / lr_partner(e.path);
        const RealImage lr = std::filesystem::exists(lr_path) ? read_real_slice(lr_path) : degrade(hr, ds.mask);
        require_same_shape(lr, hr, lr_path.string().c_str());
        Sample s = make_sample(e.path, lr, magnitude(hr), ds.mask);
        switch (e.split) {
        case Split::train: ds.train.push_back(std::move(s)); break;
        case Split::val: ds.val.push_back(std::move(s)); break;
        case Split::test: ds.test.push_back(std::move(s)); break;
        }
    }
    return ds;
}

// ---- Image export ------------------------------------------------------------

std::vector<std::uint8_t> to_gray8(const RealImage& img, std::optional<Window> window) {
    Window w;
    if (window) {
        w = *window;
    } else {
        const auto [mn, mx] = std::minmax_element(img.data().begin(), img.data().end());
        w = Window{*mn, *mx};
    }
    std::vector<std::uint8_t> out(img.size(), 0);
    const double range = w.hi - w.lo;
    if (!(range > 0.0))
        return out;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double t = std::clamp((img[i] - w.lo) / range, 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, const RealImage& img, std::optional<Window> window) {
    ByteWriter w;
    w.text("P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n");
    w.bytes(to_gray8(img, window));
    write_file_atomic(path, w.buffer());
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    buf->insert(buf->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const RealImage& img, std::optional<Window> window) {
    const std::vector<std::uint8_t> gray = to_gray8(img, window);
    std::vector<std::uint8_t> encoded;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr)
        throw IoError("png: cannot create writer");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: encoding failed for " + path.string());
    }
    png_set_write_fn(png, &encoded, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < img.height(); ++r)
        png_write_row(png, const_cast<png_bytep>(gray.data() + r * img.width()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    write_file_atomic(path, encoded);
}

}  // namespace magdc
