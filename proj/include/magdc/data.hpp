#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "magdc/image.hpp"
#include "magdc/kspace.hpp"

namespace magdc {

// ---- Slice files -------------------------------------------------------------
//
// "MRSL" | u8 version | u8 dtype (1 real f64, 2 complex f64 interleaved)
//        | u32 height | u32 width | row-major little-endian payload

inline constexpr std::uint8_t kSliceVersion = 1;

enum class SliceDtype : std::uint8_t { real64 = 1, complex64 = 2 };

using SliceData = std::variant<RealImage, ComplexImage>;

std::vector<std::uint8_t> encode_slice(const RealImage& img);
std::vector<std::uint8_t> encode_slice(const ComplexImage& img);
SliceData decode_slice(std::span<const std::uint8_t> bytes, const std::string& context);

void write_slice(const std::filesystem::path& path, const RealImage& img);
void write_slice(const std::filesystem::path& path, const ComplexImage& img);
SliceData read_slice(const std::filesystem::path& path);
// Real slices are lifted with zero imaginary part.
ComplexImage read_complex_slice(const std::filesystem::path& path);
// Complex slices are rejected; use magnitude() explicitly.
RealImage read_real_slice(const std::filesystem::path& path);

// ---- Synthetic phantoms ------------------------------------------------------

// Sum of 3-8 random ellipses (magnitude in [0, 1], zero background, lightly smoothed)
// times exp(i * phase), where phase is a smooth quadratic surface scaled so that
// phase_variation_deg of the result is within 5 degrees of phase_span_deg.
ComplexImage phantom_generate(std::uint64_t seed, std::size_t height, std::size_t width, double phase_span_deg);

// ---- Dataset layout ----------------------------------------------------------

enum class Split { train, val, test };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct ManifestEntry {
    std::string path;  // HR slice file, relative to the dataset directory
    Split split;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitCounts {
    std::size_t train = 0, val = 0, test = 0;
    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    SplitCounts counts() const;
    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// round(0.8 n) / round(0.1 n) / remainder.
SplitCounts split_counts(std::size_t n);
// Seeded shuffle of slice indices; the first counts.train go to train, then val, then test.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed);

std::string manifest_csv(const DatasetManifest& m);  // header "path,split"
DatasetManifest parse_manifest_csv(const std::string& text);

// LR partner of an HR slice path: "<stem>_hr.mrsl" -> "<stem>_lr.mrsl".
std::string lr_partner(const std::string& hr_path);

struct DatasetSpec {
    std::size_t n_slices = 200;
    std::uint64_t seed = 0;
    std::size_t size = 64;
    double phase_span_deg = 40.0;
    double factor = 4.0;
};

// Writes n HR complex slices, their degraded magnitude partners, manifest.csv and dataset.cfg.
DatasetManifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

// ---- Normalization -----------------------------------------------------------

struct NormalizedPair {
    RealImage lr;
    RealImage hr;
    double scale = 1.0;
};

// Divides both images by the 95th percentile of the LR image.
NormalizedPair normalize_pair(const RealImage& lr, const RealImage& hr);
double normalization_scale(const RealImage& lr);

// ---- In-memory dataset -------------------------------------------------------

struct Sample {
    std::string id;
    RealImage lr;     // normalized magnitude LR input
    RealImage hr;     // normalized magnitude HR reference
    KSpaceGrid s0;    // masked k-space of lr
    double scale = 1.0;
};

struct Dataset {
    SamplingMask mask;
    double factor = 4.0;
    std::vector<Sample> train, val, test;

    const std::vector<Sample>& split(Split s) const;
};

// Reads manifest.csv and dataset.cfg (factor; defaults to 4 when absent). Missing LR
// partners are recomputed by degrading the HR slice.
Dataset load_dataset(const std::filesystem::path& dir);
Sample make_sample(std::string id, const RealImage& lr_raw, const RealImage& hr_raw, const SamplingMask& mask);

// ---- Image export ------------------------------------------------------------

struct Window {
    double lo = 0.0;
    double hi = 1.0;
};

// 8-bit grayscale; values mapped linearly from [lo, hi] and clamped. Without a window the
// image's own min/max is used; a constant image maps to uniform 0.
void write_png(const std::filesystem::path& path, const RealImage& img, std::optional<Window> window = std::nullopt);
void write_pgm(const std::filesystem::path& path, const RealImage& img, std::optional<Window> window = std::nullopt);
std::vector<std::uint8_t> to_gray8(const RealImage& img, std::optional<Window> window);

}  // namespace magdc
