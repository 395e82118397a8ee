#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "magdc/image.hpp"

namespace magdc {

// ||test - ref||_2 / ||ref||_2
double nrmse(const RealImage& test, const RealImage& ref);

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

// Mean of the local SSIM map over all fully-contained Gaussian windows.
// The dynamic range is max(ref) - min(ref).
double ssim(const RealImage& test, const RealImage& ref, const SsimOptions& opt = {});
// Same, with an externally supplied dynamic range.
double ssim(const RealImage& a, const RealImage& b, double dynamic_range, const SsimOptions& opt = {});

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double incomplete_beta(double a, double b, double x);
// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    // Differences have zero variance but nonzero mean; t is infinite and p is reported as 0.
    bool degenerate = false;
};

// d = a - b; t = mean(d) / (sd(d) / sqrt(n)) with n - 1 in the variance.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(std::span<const double> v);

struct MethodMetrics {
    std::string name;
    std::vector<double> nrmse;
    std::vector<double> ssim;
};

struct ReportRow {
    std::string method;
    std::string metric;  // "nrmse" or "ssim"
    double mean = 0.0;
    double std = 0.0;
    double t_vs_baseline = 0.0;
    double p_vs_baseline = 1.0;
    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct MetricsReport {
    std::vector<MethodMetrics> methods;  // per-slice values, paired across methods
    std::string baseline;
    std::vector<ReportRow> rows;         // method order, nrmse then ssim

    std::string to_csv() const;          // header method,metric,mean,std,t_vs_baseline,p_vs_baseline
    std::string to_table() const;        // aligned text in the "mean (std)" layout
    std::string per_slice_csv(std::span<const std::string> slice_ids) const;
};

// Rows compare every method against the baseline with a paired t-test. Throws when the
// per-slice arrays differ in length or the baseline is not among the methods.
MetricsReport aggregate_report(std::vector<MethodMetrics> methods, const std::string& baseline);
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace magdc
