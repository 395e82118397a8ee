#include "magdc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "magdc/io.hpp"

namespace magdc {

double nrmse(const RealImage& test, const RealImage& ref) {
    require_same_shape(test, ref, "nrmse test image");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = test[i] - ref[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    if (den == 0.0)
        throw std::invalid_argument("nrmse: reference image has zero norm");
    return std::sqrt(num / den);
}

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> w(size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (double& v : w)
        v /= total;
    return w;
}

// Separable 'valid' correlation: output is (H - k + 1) x (W - k + 1).
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t height, std::size_t width,
                                 const std::vector<double>& w) {
    const std::size_t k = w.size();
    const std::size_t oh = height - k + 1, ow = width - k + 1;
    std::vector<double> rows(height * ow, 0.0);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                s += w[j] * img[r * width + c + j];
            rows[r * ow + c] = s;
        }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                s += w[j] * rows[(r + j) * ow + c];
            out[r * ow + c] = s;
        }
    return out;
}

}  // namespace

double ssim(const RealImage& a, const RealImage& b, double dynamic_range, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim test image");
    if (a.height() < opt.window || a.width() < opt.window)
        throw std::invalid_argument("ssim: image smaller than the " + std::to_string(opt.window) + "x" +
                                    std::to_string(opt.window) + " window");
    if (!(dynamic_range > 0.0))
        throw std::invalid_argument("ssim: dynamic range must be positive");
    const std::size_t h = a.height(), w = a.width();
    const std::vector<double> win = gaussian_window(opt.window, opt.sigma);
    std::vector<double> va(a.data().begin(), a.data().end());
    std::vector<double> vb(b.data().begin(), b.data().end());
    std::vector<double> aa(va.size()), bb(va.size()), ab(va.size());
    for (std::size_t i = 0; i < va.size(); ++i) {
        aa[i] = va[i] * va[i];
        bb[i] = vb[i] * vb[i];
        ab[i] = va[i] * vb[i];
    }
    const auto mu_a = filter_valid(va, h, w, win);
    const auto mu_b = filter_valid(vb, h, w, win);
    const auto e_aa = filter_valid(aa, h, w, win);
    const auto e_bb = filter_valid(bb, h, w, win);
    const auto e_ab = filter_valid(ab, h, w, win);
    const double c1 = (opt.k1 * dynamic_range) * (opt.k1 * dynamic_range);
    const double c2 = (opt.k2 * dynamic_range) * (opt.k2 * dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma2 = mu_a[i] * mu_a[i];
        const double mb2 = mu_b[i] * mu_b[i];
        const double mab = mu_a[i] * mu_b[i];
        const double va_ = e_aa[i] - ma2;
        const double vb_ = e_bb[i] - mb2;
        const double cov = e_ab[i] - mab;
        total += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va_ + vb_ + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

double ssim(const RealImage& test, const RealImage& ref, const SsimOptions& opt) {
    const auto [mn, mx] = std::minmax_element(ref.data().begin(), ref.data().end());
    const double range = *mx - *mn;
    if (!(range > 0.0))
        throw std::invalid_argument("ssim: reference image has zero dynamic range");
    return ssim(test, ref, range, opt);
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps)
            return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("incomplete_beta: x must be in [0, 1]");
    if (x == 0.0 || x == 1.0)
        return x;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0))
        throw std::invalid_argument("student_t_two_sided_p: df must be positive");
    if (std::isinf(t))
        return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double mean(std::span<const double> v) {
    if (v.empty())
        throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2)
        return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("paired_t_test: arrays differ in length (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    const std::size_t n = a.size();
    if (n < 2)
        throw std::invalid_argument("paired_t_test: need at least 2 pairs");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i)
        d[i] = a[i] - b[i];
    const double md = mean(d);
    const double sd = sample_std(d);
    TTestResult r;
    if (sd == 0.0) {
        if (md == 0.0)
            return TTestResult{0.0, 1.0, false};
        return TTestResult{md > 0.0 ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity(),
                           0.0, true};
    }
    r.t = md / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
    return r;
}

MetricsReport aggregate_report(std::vector<MethodMetrics> methods, const std::string& baseline) {
    if (methods.empty())
        throw std::invalid_argument("aggregate_report: no methods");
    const std::size_t n = methods.front().nrmse.size();
    const MethodMetrics* base = nullptr;
    for (const auto& m : methods) {
        if (m.nrmse.size() != n || m.ssim.size() != n)
            throw std::invalid_argument("aggregate_report: method '" + m.name + "' has " +
                                        std::to_string(m.nrmse.size()) + "/" + std::to_string(m.ssim.size()) +
                                        " slices, expected " + std::to_string(n));
        if (m.name == baseline)
            base = &m;
    }
    if (base == nullptr)
        throw std::invalid_argument("aggregate_report: baseline '" + baseline + "' is not among the methods");
    if (n == 0)
        throw std::invalid_argument("aggregate_report: no slices");

    MetricsReport rep;
    rep.baseline = baseline;
    for (const auto& m : methods) {
        for (const char* metric : {"nrmse", "ssim"}) {
            const bool is_nrmse = metric[0] == 'n';
            const auto& v = is_nrmse ? m.nrmse : m.ssim;
            const auto& bv = is_nrmse ? base->nrmse : base->ssim;
            ReportRow row{m.name, metric, mean(v), sample_std(v), 0.0, 1.0};
            if (n >= 2) {
                const TTestResult t = paired_t_test(v, bv);
                row.t_vs_baseline = t.t;
                row.p_vs_baseline = t.p;
            }
            rep.rows.push_back(row);
        }
    }
    rep.methods = std::move(methods);
    return rep;
}

std::string MetricsReport::to_csv() const {
    std::string out = "method,metric,mean,std,t_vs_baseline,p_vs_baseline\n";
    for (const auto& r : rows) {
        out += r.method + "," + r.metric + "," + format_double(r.mean) + "," + format_double(r.std) + "," +
               format_double(r.t_vs_baseline) + "," + format_double(r.p_vs_baseline) + "\n";
    }
    return out;
}

std::string MetricsReport::to_table() const {
    std::size_t name_w = 6;
    for (const auto& m : methods)
        name_w = std::max(name_w, m.name.size());
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %-17s  %-17s  %-10s  %-10s\n", static_cast<int>(name_w), "method",
                  "NRMSE", "SSIM", "p(NRMSE)", "p(SSIM)");
    os << buf;
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
        const ReportRow& n = rows[i];
        const ReportRow& s = rows[i + 1];
        std::snprintf(buf, sizeof buf, "%-*s  %.3f (%.3f)    %.3f (%.3f)    %-10.3g  %-10.3g\n",
                      static_cast<int>(name_w), n.method.c_str(), n.mean, n.std, s.mean, s.std, n.p_vs_baseline,
                      s.p_vs_baseline);
        os << buf;
    }
    os << "p-values: paired t-test against '" << baseline << "'\n";
    return os.str();
}

std::string MetricsReport::per_slice_csv(std::span<const std::string> slice_ids) const {
    std::string out = "slice,method,nrmse,ssim\n";
    for (const auto& m : methods) {
        for (std::size_t i = 0; i < m.nrmse.size(); ++i) {
            const std::string id = i < slice_ids.size() ? slice_ids[i] : std::to_string(i);
            out += id + "," + m.name + "," + format_double(m.nrmse[i]) + "," + format_double(m.ssim[i]) + "\n";
        }
    }
    return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "method,metric,mean,std,t_vs_baseline,p_vs_baseline")
        throw std::invalid_argument("report csv: unexpected header");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            f.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (f.size() != 6)
            throw std::invalid_argument("report csv: expected 6 fields in '" + line + "'");
        rows.push_back(ReportRow{f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    }
    return rows;
}

}  // namespace magdc
