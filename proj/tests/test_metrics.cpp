#include "doctest.h"

#include <algorithm>
#include <numbers>

#include "magdc/metrics.hpp"
#include "oracles.hpp"

using namespace magdc;

namespace {

double t_density(double x, double df) {
    const double c = std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) / std::sqrt(df * std::numbers::pi);
    return c * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0);
}

// Two-sided tail by composite Simpson integration of the density over [0, |t|].
double t_two_sided_by_quadrature(double t, double df) {
    const int n = 200000;
    const double a = 0.0, b = std::abs(t), h = (b - a) / n;
    double s = t_density(a, df) + t_density(b, df);
    for (int i = 1; i < n; ++i)
        s += (i % 2 ? 4.0 : 2.0) * t_density(a + i * h, df);
    return 1.0 - 2.0 * s * h / 3.0;
}

RealImage checkerboard(std::size_t n) {
    RealImage img(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            img(i, j) = (i + j) % 2 ? 1.0 : -1.0;
    return img;
}

}  // namespace

TEST_CASE("nrmse examples") {
    Rng rng(81);
    const RealImage r = oracle::random_real(9, 9, rng, 0.1, 1.0);
    CHECK(nrmse(r, r) == 0.0);
    CHECK(nrmse(RealImage(3, 5, 2.0), RealImage(3, 5, 1.0)) == 1.0);
    CHECK(nrmse(RealImage(7, 2, 2.0), RealImage(7, 2, 1.0)) == 1.0);

    const RealImage t = oracle::random_real(9, 9, rng, 0.1, 1.0);
    RealImage t3 = t, r3 = r;
    for (double& v : t3.data())
        v *= 3.0;
    for (double& v : r3.data())
        v *= 3.0;
    CHECK(nrmse(t3, r3) == doctest::Approx(nrmse(t, r)).epsilon(1e-14));
    CHECK(nrmse(t, r) <= (l2_norm(t.data()) + l2_norm(r.data())) / l2_norm(r.data()));

    CHECK_THROWS(nrmse(r, RealImage(9, 9)));
    CHECK_THROWS_AS(nrmse(r, RealImage(9, 8, 1.0)), ShapeError);
}

TEST_CASE("ssim of an image with itself is exactly one") {
    Rng rng(82);
    const RealImage r = oracle::random_real(32, 24, rng);
    CHECK(ssim(r, r) == 1.0);
    const RealImage c = checkerboard(16);
    CHECK(ssim(c, c) == 1.0);
}

TEST_CASE("ssim of a negated checkerboard is negative") {
    const RealImage c = checkerboard(24);
    RealImage neg = c;
    for (double& v : neg.data())
        v = -v;
    const double s = ssim(neg, c);
    CHECK(s < 0.0);
    CHECK(s >= -1.0);
}

TEST_CASE("ssim decreases as noise grows") {
    Rng rng(83);
    const RealImage ref = oracle::random_real(32, 32, rng);
    RealImage noise(32, 32);
    for (double& v : noise.data())
        v = rng.normal();
    double previous = 1.0;
    for (double sigma : {0.01, 0.05, 0.1, 0.3, 1.0}) {
        RealImage t = ref;
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] += sigma * noise[i];
        const double s = ssim(t, ref);
        CAPTURE(sigma);
        CHECK(s < previous);
        previous = s;
    }
}

TEST_CASE("ssim is symmetric when the range is fixed") {
    Rng rng(84);
    for (int trial = 0; trial < 10; ++trial) {
        const RealImage a = oracle::random_real(20, 18, rng);
        const RealImage b = oracle::random_real(20, 18, rng);
        CHECK(std::abs(ssim(a, b, 1.0) - ssim(b, a, 1.0)) <= 1e-12);
    }
}

TEST_CASE("ssim preconditions") {
    CHECK_THROWS(ssim(RealImage(16, 16, 1.0), RealImage(16, 16, 1.0)));
    CHECK_THROWS(ssim(RealImage(8, 8, 1.0), checkerboard(8)));
    CHECK_THROWS_AS(ssim(checkerboard(16), checkerboard(12)), ShapeError);
}

TEST_CASE("incomplete beta special cases") {
    for (double x : {0.0, 0.1, 0.5, 0.93, 1.0}) {
        CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-13));
        CHECK(incomplete_beta(2.5, 1.0, x) == doctest::Approx(std::pow(x, 2.5)).epsilon(1e-12));
        CHECK(incomplete_beta(1.0, 3.0, x) == doctest::Approx(1.0 - std::pow(1.0 - x, 3.0)).epsilon(1e-12));
    }
    CHECK(incomplete_beta(3.0, 4.0, 0.3) + incomplete_beta(4.0, 3.0, 0.7) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("t-test examples") {
    const std::vector<double> a{0.3, 0.1, 0.7};
    const TTestResult same = paired_t_test(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);
    CHECK_FALSE(same.degenerate);

    const std::vector<double> x{1, 2, 3, 4, 5}, y{0, 1, 2, 3, 4};
    const TTestResult d = paired_t_test(x, y);
    CHECK(d.degenerate);
    CHECK(d.p == 0.0);
    CHECK(std::isinf(d.t));

    CHECK_THROWS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}));
    CHECK_THROWS(paired_t_test(x, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("t-test matches quadrature of the t density") {
    const std::vector<double> a{2.1, 1.9, 2.2, 2.0, 1.8}, b{1.0, 1.1, 0.9, 1.2, 1.0};
    double md = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
        md += (a[i] - b[i]) / 5.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
        ss += (a[i] - b[i] - md) * (a[i] - b[i] - md);
    const double t_ref = md / (std::sqrt(ss / 4.0) / std::sqrt(5.0));

    const TTestResult r = paired_t_test(a, b);
    CHECK(r.t == doctest::Approx(t_ref).epsilon(1e-12));
    const double p_ref = t_two_sided_by_quadrature(t_ref, 4.0);
    CHECK(r.p == doctest::Approx(p_ref).epsilon(1e-8));
    CHECK(r.p < 0.001);

    for (double t : {0.3, 1.0, 2.0, 4.5})
        for (double df : {1.0, 3.0, 9.0, 30.0})
            CHECK(student_t_two_sided_p(t, df) == doctest::Approx(t_two_sided_by_quadrature(t, df)).epsilon(1e-7));
}

TEST_CASE("t-test is antisymmetric") {
    Rng rng(85);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(8), b(8);
        for (std::size_t i = 0; i < 8; ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
        }
        const TTestResult ab = paired_t_test(a, b), ba = paired_t_test(b, a);
        CHECK(ab.t == -ba.t);
        CHECK(ab.p == ba.p);
    }
}

TEST_CASE("null p-values are uniform") {
    Rng rng(86);
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
    const double n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        ks = std::max({ks, static_cast<double>(i + 1) / n - p[i], p[i] - static_cast<double>(i) / n});
    CHECK(ks < 0.05);
}

TEST_CASE("aggregate report arithmetic") {
    const MetricsReport r = aggregate_report({MethodMetrics{"A", {0.1, 0.3}, {0.9, 0.7}}}, "A");
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].method == "A");
    CHECK(r.rows[0].metric == "nrmse");
    CHECK(r.rows[0].mean == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r.rows[0].std == doctest::Approx(std::sqrt(0.02)).epsilon(1e-14));
    CHECK(r.rows[0].t_vs_baseline == 0.0);
    CHECK(r.rows[0].p_vs_baseline == 1.0);
    CHECK(r.rows[1].metric == "ssim");
}

TEST_CASE("identical methods compare as t = 0, p = 1") {
    const std::vector<double> n{0.2, 0.25, 0.1}, s{0.8, 0.7, 0.9};
    const MetricsReport r = aggregate_report({{"base", n, s}, {"copy", n, s}}, "base");
    for (const ReportRow& row : r.rows) {
        CHECK(row.t_vs_baseline == 0.0);
        CHECK(row.p_vs_baseline == 1.0);
    }
}

TEST_CASE("report csv round-trips and tables carry std in brackets") {
    Rng rng(87);
    std::vector<MethodMetrics> m;
    for (const char* name : {"LR Input", "ResNet w/o DC", "Unrolled model (N=1)"}) {
        MethodMetrics mm{name, {}, {}};
        for (int i = 0; i < 6; ++i) {
            mm.nrmse.push_back(rng.uniform(0.1, 0.3));
            mm.ssim.push_back(rng.uniform(0.6, 0.9));
        }
        m.push_back(mm);
    }
    const MetricsReport r = aggregate_report(m, "ResNet w/o DC");
    const std::string csv = r.to_csv();
    CHECK(csv.rfind("method,metric,mean,std,t_vs_baseline,p_vs_baseline\n", 0) == 0);
    CHECK(parse_report_csv(csv) == r.rows);
    CHECK(r.rows[0].method == "LR Input");
    CHECK(r.rows[4].method == "Unrolled model (N=1)");
    CHECK(r.to_table().find("(") != std::string::npos);

    const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
    const std::string per = r.per_slice_csv(ids);
    CHECK(std::count(per.begin(), per.end(), '\n') == 1 + 3 * 6);
}

TEST_CASE("report preconditions") {
    CHECK_THROWS(aggregate_report({{"a", {0.1, 0.2}, {0.9, 0.8}}, {"b", {0.1}, {0.9}}}, "a"));
    CHECK_THROWS(aggregate_report({{"a", {0.1, 0.2}, {0.9, 0.8}}}, "missing"));
}

TEST_CASE("mean and sample std") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == 2.5);
    CHECK(sample_std(v) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
    CHECK(sample_std(std::vector<double>{4.0}) == 0.0);
}
