#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wbic/analytic_normal.hpp"
#include "wbic/estimators.hpp"

using namespace wbic;
using namespace wbic::normal;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using boost::math::quadrature::gauss_kronrod;

namespace {

double log_lik_direct(const std::vector<double>& y, double theta) {
    double s = 0.0;
    for (double yi : y) {
        s += -0.5 * std::log(2.0 * M_PI) - 0.5 * (yi - theta) * (yi - theta);
    }
    return s;
}

// Moments of g(theta) under f^t p, by quadrature over a window around the tempered mode.
struct TemperedQuadrature {
    std::vector<double> y;
    double m, v, t;

    double log_kernel(double theta) const {
        return t * log_lik_direct(y, theta) - 0.5 * (theta - m) * (theta - m) / v - 0.5 * std::log(2.0 * M_PI * v);
    }
    template <class G>
    double integrate(G&& g, double centre, double c) const {
        const double prec = t * y.size() + 1.0 / v;
        const double sd = 1.0 / std::sqrt(prec);
        double total = 0.0;
        for (int k = -8; k < 8; ++k) {
            const double a = centre + 5.0 * k * sd;
            total += gauss_kronrod<double, 61>::integrate(
                [&](double th) { return g(th) * std::exp(log_kernel(th) - c); }, a, a + 5.0 * sd, 15, 1e-13);
        }
        return total;
    }
    double centre() const {
        double sy = 0.0;
        for (double yi : y) {
            sy += yi;
        }
        return (t * sy + m / v) / (t * y.size() + 1.0 / v);
    }
    double log_z() const {
        const double c0 = centre(), c = log_kernel(c0);
        return c + std::log(integrate([](double) { return 1.0; }, c0, c));
    }
    double mean_of(auto g) const {
        const double c0 = centre(), c = log_kernel(c0);
        return integrate(g, c0, c) / integrate([](double) { return 1.0; }, c0, c);
    }
};

}  // namespace

TEST_CASE("power posterior parameters") {
    const NormalModelSpec spec({0.5, 1.5, 1.0, 1.0}, 0.0, 1.0);
    const auto at0 = power_posterior_params(spec, Temperature(0.0));
    CHECK(at0.mean == 0.0);
    CHECK(at0.variance == 1.0);
    const auto half = power_posterior_params(spec, Temperature(0.5));
    CHECK_THAT(half.mean, WithinRel(2.0 / 3.0, 1e-14));
    CHECK_THAT(half.variance, WithinRel(1.0 / 3.0, 1e-14));

    const TemperedQuadrature q{{0.5, 1.5, 1.0, 1.0}, 0.0, 1.0, 0.5};
    const double qm = q.mean_of([](double th) { return th; });
    CHECK_THAT(qm, WithinAbs(half.mean, 1e-10));
    CHECK_THAT(q.mean_of([&](double th) { return (th - qm) * (th - qm); }), WithinAbs(half.variance, 1e-10));

    const NormalModelSpec flat({0.2, -0.4, 1.1}, 0.0, 1e12);
    const auto post = power_posterior_params(flat, Temperature(1.0));
    CHECK_THAT(post.mean, WithinAbs(flat.ybar(), 1e-10));
    CHECK_THAT(post.variance, WithinRel(1.0 / 3.0, 1e-10));
}

TEST_CASE("expected log deviance") {
    const NormalModelSpec one({0.0}, 0.0, 1.0);
    CHECK_THAT(expected_log_deviance_normal(one, Temperature(0.0)), WithinAbs(-0.5 * std::log(2 * M_PI) - 0.5, 1e-15));

    const auto y = simulate_normal_data(50, 0.0, 99);
    const NormalModelSpec spec(y, 0.0, 10.0);
    double prev = -INFINITY;
    for (int k = 0; k <= 100; ++k) {
        const double e = expected_log_deviance_normal(spec, Temperature(k / 100.0));
        CHECK(e > prev);
        prev = e;
    }

    SECTION("Monte Carlo over exact draws") {
        const Temperature t(0.3);
        const auto s = power_posterior_params(spec, t);
        std::mt19937_64 rng(5);
        std::normal_distribution<double> draw(s.mean, std::sqrt(s.variance));
        const std::size_t n = 1000000;
        std::vector<double> ll(n);
        for (auto& v : ll) {
            v = log_lik_direct(y, draw(rng));
        }
        const double mean = sample_mean(ll), var = sample_variance(ll);
        const double se = std::sqrt(var / n);
        CHECK(std::abs(mean - expected_log_deviance_normal(spec, t)) < 3.0 * se);

        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) {
            sq[i] = (ll[i] - mean) * (ll[i] - mean);
        }
        const double var_se = std::sqrt(sample_variance(sq) / n);
        CHECK(std::abs(var - variance_log_deviance_normal(spec, t)) < 3.0 * var_se);
    }

    SECTION("quadrature") {
        for (double t : {0.0, 0.01, 0.2, 1.0}) {
            const TemperedQuadrature q{y, 1.0, 10.0, t};
            const double e = q.mean_of([&](double th) { return log_lik_direct(y, th); });
            CHECK_THAT(expected_log_deviance_normal(NormalModelSpec(y, 1.0, 10.0), Temperature(t)),
                       WithinRel(e, 1e-10));
        }
    }
}

TEST_CASE("variance of log deviance") {
    const NormalModelSpec one({0.0}, 0.0, 1.0);
    CHECK_THAT(variance_log_deviance_normal(one, Temperature(0.0)), WithinAbs(0.5, 1e-15));

    const NormalModelSpec big(simulate_normal_data(100000, 0.0, 3), 0.0, 1.0);
    CHECK(variance_log_deviance_normal(big, Temperature(1.0)) < 0.51);
    CHECK(variance_log_deviance_normal(big, Temperature(1.0)) > 0.49);

    const auto y = simulate_normal_data(7, 0.5, 17);
    const TemperedQuadrature q{y, -1.0, 4.0, 0.4};
    const double e = q.mean_of([&](double th) { return log_lik_direct(y, th); });
    const double var = q.mean_of([&](double th) { return std::pow(log_lik_direct(y, th) - e, 2); });
    CHECK_THAT(variance_log_deviance_normal(NormalModelSpec(y, -1.0, 4.0), Temperature(0.4)), WithinRel(var, 1e-9));
}

TEST_CASE("log evidence") {
    CHECK_THAT(log_evidence_normal(NormalModelSpec({0.0}, 0.0, 1.0)), WithinAbs(-0.5 * std::log(4 * M_PI), 1e-15));
    CHECK_THAT(log_evidence_normal(NormalModelSpec({0.0}, 0.0, 1.0)), WithinAbs(-1.26551, 1e-5));

    const auto y = simulate_normal_data(50, 0.0, 1234);
    const TemperedQuadrature q{y, 0.0, 10.0, 1.0};
    CHECK_THAT(log_evidence_normal(NormalModelSpec(y, 0.0, 10.0)), WithinAbs(q.log_z(), 1e-8));

    SECTION("dense uniform trapezoid of the expectation") {
        const NormalModelSpec spec(simulate_normal_data(10, 0.0, 8), 1.0, 1.0);
        const auto s = uniform_schedule(9999);
        const auto run = analytic_run(
            s, [&](Temperature t) { return expected_log_deviance_normal(spec, t); },
            [&](Temperature t) { return variance_log_deviance_normal(spec, t); });
        CHECK_THAT(pp_standard(run).log_evidence, WithinAbs(log_evidence_normal(spec), 1e-4));
    }
}

TEST_CASE("log normalizer") {
    const auto y = simulate_normal_data(20, 0.3, 44);
    const NormalModelSpec spec(y, 1.0, 5.0);
    CHECK(log_normalizer_normal(spec, Temperature(0.0)) == 0.0);
    CHECK_THAT(log_normalizer_normal(spec, Temperature(1.0)), WithinAbs(log_evidence_normal(spec), 1e-10));
    for (double t : {0.05, 0.3, 0.8}) {
        const TemperedQuadrature q{y, 1.0, 5.0, t};
        CHECK_THAT(log_normalizer_normal(spec, Temperature(t)), WithinAbs(q.log_z(), 1e-9));
        const double h = 1e-5;
        const double fd = (log_normalizer_normal(spec, Temperature(t + h)) -
                           log_normalizer_normal(spec, Temperature(t - h))) / (2 * h);
        CHECK_THAT(fd, WithinRel(expected_log_deviance_normal(spec, Temperature(t)), 1e-7));
    }
}

TEST_CASE("Gaussian KL") {
    const ConjugateNormalState a{Temperature(0.0), 0.0, 1.0};
    CHECK(kl_gaussian(a, a) == 0.0);
    CHECK_THAT(kl_gaussian(a, {Temperature(0.0), 1.0, 1.0}), WithinAbs(0.5, 1e-15));
    const ConjugateNormalState wide{Temperature(0.0), 0.0, 2.0};
    CHECK_THAT(kl_gaussian(wide, a), WithinAbs(0.5 * (2.0 - 1.0 - std::log(2.0)), 1e-15));
    CHECK_THAT(kl_gaussian(wide, a), WithinAbs(0.15343, 1e-5));

    const ConjugateNormalState p{Temperature(0.0), 0.4, 0.7}, r{Temperature(0.0), -0.3, 1.9};
    const double numeric = gauss_kronrod<double, 61>::integrate(
        [&](double x) { return std::exp(log_density(p, x)) * (log_density(p, x) - log_density(r, x)); }, -15.0, 15.0,
        15, 1e-13);
    CHECK_THAT(kl_gaussian(p, r), WithinAbs(numeric, 1e-10));
}

TEST_CASE("optimal temperature") {
    for (std::size_t n : {1, 10, 100, 1000}) {
        for (double v : {1.0, 100.0}) {
            const NormalModelSpec spec(simulate_normal_data(n, 0.0, n), 1.0, v);
            const auto ts = optimal_temperature_normal(spec, 1e-15);
            CHECK_THAT(expected_log_deviance_normal(spec, ts), WithinAbs(log_evidence_normal(spec), 1e-7));
            const auto at = power_posterior_params(spec, ts);
            const double gap = kl_gaussian(at, power_posterior_params(spec, Temperature(1.0))) -
                               kl_gaussian(at, power_posterior_params(spec, Temperature(0.0)));
            CHECK(std::abs(gap) < 1e-6);
        }
    }

    SECTION("mean-corrected data with a N(0,1) prior") {
        for (std::size_t n : {3, 50, 1000, 100000}) {
            std::vector<double> ts;
            for (std::uint64_t d = 0; d < 5; ++d) {
                const auto spec = mean_corrected(simulate_normal_data(n, 2.0, d + 100 * n), 1.0);
                CHECK(spec.ybar() == Catch::Approx(0.0).margin(1e-12));
                ts.push_back(optimal_temperature_normal(spec, 1e-15).value());
            }
            const double nd = static_cast<double>(n);
            // E_t = log p(y) reduces to 1/(nt+1) = log(1+n)/n
            const double closed = 1.0 / std::log1p(nd) - 1.0 / nd;
            for (double t : ts) {
                CHECK_THAT(t, WithinAbs(closed, 1e-10));
                CHECK(t < 1.0 / std::log(nd));
            }
        }
    }
}

TEST_CASE("WBIC analytic value") {
    const NormalModelSpec spec(simulate_normal_data(50, 0.0, 7), 0.0, 1000.0);
    CHECK(wbic_analytic_normal(spec) == expected_log_deviance_normal(spec, Temperature(1.0 / std::log(50.0))));
    CHECK(wbic_analytic_normal(spec) > log_evidence_normal(spec));
    CHECK_THROWS(wbic_analytic_normal(NormalModelSpec({1.0, 2.0}, 0.0, 1.0)));
}

TEST_CASE("random-walk sampler matches the closed forms") {
    const NormalModelSpec spec(simulate_normal_data(50, 0.0, 21), 0.5, 10.0);
    const NormalModel model(spec);
    static_assert(TemperedModel<NormalModel>);
    const Temperature tw = wbic_temperature(50);
    const auto trace = model.sample_tempered(tw, ChainConfig{60000, 5000}, 77);
    const double se = batch_means_standard_error(trace.retained());
    CHECK(std::abs(expected_log_deviance(trace) - expected_log_deviance_normal(spec, tw)) < 3.0 * se);
    const double vse = variance_standard_error(trace.retained());
    CHECK(std::abs(variance_log_deviance(trace) - variance_log_deviance_normal(spec, tw)) < 3.0 * vse);
    const double acc = trace.diagnostics().at("acceptance_rate");
    CHECK(acc > 0.2);
    CHECK(acc < 0.7);

    const auto again = model.sample_tempered(tw, ChainConfig{60000, 5000}, 77);
    CHECK(std::equal(trace.values().begin(), trace.values().end(), again.values().begin()));
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(NormalModelSpec({}, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(NormalModelSpec({1.0}, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(NormalModelSpec({1.0}, 0.0, INFINITY), std::invalid_argument);
    CHECK_THROWS_AS(optimal_temperature_normal(NormalModelSpec({1.0}, 0.0, 1.0), 0.0), std::invalid_argument);
}
