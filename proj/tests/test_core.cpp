#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "wbic/core.hpp"

using namespace wbic;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("temperature accepts the closed unit interval only") {
    CHECK(Temperature(0.0).value() == 0.0);
    CHECK(Temperature(1.0).value() == 1.0);
    CHECK_THROWS_AS(Temperature(-1e-12), std::domain_error);
    CHECK_THROWS_AS(Temperature(1.0 + 1e-12), std::domain_error);
    CHECK_THROWS_AS(Temperature(std::nan("")), std::domain_error);
}

TEST_CASE("power schedule matches (j/m)^c with exact endpoints") {
    const auto s = power_schedule(40, 5.0);
    REQUIRE(s.size() == 41);
    CHECK(s.points().front() == 0.0);
    CHECK(s.points().back() == 1.0);
    for (std::size_t j = 1; j < 40; ++j) {
        CHECK_THAT(s.points()[j], WithinRel(std::pow(j / 40.0, 5.0), 1e-15));
    }
    const auto s4 = power_schedule(4, 2.0);
    const std::vector<double> expected = {0.0, 0.0625, 0.25, 0.5625, 1.0};
    CHECK(std::equal(s4.points().begin(), s4.points().end(), expected.begin()));

    CHECK_THROWS_AS(power_schedule(0, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(power_schedule(10, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(power_schedule(10, -1.0), std::invalid_argument);
}

TEST_CASE("uniform schedule is evenly spaced") {
    const auto s = uniform_schedule(10);
    for (std::size_t j = 0; j <= 10; ++j) {
        CHECK_THAT(s.points()[j], WithinAbs(j / 10.0, 1e-15));
    }
}

TEST_CASE("schedules reject bad grids") {
    CHECK_THROWS_AS(TemperatureSchedule({0.0}), std::invalid_argument);
    CHECK_THROWS_AS(TemperatureSchedule({0.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(TemperatureSchedule({0.1, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TemperatureSchedule({0.0, 0.5, 0.5, 1.0}), std::invalid_argument);
    CHECK_NOTHROW(TemperatureSchedule({0.0, 1.0}));
}

TEST_CASE("WBIC temperature is 1/log n") {
    CHECK_THAT(wbic_temperature(42).value(), WithinRel(0.26754, 1e-4));
    CHECK_THAT(wbic_temperature(532).value(), WithinRel(1.0 / std::log(532.0), 1e-15));
    CHECK_THAT(wbic_temperature(3).value(), WithinRel(0.910239, 1e-6));
    CHECK_THROWS_AS(wbic_temperature(2), std::domain_error);
    CHECK_THROWS_AS(wbic_temperature(1), std::domain_error);
}

TEST_CASE("deviance trace discards burn-in") {
    DevianceTrace tr(Temperature(0.5), {10.0, 20.0, 1.0, 2.0, 3.0}, 2);
    CHECK(tr.retained().size() == 3);
    CHECK(expected_log_deviance(tr) == 2.0);
    CHECK(variance_log_deviance(tr) == 1.0);
    CHECK_THROWS_AS(DevianceTrace(Temperature(0.5), {1.0, 2.0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(DevianceTrace(Temperature(0.5), {1.0, std::nan(""), 2.0}, 0), std::invalid_argument);
}

TEST_CASE("sample moments agree with a two-pass computation") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> d(1e6, 3.0);
    std::vector<double> x(10001);
    for (auto& v : x) {
        v = d(rng);
    }
    long double s = 0.0L;
    for (double v : x) {
        s += v;
    }
    const long double mean = s / x.size();
    long double ss = 0.0L;
    for (double v : x) {
        ss += (v - mean) * (v - mean);
    }
    CHECK_THAT(sample_mean(x), WithinRel(static_cast<double>(mean), 1e-15));
    CHECK_THAT(sample_variance(x), WithinRel(static_cast<double>(ss / (x.size() - 1)), 1e-9));
}

TEST_CASE("batch means standard error on iid and AR(1) sequences") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z(0.0, 1.0);
    const std::size_t n = 200000;
    std::vector<double> iid(n), ar(n);
    const double rho = 0.9;
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        iid[i] = z(rng);
        prev = rho * prev + std::sqrt(1.0 - rho * rho) * z(rng);
        ar[i] = prev;
    }
    CHECK_THAT(batch_means_standard_error(iid), WithinRel(1.0 / std::sqrt(double(n)), 0.25));
    // AR(1) with unit marginal variance: asymptotic variance (1 + rho)/(1 - rho)
    const double ar_se = std::sqrt((1.0 + rho) / (1.0 - rho) / double(n));
    CHECK_THAT(batch_means_standard_error(ar), WithinRel(ar_se, 0.3));
    CHECK_THROWS_AS(batch_means_standard_error(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("evidence method names round-trip") {
    for (auto m : {EvidenceMethod::wbic, EvidenceMethod::pp_standard, EvidenceMethod::pp_corrected,
                   EvidenceMethod::exact, EvidenceMethod::oracle_t}) {
        CHECK(parse_evidence_method(to_string(m)) == m);
    }
    CHECK_THROWS(parse_evidence_method("bridge"));
}

TEST_CASE("chain config validation") {
    CHECK_NOTHROW(ChainConfig{100, 10}.validate());
    CHECK_THROWS_AS((ChainConfig{10, 10}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ChainConfig{0, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ChainConfig{11, 10}.validate()), std::invalid_argument);
}

TEST_CASE("derived seeds are stable and distinct") {
    static_assert(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t r = 0; r < 100; ++r) {
        for (std::uint64_t j = 0; j < 50; ++j) {
            seen.insert(derive_seed(12345, r, j));
        }
    }
    CHECK(seen.size() == 5000);
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; }, 4);
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));

    try {
        parallel_for(
            100,
            [](std::size_t i) {
                if (i == 17 || i == 63) {
                    throw std::runtime_error(std::to_string(i));
                }
            },
            4);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "17");
    }
}
