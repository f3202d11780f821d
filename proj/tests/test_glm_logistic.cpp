#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wbic/core.hpp"
#include "wbic/glm_logistic.hpp"

using namespace wbic;
using namespace wbic::logistic;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using boost::math::quadrature::gauss_kronrod;

namespace {

struct Synthetic {
    MatrixXd x;
    VectorXd y;
};

Synthetic simulate(Eigen::Index n, const VectorXd& beta, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Eigen::Index k = beta.size();
    Synthetic s{MatrixXd(n, k), VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        s.x(i, 0) = 1.0;
        for (Eigen::Index j = 1; j < k; ++j) {
            s.x(i, j) = z(rng);
        }
        const double p = 1.0 / (1.0 + std::exp(-s.x.row(i).dot(beta)));
        s.y[i] = u(rng) < p ? 1.0 : 0.0;
    }
    return s;
}

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

double naive_log_lik(const Synthetic& s, const VectorXd& theta) {
    double prod = 1.0;
    for (Eigen::Index i = 0; i < s.y.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-s.x.row(i).dot(theta)));
        prod *= s.y[i] == 1.0 ? p : 1.0 - p;
    }
    return std::log(prod);
}

}  // namespace

TEST_CASE("log-likelihood") {
    const auto s = simulate(12, vec({0.3, -1.0}), 1);
    const LogisticModelSpec spec(s.x, s.y, IsotropicPrior{});
    CHECK_THAT(log_likelihood_logistic(spec, VectorXd::Zero(2)), WithinRel(12.0 * std::log(0.5), 1e-15));

    const LogisticModelSpec single(MatrixXd::Ones(1, 1), VectorXd::Ones(1), IsotropicPrior{});
    CHECK_THAT(log_likelihood_logistic(single, VectorXd::Zero(1)), WithinRel(std::log(0.5), 1e-15));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const auto d = simulate(15, vec({0.5, 1.0, -0.5}), 100 + rep);
        const LogisticModelSpec sp(d.x, d.y, IsotropicPrior{});
        const VectorXd theta = vec({z(rng), z(rng), z(rng)});
        CHECK_THAT(log_likelihood_logistic(sp, theta), WithinAbs(naive_log_lik(d, theta), 1e-12));
    }
    CHECK(std::isfinite(log_likelihood_logistic(single, vec({800.0}))));
    CHECK(std::isfinite(log_likelihood_logistic(single, vec({-800.0}))));
}

TEST_CASE("gradient and Hessian match finite differences") {
    const auto s = simulate(40, vec({-0.2, 0.8, 0.4}), 3);
    const LogisticModelSpec spec(s.x, s.y, IsotropicPrior{});
    const VectorXd theta = vec({0.1, 0.5, -0.3});
    const VectorXd g = gradient_logistic(spec, theta);
    const MatrixXd h = hessian_logistic(spec, theta);
    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < 3; ++j) {
        VectorXd up = theta, dn = theta;
        up[j] += eps;
        dn[j] -= eps;
        CHECK_THAT(g[j], WithinAbs((log_likelihood_logistic(spec, up) - log_likelihood_logistic(spec, dn)) / (2 * eps),
                                   1e-6));
        const VectorXd col = (gradient_logistic(spec, up) - gradient_logistic(spec, dn)) / (2 * eps);
        for (Eigen::Index i = 0; i < 3; ++i) {
            CHECK_THAT(h(i, j), WithinAbs(col[i], 1e-6));
        }
    }

    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0.0, 3.0);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::SelfAdjointEigenSolver<MatrixXd> es(hessian_logistic(spec, vec({z(rng), z(rng), z(rng)})));
        CHECK(es.eigenvalues().maxCoeff() < 0.0);
    }
}

TEST_CASE("prior densities") {
    const LogisticModelSpec two(MatrixXd::Ones(3, 2), vec({1, 0, 1}), IsotropicPrior{1.0});
    CHECK_THAT(log_prior_logistic(two, VectorXd::Zero(2)), WithinAbs(std::log(1.0 / (2 * M_PI)), 1e-15));
    const LogisticModelSpec five(MatrixXd::Ones(3, 5), vec({1, 0, 1}), IsotropicPrior{0.01});
    CHECK_THAT(log_prior_logistic(five, VectorXd::Zero(5)), WithinAbs(2.5 * std::log(0.01 / (2 * M_PI)), 1e-13));

    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 1.0);
    for (Eigen::Index d = 1; d <= 7; ++d) {
        MatrixXd a(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                a(i, j) = z(rng);
            }
        }
        const MatrixXd cov = a * a.transpose() + 0.5 * MatrixXd::Identity(d, d);
        VectorXd mean(d), theta(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            mean[i] = z(rng);
            theta[i] = z(rng);
        }
        const LogisticModelSpec spec(MatrixXd::Ones(2, d), vec({1, 0}), MvnPrior{mean, cov});
        const VectorXd dev = theta - mean;
        const double naive = -0.5 * d * std::log(2 * M_PI) - 0.5 * std::log(cov.determinant()) -
                             0.5 * dev.dot(cov.inverse() * dev);
        CHECK_THAT(log_prior_logistic(spec, theta), WithinAbs(naive, 1e-10));
    }
}

TEST_CASE("maximum likelihood") {
    SECTION("intercept only") {
        VectorXd y = VectorXd::Zero(30);
        y.head(12).setOnes();
        const LogisticModelSpec spec(MatrixXd::Ones(30, 1), y, IsotropicPrior{});
        const auto fit = fit_mle_logistic(spec);
        CHECK_THAT(fit.theta[0], WithinAbs(std::log(12.0 / 18.0), 1e-10));
    }

    SECTION("grid-refined maximization") {
        const auto s = simulate(60, vec({0.4, -1.1}), 5);
        const LogisticModelSpec spec(s.x, s.y, IsotropicPrior{});
        const auto fit = fit_mle_logistic(spec);
        double c0 = 0.0, c1 = 0.0, width = 10.0;
        for (int level = 0; level < 30; ++level) {
            double best = -INFINITY, b0 = c0, b1 = c1;
            for (int i = -20; i <= 20; ++i) {
                for (int j = -20; j <= 20; ++j) {
                    const VectorXd th = vec({c0 + width * i / 40.0, c1 + width * j / 40.0});
                    const double ll = log_likelihood_logistic(spec, th);
                    if (ll > best) {
                        best = ll;
                        b0 = th[0];
                        b1 = th[1];
                    }
                }
            }
            c0 = b0;
            c1 = b1;
            width /= 4.0;
        }
        CHECK_THAT(fit.theta[0], WithinAbs(c0, 1e-6));
        CHECK_THAT(fit.theta[1], WithinAbs(c1, 1e-6));
        CHECK(gradient_logistic(spec, fit.theta).norm() < 1e-8);
        CHECK(fit.observed_information.isApprox(-hessian_logistic(spec, fit.theta), 1e-12));
    }

    SECTION("separable data") {
        MatrixXd x(6, 2);
        x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
        const LogisticModelSpec spec(x, vec({0, 0, 0, 1, 1, 1}), IsotropicPrior{});
        CHECK_THROWS_AS(fit_mle_logistic(spec), ConvergenceError);
    }
}

TEST_CASE("unit-information prior") {
    // orthonormal design scaled so that X'X = I
    const Eigen::Index n = 100;
    MatrixXd q = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(n, 3)).householderQ() * MatrixXd::Identity(n, 3);
    const auto s = simulate(n, vec({0.0, 0.0, 0.0}), 6);
    const LogisticModelSpec spec(q, s.y, IsotropicPrior{});
    const auto printed = unit_information_prior_logistic(spec, UnitInformationCovariance::printed);
    CHECK(printed.covariance.isApprox(MatrixXd::Identity(3, 3) / 100.0, 1e-10));
    const auto conventional = unit_information_prior_logistic(spec, UnitInformationCovariance::conventional);
    CHECK(conventional.covariance.isApprox(MatrixXd::Identity(3, 3) * 100.0, 1e-10));
    CHECK(printed.mean.isApprox(fit_mle_logistic(spec).theta));

    const auto d = simulate(80, vec({0.2, 0.7, -0.4}), 7);
    const auto prior = unit_information_prior_logistic(LogisticModelSpec(d.x, d.y, IsotropicPrior{}));
    CHECK(prior.covariance.isApprox(prior.covariance.transpose()));
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(prior.covariance).eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("tempered sampler at t = 0 targets the prior") {
    const auto s = simulate(50, vec({0.3, 0.8}), 8);
    const LogisticModelSpec spec(s.x, s.y, MvnPrior{vec({1.0, -2.0}), MatrixXd::Identity(2, 2) * 0.5});
    const LogisticModel model(spec);
    static_assert(TemperedModel<LogisticModel>);
    std::vector<double> m0, m1;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        VectorXd mean;
        (void)model.sample_tempered(Temperature(0.0), ChainConfig{20000, 2000}, seed, &mean);
        m0.push_back(mean[0]);
        m1.push_back(mean[1]);
    }
    CHECK(std::abs(sample_mean(m0) - 1.0) < 3.0 * std::sqrt(sample_variance(m0) / 10.0));
    CHECK(std::abs(sample_mean(m1) + 2.0) < 3.0 * std::sqrt(sample_variance(m1) / 10.0));
}

TEST_CASE("tempered sampler at t = 1 matches 2-D quadrature") {
    const auto s = simulate(15, vec({0.2, 1.0}), 11);
    const LogisticModelSpec spec(s.x, s.y, IsotropicPrior{0.01});
    const auto fit = fit_mle_logistic(spec);
    const MatrixXd cov = (fit.observed_information + spec.prior_precision()).inverse();
    auto log_post = [&](double a, double b) {
        const VectorXd th = vec({a, b});
        return log_likelihood_logistic(spec, th) + log_prior_logistic(spec, th);
    };
    const double c = log_post(fit.theta[0], fit.theta[1]);
    auto integrate = [&](auto g) {
        const double w0 = 15.0 * std::sqrt(cov(0, 0)), w1 = 15.0 * std::sqrt(cov(1, 1));
        return gauss_kronrod<double, 31>::integrate(
            [&](double a) {
                return gauss_kronrod<double, 31>::integrate(
                    [&](double b) { return g(a, b) * std::exp(log_post(a, b) - c); }, fit.theta[1] - w1,
                    fit.theta[1] + w1, 10, 1e-10);
            },
            fit.theta[0] - w0, fit.theta[0] + w0, 10, 1e-10);
    };
    const double z = integrate([](double, double) { return 1.0; });
    const double e = integrate([&](double a, double b) { return log_likelihood_logistic(spec, vec({a, b})); }) / z;

    const LogisticModel model(spec);
    const auto trace = model.sample_tempered(Temperature(1.0), ChainConfig{100000, 10000}, 12);
    const double se = batch_means_standard_error(trace.retained());
    CHECK(std::abs(expected_log_deviance(trace) - e) < 3.0 * se);
    const double acc = trace.diagnostics().at("acceptance_rate");
    CHECK(acc > 0.1);
    CHECK(acc < 0.7);
}

TEST_CASE("sampler is deterministic per seed") {
    const auto s = simulate(30, vec({0.2, 1.0, -0.5}), 13);
    const LogisticModel model(LogisticModelSpec(s.x, s.y, IsotropicPrior{}));
    const auto a = model.sample_tempered(Temperature(0.3), ChainConfig{2000, 200}, 99);
    const auto b = tempered_rwm_logistic(model.spec(), Temperature(0.3), ChainConfig{2000, 200}, 99);
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST_CASE("standardized design") {
    MatrixXd raw(5, 2);
    raw << 1, 10, 2, 20, 3, 35, 4, 40, 5, 55;
    const MatrixXd x = standardized_design(raw);
    REQUIRE(x.cols() == 3);
    CHECK(x.col(0).isOnes());
    for (Eigen::Index j = 1; j < 3; ++j) {
        CHECK_THAT(x.col(j).mean(), WithinAbs(0.0, 1e-14));
        CHECK_THAT(x.col(j).squaredNorm() / 5.0, WithinAbs(1.0, 1e-14));
    }
    MatrixXd constant = MatrixXd::Ones(4, 1);
    CHECK_THROWS_AS(standardized_design(constant), std::invalid_argument);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(LogisticModelSpec(MatrixXd::Ones(2, 1), vec({1, 2}), IsotropicPrior{}), std::invalid_argument);
    CHECK_THROWS_AS(LogisticModelSpec(MatrixXd::Ones(2, 1), vec({1, 0}), IsotropicPrior{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(LogisticModelSpec(MatrixXd::Ones(2, 2), vec({1, 0}), MvnPrior{VectorXd::Zero(2), -MatrixXd::Identity(2, 2)}),
                    NumericalRankError);
}
