#pragma once

// Closed forms for the tractable normal model
//
//     y_i ~ N(theta, 1),  i = 1..n,     theta ~ N(m, v),
//
// whose power posterior is theta | y, t ~ N(m_t, v_t) with
// v_t = 1 / (n t + 1/v) and m_t = (n t ybar + m/v) v_t.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "wbic/core.hpp"

namespace wbic::normal {

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

class NormalModelSpec {
public:
    NormalModelSpec(std::vector<double> y, double prior_mean, double prior_variance)
        : y_(std::move(y)), prior_mean_(prior_mean), prior_variance_(prior_variance) {
        if (y_.empty()) {
            throw std::invalid_argument("NormalModelSpec: need at least one observation");
        }
        if (!(prior_variance_ > 0.0) || !std::isfinite(prior_variance_)) {
            throw std::invalid_argument("NormalModelSpec: prior variance must be positive and finite");
        }
        ybar_ = sample_mean(y_);
        for (double v : y_) {
            centered_ss_ += (v - ybar_) * (v - ybar_);
            sum_sq_ += v * v;
        }
    }

    [[nodiscard]] std::span<const double> data() const noexcept { return y_; }
    [[nodiscard]] std::size_t n() const noexcept { return y_.size(); }
    [[nodiscard]] double prior_mean() const noexcept { return prior_mean_; }
    [[nodiscard]] double prior_variance() const noexcept { return prior_variance_; }
    [[nodiscard]] double ybar() const noexcept { return ybar_; }
    /// sum (y_i - ybar)^2
    [[nodiscard]] double centered_ss() const noexcept { return centered_ss_; }
    /// sum y_i^2
    [[nodiscard]] double sum_sq() const noexcept { return sum_sq_; }

private:
    std::vector<double> y_;
    double prior_mean_;
    double prior_variance_;
    double ybar_ = 0.0;
    double centered_ss_ = 0.0;
    double sum_sq_ = 0.0;
};

/// Subtracts ybar from the data and centres the prior at zero.
inline NormalModelSpec mean_corrected(std::span<const double> y, double prior_variance = 1.0) {
    const double ybar = sample_mean(y);
    std::vector<double> centred(y.begin(), y.end());
    for (double& v : centred) {
        v -= ybar;
    }
    return NormalModelSpec(std::move(centred), 0.0, prior_variance);
}

/// n i.i.d. N(mean, 1) observations from a seeded stream.
inline std::vector<double> simulate_normal_data(std::size_t n, double mean, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> draw(mean, 1.0);
    std::vector<double> y(n);
    for (double& v : y) {
        v = draw(rng);
    }
    return y;
}

/// Power posterior N(m_t, v_t) at a temperature.
struct ConjugateNormalState {
    Temperature t;
    double mean = 0.0;
    double variance = 1.0;
};

inline ConjugateNormalState power_posterior_params(const NormalModelSpec& spec, Temperature t) {
    const double nt = static_cast<double>(spec.n()) * t.value();
    const double precision = nt + 1.0 / spec.prior_variance();
    const double vt = 1.0 / precision;
    const double mt = (nt * spec.ybar() + spec.prior_mean() / spec.prior_variance()) * vt;
    return {t, mt, vt};
}

/// log f(y | theta) for the unit-variance normal likelihood.
inline double log_likelihood_normal(const NormalModelSpec& spec, double theta) {
    const double n = static_cast<double>(spec.n());
    const double d = theta - spec.ybar();
    return -0.5 * n * log_two_pi - 0.5 * spec.centered_ss() - 0.5 * n * d * d;
}

/// E_{theta|y,t} log f(y|theta).
inline double expected_log_deviance_normal(const NormalModelSpec& spec, Temperature t) {
    const double n = static_cast<double>(spec.n());
    const double v = spec.prior_variance();
    const double shift = spec.prior_mean() - spec.ybar();
    const double damp = v * n * t.value() + 1.0;
    return -0.5 * n * log_two_pi - 0.5 * spec.centered_ss() - 0.5 * n * shift * shift / (damp * damp) -
           0.5 * n / (n * t.value() + 1.0 / v);
}

/// V_{theta|y,t} log f(y|theta).
///
/// log f = c - (n/2)(theta - ybar)^2 and theta - ybar ~ N(d, v_t), d = m_t - ybar,
/// so Var = (n^2/4) Var[(theta - ybar)^2] = (n^2/4)(2 v_t^2 + 4 d^2 v_t).
inline double variance_log_deviance_normal(const NormalModelSpec& spec, Temperature t) {
    const auto s = power_posterior_params(spec, t);
    const double n = static_cast<double>(spec.n());
    const double d = s.mean - spec.ybar();
    return n * n * s.variance * (0.5 * s.variance + d * d);
}

/// log p(y), with v* = 1/(n + 1/v) the posterior variance.
inline double log_evidence_normal(const NormalModelSpec& spec) {
    const double n = static_cast<double>(spec.n());
    const double m = spec.prior_mean();
    const double v = spec.prior_variance();
    const double post_precision = n + 1.0 / v;
    const double sum_y = n * spec.ybar();
    const double cross = sum_y + m / v;
    // v / v* = v (n + 1/v) = n v + 1
    return -0.5 * n * log_two_pi - 0.5 * std::log1p(n * v) -
           0.5 * (spec.sum_sq() + m * m / v - cross * cross / post_precision);
}

/// log z_t(y) = log of the integral of f(y|theta)^t p(theta) over theta.
inline double log_normalizer_normal(const NormalModelSpec& spec, Temperature t) {
    const double n = static_cast<double>(spec.n());
    const double tn = n * t.value();
    const double v = spec.prior_variance();
    const double shift = spec.prior_mean() - spec.ybar();
    return -t.value() * (0.5 * n * log_two_pi + 0.5 * spec.centered_ss()) - 0.5 * std::log1p(tn * v) -
           0.5 * tn * shift * shift / (1.0 + tn * v);
}

/// log density of N(mean, variance) at x.
inline double log_density(const ConjugateNormalState& s, double x) {
    const double d = x - s.mean;
    return -0.5 * (log_two_pi + std::log(s.variance) + d * d / s.variance);
}

/// KL(from || to) between univariate normals.
inline double kl_gaussian(const ConjugateNormalState& from, const ConjugateNormalState& to) {
    const double d = from.mean - to.mean;
    const double ratio = from.variance / to.variance;
    const double kl = 0.5 * (ratio + d * d / to.variance - 1.0 - std::log(ratio));
    return kl < 0.0 ? 0.0 : kl;
}

/// Temperature t* at which E_{theta|y,t} log f equals log p(y), by bisection on
/// g(t) = E_t log f - log p(y), which is increasing in t.
inline Temperature optimal_temperature_normal(const NormalModelSpec& spec, double tol = 1e-10) {
    if (!(tol > 0.0)) {
        throw std::invalid_argument("optimal_temperature_normal: tolerance must be positive");
    }
    const double target = log_evidence_normal(spec);
    auto g = [&](double t) { return expected_log_deviance_normal(spec, Temperature(t)) - target; };
    double lo = 0.0, hi = 1.0;
    const double g_lo = g(lo), g_hi = g(hi);
    if (!(g_lo < 0.0) || !(g_hi > 0.0)) {
        throw BracketingError("optimal_temperature_normal: g(0) = " + std::to_string(g_lo) +
                              ", g(1) = " + std::to_string(g_hi) + " do not bracket a root");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if (g(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return Temperature(0.5 * (lo + hi));
}

/// WBIC value computed from the closed-form expectation at t_w = 1/log(n).
inline double wbic_analytic_normal(const NormalModelSpec& spec) {
    return expected_log_deviance_normal(spec, wbic_temperature(spec.n()));
}

/// Tractable normal model as a TemperedModel, sampled by random-walk Metropolis.
///
/// The proposal standard deviation is 2.4 sqrt(v_t), the optimal one-dimensional
/// scale for a Gaussian target; the chain starts from a prior draw.
class NormalModel {
public:
    using Parameter = double;

    explicit NormalModel(NormalModelSpec spec) : spec_(std::move(spec)) {}

    [[nodiscard]] const NormalModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] double log_likelihood(double theta) const { return log_likelihood_normal(spec_, theta); }
    [[nodiscard]] double log_prior(double theta) const {
        return log_density({Temperature(0.0), spec_.prior_mean(), spec_.prior_variance()}, theta);
    }
    [[nodiscard]] std::size_t dimension() const noexcept { return 1; }
    [[nodiscard]] std::size_t sample_count() const noexcept { return spec_.n(); }

    [[nodiscard]] DevianceTrace sample_tempered(Temperature t, const ChainConfig& chain, std::uint64_t seed) const {
        chain.validate();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> stdnorm(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double step = 2.4 * std::sqrt(power_posterior_params(spec_, t).variance);

        double theta = spec_.prior_mean() + std::sqrt(spec_.prior_variance()) * stdnorm(rng);
        double ll = log_likelihood(theta);
        double lp = log_prior(theta);
        std::size_t accepted = 0;
        std::vector<double> trace(chain.iterations);
        for (std::size_t i = 0; i < chain.iterations; ++i) {
            const double prop = theta + step * stdnorm(rng);
            const double prop_ll = log_likelihood(prop);
            const double prop_lp = log_prior(prop);
            const double log_ratio = t.value() * (prop_ll - ll) + (prop_lp - lp);
            if (log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio) {
                theta = prop;
                ll = prop_ll;
                lp = prop_lp;
                ++accepted;
            }
            trace[i] = ll;
        }
        return DevianceTrace(t, std::move(trace), chain.burn_in,
                             {{"acceptance_rate", static_cast<double>(accepted) / static_cast<double>(chain.iterations)}});
    }

private:
    NormalModelSpec spec_;
};

}  // namespace wbic::normal
