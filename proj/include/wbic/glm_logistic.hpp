#pragma once

// Bayesian logistic regression: likelihood, Gaussian priors, IRLS maximum
// likelihood, and a preconditioned random-walk Metropolis power-posterior sampler.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "wbic/core.hpp"

namespace wbic::logistic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// theta ~ N(0, tau^{-1} I).
struct IsotropicPrior {
    double precision = 0.01;
};

/// theta ~ MVN(mean, covariance).
struct MvnPrior {
    VectorXd mean;
    MatrixXd covariance;
};

using LogisticPrior = std::variant<IsotropicPrior, MvnPrior>;

class LogisticModelSpec {
public:
    LogisticModelSpec(MatrixXd design, VectorXd response, LogisticPrior prior)
        : x_(std::move(design)), y_(std::move(response)), prior_(std::move(prior)) {
        if (x_.rows() == 0 || x_.cols() == 0 || y_.size() != x_.rows()) {
            throw std::invalid_argument("LogisticModelSpec: design and response dimensions disagree");
        }
        for (Eigen::Index i = 0; i < y_.size(); ++i) {
            if (y_[i] != 0.0 && y_[i] != 1.0) {
                throw std::invalid_argument("LogisticModelSpec: response must be binary, row " + std::to_string(i));
            }
        }
        if (const auto* iso = std::get_if<IsotropicPrior>(&prior_)) {
            if (!(iso->precision > 0.0)) {
                throw std::invalid_argument("LogisticModelSpec: prior precision must be positive");
            }
            prior_precision_ = MatrixXd::Identity(x_.cols(), x_.cols()) * iso->precision;
            prior_mean_ = VectorXd::Zero(x_.cols());
            prior_log_det_cov_ = -static_cast<double>(x_.cols()) * std::log(iso->precision);
        } else {
            const auto& mvn = std::get<MvnPrior>(prior_);
            if (mvn.mean.size() != x_.cols() || mvn.covariance.rows() != x_.cols() ||
                mvn.covariance.cols() != x_.cols()) {
                throw std::invalid_argument("LogisticModelSpec: MVN prior dimension must match the design");
            }
            Eigen::LLT<MatrixXd> llt(mvn.covariance);
            if (llt.info() != Eigen::Success) {
                throw NumericalRankError("LogisticModelSpec: prior covariance is not positive definite");
            }
            cov_llt_ = llt;
            prior_mean_ = mvn.mean;
            prior_precision_ = llt.solve(MatrixXd::Identity(x_.cols(), x_.cols()));
            prior_log_det_cov_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        }
    }

    [[nodiscard]] const MatrixXd& design() const noexcept { return x_; }
    [[nodiscard]] const VectorXd& response() const noexcept { return y_; }
    [[nodiscard]] const LogisticPrior& prior() const noexcept { return prior_; }
    [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(x_.rows()); }
    /// Number of coefficients, intercept included (d + 1).
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.cols()); }
    [[nodiscard]] const VectorXd& prior_mean() const noexcept { return prior_mean_; }
    [[nodiscard]] const MatrixXd& prior_precision() const noexcept { return prior_precision_; }
    [[nodiscard]] double prior_log_det_covariance() const noexcept { return prior_log_det_cov_; }
    [[nodiscard]] const Eigen::LLT<MatrixXd>& covariance_factor() const noexcept { return cov_llt_; }

    [[nodiscard]] LogisticModelSpec with_prior(LogisticPrior prior) const { return {x_, y_, std::move(prior)}; }

private:
    MatrixXd x_;
    VectorXd y_;
    LogisticPrior prior_;
    VectorXd prior_mean_;
    MatrixXd prior_precision_;
    double prior_log_det_cov_ = 0.0;
    Eigen::LLT<MatrixXd> cov_llt_;
};

/// sum_i [y_i eta_i - log(1 + exp(eta_i))], eta = X theta.
inline double log_likelihood_logistic(const LogisticModelSpec& spec, const VectorXd& theta) {
    const VectorXd eta = spec.design() * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        ll += spec.response()[i] * eta[i] - log1p_exp(eta[i]);
    }
    return ll;
}

inline VectorXd gradient_logistic(const LogisticModelSpec& spec, const VectorXd& theta) {
    const VectorXd eta = spec.design() * theta;
    VectorXd r(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        r[i] = spec.response()[i] - sigmoid(eta[i]);
    }
    return spec.design().transpose() * r;
}

/// Hessian of the log-likelihood, -X' W X with W = diag(p_i (1 - p_i)).
inline MatrixXd hessian_logistic(const LogisticModelSpec& spec, const VectorXd& theta) {
    const VectorXd eta = spec.design() * theta;
    VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double p = sigmoid(eta[i]);
        w[i] = p * (1.0 - p);
    }
    return -(spec.design().transpose() * w.asDiagonal() * spec.design());
}

/// Normalized Gaussian log prior density over all d + 1 coefficients.
inline double log_prior_logistic(const LogisticModelSpec& spec, const VectorXd& theta) {
    const double k = static_cast<double>(spec.dim());
    if (const auto* iso = std::get_if<IsotropicPrior>(&spec.prior())) {
        return 0.5 * k * (std::log(iso->precision) - log_two_pi) - 0.5 * iso->precision * theta.squaredNorm();
    }
    const VectorXd dev = theta - spec.prior_mean();
    const VectorXd w = spec.covariance_factor().matrixL().solve(dev);
    return -0.5 * (k * log_two_pi + spec.prior_log_det_covariance() + w.squaredNorm());
}

struct MleFit {
    VectorXd theta;
    MatrixXd observed_information;  // -Hessian at theta
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
};

/// Newton-Raphson (IRLS) with step halving. Separable data are reported as a
/// ConvergenceError, either because ||theta|| exceeds 1e4 or because the
/// observed information collapses at the apparent optimum.
inline MleFit fit_mle_logistic(const LogisticModelSpec& spec, std::size_t max_iterations = 200,
                               double grad_tol = 1e-8) {
    // a vanishing gradient with vanishing information means the fit ran off to infinity
    const double info_floor =
        1e-7 * Eigen::SelfAdjointEigenSolver<MatrixXd>(spec.design().transpose() * spec.design(),
                                                        Eigen::EigenvaluesOnly)
                    .eigenvalues()
                    .maxCoeff();
    auto checked = [&](MleFit fit) {
        const double smallest =
            Eigen::SelfAdjointEigenSolver<MatrixXd>(fit.observed_information, Eigen::EigenvaluesOnly)
                .eigenvalues()
                .minCoeff();
        if (!(smallest > info_floor)) {
            throw ConvergenceError("fit_mle_logistic: observed information vanishes at the optimum; data are separable");
        }
        return fit;
    };
    VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(spec.dim()));
    double ll = log_likelihood_logistic(spec, theta);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const VectorXd g = gradient_logistic(spec, theta);
        const double gnorm = g.norm();
        const MatrixXd info = -hessian_logistic(spec, theta);
        if (gnorm < grad_tol) {
            return checked({theta, info, it, gnorm});
        }
        Eigen::LDLT<MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw ConvergenceError("fit_mle_logistic: observed information is singular (separable data?)");
        }
        VectorXd step = ldlt.solve(g);
        double scale = 1.0;
        VectorXd next = theta + step;
        double next_ll = log_likelihood_logistic(spec, next);
        while (next_ll < ll && scale > 1e-10) {
            scale *= 0.5;
            next = theta + scale * step;
            next_ll = log_likelihood_logistic(spec, next);
        }
        theta = next;
        ll = next_ll;
        if (theta.norm() > 1e4) {
            throw ConvergenceError("fit_mle_logistic: coefficients diverged (||theta|| > 1e4); data may be separable");
        }
    }
    const VectorXd g = gradient_logistic(spec, theta);
    if (g.norm() < grad_tol) {
        return checked({theta, -hessian_logistic(spec, theta), max_iterations, g.norm()});
    }
    throw ConvergenceError("fit_mle_logistic: no convergence after " + std::to_string(max_iterations) +
                           " iterations (gradient norm " + std::to_string(g.norm()) + ")");
}

enum class UnitInformationCovariance {
    /// (X'X)^{-1} / n, as written for the Pima unit-information prior.
    printed,
    /// n (X'X)^{-1}, the conventional one-observation scaling.
    conventional,
};

/// MVN prior centred at the MLE with covariance from the design.
inline MvnPrior unit_information_prior_logistic(const LogisticModelSpec& spec,
                                                UnitInformationCovariance kind = UnitInformationCovariance::printed) {
    const auto fit = fit_mle_logistic(spec);
    const double n = static_cast<double>(spec.n());
    Eigen::LLT<MatrixXd> llt(spec.design().transpose() * spec.design());
    if (llt.info() != Eigen::Success) {
        throw NumericalRankError("unit_information_prior_logistic: X'X is singular");
    }
    MatrixXd inv = llt.solve(MatrixXd::Identity(static_cast<Eigen::Index>(spec.dim()), static_cast<Eigen::Index>(spec.dim())));
    inv = 0.5 * (inv + inv.transpose());
    return {fit.theta, kind == UnitInformationCovariance::printed ? MatrixXd(inv / n) : MatrixXd(inv * n)};
}

struct RwmOptions {
    /// Scale on the preconditioned space; <= 0 selects 2.38 / sqrt(d + 1).
    double proposal_scale = 0.0;
};

/// Tempered random-walk Metropolis targeting f(y|theta)^t p(theta).
///
/// The proposal covariance is scale^2 (t I(thetahat) + P0)^{-1}, where
/// I(thetahat) is the observed information at the MLE and P0 the prior
/// precision. At t = 1 this is approximately the inverse observed information.
/// The chain starts at the mode of the matching Gaussian approximation.
class LogisticModel {
public:
    using Parameter = VectorXd;

    explicit LogisticModel(LogisticModelSpec spec, RwmOptions options = {})
        : spec_(std::move(spec)), options_(options), mle_(fit_mle_logistic(spec_)) {}

    [[nodiscard]] const LogisticModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const MleFit& mle() const noexcept { return mle_; }
    [[nodiscard]] double log_likelihood(const VectorXd& theta) const { return log_likelihood_logistic(spec_, theta); }
    [[nodiscard]] double log_prior(const VectorXd& theta) const { return log_prior_logistic(spec_, theta); }
    [[nodiscard]] std::size_t dimension() const noexcept { return spec_.dim(); }
    [[nodiscard]] std::size_t sample_count() const noexcept { return spec_.n(); }

    [[nodiscard]] DevianceTrace sample_tempered(Temperature temp, const ChainConfig& chain, std::uint64_t seed,
                                                VectorXd* mean_out = nullptr) const {
        chain.validate();
        const double t = temp.value();
        const auto k = static_cast<Eigen::Index>(spec_.dim());
        const double scale =
            options_.proposal_scale > 0.0 ? options_.proposal_scale : 2.38 / std::sqrt(static_cast<double>(k));

        const MatrixXd precision = t * mle_.observed_information + spec_.prior_precision();
        Eigen::LLT<MatrixXd> llt(precision);
        if (llt.info() != Eigen::Success) {
            throw NumericalRankError("tempered_rwm_logistic: proposal precision is not positive definite");
        }
        const MatrixXd upper = llt.matrixU();
        VectorXd theta =
            llt.solve(t * mle_.observed_information * mle_.theta + spec_.prior_precision() * spec_.prior_mean());

        std::mt19937_64 rng(seed);
        std::normal_distribution<double> stdnorm(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double ll = log_likelihood(theta);
        double lp = log_prior(theta);
        std::size_t accepted = 0;
        std::vector<double> trace(chain.iterations);
        VectorXd z(k);
        VectorXd running = VectorXd::Zero(k);
        for (std::size_t i = 0; i < chain.iterations; ++i) {
            for (Eigen::Index j = 0; j < k; ++j) {
                z[j] = stdnorm(rng);
            }
            const VectorXd prop = theta + scale * upper.triangularView<Eigen::Upper>().solve(z);
            const double prop_ll = log_likelihood(prop);
            const double prop_lp = log_prior(prop);
            const double log_ratio = t * (prop_ll - ll) + (prop_lp - lp);
            if (log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio) {
                theta = prop;
                ll = prop_ll;
                lp = prop_lp;
                ++accepted;
            }
            trace[i] = ll;
            if (i >= chain.burn_in) {
                running += theta;
            }
        }
        if (mean_out) {
            *mean_out = running / static_cast<double>(chain.iterations - chain.burn_in);
        }
        const double rate = static_cast<double>(accepted) / static_cast<double>(chain.iterations);
        std::map<std::string, double> diag{{"acceptance_rate", rate}, {"proposal_scale", scale}};
        if (rate < 0.05 || rate > 0.8) {
            diag["acceptance_warning"] = 1.0;
        }
        return DevianceTrace(temp, std::move(trace), chain.burn_in, std::move(diag));
    }

private:
    LogisticModelSpec spec_;
    RwmOptions options_;
    MleFit mle_;
};

/// Free-function form of the sampler.
inline DevianceTrace tempered_rwm_logistic(const LogisticModelSpec& spec, Temperature t, const ChainConfig& chain,
                                           std::uint64_t seed, RwmOptions options = {}) {
    return LogisticModel(spec, options).sample_tempered(t, chain, seed);
}

/// Standardizes each column of `covariates` (population standard deviation)
/// and prepends an intercept column.
inline MatrixXd standardized_design(const MatrixXd& covariates) {
    MatrixXd x(covariates.rows(), covariates.cols() + 1);
    x.col(0).setOnes();
    const double n = static_cast<double>(covariates.rows());
    for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
        const double mean = covariates.col(j).mean();
        const double sd = std::sqrt((covariates.col(j).array() - mean).square().sum() / n);
        if (!(sd > 0.0)) {
            throw std::invalid_argument("standardized_design: column " + std::to_string(j) + " is constant");
        }
        x.col(j + 1) = (covariates.col(j).array() - mean) / sd;
    }
    return x;
}

}  // namespace wbic::logistic
