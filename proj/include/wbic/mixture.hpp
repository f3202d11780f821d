#pragma once

// Finite univariate Gaussian mixture with latent labels:
//
//     z_i ~ Categorical(w),  y_i | z_i = k ~ N(mu_k, sigma2_k)
//     mu_k ~ N(mu0, sigma0^2),  sigma2_k ~ Inverse-Gamma(alpha0, beta0),
//     w ~ Dirichlet(alpha, ..., alpha).
//
// Power posteriors are sampled by a Gibbs sweep in which the observation
// density is raised to the power t inside every conditional that involves it.
// The recorded deviance is the observed-data log-likelihood (labels summed out).
// For t < 1 the parameter marginal of this augmented chain is proportional to
// p(theta) prod_i sum_k w_k N(y_i; mu_k, sigma2_k)^t, which is not exactly
// f(y|theta)^t p(theta); at t = 0 and t = 1 the two coincide.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wbic/core.hpp"
#include "wbic/estimators.hpp"

namespace wbic::mixture {

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

struct MixtureSpec {
    std::size_t components = 3;
    double mu0 = 0.0;
    double sigma0_sq = 100.0;
    double alpha0 = 0.5;
    double beta0 = 0.5;
    double alpha = 4.0;

    void validate() const {
        if (components == 0) {
            throw std::invalid_argument("MixtureSpec: need at least one component");
        }
        if (!(sigma0_sq > 0.0) || !(alpha0 > 0.0) || !(beta0 > 0.0) || !(alpha > 0.0)) {
            throw std::invalid_argument("MixtureSpec: hyperparameters must be positive");
        }
    }
};

struct MixtureState {
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<double> weights;
    std::vector<std::size_t> labels;  // 0-based component index per observation

    void validate() const {
        const std::size_t k = means.size();
        if (k == 0 || variances.size() != k || weights.size() != k) {
            throw std::invalid_argument("MixtureState: component vectors must share a positive length");
        }
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (!(variances[j] > 0.0) || !(weights[j] > 0.0)) {
                throw std::invalid_argument("MixtureState: variances and weights must be positive");
            }
            total += weights[j];
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw std::invalid_argument("MixtureState: weights must sum to one");
        }
        for (auto z : labels) {
            if (z >= k) {
                throw std::invalid_argument("MixtureState: label out of range");
            }
        }
    }
};

/// n i.i.d. draws from sum_k w_k N(mu_k, sigma2_k). Weights need not be
/// normalized; zero weights are allowed.
inline std::vector<double> simulate_mixture(std::size_t n, std::span<const double> means,
                                            std::span<const double> variances, std::span<const double> weights,
                                            std::uint64_t seed) {
    if (means.empty() || means.size() != variances.size() || means.size() != weights.size()) {
        throw std::invalid_argument("simulate_mixture: parameter vectors must share a positive length");
    }
    for (std::size_t k = 0; k < means.size(); ++k) {
        if (!(variances[k] > 0.0) || weights[k] < 0.0) {
            throw std::invalid_argument("simulate_mixture: invalid variance or weight");
        }
    }
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::vector<double> y(n);
    for (double& v : y) {
        const std::size_t k = pick(rng);
        v = means[k] + std::sqrt(variances[k]) * stdnorm(rng);
    }
    return y;
}

inline double log_normal_density(double y, double mean, double variance) {
    const double d = y - mean;
    return -0.5 * (log_two_pi + std::log(variance) + d * d / variance);
}

/// sum_i log sum_k w_k N(y_i; mu_k, sigma2_k), log-sum-exp stabilized. Terms are
/// summed in sorted order, so the value is exactly invariant to relabeling.
inline double observed_log_likelihood_mixture(const MixtureState& state, std::span<const double> data) {
    const std::size_t k = state.means.size();
    std::vector<double> log_w(k), terms(k);
    for (std::size_t j = 0; j < k; ++j) {
        log_w[j] = std::log(state.weights[j]);
    }
    double total = 0.0;
    for (double y : data) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            terms[j] = log_w[j] + log_normal_density(y, state.means[j], state.variances[j]);
            peak = std::max(peak, terms[j]);
        }
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            s += std::exp(terms[j] - peak);
        }
        total += peak + std::log(s);
    }
    return total;
}

/// Per-component sufficient statistics for a label vector.
struct ComponentStats {
    std::vector<std::size_t> count;
    std::vector<double> sum;
};

inline ComponentStats component_stats(std::span<const std::size_t> labels, std::span<const double> data,
                                      std::size_t k) {
    ComponentStats s{std::vector<std::size_t>(k, 0), std::vector<double>(k, 0.0)};
    for (std::size_t i = 0; i < data.size(); ++i) {
        ++s.count[labels[i]];
        s.sum[labels[i]] += data[i];
    }
    return s;
}

/// Optional per-sweep callback for diagnostics that need the full state.
using SweepObserver = std::function<void(std::size_t, const MixtureState&)>;

/// Tempered Gibbs sampler. Per sweep, in order:
///   z_i = k          with probability proportional to w_k N(y_i; mu_k, sigma2_k)^t
///   w                ~ Dir(alpha + n_1, ..., alpha + n_K)
///   mu_k             ~ N(m_k, s_k^2), s_k^2 = (1/sigma0^2 + t n_k/sigma2_k)^{-1},
///                      m_k = s_k^2 (mu0/sigma0^2 + t sum_{C_k} y_i / sigma2_k)
///   sigma2_k         ~ IG(alpha0 + t n_k/2, beta0 + t sum_{C_k} (y_i - mu_k)^2 / 2)
/// Empty components (n_k = 0) draw from the prior. The initial state is a
/// prior draw with means sorted ascending.
inline DevianceTrace tempered_gibbs_mixture(const MixtureSpec& spec, std::span<const double> data, Temperature temp,
                                            const ChainConfig& chain, std::uint64_t seed,
                                            const SweepObserver& observer = {}) {
    spec.validate();
    chain.validate();
    if (data.empty()) {
        throw std::invalid_argument("tempered_gibbs_mixture: empty dataset");
    }
    const double t = temp.value();
    const std::size_t k = spec.components;
    const std::size_t n = data.size();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto gamma = [&](double shape) { return std::gamma_distribution<double>(shape, 1.0)(rng); };

    MixtureState state;
    state.means.resize(k);
    state.variances.resize(k);
    state.weights.assign(k, 1.0 / static_cast<double>(k));
    state.labels.assign(n, 0);
    for (std::size_t j = 0; j < k; ++j) {
        state.means[j] = spec.mu0 + std::sqrt(spec.sigma0_sq) * stdnorm(rng);
        state.variances[j] = spec.beta0 / gamma(spec.alpha0);
    }
    std::sort(state.means.begin(), state.means.end());

    std::vector<double> logp(k);
    std::vector<double> trace(chain.iterations);
    std::vector<double> ss(k);
    for (std::size_t it = 0; it < chain.iterations; ++it) {
        // labels
        for (std::size_t i = 0; i < n; ++i) {
            double peak = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                logp[j] = std::log(state.weights[j]) + t * log_normal_density(data[i], state.means[j], state.variances[j]);
                peak = std::max(peak, logp[j]);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                logp[j] = std::exp(logp[j] - peak);
                total += logp[j];
            }
            double u = unif(rng) * total;
            std::size_t pick = k - 1;
            for (std::size_t j = 0; j < k; ++j) {
                u -= logp[j];
                if (u <= 0.0) {
                    pick = j;
                    break;
                }
            }
            state.labels[i] = pick;
        }
        const auto stats = component_stats(state.labels, data, k);

        // weights
        double wsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            state.weights[j] = gamma(spec.alpha + static_cast<double>(stats.count[j]));
            wsum += state.weights[j];
        }
        for (double& w : state.weights) {
            w /= wsum;
            // a Dirichlet coordinate can underflow to zero for tiny alpha; keep it on the open simplex
            w = std::max(w, std::numeric_limits<double>::min());
        }

        // means
        for (std::size_t j = 0; j < k; ++j) {
            const double nk = static_cast<double>(stats.count[j]);
            const double s2 = 1.0 / (1.0 / spec.sigma0_sq + t * nk / state.variances[j]);
            const double mk = s2 * (spec.mu0 / spec.sigma0_sq + t * stats.sum[j] / state.variances[j]);
            state.means[j] = mk + std::sqrt(s2) * stdnorm(rng);
        }

        // variances
        std::fill(ss.begin(), ss.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = data[i] - state.means[state.labels[i]];
            ss[state.labels[i]] += d * d;
        }
        for (std::size_t j = 0; j < k; ++j) {
            const double shape = spec.alpha0 + 0.5 * t * static_cast<double>(stats.count[j]);
            const double rate = spec.beta0 + 0.5 * t * ss[j];
            state.variances[j] = rate / gamma(shape);
        }

        trace[it] = observed_log_likelihood_mixture(state, data);
        if (observer) {
            observer(it, state);
        }
    }
    return DevianceTrace(temp, std::move(trace), chain.burn_in);
}

/// A fixed dataset under the mixture prior, as a TemperedModel.
class MixtureModel {
public:
    using Parameter = MixtureState;

    MixtureModel(MixtureSpec spec, std::vector<double> data) : spec_(spec), data_(std::move(data)) {
        spec_.validate();
        if (data_.empty()) {
            throw std::invalid_argument("MixtureModel: empty dataset");
        }
    }

    [[nodiscard]] const MixtureSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] double log_likelihood(const MixtureState& s) const { return observed_log_likelihood_mixture(s, data_); }

    /// Log prior density of (mu, sigma2, w); labels are not part of theta.
    [[nodiscard]] double log_prior(const MixtureState& s) const {
        const double k = static_cast<double>(spec_.components);
        double lp = std::lgamma(k * spec_.alpha) - k * std::lgamma(spec_.alpha);
        for (std::size_t j = 0; j < spec_.components; ++j) {
            lp += log_normal_density(s.means[j], spec_.mu0, spec_.sigma0_sq);
            lp += spec_.alpha0 * std::log(spec_.beta0) - std::lgamma(spec_.alpha0) -
                  (spec_.alpha0 + 1.0) * std::log(s.variances[j]) - spec_.beta0 / s.variances[j];
            lp += (spec_.alpha - 1.0) * std::log(s.weights[j]);
        }
        return lp;
    }

    /// Free parameters: K means, K variances, K - 1 weights.
    [[nodiscard]] std::size_t dimension() const noexcept { return 3 * spec_.components - 1; }
    [[nodiscard]] std::size_t sample_count() const noexcept { return data_.size(); }
    [[nodiscard]] DevianceTrace sample_tempered(Temperature t, const ChainConfig& chain, std::uint64_t seed) const {
        return tempered_gibbs_mixture(spec_, data_, t, chain, seed);
    }

private:
    MixtureSpec spec_;
    std::vector<double> data_;
};

struct MixtureComparison {
    EvidenceEstimate wbic;
    EvidenceEstimate pp;  // corrected trapezoid
    std::uint64_t seed = 0;
};

struct MixtureBatchResult {
    std::vector<std::optional<MixtureComparison>> pairs;  // empty on per-dataset failure
    std::vector<std::string> errors;                      // aligned with pairs
    std::size_t wbic_above = 0;
    std::size_t compared = 0;

    [[nodiscard]] double fraction_wbic_above() const {
        return compared == 0 ? 0.0 : static_cast<double>(wbic_above) / static_cast<double>(compared);
    }
};

struct MixtureCompareConfig {
    ChainConfig wbic_chain{20000, 2000};
    ChainConfig pp_chain{20000, 2000};
    std::size_t schedule_m = 40;
    double schedule_c = 5.0;
    std::uint64_t base_seed = 1;
    std::size_t threads = 0;
};

/// WBIC at t_w against the corrected power-posterior estimate on a (m, c)
/// power schedule, per dataset. Dataset d uses seed derive_seed(base, d);
/// failures are recorded and the batch continues.
inline MixtureBatchResult compare_wbic_pp_mixture(const MixtureSpec& spec,
                                                  const std::vector<std::vector<double>>& datasets,
                                                  const MixtureCompareConfig& config) {
    MixtureBatchResult out;
    out.pairs.resize(datasets.size());
    out.errors.resize(datasets.size());
    const auto schedule = power_schedule(config.schedule_m, config.schedule_c);
    parallel_for(
        datasets.size(),
        [&](std::size_t d) {
            const std::uint64_t seed = derive_seed(config.base_seed, d);
            try {
                const MixtureModel model(spec, datasets[d]);
                MixtureComparison c;
                c.seed = seed;
                c.wbic = wbic_estimate(model, config.wbic_chain, derive_seed(seed, 0xb1c));
                const auto run = run_power_posterior(model, schedule, config.pp_chain, derive_seed(seed, 0x99), 1);
                c.pp = pp_corrected(run);
                out.pairs[d] = std::move(c);
            } catch (const std::exception& e) {
                out.errors[d] = e.what();
            }
        },
        config.threads);
    for (const auto& p : out.pairs) {
        if (p) {
            ++out.compared;
            if (p->wbic.log_evidence > p->pp.log_evidence) {
                ++out.wbic_above;
            }
        }
    }
    return out;
}

}  // namespace wbic::mixture
