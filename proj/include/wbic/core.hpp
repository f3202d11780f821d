#pragma once

// Shared domain types: temperatures, schedules, deviance traces, evidence
// estimates, chain configuration, seed derivation and trace statistics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace wbic {

/// Raised when an iterative root search cannot bracket its target.
class BracketingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a factorization or linear solve meets a (numerically) singular matrix.
class NumericalRankError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an iterative fit fails to converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inverse temperature applied to the likelihood, always in [0, 1].
class Temperature {
public:
    constexpr Temperature() = default;

    explicit Temperature(double t) : value_(t) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw std::domain_error("temperature must lie in [0, 1], got " + std::to_string(t));
        }
    }

    [[nodiscard]] constexpr double value() const noexcept { return value_; }

    friend constexpr bool operator==(Temperature, Temperature) = default;
    friend constexpr auto operator<=>(Temperature a, Temperature b) noexcept {
        return a.value_ <=> b.value_;
    }

private:
    double value_ = 0.0;
};

/// Ordered grid 0 = t_0 < t_1 < ... < t_m = 1.
class TemperatureSchedule {
public:
    explicit TemperatureSchedule(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) {
            throw std::invalid_argument("temperature schedule needs at least two points");
        }
        if (points_.front() != 0.0 || points_.back() != 1.0) {
            throw std::invalid_argument("temperature schedule must start at exactly 0 and end at exactly 1");
        }
        for (std::size_t j = 1; j < points_.size(); ++j) {
            if (!(points_[j] > points_[j - 1])) {
                throw std::invalid_argument("temperature schedule must be strictly increasing (index " +
                                            std::to_string(j) + ")");
            }
        }
    }

    [[nodiscard]] std::span<const double> points() const noexcept { return points_; }
    [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
    /// Number of intervals m.
    [[nodiscard]] std::size_t intervals() const noexcept { return points_.size() - 1; }
    [[nodiscard]] Temperature operator[](std::size_t j) const { return Temperature(points_.at(j)); }

private:
    std::vector<double> points_;
};

/// Power-law schedule t_j = (j/m)^c, j = 0..m, with exact endpoints.
inline TemperatureSchedule power_schedule(std::size_t m, double exponent) {
    if (m == 0) {
        throw std::invalid_argument("power_schedule: m must be positive");
    }
    if (!(exponent > 0.0) || !std::isfinite(exponent)) {
        throw std::invalid_argument("power_schedule: exponent must be positive and finite");
    }
    std::vector<double> t(m + 1);
    t.front() = 0.0;
    t.back() = 1.0;
    for (std::size_t j = 1; j < m; ++j) {
        t[j] = std::pow(static_cast<double>(j) / static_cast<double>(m), exponent);
    }
    return TemperatureSchedule(std::move(t));
}

inline TemperatureSchedule uniform_schedule(std::size_t m) { return power_schedule(m, 1.0); }

/// WBIC temperature 1/log(n). Undefined below n = 3 because 1/log(n) > 1 there.
inline Temperature wbic_temperature(std::size_t n) {
    if (n < 3) {
        throw std::domain_error("wbic_temperature: requires n >= 3, got n = " + std::to_string(n));
    }
    return Temperature(1.0 / std::log(static_cast<double>(n)));
}

/// Per-temperature sequence of log-likelihood values of MCMC draws.
///
/// Only log f(y|theta) is stored, since every estimator consumes nothing else.
/// The first `burn_in` values are discarded by the statistics below.
class DevianceTrace {
public:
    DevianceTrace(Temperature t, std::vector<double> log_lik, std::size_t burn_in,
                  std::map<std::string, double> diagnostics = {})
        : temperature_(t), values_(std::move(log_lik)), burn_in_(burn_in),
          diagnostics_(std::move(diagnostics)) {
        if (burn_in_ >= values_.size()) {
            throw std::invalid_argument("DevianceTrace: burn-in K must be smaller than N (K = " +
                                        std::to_string(burn_in_) +
                                        ", N = " + std::to_string(values_.size()) + ")");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw std::invalid_argument("DevianceTrace: non-finite log-likelihood at draw " +
                                            std::to_string(i));
            }
        }
    }

    [[nodiscard]] Temperature temperature() const noexcept { return temperature_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::size_t burn_in() const noexcept { return burn_in_; }
    [[nodiscard]] std::span<const double> retained() const noexcept {
        return std::span<const double>(values_).subspan(burn_in_);
    }
    [[nodiscard]] const std::map<std::string, double>& diagnostics() const noexcept { return diagnostics_; }

private:
    Temperature temperature_;
    std::vector<double> values_;
    std::size_t burn_in_;
    std::map<std::string, double> diagnostics_;
};

inline double sample_mean(std::span<const double> x) {
    if (x.empty()) {
        throw std::invalid_argument("sample_mean: empty sample");
    }
    // pairwise-free compensated sum; traces run to 1e5+ values
    double sum = 0.0, comp = 0.0;
    for (double v : x) {
        const double y = v - comp;
        const double s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    return sum / static_cast<double>(x.size());
}

/// Unbiased sample variance (divisor size - 1).
inline double sample_variance(std::span<const double> x) {
    if (x.size() < 2) {
        throw std::invalid_argument("sample_variance: needs at least two values");
    }
    const double mean = sample_mean(x);
    double ss = 0.0;
    for (double v : x) {
        ss += (v - mean) * (v - mean);
    }
    return ss / static_cast<double>(x.size() - 1);
}

/// Mean of the post-burn-in log-likelihood values.
inline double expected_log_deviance(const DevianceTrace& trace) {
    const auto kept = trace.retained();
    if (kept.empty()) {
        throw std::invalid_argument("expected_log_deviance: empty post-burn-in segment");
    }
    return sample_mean(kept);
}

/// Sample variance (divisor N - K - 1) of the post-burn-in log-likelihood values.
inline double variance_log_deviance(const DevianceTrace& trace) {
    const auto kept = trace.retained();
    if (kept.size() < 2) {
        throw std::invalid_argument("variance_log_deviance: post-burn-in length must be at least 2");
    }
    return sample_variance(kept);
}

/// Batch-means standard error of the mean of an autocorrelated sequence.
///
/// Trailing values that do not fill a whole batch are dropped. With fewer
/// values than batches this falls back to the i.i.d. standard error.
inline double batch_means_standard_error(std::span<const double> x, std::size_t batches = 50) {
    if (x.size() < 2) {
        throw std::invalid_argument("batch_means_standard_error: needs at least two values");
    }
    if (batches < 2 || x.size() < 2 * batches) {
        return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
    }
    const std::size_t batch_len = x.size() / batches;
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        means[b] = sample_mean(x.subspan(b * batch_len, batch_len));
    }
    return std::sqrt(sample_variance(means) / static_cast<double>(batches));
}

/// Standard error of the sample variance, estimated by batch means of squared deviations.
inline double variance_standard_error(std::span<const double> x, std::size_t batches = 50) {
    const double mean = sample_mean(x);
    std::vector<double> sq(x.size());
    std::transform(x.begin(), x.end(), sq.begin(), [mean](double v) { return (v - mean) * (v - mean); });
    return batch_means_standard_error(sq, batches);
}

enum class EvidenceMethod { wbic, pp_standard, pp_corrected, exact, oracle_t };

inline std::string_view to_string(EvidenceMethod m) noexcept {
    switch (m) {
    case EvidenceMethod::wbic: return "wbic";
    case EvidenceMethod::pp_standard: return "pp_standard";
    case EvidenceMethod::pp_corrected: return "pp_corrected";
    case EvidenceMethod::exact: return "exact";
    case EvidenceMethod::oracle_t: return "oracle_t";
    }
    return "unknown";
}

inline EvidenceMethod parse_evidence_method(std::string_view s) {
    for (auto m : {EvidenceMethod::wbic, EvidenceMethod::pp_standard, EvidenceMethod::pp_corrected,
                   EvidenceMethod::exact, EvidenceMethod::oracle_t}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown evidence method '" + std::string(s) + "'");
}

struct EvidenceEstimate {
    double log_evidence = 0.0;
    std::optional<double> std_error;  // absent for deterministic methods
    EvidenceMethod method = EvidenceMethod::exact;
    std::map<std::string, double> diagnostics;
};

/// MCMC run length: `iterations` draws of which the first `burn_in` are discarded.
struct ChainConfig {
    std::size_t iterations = 20000;
    std::size_t burn_in = 2000;

    void validate() const {
        if (iterations == 0 || burn_in >= iterations) {
            throw std::invalid_argument("chain config: need iterations > burn_in (got N = " +
                                        std::to_string(iterations) + ", K = " + std::to_string(burn_in) + ")");
        }
        if (iterations - burn_in < 2) {
            throw std::invalid_argument("chain config: need at least two post-burn-in draws");
        }
    }
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based seed for stream (a, b) under a base seed. Adding streams never
/// perturbs existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return mix64(mix64(mix64(base) ^ (a + 0x632be59bd9b4e019ULL)) ^ (b + 0x2545f4914f6cdd1dULL));
}

/// A model with a fixed dataset whose power posteriors can be sampled.
template <class M>
concept TemperedModel = requires(const M& m, const typename M::Parameter& theta, Temperature t,
                                 const ChainConfig& chain, std::uint64_t seed) {
    typename M::Parameter;
    { m.log_likelihood(theta) } -> std::convertible_to<double>;
    { m.log_prior(theta) } -> std::convertible_to<double>;
    { m.dimension() } -> std::convertible_to<std::size_t>;
    { m.sample_count() } -> std::convertible_to<std::size_t>;
    { m.sample_tempered(t, chain, seed) } -> std::same_as<DevianceTrace>;
};

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown (lowest index) is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t threads = 0) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = count;
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (i < error_index) {
                            error_index = i;
                            error = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace wbic
