#pragma once

// Model-agnostic evidence estimators: WBIC, standard and corrected
// power-posterior quadrature, optimal-temperature search, and the idealized
// Monte Carlo variance comparison for the tractable normal model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wbic/analytic_normal.hpp"
#include "wbic/core.hpp"

namespace wbic {

/// Per-temperature expectations and variances of log f over a schedule.
struct PPRunResult {
    TemperatureSchedule schedule;
    std::vector<double> expectations;
    std::vector<double> variances;
    std::vector<double> std_errors;           // of the expectations
    std::vector<double> variance_std_errors;  // of the variances; zeros when exact

    void validate() const {
        const std::size_t m = schedule.size();
        if (expectations.size() != m || variances.size() != m || std_errors.size() != m ||
            variance_std_errors.size() != m) {
            throw std::invalid_argument("PPRunResult: per-temperature vectors must match the schedule length");
        }
    }
};

/// Builds a run from exact per-temperature values (zero standard errors).
template <class ExpectationFn, class VarianceFn>
PPRunResult analytic_run(const TemperatureSchedule& schedule, ExpectationFn&& expectation, VarianceFn&& variance) {
    const std::size_t m = schedule.size();
    PPRunResult run{schedule, std::vector<double>(m), std::vector<double>(m), std::vector<double>(m, 0.0),
                    std::vector<double>(m, 0.0)};
    for (std::size_t j = 0; j < m; ++j) {
        run.expectations[j] = expectation(schedule[j]);
        run.variances[j] = variance(schedule[j]);
    }
    return run;
}

/// Trapezoid weights w_j so that the rule reads sum_j w_j E_j.
inline std::vector<double> trapezoid_weights(std::span<const double> t) {
    std::vector<double> w(t.size(), 0.0);
    for (std::size_t j = 1; j < t.size(); ++j) {
        const double h = 0.5 * (t[j] - t[j - 1]);
        w[j - 1] += h;
        w[j] += h;
    }
    return w;
}

inline EvidenceEstimate pp_standard(const PPRunResult& run) {
    run.validate();
    const auto t = run.schedule.points();
    const auto w = trapezoid_weights(t);
    double total = 0.0;
    for (std::size_t j = 1; j < t.size(); ++j) {
        total += 0.5 * (t[j] - t[j - 1]) * (run.expectations[j] + run.expectations[j - 1]);
    }
    double var = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
        var += w[j] * w[j] * run.std_errors[j] * run.std_errors[j];
    }
    EvidenceEstimate est;
    est.log_evidence = total;
    est.std_error = std::sqrt(var);
    est.method = EvidenceMethod::pp_standard;
    est.diagnostics["schedule_points"] = static_cast<double>(t.size());
    return est;
}

/// Trapezoid minus sum_j ((t_j - t_{j-1})^2 / 12)(V_j - V_{j-1}).
inline EvidenceEstimate pp_corrected(const PPRunResult& run) {
    auto est = pp_standard(run);
    const auto t = run.schedule.points();
    double correction = 0.0;
    // coefficient of V_j in the correction: -(h_j^2 - h_{j+1}^2)/12
    std::vector<double> coef(t.size(), 0.0);
    for (std::size_t j = 1; j < t.size(); ++j) {
        const double h2 = (t[j] - t[j - 1]) * (t[j] - t[j - 1]) / 12.0;
        correction += h2 * (run.variances[j] - run.variances[j - 1]);
        coef[j] -= h2;
        coef[j - 1] += h2;
    }
    double var = (*est.std_error) * (*est.std_error);
    for (std::size_t j = 0; j < t.size(); ++j) {
        var += coef[j] * coef[j] * run.variance_std_errors[j] * run.variance_std_errors[j];
    }
    est.log_evidence -= correction;
    est.std_error = std::sqrt(var);
    est.method = EvidenceMethod::pp_corrected;
    est.diagnostics["correction"] = -correction;
    return est;
}

/// Summarizes one tempered trace: mean, variance and their batch-means errors.
struct TraceSummary {
    double expectation;
    double variance;
    double std_error;
    double variance_std_error;
};

inline TraceSummary summarize_trace(const DevianceTrace& trace, std::size_t batches = 50) {
    const auto kept = trace.retained();
    return {expected_log_deviance(trace), variance_log_deviance(trace), batch_means_standard_error(kept, batches),
            variance_standard_error(kept, batches)};
}

/// WBIC: one chain at t_w = 1/log(n); the estimate is the chain's mean log f.
template <TemperedModel Model>
EvidenceEstimate wbic_estimate(const Model& model, const ChainConfig& chain, std::uint64_t seed,
                               std::size_t batches = 50) {
    const Temperature tw = wbic_temperature(model.sample_count());
    const DevianceTrace trace = model.sample_tempered(tw, chain, seed);
    EvidenceEstimate est;
    est.log_evidence = expected_log_deviance(trace);
    est.std_error = batch_means_standard_error(trace.retained(), batches);
    est.method = EvidenceMethod::wbic;
    est.diagnostics = trace.diagnostics();
    est.diagnostics["t_w"] = tw.value();
    est.diagnostics["variance_log_deviance"] = variance_log_deviance(trace);
    return est;
}

/// One independent chain per schedule point, seeded derive_seed(base_seed, j).
/// Results are stored in schedule order regardless of completion order.
template <TemperedModel Model>
PPRunResult run_power_posterior(const Model& model, const TemperatureSchedule& schedule, const ChainConfig& chain,
                                std::uint64_t base_seed, std::size_t threads = 0, std::size_t batches = 50) {
    chain.validate();
    const std::size_t m = schedule.size();
    PPRunResult run{schedule, std::vector<double>(m), std::vector<double>(m), std::vector<double>(m),
                    std::vector<double>(m)};
    parallel_for(
        m,
        [&](std::size_t j) {
            try {
                const auto trace = model.sample_tempered(schedule[j], chain, derive_seed(base_seed, j));
                const auto s = summarize_trace(trace, batches);
                run.expectations[j] = s.expectation;
                run.variances[j] = s.variance;
                run.std_errors[j] = s.std_error;
                run.variance_std_errors[j] = s.variance_std_error;
            } catch (const std::exception& e) {
                throw std::runtime_error("power posterior chain failed at schedule index " + std::to_string(j) +
                                         " (t = " + std::to_string(schedule.points()[j]) + "): " + e.what());
            }
        },
        threads);
    return run;
}

/// Root of E(t) - log p(y) on [0, 1] by bisection, for a monotone increasing E.
template <class ExpectationFn>
Temperature optimal_temperature_search(ExpectationFn&& expectation, double log_evidence, double tol = 1e-10) {
    if (!(tol > 0.0)) {
        throw std::invalid_argument("optimal_temperature_search: tolerance must be positive");
    }
    auto g = [&](double t) { return expectation(Temperature(t)) - log_evidence; };
    double lo = 0.0, hi = 1.0;
    const double g_lo = g(lo), g_hi = g(hi);
    if (!(g_lo < 0.0) || !(g_hi > 0.0)) {
        throw BracketingError("optimal_temperature_search: E(0) - log p(y) = " + std::to_string(g_lo) +
                              " and E(1) - log p(y) = " + std::to_string(g_hi) + " do not bracket a root");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    return Temperature(0.5 * (lo + hi));
}

/// Least-squares non-decreasing fit (pool adjacent violators), optionally weighted.
inline std::vector<double> isotonic_regression(std::span<const double> y, std::span<const double> weights = {}) {
    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], weights.empty() ? 1.0 : weights[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double w = a.weight + b.weight;
            a.mean = (a.mean * a.weight + b.mean * b.weight) / w;
            a.weight = w;
            a.count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks) {
        out.insert(out.end(), b.count, b.mean);
    }
    return out;
}

struct NoisyTemperatureEstimate {
    Temperature t;
    double bracket_lo;  // grid interval containing the crossing
    double bracket_hi;
};

/// t* from Monte Carlo expectations on a grid: isotonic smoothing (weights
/// 1/SE^2), then linear interpolation of the first crossing of log p(y).
inline NoisyTemperatureEstimate optimal_temperature_from_run(const PPRunResult& run, double log_evidence) {
    run.validate();
    const auto t = run.schedule.points();
    std::vector<double> w(t.size(), 1.0);
    for (std::size_t j = 0; j < t.size(); ++j) {
        if (run.std_errors[j] > 0.0) {
            w[j] = 1.0 / (run.std_errors[j] * run.std_errors[j]);
        }
    }
    const auto smooth = isotonic_regression(run.expectations, w);
    if (!(smooth.front() < log_evidence) || !(smooth.back() > log_evidence)) {
        throw BracketingError("optimal_temperature_from_run: smoothed expectations do not bracket log p(y)");
    }
    for (std::size_t j = 1; j < t.size(); ++j) {
        if (smooth[j] >= log_evidence) {
            const double a = smooth[j - 1], b = smooth[j];
            const double frac = b > a ? (log_evidence - a) / (b - a) : 0.5;
            return {Temperature(t[j - 1] + frac * (t[j] - t[j - 1])), t[j - 1], t[j]};
        }
    }
    throw BracketingError("optimal_temperature_from_run: no crossing found");
}

/// Idealized Monte Carlo variances of the WBIC and power-posterior identities
/// for the tractable normal model, each with its ideal tuning (t* and p*(t)).
struct IdealizedComparison {
    std::vector<double> t_grid;
    std::vector<double> optimal_density;  // p*(t), normalized by the trapezoid rule on t_grid
    double t_star = 0.0;
    double wbic_variance = 0.0;
    double pp_variance = 0.0;
};

/// The grid is t_j = (j/(G-1))^4, which resolves the O(1/(n v)) boundary layer at t = 0.
inline IdealizedComparison idealized_comparison_normal(const normal::NormalModelSpec& spec,
                                                       std::size_t grid_size = 20001) {
    if (grid_size < 100) {
        throw std::invalid_argument("idealized_comparison_normal: grid size must be at least 100");
    }
    IdealizedComparison out;
    const auto schedule = power_schedule(grid_size - 1, 4.0);
    out.t_grid.assign(schedule.points().begin(), schedule.points().end());
    const std::size_t g = out.t_grid.size();

    std::vector<double> second_moment(g);
    out.optimal_density.resize(g);
    for (std::size_t j = 0; j < g; ++j) {
        const Temperature t(out.t_grid[j]);
        const double e = normal::expected_log_deviance_normal(spec, t);
        const double v = normal::variance_log_deviance_normal(spec, t);
        second_moment[j] = v + e * e;
        out.optimal_density[j] = std::sqrt(second_moment[j]);
    }
    const auto w = trapezoid_weights(out.t_grid);
    double z = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
        z += w[j] * out.optimal_density[j];
    }
    for (double& p : out.optimal_density) {
        p /= z;
    }

    const double log_evidence = normal::log_evidence_normal(spec);
    // E_{theta,t}[(log f / p*(t))^2] = integral of E_t[(log f)^2] / p*(t) dt
    double raw = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
        raw += w[j] * second_moment[j] / out.optimal_density[j];
    }
    out.pp_variance = raw - log_evidence * log_evidence;

    out.t_star = normal::optimal_temperature_normal(spec, 1e-13).value();
    out.wbic_variance = normal::variance_log_deviance_normal(spec, Temperature(out.t_star));
    return out;
}

}  // namespace wbic
