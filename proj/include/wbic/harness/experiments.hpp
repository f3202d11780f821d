#pragma once

// Seeded replication of the case-study tables and figure data.
//
// Seed layout: replicate r uses s_r = derive_seed(base, r); model k within a
// replicate uses derive_seed(s_r, k, 1) for its WBIC chain and
// derive_seed(s_r, k, 2) as the base of its power-posterior chains. Figure
// datasets use derive_seed(base, dataset_index, tag). Adding replicates never
// changes existing ones.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wbic/analytic_normal.hpp"
#include "wbic/conjugate_regression.hpp"
#include "wbic/core.hpp"
#include "wbic/estimators.hpp"
#include "wbic/glm_logistic.hpp"
#include "wbic/harness/datasets.hpp"
#include "wbic/harness/records.hpp"
#include "wbic/mixture.hpp"

namespace wbic::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PriorMode { informative, unit_information, vague };

inline PriorMode parse_prior_mode(const std::string& s) {
    if (s == "informative") return PriorMode::informative;
    if (s == "unit-information" || s == "unit_information") return PriorMode::unit_information;
    if (s == "vague") return PriorMode::vague;
    throw ConfigError("unknown prior mode '" + s + "' (expected informative, unit-information or vague)");
}

inline const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids = {"table1", "table2", "table3", "table4", "table5", "fig1",
                                                 "fig2a",  "fig2b",  "fig3",   "fig4",   "fig5"};
    return ids;
}

struct ExperimentConfig {
    std::string experiment;
    std::optional<PriorMode> prior;  // overrides the experiment's own prior where meaningful
    ChainConfig chain{100000, 10000};
    ChainConfig pp_chain{20000, 2000};
    std::uint64_t base_seed = 20160425;
    std::size_t replicates = 20;
    std::size_t schedule_m = 40;
    double schedule_c = 5.0;
    std::optional<std::filesystem::path> data;
    std::vector<std::size_t> sample_sizes;  // synthetic experiments; empty = experiment default
    std::size_t threads = 0;
    linreg::UnitInformationScaling pine_scaling = linreg::UnitInformationScaling::summed_information;
    logistic::UnitInformationCovariance pima_covariance = logistic::UnitInformationCovariance::printed;

    void validate() const {
        if (std::find(experiment_ids().begin(), experiment_ids().end(), experiment) == experiment_ids().end()) {
            throw ConfigError("unknown experiment '" + experiment + "'");
        }
        if (replicates == 0) {
            throw ConfigError("replicate count must be at least 1");
        }
        try {
            chain.validate();
            pp_chain.validate();
            (void)power_schedule(schedule_m, schedule_c);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        const bool needs_data = experiment.starts_with("table");
        if (needs_data) {
            if (!data) {
                throw ConfigError(experiment + " requires --data");
            }
            if (!std::filesystem::exists(*data)) {
                throw ConfigError("dataset file not found: " + data->string());
            }
        }
    }
};

struct ExperimentOutcome {
    std::size_t records = 0;
    std::size_t failures = 0;
    std::vector<std::string> messages;
};

/// The two pine regressions under a prior mode.
inline std::pair<linreg::LinRegModelSpec, linreg::LinRegModelSpec> pine_specs(
    const PineData& d, PriorMode mode,
    linreg::UnitInformationScaling scaling = linreg::UnitInformationScaling::summed_information) {
    linreg::UnitInformationPrior prior;
    switch (mode) {
    case PriorMode::informative: prior = linreg::informative_pine_prior(); break;
    case PriorMode::unit_information:
        prior = linreg::unit_information_prior_linreg(d.design_density, d.design_adjusted, d.y, scaling);
        break;
    case PriorMode::vague: throw ConfigError("pine models support informative or unit-information priors");
    }
    return {linreg::make_spec(d.design_density, d.y, prior), linreg::make_spec(d.design_adjusted, d.y, prior)};
}

/// The two Pima logistic models: tau = 0.01 isotropic (vague) or the MLE-centred unit-information prior.
inline std::pair<logistic::LogisticModelSpec, logistic::LogisticModelSpec> pima_specs(
    const PimaData& d, PriorMode mode,
    logistic::UnitInformationCovariance cov = logistic::UnitInformationCovariance::printed) {
    using logistic::LogisticModelSpec;
    LogisticModelSpec s1(d.design_model1, d.y, logistic::IsotropicPrior{0.01});
    LogisticModelSpec s2(d.design_model2, d.y, logistic::IsotropicPrior{0.01});
    switch (mode) {
    case PriorMode::vague:
    case PriorMode::informative: return {s1, s2};
    case PriorMode::unit_information:
        return {s1.with_prior(logistic::unit_information_prior_logistic(s1, cov)),
                s2.with_prior(logistic::unit_information_prior_logistic(s2, cov))};
    }
    throw ConfigError("unsupported prior mode for Pima");
}

namespace detail {

template <class Fn>
double timed(Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline ResultRecord make_record(const std::string& experiment, std::size_t rep, const std::string& model,
                                const EvidenceEstimate& est, std::uint64_t seed, double wall) {
    ResultRecord r;
    r.experiment = experiment;
    r.replicate = rep;
    r.model = model;
    r.method = std::string(to_string(est.method));
    r.log_evidence = est.log_evidence;
    r.std_error = est.std_error;
    r.wall_time_s = wall;
    r.seed = seed;
    for (const auto& [k, v] : est.diagnostics) {
        if (k == "t_w" || k == "t_star" || k == "acceptance_rate") {
            r.aux[k] = v;
        }
    }
    return r;
}

struct NamedModelRunner {
    std::string name;
    std::function<EvidenceEstimate(std::uint64_t)> wbic;
    std::function<PPRunResult(std::uint64_t)> pp;
    std::optional<double> exact;
    std::optional<double> t_star;
};

/// Shared driver for the regression tables: exact records once, then per replicate WBIC and/or PP.
inline void run_table(const ExperimentConfig& cfg, const std::vector<NamedModelRunner>& models, bool with_wbic,
                      bool with_pp, RecordWriter& out, ExperimentOutcome& outcome) {
    for (const auto& m : models) {
        if (m.exact) {
            EvidenceEstimate est{*m.exact, std::nullopt, EvidenceMethod::exact, {}};
            if (m.t_star) {
                est.diagnostics["t_star"] = *m.t_star;
            }
            out.write(make_record(cfg.experiment, 0, m.name, est, cfg.base_seed, 0.0));
            ++outcome.records;
        }
    }
    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.base_seed, rep);
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto& m = models[k];
            try {
                if (with_wbic) {
                    const std::uint64_t seed = derive_seed(rep_seed, k, 1);
                    EvidenceEstimate est;
                    const double wall = timed([&] { est = m.wbic(seed); });
                    out.write(make_record(cfg.experiment, rep, m.name, est, seed, wall));
                    ++outcome.records;
                }
                if (with_pp) {
                    const std::uint64_t seed = derive_seed(rep_seed, k, 2);
                    std::optional<PPRunResult> run;
                    const double wall = timed([&] { run = m.pp(seed); });
                    out.write(make_record(cfg.experiment, rep, m.name, pp_standard(*run), seed, wall));
                    out.write(make_record(cfg.experiment, rep, m.name, pp_corrected(*run), seed, wall));
                    outcome.records += 2;
                }
            } catch (const std::exception& e) {
                ++outcome.failures;
                outcome.messages.push_back(cfg.experiment + " replicate " + std::to_string(rep) + " model " + m.name +
                                           ": " + e.what());
            }
        }
    }
}

inline std::vector<std::size_t> sizes_or(const ExperimentConfig& cfg, std::vector<std::size_t> fallback) {
    return cfg.sample_sizes.empty() ? fallback : cfg.sample_sizes;
}

}  // namespace detail

/// The n grid 3, 4, ..., 50, 60, 70, ..., 100000.
inline std::vector<std::size_t> figure4_sample_sizes() {
    std::vector<std::size_t> ns;
    for (std::size_t n = 3; n <= 50; ++n) {
        ns.push_back(n);
    }
    for (std::size_t n = 60; n <= 100000; n += 10) {
        ns.push_back(n);
    }
    return ns;
}

/// Runs one experiment, streaming records to `out` and figure data (CSV with a
/// header row) to `figure`. Per-replicate failures are recorded and skipped.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, RecordWriter& out, std::ostream* figure) {
    cfg.validate();
    ExperimentOutcome outcome;
    const auto schedule = power_schedule(cfg.schedule_m, cfg.schedule_c);
    const std::string& id = cfg.experiment;
    auto fig = [&](auto&&... parts) {
        if (figure) {
            ((*figure << parts), ...);
        }
    };
    if (figure) {
        figure->precision(17);
    }

    if (id == "table1" || id == "table2" || id == "table3") {
        const PineData data = pine_from(ingest_csv(*cfg.data, Schema::pine));
        const PriorMode mode = cfg.prior.value_or(id == "table3" ? PriorMode::unit_information : PriorMode::informative);
        const auto [s1, s2] = pine_specs(data, mode, cfg.pine_scaling);
        std::vector<detail::NamedModelRunner> models;
        for (const auto* spec : {&s1, &s2}) {
            const linreg::LinRegModel model(*spec);
            const double exact = linreg::exact_log_evidence_linreg(*spec);
            std::optional<double> t_star;
            try {
                t_star = optimal_temperature_search(
                    [&](Temperature t) { return linreg::expected_log_deviance_linreg(model.spec(), t); }, exact, 1e-10)
                             .value();
            } catch (const BracketingError&) {
            }
            models.push_back({spec == &s1 ? "pine1" : "pine2",
                              [model, &cfg](std::uint64_t seed) { return wbic_estimate(model, cfg.chain, seed); },
                              [model, &cfg, schedule](std::uint64_t seed) {
                                  return run_power_posterior(model, schedule, cfg.pp_chain, seed, cfg.threads);
                              },
                              exact, t_star});
        }
        detail::run_table(cfg, models, true, id != "table2", out, outcome);
        return outcome;
    }

    if (id == "table4" || id == "table5") {
        const PimaData data = pima_from(ingest_csv(*cfg.data, Schema::pima));
        const PriorMode mode = cfg.prior.value_or(id == "table5" ? PriorMode::unit_information : PriorMode::vague);
        const auto [s1, s2] = pima_specs(data, mode, cfg.pima_covariance);
        std::vector<detail::NamedModelRunner> models;
        for (const auto* spec : {&s1, &s2}) {
            const logistic::LogisticModel model(*spec);
            models.push_back({spec == &s1 ? "pima1" : "pima2",
                              [model, &cfg](std::uint64_t seed) { return wbic_estimate(model, cfg.chain, seed); },
                              [model, &cfg, schedule](std::uint64_t seed) {
                                  return run_power_posterior(model, schedule, cfg.pp_chain, seed, cfg.threads);
                              },
                              std::nullopt, std::nullopt});
        }
        detail::run_table(cfg, models, true, true, out, outcome);
        return outcome;
    }

    if (id == "fig1") {
        fig("n,prior_mean,prior_variance,t_star,wbic_variance,pp_variance,ratio\n");
        std::size_t rep = 0;
        for (std::size_t n : detail::sizes_or(cfg, {1, 100, 10000})) {
            const auto y = normal::simulate_normal_data(n, 0.0, derive_seed(cfg.base_seed, n, 1));
            for (double m : {0.0, 1.0}) {
                for (int e = -4; e <= 8; ++e) {
                    const double v = std::pow(10.0, 0.5 * e);
                    const normal::NormalModelSpec spec(y, m, v);
                    const auto cmp = idealized_comparison_normal(spec);
                    fig(n, ',', m, ',', v, ',', cmp.t_star, ',', cmp.wbic_variance, ',', cmp.pp_variance, ',',
                        cmp.pp_variance / cmp.wbic_variance, '\n');
                    EvidenceEstimate est{normal::log_evidence_normal(spec), std::nullopt, EvidenceMethod::oracle_t,
                                         {{"t_star", cmp.t_star}}};
                    auto rec = detail::make_record(id, rep++, "normal", est, cfg.base_seed, 0.0);
                    rec.aux["n"] = static_cast<double>(n);
                    rec.aux["prior_mean"] = m;
                    rec.aux["prior_variance"] = v;
                    rec.aux["wbic_variance"] = cmp.wbic_variance;
                    rec.aux["pp_variance"] = cmp.pp_variance;
                    out.write(rec);
                    ++outcome.records;
                }
            }
        }
        return outcome;
    }

    if (id == "fig2a" || id == "fig4") {
        const bool f4 = id == "fig4";
        fig(f4 ? "n,t_star,t_w,wbic_minus_log_evidence\n" : "n,dataset,t_star,t_w\n");
        const auto ns = f4 ? detail::sizes_or(cfg, figure4_sample_sizes())
                           : detail::sizes_or(cfg, {50, 100, 1000, 10000});
        const std::size_t datasets = f4 ? 1 : cfg.replicates;
        std::size_t rep = 0;
        for (std::size_t n : ns) {
            for (std::size_t d = 0; d < datasets; ++d) {
                const std::uint64_t seed = derive_seed(cfg.base_seed, d, n);
                const auto y = normal::simulate_normal_data(n, 0.0, seed);
                const auto spec = f4 ? normal::mean_corrected(y, 1.0) : normal::NormalModelSpec(y, 0.0, 10.0);
                const double t_star = normal::optimal_temperature_normal(spec, 1e-12).value();
                const double t_w = wbic_temperature(n).value();
                const double log_ev = normal::log_evidence_normal(spec);
                const double wbic = normal::wbic_analytic_normal(spec);
                if (f4) {
                    fig(n, ',', t_star, ',', t_w, ',', wbic - log_ev, '\n');
                } else {
                    fig(n, ',', d, ',', t_star, ',', t_w, '\n');
                }
                EvidenceEstimate est{log_ev, std::nullopt, EvidenceMethod::oracle_t, {{"t_star", t_star}, {"t_w", t_w}}};
                auto rec = detail::make_record(id, rep++, "normal", est, seed, 0.0);
                rec.aux["n"] = static_cast<double>(n);
                rec.aux["wbic"] = wbic;
                out.write(rec);
                ++outcome.records;
            }
        }
        return outcome;
    }

    if (id == "fig2b" || id == "fig3") {
        const bool f3 = id == "fig3";
        fig(f3 ? "prior_mean,dataset,wbic,log_evidence\n" : "prior_variance,dataset,wbic,log_evidence,difference\n");
        const std::size_t n = detail::sizes_or(cfg, {f3 ? std::size_t{1000} : std::size_t{50}}).front();
        const std::vector<std::pair<double, double>> priors =
            f3 ? std::vector<std::pair<double, double>>{{0.0, 1.0}, {1.0, 1.0}}
               : std::vector<std::pair<double, double>>{{0.0, 10.0}, {0.0, 100.0}, {0.0, 1000.0}};
        std::size_t rep = 0;
        for (const auto& [m, v] : priors) {
            for (std::size_t d = 0; d < cfg.replicates; ++d) {
                const std::uint64_t seed = derive_seed(cfg.base_seed, d, n);
                const normal::NormalModelSpec spec(normal::simulate_normal_data(n, 0.0, seed), m, v);
                const double log_ev = normal::log_evidence_normal(spec);
                const double wbic = normal::wbic_analytic_normal(spec);
                if (f3) {
                    fig(m, ',', d, ',', wbic, ',', log_ev, '\n');
                } else {
                    fig(v, ',', d, ',', wbic, ',', log_ev, ',', wbic - log_ev, '\n');
                }
                EvidenceEstimate exact{log_ev, std::nullopt, EvidenceMethod::exact, {}};
                EvidenceEstimate w{wbic, std::nullopt, EvidenceMethod::wbic, {{"t_w", wbic_temperature(n).value()}}};
                for (auto* e : {&exact, &w}) {
                    auto rec = detail::make_record(id, rep, "normal", *e, seed, 0.0);
                    rec.aux["prior_mean"] = m;
                    rec.aux["prior_variance"] = v;
                    out.write(rec);
                    ++outcome.records;
                }
                ++rep;
            }
        }
        return outcome;
    }

    if (id == "fig5") {
        fig("n,dataset,wbic,wbic_se,pp_corrected,pp_se\n");
        const mixture::MixtureSpec spec;
        const std::vector<double> mu = {-5.0, 0.0, 5.0}, s2 = {1.0, 1.0, 1.0}, w = {1.0, 1.0, 1.0};
        for (std::size_t n : detail::sizes_or(cfg, {50, 1000})) {
            std::vector<std::vector<double>> datasets;
            for (std::size_t d = 0; d < cfg.replicates; ++d) {
                datasets.push_back(mixture::simulate_mixture(n, mu, s2, w, derive_seed(cfg.base_seed, d, n)));
            }
            mixture::MixtureCompareConfig mc{cfg.chain, cfg.pp_chain, cfg.schedule_m, cfg.schedule_c,
                                             derive_seed(cfg.base_seed, n, 5), cfg.threads};
            const auto batch = mixture::compare_wbic_pp_mixture(spec, datasets, mc);
            for (std::size_t d = 0; d < datasets.size(); ++d) {
                if (!batch.pairs[d]) {
                    ++outcome.failures;
                    outcome.messages.push_back("fig5 n=" + std::to_string(n) + " dataset " + std::to_string(d) + ": " +
                                               batch.errors[d]);
                    continue;
                }
                const auto& p = *batch.pairs[d];
                fig(n, ',', d, ',', p.wbic.log_evidence, ',', p.wbic.std_error.value_or(0.0), ',', p.pp.log_evidence,
                    ',', p.pp.std_error.value_or(0.0), '\n');
                for (const auto* e : {&p.wbic, &p.pp}) {
                    auto rec = detail::make_record(id, d, "mixture_n" + std::to_string(n), *e, p.seed, 0.0);
                    out.write(rec);
                    ++outcome.records;
                }
            }
        }
        return outcome;
    }

    throw ConfigError("experiment '" + id + "' is not implemented");
}

}  // namespace wbic::harness
