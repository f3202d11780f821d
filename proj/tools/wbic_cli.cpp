// wbic: command-line runner for WBIC and power-posterior evidence estimates.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wbic/analytic_normal.hpp"
#include "wbic/conjugate_regression.hpp"
#include "wbic/core.hpp"
#include "wbic/estimators.hpp"
#include "wbic/glm_logistic.hpp"
#include "wbic/harness/datasets.hpp"
#include "wbic/harness/experiments.hpp"
#include "wbic/harness/records.hpp"
#include "wbic/mixture.hpp"

namespace {

using namespace wbic;
using harness::ConfigError;

constexpr int exit_ok = 0;
constexpr int exit_partial = 1;
constexpr int exit_config = 2;

struct Options {
    std::string model = "normal";
    std::string prior;
    std::optional<std::string> data;
    std::uint64_t seed = 20160425;
    std::size_t replicates = 0;
    std::optional<std::size_t> chain_n;
    std::optional<std::size_t> burn_in;
    std::optional<std::size_t> pp_chain_n;
    std::optional<std::size_t> pp_burn_in;
    std::size_t schedule_m = 40;
    double schedule_c = 5.0;
    std::optional<std::string> out;
    std::size_t n = 50;
    double prior_mean = 0.0;
    double prior_var = 1.0;
    std::size_t threads = 0;
    std::string pp_method = "corrected";
    std::string experiment;
    std::vector<std::string> inputs;
    std::string pine_scaling = "summed";
    std::string pima_covariance = "printed";
};

ChainConfig chain_from(const Options& o, ChainConfig fallback) {
    ChainConfig c = fallback;
    if (o.chain_n) c.iterations = *o.chain_n;
    if (o.burn_in) c.burn_in = *o.burn_in;
    if (o.chain_n && !o.burn_in) c.burn_in = c.iterations / 10;
    return c;
}

ChainConfig pp_chain_from(const Options& o, ChainConfig fallback) {
    ChainConfig c = fallback;
    if (o.pp_chain_n) c.iterations = *o.pp_chain_n;
    if (o.pp_burn_in) c.burn_in = *o.pp_burn_in;
    if (o.pp_chain_n && !o.pp_burn_in) c.burn_in = c.iterations / 10;
    return c;
}

TemperatureSchedule schedule_from(const Options& o) {
    try {
        return power_schedule(o.schedule_m, o.schedule_c);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::filesystem::path require_data(const Options& o) {
    if (!o.data) {
        throw ConfigError("model '" + o.model + "' requires --data");
    }
    return *o.data;
}

// Calls fn(model, exact log evidence if known, analytic E(t) if known).
template <class Fn>
void with_model(const Options& o, Fn&& fn) {
    const std::string& m = o.model;
    if (m == "normal") {
        std::vector<double> y;
        if (o.data) {
            y = harness::ingest_csv(*o.data, harness::Schema::mixture).column("y");
        } else {
            y = normal::simulate_normal_data(o.n, 0.0, derive_seed(o.seed, 0, 1));
        }
        if (!(o.prior_var > 0.0)) {
            throw ConfigError("--prior-var must be positive");
        }
        const normal::NormalModelSpec spec(y, o.prior_mean, o.prior_var);
        std::function<double(Temperature)> e = [spec](Temperature t) {
            return normal::expected_log_deviance_normal(spec, t);
        };
        fn(normal::NormalModel(spec), std::optional<double>(normal::log_evidence_normal(spec)), std::optional(e));
    } else if (m == "pine1" || m == "pine2") {
        const auto data = harness::pine_from(harness::ingest_csv(require_data(o), harness::Schema::pine));
        const auto mode = o.prior.empty() ? harness::PriorMode::informative : harness::parse_prior_mode(o.prior);
        const auto scaling = o.pine_scaling == "averaged" ? linreg::UnitInformationScaling::averaged_inverse
                                                          : linreg::UnitInformationScaling::summed_information;
        const auto specs = harness::pine_specs(data, mode, scaling);
        const auto& spec = m == "pine1" ? specs.first : specs.second;
        std::function<double(Temperature)> e = [spec](Temperature t) {
            return linreg::expected_log_deviance_linreg(spec, t);
        };
        fn(linreg::LinRegModel(spec), std::optional<double>(linreg::exact_log_evidence_linreg(spec)), std::optional(e));
    } else if (m == "pima1" || m == "pima2") {
        const auto data = harness::pima_from(harness::ingest_csv(require_data(o), harness::Schema::pima));
        const auto mode = o.prior.empty() ? harness::PriorMode::vague : harness::parse_prior_mode(o.prior);
        const auto cov = o.pima_covariance == "conventional" ? logistic::UnitInformationCovariance::conventional
                                                             : logistic::UnitInformationCovariance::printed;
        const auto specs = harness::pima_specs(data, mode, cov);
        fn(logistic::LogisticModel(m == "pima1" ? specs.first : specs.second), std::optional<double>{},
           std::optional<std::function<double(Temperature)>>{});
    } else if (m == "mixture") {
        std::vector<double> y;
        if (o.data) {
            y = harness::ingest_csv(*o.data, harness::Schema::mixture).column("y");
        } else {
            const std::vector<double> mu = {-5.0, 0.0, 5.0}, s2 = {1.0, 1.0, 1.0}, w = {1.0, 1.0, 1.0};
            y = mixture::simulate_mixture(o.n, mu, s2, w, derive_seed(o.seed, 0, 1));
        }
        fn(mixture::MixtureModel(mixture::MixtureSpec{}, y), std::optional<double>{},
           std::optional<std::function<double(Temperature)>>{});
    } else {
        throw ConfigError("unknown model '" + m + "' (expected normal, pine1, pine2, pima1, pima2 or mixture)");
    }
}

harness::ResultRecord record_for(const Options& o, const std::string& experiment, const EvidenceEstimate& est,
                                 std::uint64_t seed) {
    harness::ResultRecord r;
    r.experiment = experiment;
    r.model = o.model;
    r.method = std::string(to_string(est.method));
    r.log_evidence = est.log_evidence;
    r.std_error = est.std_error;
    r.seed = seed;
    r.aux = est.diagnostics;
    return r;
}

class Output {
public:
    explicit Output(const std::optional<std::string>& path) {
        if (path) {
            file_.open(*path);
            if (!file_) {
                throw ConfigError("cannot open output file: " + *path);
            }
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

int cmd_schedule(const Options& o) {
    const auto s = schedule_from(o);
    Output out(o.out);
    out.stream().precision(17);
    for (double t : s.points()) {
        out.stream() << t << '\n';
    }
    return exit_ok;
}

int cmd_wbic(const Options& o) {
    const auto chain = chain_from(o, {100000, 10000});
    Output out(o.out);
    with_model(o, [&](const auto& model, std::optional<double> exact, auto) {
        const std::uint64_t seed = derive_seed(o.seed, 0, 2);
        auto rec = record_for(o, "wbic", wbic_estimate(model, chain, seed), seed);
        if (exact) {
            rec.aux["exact"] = *exact;
        }
        out.stream() << harness::emit(rec) << '\n';
    });
    return exit_ok;
}

int cmd_pp(const Options& o) {
    if (o.pp_method != "standard" && o.pp_method != "corrected") {
        throw ConfigError("pp method must be standard or corrected");
    }
    const auto schedule = schedule_from(o);
    const auto chain = pp_chain_from(o, chain_from(o, {20000, 2000}));
    Output out(o.out);
    with_model(o, [&](const auto& model, std::optional<double> exact, auto) {
        const std::uint64_t seed = derive_seed(o.seed, 0, 3);
        const auto run = run_power_posterior(model, schedule, chain, seed, o.threads);
        const auto est = o.pp_method == "standard" ? pp_standard(run) : pp_corrected(run);
        auto rec = record_for(o, "pp", est, seed);
        if (exact) {
            rec.aux["exact"] = *exact;
        }
        out.stream() << harness::emit(rec) << '\n';
    });
    return exit_ok;
}

int cmd_oracle_t(const Options& o) {
    Output out(o.out);
    with_model(o, [&](const auto& model, std::optional<double> exact, auto efn) {
        if (!exact || !efn) {
            throw ConfigError("oracle-t needs a model with an exact evidence (normal, pine1, pine2)");
        }
        const Temperature t = optimal_temperature_search(*efn, *exact, 1e-12);
        EvidenceEstimate est{*exact, std::nullopt, EvidenceMethod::oracle_t,
                             {{"t_star", t.value()}, {"t_w", wbic_temperature(model.sample_count()).value()}}};
        out.stream() << harness::emit(record_for(o, "oracle-t", est, o.seed)) << '\n';
    });
    return exit_ok;
}

int cmd_idealized(const Options& o) {
    if (!(o.prior_var > 0.0)) {
        throw ConfigError("--prior-var must be positive");
    }
    const normal::NormalModelSpec spec(normal::simulate_normal_data(o.n, 0.0, derive_seed(o.seed, 0, 1)),
                                       o.prior_mean, o.prior_var);
    const auto cmp = idealized_comparison_normal(spec);
    Output out(o.out);
    auto& s = out.stream();
    s.precision(17);
    s << "n,prior_mean,prior_variance,t_star,wbic_variance,pp_variance,ratio\n"
      << o.n << ',' << o.prior_mean << ',' << o.prior_var << ',' << cmp.t_star << ',' << cmp.wbic_variance << ','
      << cmp.pp_variance << ',' << cmp.pp_variance / cmp.wbic_variance << '\n';
    return exit_ok;
}

int cmd_replicate(const Options& o) {
    harness::ExperimentConfig cfg;
    cfg.experiment = o.experiment;
    if (!o.prior.empty()) {
        cfg.prior = harness::parse_prior_mode(o.prior);
    }
    cfg.chain = chain_from(o, cfg.chain);
    cfg.pp_chain = pp_chain_from(o, cfg.pp_chain);
    if (o.experiment == "fig5") {
        cfg.chain = chain_from(o, {20000, 2000});
        cfg.replicates = 50;
    } else if (o.experiment == "fig2a" || o.experiment == "fig2b" || o.experiment == "fig3") {
        cfg.replicates = 100;
    }
    cfg.base_seed = o.seed;
    if (o.replicates > 0) {
        cfg.replicates = o.replicates;
    }
    cfg.schedule_m = o.schedule_m;
    cfg.schedule_c = o.schedule_c;
    if (o.data) {
        cfg.data = *o.data;
    }
    cfg.threads = o.threads;
    cfg.pine_scaling = o.pine_scaling == "averaged" ? linreg::UnitInformationScaling::averaged_inverse
                                                    : linreg::UnitInformationScaling::summed_information;
    cfg.pima_covariance = o.pima_covariance == "conventional" ? logistic::UnitInformationCovariance::conventional
                                                              : logistic::UnitInformationCovariance::printed;
    cfg.validate();

    const std::filesystem::path base = o.out.value_or(o.experiment + ".jsonl");
    auto sibling = [&](const std::string& suffix) {
        auto p = base;
        p.replace_extension(suffix);
        return p;
    };
    std::ofstream results(base), timing(sibling(".timing.jsonl"));
    if (!results || !timing) {
        throw ConfigError("cannot open output file: " + base.string());
    }
    const bool is_figure = o.experiment.starts_with("fig");
    std::ofstream figure;
    if (is_figure) {
        figure.open(sibling(".csv"));
    }
    harness::RecordWriter writer(&results, &timing);
    const auto outcome = harness::run_experiment(cfg, writer, is_figure ? &figure : nullptr);
    if (!writer.records().empty()) {
        std::ofstream summary(sibling(".summary.csv"));
        harness::write_summary_csv(summary, harness::summarize(writer.records()));
    }
    for (const auto& msg : outcome.messages) {
        std::cerr << "failed: " << msg << '\n';
    }
    std::cerr << outcome.records << " records written to " << base.string() << '\n';
    return outcome.failures == 0 ? exit_ok : exit_partial;
}

int cmd_summarize(const Options& o) {
    if (o.inputs.empty()) {
        throw ConfigError("summarize needs at least one records file");
    }
    std::vector<harness::ResultRecord> records;
    for (const auto& path : o.inputs) {
        if (!std::filesystem::exists(path)) {
            throw ConfigError("records file not found: " + path);
        }
        auto part = harness::read_records(path);
        records.insert(records.end(), part.begin(), part.end());
    }
    if (records.empty()) {
        throw ConfigError("no records to summarize");
    }
    Output out(o.out);
    harness::write_summary_csv(out.stream(), harness::summarize(records));
    return exit_ok;
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--model", o.model, "normal, pine1, pine2, pima1, pima2 or mixture");
    cmd->add_option("--prior", o.prior, "informative, unit-information or vague")
        ->check(CLI::IsMember({"informative", "unit-information", "vague"}));
    cmd->add_option("--data", o.data, "CSV dataset")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "base seed");
    cmd->add_option("--chain-n", o.chain_n, "MCMC iterations");
    cmd->add_option("--burn-in", o.burn_in, "discarded iterations");
    cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
    cmd->add_option("--n", o.n, "synthetic sample size");
    cmd->add_option("--prior-mean", o.prior_mean, "normal model prior mean");
    cmd->add_option("--prior-var", o.prior_var, "normal model prior variance");
    cmd->add_option("--out", o.out, "output file (default stdout)");
}

void add_schedule(CLI::App* cmd, Options& o) {
    cmd->add_option("--schedule-m", o.schedule_m, "number of intervals");
    cmd->add_option("--schedule-c", o.schedule_c, "power exponent");
}

void add_pp_chain(CLI::App* cmd, Options& o) {
    cmd->add_option("--pp-chain-n", o.pp_chain_n, "MCMC iterations per temperature");
    cmd->add_option("--pp-burn-in", o.pp_burn_in, "discarded iterations per temperature");
}

void add_conventions(CLI::App* cmd, Options& o) {
    cmd->add_option("--pine-scaling", o.pine_scaling, "unit-information Q0 for pine: summed or averaged")
        ->check(CLI::IsMember({"summed", "averaged"}));
    cmd->add_option("--pima-covariance", o.pima_covariance, "unit-information covariance: printed or conventional")
        ->check(CLI::IsMember({"printed", "conventional"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"WBIC and power-posterior evidence estimation"};
    app.require_subcommand(1);
    Options o;
    int (*handler)(const Options&) = nullptr;

    auto* schedule = app.add_subcommand("schedule", "print a power schedule t_j = (j/m)^c");
    add_schedule(schedule, o);
    schedule->add_option("--out", o.out, "output file (default stdout)");
    schedule->callback([&] { handler = cmd_schedule; });

    auto* wbic = app.add_subcommand("wbic", "WBIC estimate from one chain at t_w = 1/log n");
    add_common(wbic, o);
    add_conventions(wbic, o);
    wbic->callback([&] { handler = cmd_wbic; });

    auto* pp = app.add_subcommand("pp", "power-posterior estimate");
    pp->add_option("method", o.pp_method, "standard or corrected")->check(CLI::IsMember({"standard", "corrected"}));
    add_common(pp, o);
    add_schedule(pp, o);
    add_pp_chain(pp, o);
    add_conventions(pp, o);
    pp->callback([&] { handler = cmd_pp; });

    auto* oracle = app.add_subcommand("oracle-t", "optimal temperature t* where E(t) = log p(y)");
    add_common(oracle, o);
    add_conventions(oracle, o);
    oracle->callback([&] { handler = cmd_oracle_t; });

    auto* idealized = app.add_subcommand("idealized", "ideal WBIC vs power-posterior variances, normal model");
    add_common(idealized, o);
    idealized->callback([&] { handler = cmd_idealized; });

    auto* replicate = app.add_subcommand("replicate", "seeded replication of a table or figure");
    replicate->add_option("experiment", o.experiment)->required()->check(CLI::IsMember(harness::experiment_ids()));
    add_common(replicate, o);
    add_schedule(replicate, o);
    add_pp_chain(replicate, o);
    add_conventions(replicate, o);
    replicate->add_option("--replicates", o.replicates, "replicates or datasets");
    replicate->callback([&] { handler = cmd_replicate; });

    auto* summarize = app.add_subcommand("summarize", "summary CSV from records files");
    summarize->add_option("records", o.inputs, "JSON-lines records files")->required();
    summarize->add_option("--out", o.out, "output file (default stdout)");
    summarize->callback([&] { handler = cmd_summarize; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        return handler(o);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const harness::DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_partial;
    }
}
