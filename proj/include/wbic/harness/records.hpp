#pragma once

// Result records (JSON lines), their writer, and replicate summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

namespace wbic::harness {

struct ResultRecord {
    std::string experiment;
    std::size_t replicate = 0;
    std::string model;
    std::string method;
    double log_evidence = 0.0;
    std::optional<double> std_error;
    std::optional<double> wall_time_s;
    std::uint64_t seed = 0;
    std::map<std::string, double> aux;  // t_star, t_w, ...

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

inline nlohmann::json to_json(const ResultRecord& r) {
    nlohmann::json j;
    j["experiment"] = r.experiment;
    j["replicate"] = r.replicate;
    j["model"] = r.model;
    j["method"] = r.method;
    j["log_evidence"] = r.log_evidence;
    j["std_error"] = r.std_error ? nlohmann::json(*r.std_error) : nlohmann::json(nullptr);
    if (r.wall_time_s) {
        j["wall_time_s"] = *r.wall_time_s;
    }
    j["seed"] = r.seed;
    j["aux"] = r.aux;
    return j;
}

inline ResultRecord record_from_json(const nlohmann::json& j) {
    ResultRecord r;
    r.experiment = j.at("experiment").get<std::string>();
    r.replicate = j.at("replicate").get<std::size_t>();
    r.model = j.at("model").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.log_evidence = j.at("log_evidence").get<double>();
    if (j.contains("std_error") && !j["std_error"].is_null()) {
        r.std_error = j["std_error"].get<double>();
    }
    if (j.contains("wall_time_s") && !j["wall_time_s"].is_null()) {
        r.wall_time_s = j["wall_time_s"].get<double>();
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("aux")) {
        r.aux = j["aux"].get<std::map<std::string, double>>();
    }
    return r;
}

inline std::string emit(const ResultRecord& r) { return to_json(r).dump(); }

inline ResultRecord parse_record(const std::string& line) { return record_from_json(nlohmann::json::parse(line)); }

inline std::vector<ResultRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open records file: " + path.string());
    }
    std::vector<ResultRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(parse_record(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Serialized, flushed JSON-lines output. Wall times go to a separate timing
/// stream so the results stream is byte-identical across repeated runs.
class RecordWriter {
public:
    RecordWriter(std::ostream* results, std::ostream* timing) : results_(results), timing_(timing) {}

    void write(const ResultRecord& r) {
        std::lock_guard lock(mutex_);
        ResultRecord stable = r;
        stable.wall_time_s.reset();
        if (results_) {
            *results_ << emit(stable) << '\n';
            results_->flush();
        }
        if (timing_ && r.wall_time_s) {
            nlohmann::json j{{"experiment", r.experiment}, {"replicate", r.replicate}, {"model", r.model},
                             {"method", r.method},         {"wall_time_s", *r.wall_time_s}};
            *timing_ << j.dump() << '\n';
            timing_->flush();
        }
        records_.push_back(std::move(stable));
    }

    [[nodiscard]] const std::vector<ResultRecord>& records() const noexcept { return records_; }

private:
    std::ostream* results_;
    std::ostream* timing_;
    std::mutex mutex_;
    std::vector<ResultRecord> records_;
};

struct SummaryRow {
    std::string experiment;
    std::string quantity;  // "log_evidence", "bayes_factor" or "corrected_beats_standard"
    std::string model;     // model name, or "a/b" for a Bayes factor of a over b
    std::string method;
    std::size_t count = 0;
    double mean = 0.0;
    std::optional<double> std_error;

    friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

/// Orientation of the reported Bayes factor for an experiment's model pair.
inline std::optional<std::pair<std::string, std::string>> bayes_factor_pair(const std::string& experiment,
                                                                            const std::vector<std::string>& models) {
    auto has = [&](const std::string& m) { return std::find(models.begin(), models.end(), m) != models.end(); };
    if (has("pine1") && has("pine2")) {
        return std::pair{std::string("pine2"), std::string("pine1")};
    }
    if (has("pima1") && has("pima2")) {
        return std::pair{std::string("pima1"), std::string("pima2")};
    }
    (void)experiment;
    if (models.size() == 2) {
        return std::pair{models[1], models[0]};
    }
    return std::nullopt;
}

/// Per (experiment, method, model): mean and standard error of the mean over
/// replicates (sd / sqrt(R); a single record keeps its own standard error;
/// exact records have none). Bayes factors use the delta method on the log
/// scale: SE(BF) = BF sqrt(se_a^2 + se_b^2). Values are sorted before
/// summation, so the summary does not depend on record order.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRecord>& records) {
    if (records.empty()) {
        throw std::invalid_argument("summarize: no records");
    }
    using Key = std::tuple<std::string, std::string, std::string>;  // experiment, method, model
    std::map<Key, std::vector<const ResultRecord*>> groups;
    for (const auto& r : records) {
        groups[{r.experiment, r.method, r.model}].push_back(&r);
    }

    std::vector<SummaryRow> rows;
    std::map<std::pair<std::string, std::string>, std::map<std::string, SummaryRow>> by_method;
    for (auto& [key, recs] : groups) {
        const auto& [experiment, method, model] = key;
        std::vector<double> values;
        for (const auto* r : recs) {
            values.push_back(r->log_evidence);
        }
        std::sort(values.begin(), values.end());
        SummaryRow row{experiment, "log_evidence", model, method, values.size(), 0.0, std::nullopt};
        double sum = 0.0;
        for (double v : values) {
            sum += v;
        }
        row.mean = sum / static_cast<double>(values.size());
        if (method != "exact") {
            if (values.size() >= 2) {
                double ss = 0.0;
                for (double v : values) {
                    ss += (v - row.mean) * (v - row.mean);
                }
                row.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
            } else {
                row.std_error = recs.front()->std_error;
            }
        }
        rows.push_back(row);
        by_method[{experiment, method}][model] = row;
    }

    for (const auto& [em, models] : by_method) {
        std::vector<std::string> names;
        for (const auto& [name, _] : models) {
            names.push_back(name);
        }
        const auto pair = bayes_factor_pair(em.first, names);
        if (!pair) {
            continue;
        }
        const auto& a = models.at(pair->first);
        const auto& b = models.at(pair->second);
        SummaryRow bf{em.first, "bayes_factor", pair->first + "/" + pair->second, em.second,
                      std::min(a.count, b.count), std::exp(a.mean - b.mean), std::nullopt};
        if (a.std_error || b.std_error) {
            const double sa = a.std_error.value_or(0.0), sb = b.std_error.value_or(0.0);
            bf.std_error = bf.mean * std::sqrt(sa * sa + sb * sb);
        }
        rows.push_back(bf);
    }

    // paired per-replicate comparison against the exact value
    std::map<std::pair<std::string, std::string>, double> exact;
    std::map<std::tuple<std::string, std::string, std::size_t>, std::pair<std::optional<double>, std::optional<double>>>
        pp;
    for (const auto& r : records) {
        if (r.method == "exact") {
            exact[{r.experiment, r.model}] = r.log_evidence;
        } else if (r.method == "pp_standard") {
            pp[{r.experiment, r.model, r.replicate}].first = r.log_evidence;
        } else if (r.method == "pp_corrected") {
            pp[{r.experiment, r.model, r.replicate}].second = r.log_evidence;
        }
    }
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> wins;
    for (const auto& [key, values] : pp) {
        const auto& [experiment, model, rep] = key;
        const auto it = exact.find({experiment, model});
        if (it == exact.end() || !values.first || !values.second) {
            continue;
        }
        auto& w = wins[{experiment, model}];
        ++w.second;
        if (std::abs(*values.second - it->second) < std::abs(*values.first - it->second)) {
            ++w.first;
        }
    }
    for (const auto& [key, w] : wins) {
        rows.push_back({key.first, "corrected_beats_standard", key.second, "pp_corrected", w.second,
                        static_cast<double>(w.first) / static_cast<double>(w.second), std::nullopt});
    }
    return rows;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "experiment,quantity,model,method,count,mean,std_error\n";
    out.precision(17);
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.quantity << ',' << r.model << ',' << r.method << ',' << r.count << ','
            << r.mean << ',';
        if (r.std_error) {
            out << *r.std_error;
        }
        out << '\n';
    }
}

}  // namespace wbic::harness
