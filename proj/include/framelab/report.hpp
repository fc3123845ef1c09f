#pragma once

#include <json.hpp>

#include "framelab/common.hpp"
#include "framelab/metrics.hpp"
#include "framelab/registry.hpp"

namespace framelab {

// Dev-score distribution per training lineage: Stage I trials grouped by
// paradigm, Stage II trials grouped by init source (fresh vs the Stage I
// paradigm they were fine-tuned from).
struct ParadigmGroupStats {
    std::string group;
    std::size_t count = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

namespace detail {

// linear-interpolation quantile over a sorted sample
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw Error("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    double pos = p * double(sorted.size() - 1);
    std::size_t lo = std::size_t(pos);
    double frac = pos - double(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

inline std::vector<ParadigmGroupStats> report_paradigms(const std::vector<TrialRecord>& records,
                                                        const TargetPair& target, MetricName metric) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& rec : records) {
        if (!rec.ok) continue;
        const EvalReport* rep = rec.report_for(target);
        if (!rep) continue;
        std::string group;
        if (rec.config.stage == Stage::one) {
            group = std::string("I/") + paradigm_name(rec.config.paradigm);
        } else if (rec.config.init == "fresh") {
            group = "II/fresh";
        } else {
            group = std::string("II/from_") +
                    (rec.config.init_group ? paradigm_name(*rec.config.init_group) : "unknown");
        }
        groups[group].push_back(metric_value(*rep, metric));
    }
    if (groups.empty()) throw Error("report_paradigms: no trials cover " + target.key());
    std::vector<ParadigmGroupStats> out;
    for (auto& [name, values] : groups) {
        std::sort(values.begin(), values.end());
        ParadigmGroupStats s;
        s.group = name;
        s.count = values.size();
        s.min = values.front();
        s.q1 = detail::quantile_sorted(values, 0.25);
        s.median = detail::quantile_sorted(values, 0.5);
        s.q3 = detail::quantile_sorted(values, 0.75);
        s.max = values.back();
        out.push_back(s);
    }
    return out;
}

inline std::string format_paradigm_table(const std::vector<ParadigmGroupStats>& stats,
                                         const TargetPair& target, MetricName metric) {
    std::string out = "paradigm comparison for " + target.key() + " (" + metric_name(metric) + ")\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-30s %5s %9s %9s %9s %9s %9s\n", "group", "n", "min", "q1",
                  "median", "q3", "max");
    out += line;
    for (const auto& s : stats) {
        std::snprintf(line, sizeof(line), "%-30s %5zu %9.5f %9.5f %9.5f %9.5f %9.5f\n",
                      s.group.c_str(), s.count, s.min, s.q1, s.median, s.q3, s.max);
        out += line;
    }
    return out;
}

inline std::string paradigm_records_jsonl(const std::vector<ParadigmGroupStats>& stats,
                                          const TargetPair& target, MetricName metric) {
    std::string out;
    for (const auto& s : stats) {
        nlohmann::ordered_json j;
        j["target"] = target.key();
        j["metric"] = metric_name(metric);
        j["group"] = s.group;
        j["count"] = s.count;
        j["min"] = s.min;
        j["q1"] = s.q1;
        j["median"] = s.median;
        j["q3"] = s.q3;
        j["max"] = s.max;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace framelab
