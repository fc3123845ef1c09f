#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "framelab/config.hpp"
#include "framelab/corpus.hpp"
#include "framelab/ensemble.hpp"
#include "framelab/ensemble_build.hpp"
#include "framelab/registry.hpp"
#include "framelab/search.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// Pipeline configuration file: dataset paths per language-subtask, search
// spaces, budgets, seed, worker count and output roots. Seed and budgets are
// explicit; there are no hidden defaults in reports.
// ---------------------------------------------------------------------------

struct PipelineConfig {
    std::vector<std::string> languages;
    std::filesystem::path registry_root = "registry";
    std::filesystem::path out_dir = "out";
    std::uint64_t master_seed = 0;
    int workers = 1;

    StageOneBudgets stage1_budgets;
    int stage2_budget = 0;

    struct DataEntry {
        std::string language;
        Task task = Task::genre;
        std::filesystem::path train;
        std::filesystem::path dev;
        std::map<std::string, std::filesystem::path> train_variants;
    };
    std::vector<DataEntry> data;

    std::map<Paradigm, SearchSpace> stage1_spaces;
    SearchSpace stage2_space;

    double top_one_penalty = 0.0;
    std::vector<double> reweight_factors = {1.0, 1.5, 20.0};

    std::filesystem::path base_dir = ".";  // config file directory, for relative paths

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir / p;
    }

    static PipelineConfig from_kv(const KvConfig& kv, const std::filesystem::path& base) {
        PipelineConfig pc;
        pc.base_dir = base;
        for (const auto& l : kv.list("pipeline.languages")) pc.languages.push_back(l);
        std::sort(pc.languages.begin(), pc.languages.end());
        pc.registry_root = kv.get_or("pipeline.registry", "registry");
        pc.out_dir = kv.get_or("pipeline.out", "out");
        pc.master_seed = std::stoull(kv.get("pipeline.seed"));
        pc.workers = std::stoi(kv.get_or("pipeline.workers", "1"));

        pc.stage1_budgets.multi_task = std::stoi(kv.get_or("budgets.multi_task", "0"));
        pc.stage1_budgets.cross_lingual = std::stoi(kv.get_or("budgets.cross_lingual", "0"));
        pc.stage1_budgets.cross_lingual_multi_task =
            std::stoi(kv.get_or("budgets.cross_lingual_multi_task", "0"));
        pc.stage2_budget = std::stoi(kv.get_or("budgets.stage2", "0"));

        for (const auto& lang : pc.languages) {
            for (Task task : {Task::genre, Task::frames}) {
                std::string prefix = "data." + lang + "." + task_name(task);
                if (!kv.has(prefix + ".train")) continue;
                DataEntry e;
                e.language = lang;
                e.task = task;
                e.train = kv.get(prefix + ".train");
                e.dev = kv.get(prefix + ".dev");
                for (const auto& [k, v] : kv.section(prefix + ".train"))
                    e.train_variants[k] = v;
                pc.data.push_back(e);
            }
        }

        for (Paradigm p : stage1_paradigms()) {
            std::string section = std::string("stage1.") + paradigm_name(p);
            if (!kv.section(section).empty())
                pc.stage1_spaces[p] = SearchSpace::from_config(kv, section);
        }
        if (!kv.section("stage2").empty()) pc.stage2_space = SearchSpace::from_config(kv, "stage2");

        pc.top_one_penalty = std::stod(kv.get_or("ensemble.top_one_penalty", "0"));
        if (kv.has("ensemble.reweight_factors")) {
            pc.reweight_factors.clear();
            for (const auto& f : kv.list("ensemble.reweight_factors"))
                pc.reweight_factors.push_back(std::stod(f));
        }
        return pc;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        KvConfig kv = KvConfig::load(path);
        return from_kv(kv, path.has_parent_path() ? path.parent_path() : ".");
    }

    DataStore load_datasets() const {
        DataStore store;
        store.languages = languages;
        for (const auto& e : data) {
            const TaskSpec& spec = task_spec(e.task);
            std::string key = DataStore::key(e.language, e.task);
            store.train[key] = load_dataset(resolve(e.train), spec);
            store.dev[key] = load_dataset(resolve(e.dev), spec);
            for (const auto& [name, path] : e.train_variants)
                store.variants[key + "." + name] = load_dataset(resolve(path), spec);
        }
        store.validate();
        return store;
    }
};

// Manual (single-run) trial configuration from a [features]/[model]/[train]
// config file, for the standalone `train` command.
inline TrialConfig manual_trial_config(const KvConfig& kv) {
    TrialConfig tc;
    for (const auto& [k, v] : kv.section("features")) apply_hyperparameter(tc, k, v);
    for (const auto& [k, v] : kv.section("model")) apply_hyperparameter(tc, k, v);
    for (const auto& [k, v] : kv.section("train")) {
        if (k == "seed") tc.train.seed = std::stoull(v);
        else apply_hyperparameter(tc, k, v);
    }
    return tc;
}

// Candidate pool for one target pair: every successful trial from Stage I
// and II with a dev report for the pair and a stored checkpoint.
inline std::vector<TrialRecord> ensemble_pool_records(const RunRegistry& registry,
                                                      const TargetPair& target) {
    std::vector<TrialRecord> pool;
    for (Stage stage : {Stage::one, Stage::two}) {
        for (const auto& rec : registry.read_all(stage)) {
            if (!rec.ok || !rec.has_checkpoint) continue;
            if (!rec.report_for(target)) continue;
            pool.push_back(rec);
        }
    }
    return pool;
}

// Applies a stored spec to arbitrary articles: loads every member model,
// predicts, combines, postprocesses.
inline ApplyResult predict_with_spec(const RunRegistry& registry, const EnsembleSpec& spec,
                                     const Dataset& articles) {
    spec.validate();
    std::set<std::string> member_set;
    for (const auto& le : spec.per_label)
        for (const auto& id : le.members) member_set.insert(id);
    std::vector<std::string> members(member_set.begin(), member_set.end());
    PredictionMatrix preds = build_prediction_matrix(registry, members, articles, spec.task);
    return apply_ensemble(spec, preds, articles);
}

inline std::string format_probability_rows(const ScoreRows& rows) {
    ScoreRows sorted = rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [id, probs] : sorted) {
        out += id;
        for (double p : probs) {
            out += '\t';
            out += fmt_double(p);
        }
        out += '\n';
    }
    return out;
}

inline std::string format_overlap_table(const OverlapReport& rep) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s\n", "language", "|a|", "|b|", "overlap");
    out += line;
    for (const auto& row : rep.per_language) {
        std::snprintf(line, sizeof(line), "%-10s %8zu %8zu %8zu\n", row.language.c_str(), row.n_a,
                      row.n_b, row.n_shared);
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-10s %8zu %8zu %8zu\n", "all", rep.total.n_a, rep.total.n_b,
                  rep.total.n_shared);
    out += line;
    return out;
}

}  // namespace framelab
