#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/corpus.hpp"
#include "framelab/metrics.hpp"
#include "framelab/model.hpp"

namespace framelab {

enum class Stage { one, two };

inline const char* stage_name(Stage s) { return s == Stage::one ? "stage1" : "stage2"; }

inline Stage parse_stage(const std::string& s) {
    if (s == "stage1") return Stage::one;
    if (s == "stage2") return Stage::two;
    throw Error("unknown stage: '" + s + "'");
}

enum class Paradigm { multi_task, cross_lingual, cross_lingual_multi_task, single };

inline const char* paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::multi_task: return "multi_task";
        case Paradigm::cross_lingual: return "cross_lingual";
        case Paradigm::cross_lingual_multi_task: return "cross_lingual_multi_task";
        default: return "single";
    }
}

inline const char* paradigm_tag(Paradigm p) {
    switch (p) {
        case Paradigm::multi_task: return "mt";
        case Paradigm::cross_lingual: return "cl";
        case Paradigm::cross_lingual_multi_task: return "clmt";
        default: return "s";
    }
}

inline Paradigm parse_paradigm(const std::string& s) {
    for (Paradigm p : {Paradigm::multi_task, Paradigm::cross_lingual,
                       Paradigm::cross_lingual_multi_task, Paradigm::single})
        if (s == paradigm_name(p)) return p;
    throw Error("unknown paradigm: '" + s + "'");
}

inline const std::vector<Paradigm>& stage1_paradigms() {
    static const std::vector<Paradigm> all = {Paradigm::multi_task, Paradigm::cross_lingual,
                                              Paradigm::cross_lingual_multi_task};
    return all;
}

struct TargetPair {
    std::string language;
    Task task = Task::genre;

    std::string key() const { return language + "." + task_name(task); }
    bool operator<(const TargetPair& o) const {
        return key() < o.key();
    }
    bool operator==(const TargetPair& o) const { return language == o.language && task == o.task; }
};

// Fully resolved configuration of one trial, as persisted in the registry.
struct TrialConfig {
    std::string trial_id;
    Stage stage = Stage::one;
    Paradigm paradigm = Paradigm::multi_task;
    std::vector<std::string> languages;  // covered languages
    std::vector<Task> tasks;             // covered tasks
    std::string dataset_choice;          // raw sampled dataset value
    std::string init = "fresh";          // "fresh" or a stage-1 trial id
    std::optional<Paradigm> init_group;  // set when init is a checkpoint
    FeatureConfig features;
    int hidden_dim = 16;
    TrainConfig train;
    std::uint64_t trial_seed = 0;

    bool covers(const TargetPair& t) const {
        bool lang_ok = false, task_ok = false;
        for (const auto& l : languages) lang_ok = lang_ok || l == t.language;
        for (Task x : tasks) task_ok = task_ok || x == t.task;
        return lang_ok && task_ok;
    }
};

inline std::string serialize_trial_config(const TrialConfig& c) {
    std::string out;
    out += "trial_id = " + c.trial_id + "\n";
    out += "stage = " + std::string(stage_name(c.stage)) + "\n";
    out += "paradigm = " + std::string(paradigm_name(c.paradigm)) + "\n";
    std::string langs;
    for (std::size_t i = 0; i < c.languages.size(); ++i) {
        if (i) langs += ",";
        langs += c.languages[i];
    }
    out += "languages = " + langs + "\n";
    std::string tasks;
    for (std::size_t i = 0; i < c.tasks.size(); ++i) {
        if (i) tasks += ",";
        tasks += task_name(c.tasks[i]);
    }
    out += "tasks = " + tasks + "\n";
    out += "dataset = " + c.dataset_choice + "\n";
    out += "init = " + c.init + "\n";
    out += "init_group = " + (c.init_group ? std::string(paradigm_name(*c.init_group)) : "n/a") + "\n";
    out += "hidden_dim = " + std::to_string(c.hidden_dim) + "\n";
    out += "trial_seed = " + std::to_string(c.trial_seed) + "\n";
    out += "features.hash_dim = " + std::to_string(c.features.hash_dim) + "\n";
    out += "features.word_ngrams = " + std::to_string(c.features.word_ngrams.min_n) + "-" +
           std::to_string(c.features.word_ngrams.max_n) + "\n";
    out += "features.char_ngrams = " + std::to_string(c.features.char_ngrams.min_n) + "-" +
           std::to_string(c.features.char_ngrams.max_n) + "\n";
    out += "features.max_tokens = " + std::to_string(c.features.max_tokens) + "\n";
    out += "features.weighting = " + std::string(weighting_name(c.features.weighting)) + "\n";
    for (const auto& line : split(serialize_train_config(c.train), '\n'))
        if (!line.empty()) out += "train." + line + "\n";
    return out;
}

inline NgramRange parse_ngram_range(const std::string& s) {
    auto dash = s.find('-');
    NgramRange r;
    if (dash == std::string::npos) {
        r.min_n = r.max_n = std::stoi(s);
    } else {
        r.min_n = std::stoi(s.substr(0, dash));
        r.max_n = std::stoi(s.substr(dash + 1));
    }
    return r;
}

inline TrialConfig parse_trial_config(const std::string& text) {
    std::map<std::string, std::string> m;
    std::string train_part;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("bad trial config line: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.rfind("train.", 0) == 0) {
            train_part += key.substr(6) + " = " + value + "\n";
        } else {
            m[key] = value;
        }
    }
    TrialConfig c;
    c.trial_id = m.at("trial_id");
    c.stage = parse_stage(m.at("stage"));
    c.paradigm = parse_paradigm(m.at("paradigm"));
    for (const auto& l : split(m.at("languages"), ','))
        if (!trim(l).empty()) c.languages.push_back(trim(l));
    for (const auto& t : split(m.at("tasks"), ','))
        if (!trim(t).empty()) c.tasks.push_back(parse_task(trim(t)));
    c.dataset_choice = m.at("dataset");
    c.init = m.at("init");
    if (m.at("init_group") != "n/a") c.init_group = parse_paradigm(m.at("init_group"));
    c.hidden_dim = std::stoi(m.at("hidden_dim"));
    c.trial_seed = std::stoull(m.at("trial_seed"));
    c.features.hash_dim = std::stoi(m.at("features.hash_dim"));
    c.features.word_ngrams = parse_ngram_range(m.at("features.word_ngrams"));
    c.features.char_ngrams = parse_ngram_range(m.at("features.char_ngrams"));
    c.features.max_tokens = std::stoi(m.at("features.max_tokens"));
    c.features.weighting = parse_weighting(m.at("features.weighting"));
    c.train = parse_train_config(train_part);
    return c;
}

// One persisted run: config, per-pair dev reports, checkpoint and log.
// Failed trials are kept as records with a diagnostic and no checkpoint.
struct TrialRecord {
    TrialConfig config;
    bool ok = true;
    std::string failure;
    std::map<std::string, EvalReport> reports;  // key: "<lang>.<task>"
    bool has_checkpoint = false;

    const EvalReport* report_for(const TargetPair& t) const {
        auto it = reports.find(t.key());
        return it == reports.end() ? nullptr : &it->second;
    }
};

// Directory-per-trial registry:
//   <root>/<stage>/<trial_id>/{config, status, report.<lang>.<task>, checkpoint, log}
// Commits are atomic (write to a sibling temp dir, then rename), the
// registry is append-only, and committing an existing trial_id is a no-op.
class RunRegistry {
public:
    explicit RunRegistry(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path trial_dir(Stage stage, const std::string& id) const {
        return root_ / stage_name(stage) / id;
    }

    std::filesystem::path checkpoint_path(Stage stage, const std::string& id) const {
        return trial_dir(stage, id) / "checkpoint";
    }

    bool has_trial(Stage stage, const std::string& id) const {
        return std::filesystem::exists(trial_dir(stage, id) / "config");
    }

    // returns false when the trial already existed (idempotent re-run)
    bool commit_trial(const TrialRecord& rec, const std::string& log_text,
                      const std::string* checkpoint_bytes) {
        const Stage stage = rec.config.stage;
        const std::string& id = rec.config.trial_id;
        if (has_trial(stage, id)) return false;
        std::filesystem::path final_dir = trial_dir(stage, id);
        std::filesystem::path tmp_dir = root_ / stage_name(stage) / (id + ".tmp");
        std::filesystem::remove_all(tmp_dir);
        std::filesystem::create_directories(tmp_dir);
        write_text_file(tmp_dir / "config", serialize_trial_config(rec.config));
        write_text_file(tmp_dir / "status", rec.ok ? "ok\n" : "failed " + rec.failure + "\n");
        write_text_file(tmp_dir / "log", log_text);
        for (const auto& [key, report] : rec.reports)
            write_text_file(tmp_dir / ("report." + key), serialize_eval_report(report));
        if (checkpoint_bytes) write_text_file(tmp_dir / "checkpoint", *checkpoint_bytes);
        std::error_code ec;
        std::filesystem::rename(tmp_dir, final_dir, ec);
        if (ec) {
            if (has_trial(stage, id)) {  // lost a benign race with another worker
                std::filesystem::remove_all(tmp_dir);
                return false;
            }
            throw Error("registry commit failed for " + id + ": " + ec.message());
        }
        return true;
    }

    std::vector<std::string> trial_ids(Stage stage) const {
        std::vector<std::string> ids;
        std::filesystem::path dir = root_ / stage_name(stage);
        if (!std::filesystem::exists(dir)) return ids;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            if (name.size() > 4 && name.substr(name.size() - 4) == ".tmp") continue;
            if (std::filesystem::exists(entry.path() / "config")) ids.push_back(name);
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    TrialRecord read_trial(Stage stage, const std::string& id) const {
        std::filesystem::path dir = trial_dir(stage, id);
        TrialRecord rec;
        rec.config = parse_trial_config(read_text_file(dir / "config"));
        std::string status = trim(read_text_file(dir / "status"));
        if (status == "ok") {
            rec.ok = true;
        } else if (status.rfind("failed", 0) == 0) {
            rec.ok = false;
            rec.failure = trim(status.substr(6));
        } else {
            throw Error("registry: unrecognized status for trial " + id + ": " + status);
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            std::string name = entry.path().filename().string();
            if (name.rfind("report.", 0) == 0) {
                EvalReport rep = parse_eval_report(read_text_file(entry.path()));
                rec.reports[name.substr(7)] = rep;
            }
        }
        rec.has_checkpoint = std::filesystem::exists(dir / "checkpoint");
        return rec;
    }

    std::vector<TrialRecord> read_all(Stage stage) const {
        std::vector<TrialRecord> out;
        for (const auto& id : trial_ids(stage)) out.push_back(read_trial(stage, id));
        return out;
    }

private:
    std::filesystem::path root_;
};

}  // namespace framelab
