#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/config.hpp"
#include "framelab/corpus.hpp"
#include "framelab/metrics.hpp"
#include "framelab/model.hpp"
#include "framelab/registry.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// Search spaces: ordered (name -> finite value list). Sampling draws one
// uniform value per field, in field order, from a stream seeded per trial.
// ---------------------------------------------------------------------------

struct SearchSpace {
    std::vector<std::pair<std::string, std::vector<std::string>>> fields;

    void set(const std::string& name, std::vector<std::string> values) {
        for (auto& f : fields)
            if (f.first == name) {
                f.second = std::move(values);
                return;
            }
        fields.emplace_back(name, std::move(values));
    }

    const std::vector<std::string>* find(const std::string& name) const {
        for (const auto& f : fields)
            if (f.first == name) return &f.second;
        return nullptr;
    }

    void validate() const {
        for (const auto& [name, values] : fields)
            if (values.empty()) throw Error("search space field '" + name + "' has no values");
    }

    // fields come back sorted by key (map order), which fixes the draw order
    static SearchSpace from_config(const KvConfig& cfg, const std::string& section) {
        SearchSpace s;
        for (const auto& [key, value] : cfg.section(section)) {
            std::vector<std::string> values;
            for (const auto& part : split(value, ',')) {
                std::string v = trim(part);
                if (!v.empty()) values.push_back(v);
            }
            s.fields.emplace_back(key, values);
        }
        s.validate();
        return s;
    }
};

using SampledConfig = std::vector<std::pair<std::string, std::string>>;

inline SampledConfig sample_trial(const SearchSpace& space, std::uint64_t seed) {
    space.validate();
    Rng rng(seed);
    SampledConfig out;
    for (const auto& [name, values] : space.fields)
        out.emplace_back(name, values[rng.below(values.size())]);
    return out;
}

inline const std::string* sampled_value(const SampledConfig& s, const std::string& key) {
    for (const auto& [k, v] : s)
        if (k == key) return &v;
    return nullptr;
}

namespace detail {

inline bool parse_yes_no(const std::string& v, const std::string& key) {
    if (v == "yes" || v == "true") return true;
    if (v == "no" || v == "false") return false;
    throw Error("expected yes/no for '" + key + "', got '" + v + "'");
}

}  // namespace detail

// Applies one sampled hyperparameter to the trial configuration. Key names
// match the search-space tables after KvConfig normalization.
inline void apply_hyperparameter(TrialConfig& tc, const std::string& key, const std::string& value) {
    if (key == "dataset") tc.dataset_choice = value;
    else if (key == "classwise" || key == "classwise_training")
        tc.train.classwise = detail::parse_yes_no(value, key);
    else if (key == "max_steps") tc.train.max_steps = std::stoi(value);
    else if (key == "learning_rate") tc.train.learning_rate = std::stod(value);
    else if (key == "batch_size") tc.train.batch_size = std::stoi(value);
    else if (key == "weight_decay") tc.train.weight_decay = std::stod(value);
    else if (key == "loss_scaling") tc.train.loss_scaling = detail::parse_yes_no(value, key);
    else if (key == "loss_scale_threshold") {
        if (value == "n/a" || value == "none") tc.train.loss_scale_threshold = std::nullopt;
        else tc.train.loss_scale_threshold = std::stod(value);
    } else if (key == "gradient_clipping") tc.train.grad_clip = std::stod(value);
    else if (key == "warmup_ratio") tc.train.warmup_ratio = std::stod(value);
    else if (key == "dropout") tc.train.dropout = std::stod(value);
    else if (key == "hash_dim") tc.features.hash_dim = std::stoi(value);
    else if (key == "word_ngrams") tc.features.word_ngrams = parse_ngram_range(value);
    else if (key == "char_ngrams") tc.features.char_ngrams = parse_ngram_range(value);
    else if (key == "max_tokens") tc.features.max_tokens = std::stoi(value);
    else if (key == "weighting") tc.features.weighting = parse_weighting(value);
    else if (key == "hidden_dim") tc.hidden_dim = std::stoi(value);
    else if (key == "base_model" || key == "continue_multi_task" || key == "fresh_init_probability" ||
             key == "max_steps_fresh" || key == "max_steps_checkpoint" ||
             key == "learning_rate_fresh" || key == "learning_rate_checkpoint") {
        // consumed by the stage runners, not by the trial config directly
    } else {
        throw Error("unknown hyperparameter: '" + key + "'");
    }
}

// ---------------------------------------------------------------------------
// Data store: official train/dev per (language, task) plus named training
// variants. Immutable once built; trials only read it.
// ---------------------------------------------------------------------------

struct DataStore {
    std::vector<std::string> languages;          // sorted
    std::map<std::string, Dataset> train;        // "<lang>.<task>"
    std::map<std::string, Dataset> dev;          // "<lang>.<task>"
    std::map<std::string, Dataset> variants;     // "<lang>.<task>.<variant>"

    static std::string key(const std::string& lang, Task t) {
        return lang + "." + task_name(t);
    }

    bool has_pair(const std::string& lang, Task t) const { return train.count(key(lang, t)) > 0; }

    const Dataset& train_for(const std::string& lang, Task t) const {
        auto it = train.find(key(lang, t));
        if (it == train.end()) throw Error("no training data for " + key(lang, t));
        return it->second;
    }

    const Dataset& dev_for(const std::string& lang, Task t) const {
        auto it = dev.find(key(lang, t));
        if (it == dev.end()) throw Error("no dev data for " + key(lang, t));
        return it->second;
    }

    const Dataset* variant_for(const std::string& lang, Task t, const std::string& name) const {
        auto it = variants.find(key(lang, t) + "." + name);
        return it == variants.end() ? nullptr : &it->second;
    }

    std::vector<TargetPair> pairs() const {
        std::vector<TargetPair> out;
        for (const auto& l : languages)
            for (Task t : {Task::genre, Task::frames})
                if (has_pair(l, t)) out.push_back({l, t});
        return out;
    }

    void validate() const {
        for (const auto& l : languages) {
            if (!is_training_language(l))
                throw Error("configured language '" + l + "' is not one of the training languages");
            for (Task t : {Task::genre, Task::frames}) {
                if (!train.count(key(l, t))) throw Error("missing training data for " + key(l, t));
                if (!dev.count(key(l, t))) throw Error("missing dev data for " + key(l, t));
            }
        }
    }
};

// Language-set grammar for the cross-lingual "dataset" hyperparameter:
// "all", "all_but_<code>", or "<code>+<code>+...". Anything else is a
// training-variant name, applied per covered pair with official fallback.
inline bool is_language_set_expr(const std::string& v, const std::vector<std::string>& configured) {
    if (v == "all" || v.rfind("all_but_", 0) == 0 || v.find('+') != std::string::npos) return true;
    for (const auto& l : configured)
        if (v == l) return true;
    return false;
}

inline std::vector<std::string> resolve_language_set(const std::string& v,
                                                     const std::vector<std::string>& configured) {
    std::vector<std::string> out;
    if (v == "all" || v.empty()) {
        out = configured;
    } else if (v.rfind("all_but_", 0) == 0) {
        std::string excluded = v.substr(8);
        for (const auto& l : configured)
            if (l != excluded) out.push_back(l);
        if (out.size() == configured.size())
            throw Error("dataset '" + v + "': language '" + excluded + "' is not configured");
    } else {
        for (const auto& part : split(v, '+')) {
            std::string l = trim(part);
            bool known = false;
            for (const auto& c : configured) known = known || c == l;
            if (!known) throw Error("dataset '" + v + "': language '" + l + "' is not configured");
            out.push_back(l);
        }
    }
    if (out.empty()) throw Error("dataset '" + v + "' resolves to no languages");
    std::sort(out.begin(), out.end());
    return out;
}

// Merged training data over (languages x tasks), keeping articles that carry
// at least one covered task's labels.
inline Dataset assemble_training_data(const DataStore& store, const std::vector<std::string>& languages,
                                      const std::vector<Task>& tasks, const std::string& variant) {
    std::vector<const Dataset*> parts;
    for (const auto& lang : languages) {
        for (Task t : tasks) {
            const Dataset* d = nullptr;
            if (!variant.empty()) d = store.variant_for(lang, t, variant);
            if (!d) d = &store.train_for(lang, t);
            parts.push_back(d);
        }
    }
    Dataset merged = merge_datasets(parts);
    Dataset out;
    for (const auto& a : merged.articles) {
        bool usable = false;
        for (Task t : tasks) usable = usable || a.has_label(t);
        if (usable) out.articles.push_back(a);
    }
    if (out.empty()) throw Error("assembled training data has no labeled articles");
    return out;
}

// ---------------------------------------------------------------------------
// Planning. Budget semantics: multi-task trials are counted per
// language, cross-lingual trials per subtask, cross-lingual multi-task
// trials in total. Trial seeds derive from (master seed, group tag, index),
// independent of execution order.
// ---------------------------------------------------------------------------

struct StageOneBudgets {
    int multi_task = 0;                // per language
    int cross_lingual = 0;             // per subtask
    int cross_lingual_multi_task = 0;  // total
};

struct PlannedTrial {
    std::string trial_id;
    Stage stage = Stage::one;
    Paradigm paradigm = Paradigm::multi_task;
    std::string language;      // multi-task group language / stage-2 target language
    std::optional<Task> task;  // cross-lingual group subtask / stage-2 target task
    std::uint64_t trial_seed = 0;
};

namespace detail {

inline std::string pad4(int k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", k);
    return buf;
}

}  // namespace detail

inline std::vector<PlannedTrial> plan_stage1(const StageOneBudgets& budgets,
                                             const std::vector<std::string>& languages,
                                             std::uint64_t master_seed) {
    if (budgets.multi_task < 0 || budgets.cross_lingual < 0 || budgets.cross_lingual_multi_task < 0)
        throw Error("stage 1 budgets must be non-negative");
    std::vector<PlannedTrial> plan;
    std::vector<std::string> langs = languages;
    std::sort(langs.begin(), langs.end());
    for (const auto& lang : langs) {
        for (int k = 0; k < budgets.multi_task; ++k) {
            PlannedTrial t;
            t.trial_id = "s1-mt-" + lang + "-" + detail::pad4(k);
            t.paradigm = Paradigm::multi_task;
            t.language = lang;
            t.trial_seed = derive_seed(master_seed, "stage1.mt." + lang, std::uint64_t(k));
            plan.push_back(t);
        }
    }
    for (Task task : {Task::genre, Task::frames}) {
        for (int k = 0; k < budgets.cross_lingual; ++k) {
            PlannedTrial t;
            t.trial_id = std::string("s1-cl-") + task_name(task) + "-" + detail::pad4(k);
            t.paradigm = Paradigm::cross_lingual;
            t.task = task;
            t.trial_seed = derive_seed(master_seed, std::string("stage1.cl.") + task_name(task),
                                       std::uint64_t(k));
            plan.push_back(t);
        }
    }
    for (int k = 0; k < budgets.cross_lingual_multi_task; ++k) {
        PlannedTrial t;
        t.trial_id = "s1-clmt-" + detail::pad4(k);
        t.paradigm = Paradigm::cross_lingual_multi_task;
        t.trial_seed = derive_seed(master_seed, "stage1.clmt", std::uint64_t(k));
        plan.push_back(t);
    }
    return plan;
}

inline std::vector<PlannedTrial> plan_stage2(int budget_per_pair, const std::vector<TargetPair>& pairs,
                                             std::uint64_t master_seed) {
    if (budget_per_pair < 0) throw Error("stage 2 budget must be non-negative");
    std::vector<PlannedTrial> plan;
    std::vector<TargetPair> sorted_pairs = pairs;
    std::sort(sorted_pairs.begin(), sorted_pairs.end());
    for (const auto& pair : sorted_pairs) {
        for (int k = 0; k < budget_per_pair; ++k) {
            PlannedTrial t;
            t.stage = Stage::two;
            t.trial_id = "s2-" + pair.language + "-" + task_name(pair.task) + "-" + detail::pad4(k);
            t.paradigm = Paradigm::single;
            t.language = pair.language;
            t.task = pair.task;
            t.trial_seed = derive_seed(master_seed, "stage2." + pair.key(), std::uint64_t(k));
            plan.push_back(t);
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Champion selection: per Stage I paradigm group, the best trial under each
// of the four dev metrics, duplicates kept. Ties go to the lowest trial id.
// ---------------------------------------------------------------------------

struct ChampionPick {
    Paradigm group = Paradigm::multi_task;
    MetricName metric = MetricName::macro_f1;
    std::string trial_id;
};

struct Champions {
    std::vector<ChampionPick> picks;  // group-major, metric order within group

    bool empty() const { return picks.empty(); }

    std::vector<std::string> group_picks(Paradigm g) const {
        std::vector<std::string> out;
        for (const auto& p : picks)
            if (p.group == g) out.push_back(p.trial_id);
        return out;
    }
};

inline Champions select_champions(const std::vector<TrialRecord>& stage1_records,
                                  const TargetPair& target) {
    Champions out;
    for (Paradigm group : stage1_paradigms()) {
        std::vector<const TrialRecord*> candidates;
        for (const auto& rec : stage1_records)
            if (rec.ok && rec.config.paradigm == group && rec.report_for(target))
                candidates.push_back(&rec);
        if (candidates.empty())
            throw Error(std::string("select_champions: no successful ") + paradigm_name(group) +
                        " trial covers " + target.key());
        std::sort(candidates.begin(), candidates.end(), [](const TrialRecord* a, const TrialRecord* b) {
            return a->config.trial_id < b->config.trial_id;
        });
        for (MetricName metric : champion_metrics()) {
            const TrialRecord* best = nullptr;
            for (const TrialRecord* c : candidates) {
                double v = metric_value(*c->report_for(target), metric);
                if (!best || v > metric_value(*best->report_for(target), metric)) best = c;
            }
            out.picks.push_back({group, metric, best->config.trial_id});
        }
    }
    return out;
}

inline Champions select_champions(const RunRegistry& registry, const TargetPair& target) {
    return select_champions(registry.read_all(Stage::one), target);
}

// Stage II initialization draw: fresh with probability `fresh_probability`
// (1/4 by default), otherwise one of the three Stage I groups uniformly and
// a champion uniformly within the group; a champion listed twice therefore
// carries twice the mass.
struct InitChoice {
    bool fresh = true;
    Paradigm group = Paradigm::single;
    std::string trial_id;
};

inline InitChoice sample_stage2_init(Rng& rng, const Champions& champions,
                                     double fresh_probability = 0.25) {
    if (champions.empty() && fresh_probability < 1.0)
        throw Error("sample_stage2_init: no champions available and fresh probability < 1");
    InitChoice c;
    if (rng.next_double() < fresh_probability) return c;
    const auto& groups = stage1_paradigms();
    c.fresh = false;
    c.group = groups[rng.below(groups.size())];
    auto picks = champions.group_picks(c.group);
    if (picks.empty()) throw Error("sample_stage2_init: champion group is empty");
    c.trial_id = picks[rng.below(picks.size())];
    return c;
}

// ---------------------------------------------------------------------------
// Trial execution
// ---------------------------------------------------------------------------

struct SearchContext {
    const DataStore* store = nullptr;
    RunRegistry* registry = nullptr;
    std::uint64_t master_seed = 0;
    int workers = 1;
};

namespace detail {

template <typename Fn>
void run_parallel(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mutex;
    int count = std::min<int>(workers, int(n));
    for (int w = 0; w < count; ++w) {
        pool.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!failed.exchange(true)) first_error = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed) throw Error("worker failed: " + first_error);
}

inline std::string format_train_log(const TrainLog& log) {
    std::string out;
    for (std::size_t i = 0; i < log.step_loss.size(); ++i)
        out += "step=" + std::to_string(i) + " lr=" + fmt_double(log.step_lr[i]) +
               " loss=" + fmt_double(log.step_loss[i]) + "\n";
    return out;
}

inline std::vector<TrainExample> featurize_dataset(const Dataset& d, const FeatureConfig& cfg) {
    std::vector<TrainExample> out;
    out.reserve(d.size());
    for (const auto& a : d.articles) out.push_back(make_example(a, cfg));
    return out;
}

inline EvalReport evaluate_model_on_dev(const MultiTaskModel& model, const DataStore& store,
                                        const std::string& lang, Task task) {
    const Dataset& dev = store.dev_for(lang, task);
    ScoreRows probs = predict_proba(model, dev, task);
    if (task == Task::genre) {
        GenreExamples gold;
        for (const auto& a : dev.articles) {
            if (!a.genre) throw Error("dev article '" + a.id + "' lacks a genre label");
            gold.emplace_back(a.id, *a.genre);
        }
        return evaluate_genre(lang, gold, probs);
    }
    FrameExamples gold;
    for (const auto& a : dev.articles) {
        if (!a.frames) throw Error("dev article '" + a.id + "' lacks frame labels");
        gold.emplace_back(a.id, *a.frames);
    }
    return evaluate_frames(lang, gold, probs);
}

// trains, evaluates covered dev pairs, and fills the record; exceptions
// surface as failed records at the caller
inline void run_training_and_eval(const SearchContext& ctx, TrialRecord& rec, std::string& log_text,
                                  std::string& checkpoint_bytes, const MultiTaskModel* start_model) {
    TrialConfig& tc = rec.config;
    std::string variant;
    if (!is_language_set_expr(tc.dataset_choice, ctx.store->languages) &&
        tc.dataset_choice != "official" && !tc.dataset_choice.empty())
        variant = tc.dataset_choice;
    Dataset data = assemble_training_data(*ctx.store, tc.languages, tc.tasks, variant);

    MultiTaskModel model = start_model
                               ? *start_model
                               : init_model(tc.features, tc.hidden_dim, tc.train.classwise,
                                            derive_seed(tc.trial_seed, "init", 0));
    std::vector<TrainExample> examples = featurize_dataset(data, model.features);
    TrainLog tl;
    model = train(std::move(model), examples, tc.train, &tl);
    log_text += format_train_log(tl);

    for (const auto& lang : tc.languages)
        for (Task task : tc.tasks)
            rec.reports[DataStore::key(lang, task)] =
                evaluate_model_on_dev(model, *ctx.store, lang, task);
    checkpoint_bytes = serialize_checkpoint(model, tc.train);
    rec.has_checkpoint = true;
}

}  // namespace detail

// Runs (or re-reads, when already committed) every Stage I trial in the
// plan. Individual trial failures become failed records; the run continues.
inline std::vector<TrialRecord> run_stage1(const SearchContext& ctx,
                                           const std::map<Paradigm, SearchSpace>& spaces,
                                           const StageOneBudgets& budgets) {
    ctx.store->validate();
    for (Paradigm p : stage1_paradigms())
        if (!spaces.count(p) && ((p == Paradigm::multi_task && budgets.multi_task > 0) ||
                                 (p == Paradigm::cross_lingual && budgets.cross_lingual > 0) ||
                                 (p == Paradigm::cross_lingual_multi_task &&
                                  budgets.cross_lingual_multi_task > 0)))
            throw Error(std::string("run_stage1: missing search space for ") + paradigm_name(p));

    std::vector<PlannedTrial> plan = plan_stage1(budgets, ctx.store->languages, ctx.master_seed);
    std::vector<TrialRecord> results(plan.size());

    detail::run_parallel(plan.size(), ctx.workers, [&](std::size_t i) {
        const PlannedTrial& planned = plan[i];
        if (ctx.registry->has_trial(Stage::one, planned.trial_id)) {
            results[i] = ctx.registry->read_trial(Stage::one, planned.trial_id);
            return;
        }
        const SearchSpace& space = spaces.at(planned.paradigm);
        SampledConfig sampled = sample_trial(space, derive_seed(planned.trial_seed, "sample", 0));

        TrialRecord rec;
        TrialConfig& tc = rec.config;
        tc.trial_id = planned.trial_id;
        tc.stage = Stage::one;
        tc.paradigm = planned.paradigm;
        tc.trial_seed = planned.trial_seed;
        tc.dataset_choice = "official";
        std::string log_text;
        std::string checkpoint_bytes;
        try {
            for (const auto& [key, value] : sampled) apply_hyperparameter(tc, key, value);
            tc.train.seed = derive_seed(planned.trial_seed, "train", 0);
            if (planned.paradigm == Paradigm::multi_task) {
                tc.languages = {planned.language};
                tc.tasks = {Task::genre, Task::frames};
            } else {
                tc.languages = resolve_language_set(
                    is_language_set_expr(tc.dataset_choice, ctx.store->languages) ? tc.dataset_choice
                                                                                  : "all",
                    ctx.store->languages);
                if (planned.paradigm == Paradigm::cross_lingual) tc.tasks = {*planned.task};
                else tc.tasks = {Task::genre, Task::frames};
            }
            detail::run_training_and_eval(ctx, rec, log_text, checkpoint_bytes, nullptr);
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.failure = e.what();
            rec.reports.clear();
            rec.has_checkpoint = false;
            log_text += std::string("error: ") + e.what() + "\n";
        }
        ctx.registry->commit_trial(rec, log_text, rec.has_checkpoint ? &checkpoint_bytes : nullptr);
        results[i] = ctx.registry->read_trial(Stage::one, planned.trial_id);
    });
    return results;
}

// Stage II: fine-tune per target pair, sampling the initialization (fresh vs
// Stage I champion checkpoints, 1:3) along with the other hyperparameters.
// A checkpoint init inherits the checkpoint's architecture.
inline std::vector<TrialRecord> run_stage2(const SearchContext& ctx, const SearchSpace& space,
                                           int budget_per_pair, const std::vector<TargetPair>& pairs) {
    ctx.store->validate();
    space.validate();

    double fresh_prob = 0.25;
    if (const auto* v = space.find("fresh_init_probability")) {
        if (v->size() != 1)
            throw Error("fresh_init_probability must be a single value");
        fresh_prob = std::stod((*v)[0]);
        if (fresh_prob < 0 || fresh_prob > 1) throw Error("fresh_init_probability must lie in [0,1]");
    }

    // frozen snapshot of stage 1 for champion selection
    std::vector<TrialRecord> stage1_records = ctx.registry->read_all(Stage::one);
    std::map<std::string, Champions> champions_by_pair;
    for (const auto& pair : pairs) {
        try {
            champions_by_pair[pair.key()] = select_champions(stage1_records, pair);
        } catch (const Error&) {
            if (fresh_prob < 1.0) throw;
            champions_by_pair[pair.key()] = Champions{};
        }
    }

    std::vector<PlannedTrial> plan = plan_stage2(budget_per_pair, pairs, ctx.master_seed);
    std::vector<TrialRecord> results(plan.size());

    detail::run_parallel(plan.size(), ctx.workers, [&](std::size_t i) {
        const PlannedTrial& planned = plan[i];
        if (ctx.registry->has_trial(Stage::two, planned.trial_id)) {
            results[i] = ctx.registry->read_trial(Stage::two, planned.trial_id);
            return;
        }
        const TargetPair target{planned.language, *planned.task};
        const Champions& champs = champions_by_pair.at(target.key());

        TrialRecord rec;
        TrialConfig& tc = rec.config;
        tc.trial_id = planned.trial_id;
        tc.stage = Stage::two;
        tc.paradigm = Paradigm::single;
        tc.trial_seed = planned.trial_seed;
        tc.dataset_choice = "official";
        std::string log_text;
        std::string checkpoint_bytes;
        try {
            Rng init_rng(derive_seed(planned.trial_seed, "init_choice", 0));
            InitChoice choice = sample_stage2_init(init_rng, champs, fresh_prob);
            SampledConfig sampled = sample_trial(space, derive_seed(planned.trial_seed, "sample", 0));

            // conditional fields: the variant matching the init kind wins
            auto conditional = [&](const std::string& base) -> const std::string* {
                const std::string* v =
                    sampled_value(sampled, base + (choice.fresh ? "_fresh" : "_checkpoint"));
                return v ? v : sampled_value(sampled, base);
            };
            for (const auto& [key, value] : sampled) apply_hyperparameter(tc, key, value);
            if (const auto* v = conditional("max_steps")) tc.train.max_steps = std::stoi(*v);
            if (const auto* v = conditional("learning_rate")) tc.train.learning_rate = std::stod(*v);
            tc.train.seed = derive_seed(planned.trial_seed, "train", 0);

            tc.languages = {target.language};
            tc.tasks = {target.task};
            bool continue_mt = false;
            if (const auto* v = sampled_value(sampled, "continue_multi_task"))
                continue_mt = detail::parse_yes_no(*v, "continue_multi_task");

            std::optional<MultiTaskModel> start;
            if (choice.fresh) {
                tc.init = "fresh";
            } else {
                tc.init = choice.trial_id;
                tc.init_group = choice.group;
                Checkpoint ck = load_checkpoint(ctx.registry->checkpoint_path(Stage::one, choice.trial_id));
                start = std::move(ck.model);
                tc.features = start->features;
                tc.hidden_dim = start->hidden_dim;
                tc.train.classwise = start->classwise;
                if (continue_mt && (choice.group == Paradigm::multi_task ||
                                    choice.group == Paradigm::cross_lingual_multi_task))
                    tc.tasks = {Task::genre, Task::frames};
            }
            detail::run_training_and_eval(ctx, rec, log_text, checkpoint_bytes,
                                          start ? &*start : nullptr);
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.failure = e.what();
            rec.reports.clear();
            rec.has_checkpoint = false;
            log_text += std::string("error: ") + e.what() + "\n";
        }
        ctx.registry->commit_trial(rec, log_text, rec.has_checkpoint ? &checkpoint_bytes : nullptr);
        results[i] = ctx.registry->read_trial(Stage::two, planned.trial_id);
    });
    return results;
}

}  // namespace framelab
