#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/config.hpp"
#include "framelab/corpus.hpp"
#include "framelab/ensemble.hpp"
#include "framelab/ensemble_build.hpp"
#include "framelab/metrics.hpp"
#include "framelab/model.hpp"
#include "framelab/pipeline.hpp"
#include "framelab/registry.hpp"
#include "framelab/report.hpp"
#include "framelab/search.hpp"

namespace fl = framelab;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string registry_dir;
    std::string out_dir;
    std::string language;
    std::string task = "genre";
    std::int64_t seed = -1;
    int workers = 0;
};

fl::PipelineConfig load_pipeline(const CommonOpts& o) {
    if (o.config_path.empty()) throw fl::Error("--config is required for this command");
    fl::PipelineConfig pc = fl::PipelineConfig::load(o.config_path);
    if (!o.registry_dir.empty()) pc.registry_root = o.registry_dir;
    if (!o.out_dir.empty()) pc.out_dir = o.out_dir;
    if (o.seed >= 0) pc.master_seed = std::uint64_t(o.seed);
    if (o.workers > 0) pc.workers = o.workers;
    return pc;
}

std::vector<fl::TargetPair> select_pairs(const fl::PipelineConfig& pc, const CommonOpts& o,
                                         bool task_given) {
    std::vector<fl::TargetPair> pairs;
    for (const auto& lang : pc.languages) {
        if (!o.language.empty() && lang != o.language) continue;
        for (fl::Task t : {fl::Task::genre, fl::Task::frames}) {
            if (task_given && t != fl::parse_task(o.task)) continue;
            pairs.push_back({lang, t});
        }
    }
    if (pairs.empty()) throw fl::Error("no target pairs match the given --language/--task");
    return pairs;
}

void write_prediction_files(const fs::path& out_dir, const fl::TargetPair& target,
                            const fl::ApplyResult& applied, fl::Task task) {
    fs::create_directories(out_dir);
    fs::path pred_file = out_dir / ("predictions." + target.key() + ".tsv");
    if (task == fl::Task::genre)
        fl::write_text_file(pred_file, fl::format_genre_predictions(applied.genre_labels));
    else
        fl::write_text_file(pred_file, fl::format_frame_predictions(applied.frame_labels));
    fl::write_text_file(out_dir / ("probabilities." + target.key() + ".tsv"),
                        fl::format_probability_rows(applied.probabilities));
}

int run_build_interactive(fl::BuildResult& result, const std::vector<fl::TrialRecord>& pool,
                          const fl::PredictionMatrix& preds, const fl::Dataset& dev,
                          const fl::TargetPair& target,
                          const std::vector<fl::CandidateTemplate>& candidates,
                          const fl::BuildOptions& base_opts) {
    std::cout << fl::format_comparison_table(result);
    std::cout << "enter candidate index per label (" << result.evals.size()
              << " values, blank keeps the auto pick): " << std::flush;
    std::string line;
    std::getline(std::cin, line);
    line = fl::trim(line);
    if (line.empty()) return 0;
    std::vector<std::size_t> forced;
    for (const auto& part : fl::split(line, ' '))
        if (!fl::trim(part).empty()) forced.push_back(std::stoull(fl::trim(part)));
    if (forced.size() != result.evals.size())
        throw fl::Error("expected " + std::to_string(result.evals.size()) + " candidate indices");
    fl::BuildOptions opts = base_opts;
    opts.forced_choice = &forced;
    result = fl::build_ensemble(pool, preds, dev, target, candidates, opts);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-lingual multi-task news classification experiment pipeline"};
    app.require_subcommand(1);

    CommonOpts o;
    bool task_given = false;
    bool dry_run = false;
    bool interactive = false;

    auto add_common = [&](CLI::App* cmd, bool with_pipeline) {
        if (with_pipeline) {
            cmd->add_option("--config", o.config_path, "pipeline configuration file");
            cmd->add_option("--registry", o.registry_dir, "run registry root (overrides config)");
            cmd->add_option("--out", o.out_dir, "output directory (overrides config)");
            cmd->add_option("--seed", o.seed, "master seed (overrides config)");
            cmd->add_option("--workers", o.workers, "worker count (overrides config)");
        }
        cmd->add_option("--language", o.language, "target language code");
        cmd->add_option("--task", o.task, "target task: genre or frames")
            ->check(CLI::IsMember({"genre", "frames"}))
            ->each([&](const std::string&) { task_given = true; });
    };

    // ---------------------------------------------------------------- data
    auto* data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);

    auto* stats = data->add_subcommand("stats", "size and id-overlap statistics of two datasets");
    std::string stats_a, stats_b;
    stats->add_option("a", stats_a, "first dataset file")->required();
    stats->add_option("b", stats_b, "second dataset file")->required();
    stats->callback([&] {
        fl::Dataset a = fl::load_dataset(stats_a, fl::genre_task());
        fl::Dataset b = fl::load_dataset(stats_b, fl::frames_task());
        std::cout << fl::format_overlap_table(fl::dataset_stats(a, b));
    });

    auto* balance = data->add_subcommand("balance", "undersample to a per-label article count");
    std::string bal_in, bal_out;
    std::size_t bal_per_label = 10;
    std::uint64_t bal_seed = 0;
    balance->add_option("--in", bal_in, "input dataset file")->required();
    balance->add_option("--per-label", bal_per_label, "articles to keep per genre label")->required();
    balance->add_option("--seed", bal_seed, "sampling seed")->required();
    balance->add_option("--out", bal_out, "output dataset file")->required();
    balance->callback([&] {
        fl::Dataset d = fl::load_dataset(bal_in, fl::genre_task());
        fl::Dataset out = fl::undersample_balanced(d, bal_per_label, bal_seed);
        fl::save_dataset(bal_out, out);
        std::cout << "balanced dataset: " << out.size() << " articles -> " << bal_out << "\n";
    });

    auto* compose = data->add_subcommand("compose", "compose a dataset from per-(label,source) counts");
    std::string comp_cfg, comp_out;
    compose->add_option("--config", comp_cfg, "composition config file")->required();
    compose->add_option("--out", comp_out, "output dataset file")->required();
    compose->callback([&] {
        fl::KvConfig kv = fl::KvConfig::load(comp_cfg);
        fs::path base = fs::path(comp_cfg).parent_path();
        std::vector<fl::Dataset> sources;
        for (const auto& src : kv.list("compose.sources")) {
            fs::path p = fs::path(src).is_absolute() ? fs::path(src) : base / src;
            sources.push_back(fl::load_dataset(p, fl::genre_task()));
        }
        fl::DatasetComposition comp;
        comp.seed = std::stoull(kv.get_or("compose.seed", "0"));
        for (const auto& [key, value] : kv.section("compose.counts")) {
            auto dot = key.find('.');
            if (dot == std::string::npos)
                throw fl::Error("composition count key must be <label>.<source>: " + key);
            comp.request(fl::parse_genre(key.substr(0, dot)), fl::parse_source(key.substr(dot + 1)),
                         std::stoull(value));
        }
        fl::Dataset out = fl::compose_dataset(sources, comp);
        fl::save_dataset(comp_out, out);
        std::cout << "composed dataset: " << out.size() << " articles -> " << comp_out << "\n";
    });

    // --------------------------------------------------------------- train
    auto* train_cmd = app.add_subcommand("train", "train a single model outside the search");
    std::string train_cfg, train_dev, train_out;
    std::vector<std::string> train_files;
    std::string train_task = "both";
    std::string train_lang = "xx";
    train_cmd->add_option("--config", train_cfg, "[features]/[model]/[train] config file")->required();
    train_cmd->add_option("--train", train_files, "training dataset file(s)")->required();
    train_cmd->add_option("--dev", train_dev, "labeled dev dataset for evaluation");
    train_cmd->add_option("--task", train_task, "genre, frames or both")
        ->check(CLI::IsMember({"genre", "frames", "both"}));
    train_cmd->add_option("--language", train_lang, "language tag recorded in reports");
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->callback([&] {
        fl::TrialConfig tc = fl::manual_trial_config(fl::KvConfig::load(train_cfg));
        std::vector<fl::Task> tasks;
        if (train_task == "both") tasks = {fl::Task::genre, fl::Task::frames};
        else tasks = {fl::parse_task(train_task)};

        std::vector<fl::Dataset> loaded;
        std::vector<const fl::Dataset*> parts;
        for (const auto& f : train_files) loaded.push_back(fl::load_dataset(f, fl::genre_task()));
        for (const auto& d : loaded) parts.push_back(&d);
        fl::Dataset merged = fl::merge_datasets(parts);
        fl::Dataset usable;
        for (const auto& a : merged.articles) {
            bool keep = false;
            for (fl::Task t : tasks) keep = keep || a.has_label(t);
            if (keep) usable.articles.push_back(a);
        }

        fl::MultiTaskModel model = fl::init_model(tc.features, tc.hidden_dim, tc.train.classwise,
                                                  fl::derive_seed(tc.train.seed, "init", 0));
        std::vector<fl::TrainExample> examples;
        for (const auto& a : usable.articles) examples.push_back(fl::make_example(a, tc.features));
        fl::TrainLog log;
        model = fl::train(std::move(model), examples, tc.train, &log);

        fs::create_directories(train_out);
        fl::save_checkpoint(fs::path(train_out) / "checkpoint", model, tc.train);
        std::string log_text;
        for (std::size_t i = 0; i < log.step_loss.size(); ++i)
            log_text += "step=" + std::to_string(i) + " lr=" + fl::fmt_double(log.step_lr[i]) +
                        " loss=" + fl::fmt_double(log.step_loss[i]) + "\n";
        fl::write_text_file(fs::path(train_out) / "log", log_text);

        if (!train_dev.empty()) {
            fl::Dataset dev = fl::load_dataset(train_dev, fl::genre_task());
            for (fl::Task t : tasks) {
                fl::ScoreRows probs = fl::predict_proba(model, dev, t);
                fl::EvalReport rep;
                if (t == fl::Task::genre) {
                    fl::GenreExamples gold;
                    for (const auto& a : dev.articles)
                        if (a.genre) gold.emplace_back(a.id, *a.genre);
                    if (gold.size() != dev.size()) continue;
                    rep = fl::evaluate_genre(train_lang, gold, probs);
                } else {
                    fl::FrameExamples gold;
                    for (const auto& a : dev.articles)
                        if (a.frames) gold.emplace_back(a.id, *a.frames);
                    if (gold.size() != dev.size()) continue;
                    rep = fl::evaluate_frames(train_lang, gold, probs);
                }
                fl::write_text_file(fs::path(train_out) /
                                        ("report." + train_lang + "." + fl::task_name(t)),
                                    fl::serialize_eval_report(rep));
            }
        }
        std::cout << "trained on " << usable.size() << " articles, " << tc.train.max_steps
                  << " steps -> " << train_out << "\n";
    });

    // -------------------------------------------------------------- search
    auto* search = app.add_subcommand("search", "two-stage random hyperparameter search");
    search->require_subcommand(1);

    auto* stage1 = search->add_subcommand("stage1", "run the Stage I paradigm searches");
    add_common(stage1, true);
    stage1->add_flag("--dry-run", dry_run, "plan only: print trial counts, train nothing");
    stage1->callback([&] {
        fl::PipelineConfig pc = load_pipeline(o);
        std::vector<fl::PlannedTrial> plan =
            fl::plan_stage1(pc.stage1_budgets, pc.languages, pc.master_seed);
        if (dry_run) {
            std::map<std::string, int> counts;
            for (const auto& t : plan) counts[fl::paradigm_name(t.paradigm)]++;
            for (const auto& [name, n] : counts) std::cout << name << ": " << n << "\n";
            std::cout << "stage1 plan: " << plan.size() << " trials (dry run)\n";
            return;
        }
        if (plan.empty()) {
            std::cout << "stage1: 0 trials (all budgets are zero), registry unchanged\n";
            return;
        }
        fl::DataStore store = pc.load_datasets();
        fl::RunRegistry registry(pc.resolve(pc.registry_root));
        fl::SearchContext ctx{&store, &registry, pc.master_seed, pc.workers};
        auto records = fl::run_stage1(ctx, pc.stage1_spaces, pc.stage1_budgets);
        int ok = 0;
        for (const auto& r : records) ok += r.ok;
        std::cout << "stage1: " << records.size() << " trials (" << ok << " ok, "
                  << records.size() - std::size_t(ok) << " failed), registry "
                  << registry.root().string() << ", seed " << pc.master_seed << "\n";
    });

    auto* stage2 = search->add_subcommand("stage2", "run the Stage II per-pair searches");
    add_common(stage2, true);
    stage2->add_flag("--dry-run", dry_run, "plan only: print trial counts, train nothing");
    stage2->callback([&] {
        fl::PipelineConfig pc = load_pipeline(o);
        std::vector<fl::TargetPair> pairs = select_pairs(pc, o, task_given);
        std::vector<fl::PlannedTrial> plan = fl::plan_stage2(pc.stage2_budget, pairs, pc.master_seed);
        if (dry_run) {
            std::cout << "stage2 plan: " << plan.size() << " trials over " << pairs.size()
                      << " pairs (dry run)\n";
            return;
        }
        if (plan.empty()) {
            std::cout << "stage2: 0 trials (budget is zero), registry unchanged\n";
            return;
        }
        fl::DataStore store = pc.load_datasets();
        fl::RunRegistry registry(pc.resolve(pc.registry_root));
        fl::SearchContext ctx{&store, &registry, pc.master_seed, pc.workers};
        auto records = fl::run_stage2(ctx, pc.stage2_space, pc.stage2_budget, pairs);
        int ok = 0;
        for (const auto& r : records) ok += r.ok;
        std::cout << "stage2: " << records.size() << " trials (" << ok << " ok, "
                  << records.size() - std::size_t(ok) << " failed), registry "
                  << registry.root().string() << ", seed " << pc.master_seed << "\n";
    });

    // ------------------------------------------------------------ evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a labeled dataset");
    std::string eval_ckpt, eval_data, eval_out, eval_lang = "xx";
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "labeled dataset file")->required();
    eval_cmd->add_option("--task", o.task, "genre or frames")
        ->check(CLI::IsMember({"genre", "frames"}));
    eval_cmd->add_option("--language", eval_lang, "language tag recorded in the report");
    eval_cmd->add_option("--out", eval_out, "write the report to this file as well");
    eval_cmd->callback([&] {
        fl::Task task = fl::parse_task(o.task);
        fl::Checkpoint ck = fl::load_checkpoint(eval_ckpt);
        fl::Dataset dev = fl::load_dataset(eval_data, fl::task_spec(task));
        fl::ScoreRows probs = fl::predict_proba(ck.model, dev, task);
        fl::EvalReport rep;
        if (task == fl::Task::genre) {
            fl::GenreExamples gold;
            for (const auto& a : dev.articles) {
                if (!a.genre) throw fl::Error("article '" + a.id + "' lacks a genre label");
                gold.emplace_back(a.id, *a.genre);
            }
            rep = fl::evaluate_genre(eval_lang, gold, probs);
        } else {
            fl::FrameExamples gold;
            for (const auto& a : dev.articles) {
                if (!a.frames) throw fl::Error("article '" + a.id + "' lacks frame labels");
                gold.emplace_back(a.id, *a.frames);
            }
            rep = fl::evaluate_frames(eval_lang, gold, probs);
        }
        std::string text = fl::serialize_eval_report(rep);
        std::cout << text;
        if (!eval_out.empty()) fl::write_text_file(eval_out, text);
    });

    // ------------------------------------------------------------ ensemble
    auto* ensemble = app.add_subcommand("ensemble", "build and apply ensembles");
    ensemble->require_subcommand(1);

    auto* build = ensemble->add_subcommand("build", "compare candidates and freeze a spec");
    add_common(build, true);
    build->add_flag("--interactive", interactive, "print the comparison and prompt for the pick");
    build->callback([&] {
        fl::PipelineConfig pc = load_pipeline(o);
        if (o.language.empty()) throw fl::Error("--language is required for ensemble build");
        fl::TargetPair target{o.language, fl::parse_task(o.task)};
        fl::DataStore store = pc.load_datasets();
        fl::RunRegistry registry(pc.resolve(pc.registry_root));

        std::vector<fl::TrialRecord> pool = fl::ensemble_pool_records(registry, target);
        if (pool.empty()) throw fl::Error("no registry models cover " + target.key());
        std::vector<std::string> ids;
        for (const auto& r : pool) ids.push_back(r.config.trial_id);
        const fl::Dataset& dev = store.dev_for(target.language, target.task);
        fl::PredictionMatrix preds = fl::build_prediction_matrix(registry, ids, dev, target.task);

        std::vector<fl::CandidateTemplate> candidates =
            target.task == fl::Task::genre ? fl::default_genre_candidates(pc.reweight_factors)
                                           : fl::default_frames_candidates();
        fl::BuildOptions opts;
        opts.top_one_penalty = pc.top_one_penalty;
        fl::BuildResult result = fl::build_ensemble(pool, preds, dev, target, candidates, opts);
        if (interactive) run_build_interactive(result, pool, preds, dev, target, candidates, opts);

        fs::path out_dir = pc.resolve(pc.out_dir);
        fs::create_directories(out_dir);
        fl::write_text_file(out_dir / ("ensemble." + target.key() + ".spec"),
                            fl::serialize_ensemble_spec(result.chosen));
        std::string table = "target = " + target.key() + "\nseed = " +
                            std::to_string(pc.master_seed) + "\n" +
                            fl::format_comparison_table(result);
        fl::write_text_file(out_dir / ("ensemble." + target.key() + ".compare.txt"), table);
        fl::write_text_file(out_dir / ("ensemble." + target.key() + ".compare.jsonl"),
                            fl::comparison_records_jsonl(result));
        double obj = result.evals[0][result.chosen_index[0]].objective;
        std::cout << "ensemble built for " << target.key() << ": pool " << pool.size()
                  << " models, first-label objective " << fl::fmt_double(obj) << " -> "
                  << (out_dir / ("ensemble." + target.key() + ".spec")).string() << "\n";
    });

    auto* apply_cmd = ensemble->add_subcommand("apply", "apply a frozen spec to a dataset");
    std::string apply_spec, apply_data;
    apply_cmd->add_option("--spec", apply_spec, "ensemble spec file")->required();
    apply_cmd->add_option("--registry", o.registry_dir, "run registry root")->required();
    apply_cmd->add_option("--data", apply_data, "dataset file")->required();
    apply_cmd->add_option("--out", o.out_dir, "output directory")->required();
    apply_cmd->callback([&] {
        if (!fs::exists(apply_spec))
            throw fl::Error("no ensemble spec: " + apply_spec + " (run `framelab ensemble build` first)");
        fl::EnsembleSpec spec = fl::parse_ensemble_spec(fl::read_text_file(apply_spec));
        fl::RunRegistry registry(o.registry_dir);
        fl::Dataset articles = fl::load_dataset(apply_data, fl::task_spec(spec.task));
        fl::ApplyResult applied = fl::predict_with_spec(registry, spec, articles);
        fl::TargetPair target{spec.language, spec.task};
        write_prediction_files(o.out_dir, target, applied, spec.task);
        std::cout << "applied " << apply_spec << " to " << articles.size() << " articles -> "
                  << o.out_dir << "\n";
    });

    // ------------------------------------------------------------- predict
    auto* predict = app.add_subcommand("predict", "predict labels for a dataset with a frozen spec");
    std::string pred_spec, pred_data;
    predict->add_option("--spec", pred_spec, "ensemble spec file")->required();
    predict->add_option("--registry", o.registry_dir, "run registry root")->required();
    predict->add_option("--data", pred_data, "dataset file (labels optional)")->required();
    predict->add_option("--out", o.out_dir, "output directory")->required();
    predict->callback([&] {
        if (!fs::exists(pred_spec))
            throw fl::Error("no ensemble spec: " + pred_spec + " (run `framelab ensemble build` first)");
        fl::EnsembleSpec spec = fl::parse_ensemble_spec(fl::read_text_file(pred_spec));
        fl::RunRegistry registry(o.registry_dir);
        fl::Dataset articles = fl::load_dataset(pred_data, fl::task_spec(spec.task));
        fl::ApplyResult applied = fl::predict_with_spec(registry, spec, articles);
        fl::TargetPair target{spec.language, spec.task};
        write_prediction_files(o.out_dir, target, applied, spec.task);
        std::cout << "predictions for " << target.key() << ": " << articles.size()
                  << " articles -> " << o.out_dir << "\n";
    });

    // -------------------------------------------------------------- report
    auto* report = app.add_subcommand("report", "reporting utilities");
    report->require_subcommand(1);
    auto* paradigms = report->add_subcommand("paradigms", "dev-score distribution per training lineage");
    add_common(paradigms, true);
    std::string report_metric;
    paradigms->add_option("--metric", report_metric, "metric (default: macro_f1 genre, micro_f1 frames)");
    paradigms->callback([&] {
        fl::PipelineConfig pc = load_pipeline(o);
        if (o.language.empty()) throw fl::Error("--language is required for report paradigms");
        fl::TargetPair target{o.language, fl::parse_task(o.task)};
        fl::MetricName metric = report_metric.empty()
                                    ? (target.task == fl::Task::genre ? fl::MetricName::macro_f1
                                                                      : fl::MetricName::micro_f1)
                                    : fl::parse_metric(report_metric);
        fl::RunRegistry registry(pc.resolve(pc.registry_root));
        std::vector<fl::TrialRecord> records = registry.read_all(fl::Stage::one);
        for (auto& r : registry.read_all(fl::Stage::two)) records.push_back(r);
        auto stats = fl::report_paradigms(records, target, metric);
        std::string table = fl::format_paradigm_table(stats, target, metric);
        std::cout << table;
        fs::path out_dir = pc.resolve(pc.out_dir);
        fs::create_directories(out_dir);
        fl::write_text_file(out_dir / ("paradigms." + target.key() + ".txt"),
                            "seed = " + std::to_string(pc.master_seed) + "\n" + table);
        fl::write_text_file(out_dir / ("paradigms." + target.key() + ".jsonl"),
                            fl::paradigm_records_jsonl(stats, target, metric));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
