#pragma once

#include <json.hpp>

#include "framelab/ensemble.hpp"

namespace framelab {

// One ensemble construction to try: method x candidate pool x postprocess.
struct CandidateTemplate {
    MethodSpec method;
    PoolChoice pool = PoolChoice::stage_I_and_II;
    Postprocess postprocess;  // genre only

    std::string describe() const {
        std::string s = method.describe();
        s += pool == PoolChoice::stage_I_and_II ? "|I+II" : "|II";
        if (postprocess.reweight)
            s += "|rw(" + genre_name(postprocess.reweight->first) + "x" +
                 fmt_double(postprocess.reweight->second) + ")";
        if (postprocess.relabel) s += "|relabel";
        return s;
    }
};

// The combinations compared for the genre task: the three methods of the
// subtask-1 recipe crossed with both pools and the postprocessing options.
inline std::vector<CandidateTemplate> default_genre_candidates(
    const std::vector<double>& reweight_factors = {1.0, 1.5, 20.0}) {
    std::vector<MethodSpec> methods;
    methods.push_back({EnsembleMethod::top_one});
    methods.push_back({EnsembleMethod::top_n_average, 3, MetricName::macro_f1});
    methods.push_back({EnsembleMethod::bootstrap_bagging});
    std::vector<Postprocess> posts;
    posts.push_back({});
    for (double f : reweight_factors) {
        posts.push_back({std::pair<Genre, double>{Genre::satire, f}, false});
        posts.push_back({std::pair<Genre, double>{Genre::satire, f}, true});
    }
    std::vector<CandidateTemplate> out;
    for (const auto& m : methods)
        for (PoolChoice p : {PoolChoice::stage_I_and_II, PoolChoice::stage_II_only})
            for (const auto& pp : posts) out.push_back({m, p, pp});
    return out;
}

// The nine subtask-2 methods (top one, top 3/5 by F1, AP and ROC-AUC,
// bagging, stacking) crossed with both pools.
inline std::vector<CandidateTemplate> default_frames_candidates() {
    std::vector<MethodSpec> methods;
    methods.push_back({EnsembleMethod::top_one});
    for (int n : {3, 5})
        for (MetricName m : {MetricName::macro_f1, MetricName::map, MetricName::roc_auc})
            methods.push_back({EnsembleMethod::top_n_average, n, m});
    methods.push_back({EnsembleMethod::bootstrap_bagging});
    methods.push_back({EnsembleMethod::stacking});
    std::vector<CandidateTemplate> out;
    for (const auto& m : methods)
        for (PoolChoice p : {PoolChoice::stage_I_and_II, PoolChoice::stage_II_only})
            out.push_back({m, p, {}});
    return out;
}

// Per-label model ranking on the dev prediction matrix. macro_f1/micro_f1
// rank by the label's binary F1 at 0.5, roc_auc/map by the label's AUC/AP
// (0 when undefined). Ties go to the ascending trial id.
inline std::vector<std::string> rank_models_for_label(const std::vector<std::string>& pool_ids,
                                                      const PredictionMatrix& preds,
                                                      const std::vector<bool>& gold, int label,
                                                      MetricName metric,
                                                      const std::vector<std::string>& example_ids) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& id : pool_ids) {
        const auto& rows = preds.probs[preds.model_index(id)];
        std::vector<double> col(rows.size());
        for (std::size_t e = 0; e < rows.size(); ++e) col[e] = rows[e][std::size_t(label)];
        double v = 0.0;
        if (metric == MetricName::roc_auc) {
            v = binary_auc(gold, col).value_or(0.0);
        } else if (metric == MetricName::map) {
            v = binary_average_precision(gold, col, example_ids).value_or(0.0);
        } else {
            std::vector<bool> pred(col.size());
            for (std::size_t e = 0; e < col.size(); ++e) pred[e] = col[e] > 0.5;
            v = binary_f1(gold, pred);
        }
        scored.emplace_back(v, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [v, id] : scored) out.push_back(id);
    return out;
}

struct CandidateEval {
    CandidateTemplate tpl;
    LabelEnsemble resolved;
    double objective = 0.0;  // genre: dev macro-F1; frames: the label's F1
    double loo_mean = 0.0;
    double loo_std = 0.0;
    double macro_f1 = 0.0, micro_f1 = 0.0, roc_auc = 0.0, map = 0.0;  // genre
    double min_class_f1 = 0.0;                                        // genre
    double label_auc = 0.0, label_ap = 0.0;                           // frames
    std::vector<double> bagging_trace;
    bool skipped = false;  // pool empty for this candidate
};

struct BuildResult {
    TargetPair target;
    EnsembleSpec chosen;
    std::vector<std::vector<CandidateEval>> evals;  // [label][candidate]; genre has one label slot
    std::vector<std::size_t> chosen_index;          // per label, into evals[label]
};

struct BuildOptions {
    // score penalty applied to top_one candidates during auto-selection;
    // 0 keeps the guarantee that the pick never scores below top_one
    double top_one_penalty = 0.0;
    // interactive override: per-label candidate index (from a prior report)
    const std::vector<std::size_t>* forced_choice = nullptr;
};

namespace detail {

inline GenreExamples genre_gold_of(const Dataset& dev) {
    GenreExamples out;
    for (const auto& a : dev.articles) {
        if (!a.genre) throw Error("dev article '" + a.id + "' lacks a genre label");
        out.emplace_back(a.id, *a.genre);
    }
    return out;
}

inline FrameExamples frames_gold_of(const Dataset& dev) {
    FrameExamples out;
    for (const auto& a : dev.articles) {
        if (!a.frames) throw Error("dev article '" + a.id + "' lacks frame labels");
        out.emplace_back(a.id, *a.frames);
    }
    return out;
}

inline std::size_t pick_candidate(const std::vector<CandidateEval>& evals, double top_one_penalty) {
    std::size_t best = evals.size();
    for (std::size_t i = 0; i < evals.size(); ++i) {
        if (evals[i].skipped) continue;
        if (best == evals.size()) {
            best = i;
            continue;
        }
        double si = evals[i].objective -
                    (evals[i].tpl.method.method == EnsembleMethod::top_one ? top_one_penalty : 0.0);
        double sb = evals[best].objective -
                    (evals[best].tpl.method.method == EnsembleMethod::top_one ? top_one_penalty : 0.0);
        if (si > sb || (si == sb && evals[i].loo_std < evals[best].loo_std)) best = i;
    }
    if (best == evals.size()) throw Error("build_ensemble: no evaluable candidate");
    return best;
}

}  // namespace detail

// Evaluates every candidate on the dev set (scored through the same
// apply_ensemble path used at prediction time) plus its leave-one-out
// stability, then picks per the auto rule: maximize the dev objective,
// break ties by lower jackknife stddev, with an optional penalty that
// deprioritizes top-one picks. For the frames task the selection runs
// independently per label.
inline BuildResult build_ensemble(const std::vector<TrialRecord>& pool_records,
                                  const PredictionMatrix& dev_preds, const Dataset& dev,
                                  const TargetPair& target,
                                  const std::vector<CandidateTemplate>& candidates,
                                  const BuildOptions& opts = {}) {
    if (candidates.empty()) throw Error("build_ensemble: empty candidate list");
    dev_preds.validate();

    // resolve pools; every pool record needs a dev report and predictions
    std::vector<const TrialRecord*> full_records, stage2_records;
    for (const auto& rec : pool_records) {
        if (!rec.ok) continue;
        if (!rec.report_for(target))
            throw Error("build_ensemble: trial '" + rec.config.trial_id + "' has no report for " +
                        target.key());
        dev_preds.model_index(rec.config.trial_id);
        full_records.push_back(&rec);
        if (rec.config.stage == Stage::two) stage2_records.push_back(&rec);
    }
    if (full_records.empty()) throw Error("build_ensemble: empty model pool");
    auto sort_recs = [](std::vector<const TrialRecord*>& v) {
        std::sort(v.begin(), v.end(), [](const TrialRecord* a, const TrialRecord* b) {
            return a->config.trial_id < b->config.trial_id;
        });
    };
    sort_recs(full_records);
    sort_recs(stage2_records);
    auto ids_of = [](const std::vector<const TrialRecord*>& v) {
        std::vector<std::string> out;
        for (const auto* r : v) out.push_back(r->config.trial_id);
        return out;
    };

    BuildResult result;
    result.target = target;
    result.chosen.language = target.language;
    result.chosen.task = target.task;

    if (target.task == Task::genre) {
        const GenreExamples gold = detail::genre_gold_of(dev);
        std::vector<CandidateEval> evals;
        for (const auto& tpl : candidates) {
            CandidateEval ev;
            ev.tpl = tpl;
            const auto& recs = tpl.pool == PoolChoice::stage_I_and_II ? full_records : stage2_records;
            if (recs.empty()) {
                ev.skipped = true;
                evals.push_back(ev);
                continue;
            }
            std::vector<TrialRecord> rec_values;
            for (const auto* r : recs) rec_values.push_back(*r);

            LabelEnsemble le;
            le.label = -1;
            le.method = tpl.method;
            le.pool = tpl.pool;
            if (tpl.method.method == EnsembleMethod::top_one) {
                le.members = {rank_models(rec_values, MetricName::macro_f1, target)[0]};
            } else if (tpl.method.method == EnsembleMethod::top_n_average) {
                auto ranked = rank_models(rec_values, tpl.method.ranking_metric, target);
                std::size_t n = std::min<std::size_t>(std::size_t(tpl.method.top_n), ranked.size());
                le.members.assign(ranked.begin(), ranked.begin() + std::ptrdiff_t(n));
            } else if (tpl.method.method == EnsembleMethod::bootstrap_bagging) {
                // bagging objective for genre: the minimum per-class F1
                auto objective = [&](const std::vector<std::vector<double>>& rows) {
                    GenreExamples pred;
                    for (std::size_t e = 0; e < rows.size(); ++e)
                        pred.emplace_back(dev_preds.example_ids[e], argmax_genre(rows[e]));
                    F1Report rep = f1_scores(gold, pred);
                    double mn = 1.0;
                    for (double f : rep.per_class) mn = std::min(mn, f);
                    return mn;
                };
                BaggingResult br = bootstrap_bagging(ids_of(recs), dev_preds, objective,
                                                     tpl.method.bagging_max_size);
                le.members = br.members;
                ev.bagging_trace = br.objective_trace;
            } else {
                throw Error("stacking is not defined for the genre task");
            }

            EnsembleSpec cand_spec;
            cand_spec.language = target.language;
            cand_spec.task = Task::genre;
            cand_spec.per_label = {le};
            cand_spec.postprocess = tpl.postprocess;
            ApplyResult applied = apply_ensemble(cand_spec, dev_preds, dev);

            F1Report f1 = f1_scores(gold, applied.genre_labels);
            ev.resolved = le;
            ev.objective = f1.macro;
            ev.macro_f1 = f1.macro;
            ev.micro_f1 = f1.micro;
            ev.min_class_f1 = 1.0;
            for (double f : f1.per_class) ev.min_class_f1 = std::min(ev.min_class_f1, f);
            ev.roc_auc = roc_auc(gold, applied.probabilities);
            ev.map = mean_average_precision(gold, applied.probabilities);
            LooResult loo = loo_metrics(gold, applied.genre_labels, MetricName::macro_f1);
            ev.loo_mean = loo.mean;
            ev.loo_std = loo.stddev;
            evals.push_back(ev);
        }
        std::size_t pick = opts.forced_choice ? opts.forced_choice->at(0)
                                              : detail::pick_candidate(evals, opts.top_one_penalty);
        if (pick >= evals.size() || evals[pick].skipped)
            throw Error("build_ensemble: chosen candidate index is not evaluable");
        result.evals.push_back(std::move(evals));
        result.chosen_index.push_back(pick);
        result.chosen.per_label = {result.evals[0][pick].resolved};
        result.chosen.postprocess = result.evals[0][pick].tpl.postprocess;
    } else {
        const FrameExamples gold = detail::frames_gold_of(dev);
        // per-example membership per label, aligned with the matrix rows
        std::map<std::string, FrameSet> gold_by_id;
        for (const auto& [id, fs] : gold) gold_by_id[id] = fs;
        for (int label = 0; label < kNumFrames; ++label) {
            std::vector<bool> gold_col(dev_preds.example_ids.size());
            for (std::size_t e = 0; e < gold_col.size(); ++e)
                gold_col[e] = gold_by_id.at(dev_preds.example_ids[e]).has(label);

            std::vector<CandidateEval> evals;
            for (const auto& tpl : candidates) {
                CandidateEval ev;
                ev.tpl = tpl;
                const auto& recs =
                    tpl.pool == PoolChoice::stage_I_and_II ? full_records : stage2_records;
                if (recs.empty()) {
                    ev.skipped = true;
                    evals.push_back(ev);
                    continue;
                }
                std::vector<std::string> pool_ids = ids_of(recs);

                LabelEnsemble le;
                le.label = label;
                le.method = tpl.method;
                le.pool = tpl.pool;
                if (tpl.method.method == EnsembleMethod::top_one) {
                    le.members = {rank_models_for_label(pool_ids, dev_preds, gold_col, label,
                                                        MetricName::macro_f1,
                                                        dev_preds.example_ids)[0]};
                } else if (tpl.method.method == EnsembleMethod::top_n_average) {
                    auto ranked = rank_models_for_label(pool_ids, dev_preds, gold_col, label,
                                                        tpl.method.ranking_metric,
                                                        dev_preds.example_ids);
                    std::size_t n = std::min<std::size_t>(std::size_t(tpl.method.top_n), ranked.size());
                    le.members.assign(ranked.begin(), ranked.begin() + std::ptrdiff_t(n));
                } else if (tpl.method.method == EnsembleMethod::bootstrap_bagging) {
                    auto objective = [&](const std::vector<std::vector<double>>& rows) {
                        std::vector<bool> pred(rows.size());
                        for (std::size_t e = 0; e < rows.size(); ++e)
                            pred[e] = rows[e][std::size_t(label)] > 0.5;
                        return binary_f1(gold_col, pred);
                    };
                    BaggingResult br =
                        bootstrap_bagging(pool_ids, dev_preds, objective, tpl.method.bagging_max_size);
                    le.members = br.members;
                    ev.bagging_trace = br.objective_trace;
                } else {  // stacking: one binary stacker per label over the pool
                    le.members = pool_ids;
                    std::vector<std::vector<double>> feats(
                        dev_preds.example_ids.size(), std::vector<double>(pool_ids.size(), 0.0));
                    for (std::size_t k = 0; k < pool_ids.size(); ++k) {
                        const auto& rows = dev_preds.probs[dev_preds.model_index(pool_ids[k])];
                        for (std::size_t e = 0; e < rows.size(); ++e)
                            feats[e][k] = rows[e][std::size_t(label)];
                    }
                    le.stacker = fit_stacking(feats, gold_col);
                }

                std::vector<double> col = combine_frames_label(le, dev_preds, label);
                std::vector<bool> pred_col(col.size());
                for (std::size_t e = 0; e < col.size(); ++e) pred_col[e] = col[e] > 0.5;
                ev.resolved = le;
                ev.objective = binary_f1(gold_col, pred_col);
                ev.label_auc = binary_auc(gold_col, col).value_or(0.0);
                ev.label_ap =
                    binary_average_precision(gold_col, col, dev_preds.example_ids).value_or(0.0);
                LooResult loo = detail::jackknife(col.size(), [&](std::size_t skip) {
                    std::vector<bool> g, p;
                    for (std::size_t e = 0; e < col.size(); ++e) {
                        if (e == skip) continue;
                        g.push_back(gold_col[e]);
                        p.push_back(pred_col[e]);
                    }
                    return std::optional<double>(binary_f1(g, p));
                });
                ev.loo_mean = loo.mean;
                ev.loo_std = loo.stddev;
                evals.push_back(ev);
            }
            std::size_t pick = opts.forced_choice
                                   ? opts.forced_choice->at(std::size_t(label))
                                   : detail::pick_candidate(evals, opts.top_one_penalty);
            if (pick >= evals.size() || evals[pick].skipped)
                throw Error("build_ensemble: chosen candidate index is not evaluable");
            result.evals.push_back(std::move(evals));
            result.chosen_index.push_back(pick);
            result.chosen.per_label.push_back(result.evals.back()[pick].resolved);
        }
    }
    result.chosen.validate();
    return result;
}

// ---------------------------------------------------------------------------
// Comparison report: aligned text table plus one JSON record per candidate.
// ---------------------------------------------------------------------------

inline std::string format_comparison_table(const BuildResult& r) {
    std::string out;
    char line[512];
    for (std::size_t label = 0; label < r.evals.size(); ++label) {
        if (r.target.task == Task::frames)
            out += "label: " + frame_class_names()[std::size_t(r.chosen.per_label[label].label)] + "\n";
        std::snprintf(line, sizeof(line), "  %2s %-34s %9s %9s %9s %9s  %s\n", "#", "candidate",
                      "objective", "loo_mean", "loo_std", "members", "chosen");
        out += line;
        for (std::size_t i = 0; i < r.evals[label].size(); ++i) {
            const CandidateEval& ev = r.evals[label][i];
            if (ev.skipped) {
                std::snprintf(line, sizeof(line), "  %2zu %-34s %9s %9s %9s %9s\n", i,
                              ev.tpl.describe().c_str(), "-", "-", "-", "-");
                out += line;
                continue;
            }
            std::snprintf(line, sizeof(line), "  %2zu %-34s %9.5f %9.5f %9.5f %9zu  %s\n", i,
                          ev.tpl.describe().c_str(), ev.objective, ev.loo_mean, ev.loo_std,
                          ev.resolved.members.size(), r.chosen_index[label] == i ? "*" : "");
            out += line;
        }
    }
    return out;
}

inline std::string comparison_records_jsonl(const BuildResult& r) {
    std::string out;
    for (std::size_t label = 0; label < r.evals.size(); ++label) {
        for (std::size_t i = 0; i < r.evals[label].size(); ++i) {
            const CandidateEval& ev = r.evals[label][i];
            nlohmann::ordered_json j;
            j["target"] = r.target.key();
            j["label"] = r.target.task == Task::genre
                             ? "__task__"
                             : frame_class_names()[std::size_t(r.chosen.per_label[label].label)];
            j["index"] = i;
            j["candidate"] = ev.tpl.describe();
            j["skipped"] = ev.skipped;
            if (!ev.skipped) {
                j["objective"] = ev.objective;
                j["loo_mean"] = ev.loo_mean;
                j["loo_std"] = ev.loo_std;
                if (r.target.task == Task::genre) {
                    j["macro_f1"] = ev.macro_f1;
                    j["micro_f1"] = ev.micro_f1;
                    j["roc_auc"] = ev.roc_auc;
                    j["map"] = ev.map;
                    j["min_class_f1"] = ev.min_class_f1;
                } else {
                    j["label_auc"] = ev.label_auc;
                    j["label_ap"] = ev.label_ap;
                }
                j["members"] = ev.resolved.members;
                if (!ev.bagging_trace.empty()) j["bagging_trace"] = ev.bagging_trace;
            }
            j["chosen"] = !ev.skipped && r.chosen_index[label] == i;
            out += j.dump();
            out += '\n';
        }
    }
    return out;
}

}  // namespace framelab
