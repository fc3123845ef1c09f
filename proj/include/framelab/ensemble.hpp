#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/corpus.hpp"
#include "framelab/features.hpp"
#include "framelab/metrics.hpp"
#include "framelab/model.hpp"
#include "framelab/registry.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// Prediction matrix: model x example x class probabilities over a fixed
// example set.
// ---------------------------------------------------------------------------

struct PredictionMatrix {
    Task task = Task::genre;
    std::vector<std::string> model_ids;
    std::vector<std::string> example_ids;
    std::vector<std::vector<std::vector<double>>> probs;  // [model][example][class]

    int num_classes() const { return task == Task::genre ? 3 : kNumFrames; }

    std::size_t model_index(const std::string& id) const {
        for (std::size_t i = 0; i < model_ids.size(); ++i)
            if (model_ids[i] == id) return i;
        throw Error("prediction matrix has no model '" + id + "'");
    }

    void validate() const {
        for (std::size_t m = 0; m < probs.size(); ++m) {
            if (probs[m].size() != example_ids.size())
                throw Error("prediction matrix row count mismatch");
            for (const auto& row : probs[m]) {
                if (int(row.size()) != num_classes())
                    throw Error("prediction matrix class count mismatch");
                double sum = 0.0;
                for (double p : row) {
                    if (p < 0.0 || p > 1.0) throw Error("prediction matrix entry outside [0,1]");
                    sum += p;
                }
                if (task == Task::genre && std::abs(sum - 1.0) > 1e-9)
                    throw Error("genre probability row does not sum to 1");
            }
        }
    }
};

inline Stage stage_of_trial_id(const std::string& id) {
    if (id.rfind("s1-", 0) == 0) return Stage::one;
    if (id.rfind("s2-", 0) == 0) return Stage::two;
    throw Error("cannot infer stage from trial id '" + id + "'");
}

inline PredictionMatrix build_prediction_matrix(const RunRegistry& registry,
                                                const std::vector<std::string>& model_ids,
                                                const Dataset& articles, Task task) {
    PredictionMatrix pm;
    pm.task = task;
    pm.model_ids = model_ids;
    for (const auto& a : articles.articles) pm.example_ids.push_back(a.id);
    for (const auto& id : model_ids) {
        Checkpoint ck = load_checkpoint(registry.checkpoint_path(stage_of_trial_id(id), id));
        ScoreRows rows = predict_proba(ck.model, articles, task);
        std::vector<std::vector<double>> mat;
        mat.reserve(rows.size());
        for (auto& [rid, row] : rows) mat.push_back(std::move(row));
        pm.probs.push_back(std::move(mat));
    }
    return pm;
}

// ---------------------------------------------------------------------------
// Ensemble specification
// ---------------------------------------------------------------------------

enum class EnsembleMethod { top_one, top_n_average, bootstrap_bagging, stacking };

inline const char* method_name(EnsembleMethod m) {
    switch (m) {
        case EnsembleMethod::top_one: return "top_one";
        case EnsembleMethod::top_n_average: return "top_n_average";
        case EnsembleMethod::bootstrap_bagging: return "bootstrap_bagging";
        default: return "stacking";
    }
}

inline EnsembleMethod parse_method(const std::string& s) {
    for (EnsembleMethod m : {EnsembleMethod::top_one, EnsembleMethod::top_n_average,
                             EnsembleMethod::bootstrap_bagging, EnsembleMethod::stacking})
        if (s == method_name(m)) return m;
    throw Error("unknown ensemble method: '" + s + "'");
}

enum class PoolChoice { stage_I_and_II, stage_II_only };

inline const char* pool_name(PoolChoice p) {
    return p == PoolChoice::stage_I_and_II ? "stage_I_and_II" : "stage_II_only";
}

inline PoolChoice parse_pool(const std::string& s) {
    if (s == "stage_I_and_II") return PoolChoice::stage_I_and_II;
    if (s == "stage_II_only") return PoolChoice::stage_II_only;
    throw Error("unknown pool: '" + s + "'");
}

struct MethodSpec {
    EnsembleMethod method = EnsembleMethod::top_one;
    int top_n = 3;                                     // top_n_average
    MetricName ranking_metric = MetricName::macro_f1;  // top_n_average ranking
    int bagging_max_size = 5;

    std::string describe() const {
        switch (method) {
            case EnsembleMethod::top_one: return "top1";
            case EnsembleMethod::top_n_average:
                return "top" + std::to_string(top_n) + "(" + metric_name(ranking_metric) + ")";
            case EnsembleMethod::bootstrap_bagging: return "bagging";
            default: return "stacking";
        }
    }
};

struct StackingModel {
    std::vector<double> coef;  // aligned with the member list
    double intercept = 0.0;
    bool constant = false;  // degenerate one-class fallback, flagged
    double constant_value = 0.5;
};

// One combiner: the whole task for genre, a single frame label for frames.
struct LabelEnsemble {
    int label = -1;  // frame index; -1 for the genre task
    MethodSpec method;
    PoolChoice pool = PoolChoice::stage_I_and_II;
    std::vector<std::string> members;  // multiset, selection order
    std::optional<StackingModel> stacker;
};

struct Postprocess {
    std::optional<std::pair<Genre, double>> reweight;  // (label, factor)
    bool relabel = false;
    double relabel_threshold = 0.008;
};

struct EnsembleSpec {
    std::string language;
    Task task = Task::genre;
    std::vector<LabelEnsemble> per_label;  // 1 entry for genre, 14 for frames
    Postprocess postprocess;               // genre only

    void validate() const {
        std::size_t expected = task == Task::genre ? 1 : std::size_t(kNumFrames);
        if (per_label.size() != expected) throw Error("ensemble spec has wrong per-label entry count");
        for (const auto& le : per_label) {
            if (le.members.empty()) throw Error("ensemble spec has an empty member list");
            if (le.method.method == EnsembleMethod::bootstrap_bagging &&
                int(le.members.size()) > le.method.bagging_max_size)
                throw Error("bagging ensemble exceeds its size cap");
            if (le.method.method == EnsembleMethod::stacking) {
                if (!le.stacker) throw Error("stacking ensemble is missing its fitted model");
                if (!le.stacker->constant && le.stacker->coef.size() != le.members.size())
                    throw Error("stacking coefficients do not match the member list");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Rankings and combiners
// ---------------------------------------------------------------------------

// Dev-report ranking: descending metric, ties by ascending trial id.
inline std::vector<std::string> rank_models(const std::vector<TrialRecord>& pool, MetricName metric,
                                            const TargetPair& target) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& rec : pool) {
        const EvalReport* rep = rec.report_for(target);
        if (!rep)
            throw Error("rank_models: trial '" + rec.config.trial_id + "' has no report for " +
                        target.key());
        scored.emplace_back(metric_value(*rep, metric), rec.config.trial_id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [v, id] : scored) out.push_back(id);
    return out;
}

// Elementwise arithmetic mean of the members' probability rows. Members form
// a multiset: an id listed twice counts twice.
inline std::vector<std::vector<double>> top_n_average(const std::vector<std::string>& members,
                                                      const PredictionMatrix& preds) {
    if (members.empty()) throw Error("top_n_average: empty member list");
    std::vector<std::size_t> idx;
    for (const auto& id : members) idx.push_back(preds.model_index(id));
    // a multiset of one distinct model is that model, exactly; skipping the
    // arithmetic keeps the identity free of rounding
    if (std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return i == idx[0]; }))
        return preds.probs[idx[0]];
    std::vector<std::vector<double>> out(preds.example_ids.size(),
                                         std::vector<double>(std::size_t(preds.num_classes()), 0.0));
    for (std::size_t mi : idx)
        for (std::size_t e = 0; e < out.size(); ++e)
            for (std::size_t c = 0; c < out[e].size(); ++c) out[e][c] += preds.probs[mi][e][c];
    const double inv = 1.0 / double(members.size());
    for (auto& row : out)
        for (double& v : row) v *= inv;
    return out;
}

// Greedy forward selection with replacement: start from the best single
// model under the objective, keep adding the best-improving model, stop at
// no strict improvement or size 5 (cap). Ties go to the lowest trial id.
struct BaggingResult {
    std::vector<std::string> members;
    std::vector<double> objective_trace;  // objective after each accepted member
};

template <typename Objective>
BaggingResult bootstrap_bagging(std::vector<std::string> pool, const PredictionMatrix& preds,
                                Objective&& objective, int max_size = 5) {
    if (pool.empty()) throw Error("bootstrap_bagging: empty pool");
    std::sort(pool.begin(), pool.end());
    BaggingResult res;
    double best = -1.0;
    for (const auto& id : pool) {
        double v = objective(top_n_average({id}, preds));
        if (v > best) {
            best = v;
            res.members = {id};
        }
    }
    res.objective_trace.push_back(best);
    while (int(res.members.size()) < max_size) {
        double best_gain_obj = best;
        const std::string* best_id = nullptr;
        for (const auto& id : pool) {
            std::vector<std::string> trial_members = res.members;
            trial_members.push_back(id);
            double v = objective(top_n_average(trial_members, preds));
            if (v > best_gain_obj) {
                best_gain_obj = v;
                best_id = &id;
            }
        }
        if (!best_id) break;  // no strict improvement
        res.members.push_back(*best_id);
        best = best_gain_obj;
        res.objective_trace.push_back(best);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Stacking: per-label L1-regularized logistic regression on member
// probabilities (inverse-regularization C = 1.0, unpenalized intercept),
// solved by FISTA to a 1e-6 proximal-gradient tolerance.
// ---------------------------------------------------------------------------

inline StackingModel fit_stacking(const std::vector<std::vector<double>>& features,
                                  const std::vector<bool>& labels, double c = 1.0,
                                  double tol = 1e-6) {
    const std::size_t n = features.size();
    if (n < 2 || labels.size() != n) throw Error("fit_stacking: need >= 2 aligned dev examples");
    const std::size_t m = features[0].size();
    for (const auto& row : features)
        if (row.size() != m) throw Error("fit_stacking: ragged feature rows");

    std::size_t n_pos = 0;
    for (bool y : labels) n_pos += y;
    if (n_pos == 0 || n_pos == n) {
        StackingModel sm;
        sm.coef.assign(m, 0.0);
        sm.constant = true;
        sm.constant_value = double(n_pos) / double(n);
        return sm;
    }

    // Lipschitz bound of the data term via power iteration on X~^T X~
    // (X~ = features plus the intercept column).
    const std::size_t d = m + 1;
    auto xval = [&](std::size_t i, std::size_t j) { return j < m ? features[i][j] : 1.0; };
    std::vector<double> gram(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) gram[a * d + b] += xval(i, a) * xval(i, b);
    std::vector<double> v(d, 1.0), tmp(d);
    double lambda = 1.0;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t a = 0; a < d; ++a) {
            tmp[a] = 0.0;
            for (std::size_t b = 0; b < d; ++b) tmp[a] += gram[a * d + b] * v[b];
        }
        double norm = 0.0;
        for (double x : tmp) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        lambda = norm;
        for (std::size_t a = 0; a < d; ++a) v[a] = tmp[a] / norm;
    }
    const double L = std::max(1e-12, c * lambda / 4.0) * 1.05;
    const double eta = 1.0 / L;

    std::vector<double> w(d, 0.0), y_acc(d, 0.0), w_prev(d, 0.0), grad(d);
    double t_acc = 1.0;
    const int max_iters = 200000;
    for (int iter = 0; iter < max_iters; ++iter) {
        // gradient of c * sum_i [softplus(z_i) - y_i z_i] at y_acc
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double z = y_acc[m];
            for (std::size_t j = 0; j < m; ++j) z += y_acc[j] * features[i][j];
            double sig = 1.0 / (1.0 + std::exp(-z));
            double delta = c * (sig - (labels[i] ? 1.0 : 0.0));
            for (std::size_t j = 0; j < m; ++j) grad[j] += delta * features[i][j];
            grad[m] += delta;
        }
        w_prev = w;
        for (std::size_t j = 0; j < m; ++j) {
            double u = y_acc[j] - eta * grad[j];
            // soft threshold by eta (L1 weight 1, intercept excluded)
            w[j] = u > eta ? u - eta : (u < -eta ? u + eta : 0.0);
        }
        w[m] = y_acc[m] - eta * grad[m];

        double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc)) / 2.0;
        for (std::size_t j = 0; j < d; ++j)
            y_acc[j] = w[j] + ((t_acc - 1.0) / t_next) * (w[j] - w_prev[j]);
        t_acc = t_next;

        double residual = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            residual = std::max(residual, std::abs(w[j] - w_prev[j]) / eta);
        if (iter > 0 && residual < tol) break;
    }

    StackingModel sm;
    sm.coef.assign(w.begin(), w.begin() + std::ptrdiff_t(m));
    sm.intercept = w[m];
    return sm;
}

inline double stacking_predict(const StackingModel& sm, const std::vector<double>& feature_row) {
    if (sm.constant) return sm.constant_value;
    double z = sm.intercept;
    for (std::size_t j = 0; j < sm.coef.size() && j < feature_row.size(); ++j)
        z += sm.coef[j] * feature_row[j];
    return 1.0 / (1.0 + std::exp(-z));
}

// ---------------------------------------------------------------------------
// Postprocessing
// ---------------------------------------------------------------------------

// Multiplies one class's probability by `factor`, then renormalizes the row.
inline std::vector<double> reweight_probabilities(std::vector<double> row, int label, double factor) {
    if (!(factor > 0)) throw Error("reweight_probabilities: factor must be positive");
    if (label < 0 || label >= int(row.size())) throw Error("reweight_probabilities: bad label index");
    double sum = 0.0;
    for (double p : row) sum += p;
    if (std::abs(sum - 1.0) > 1e-9) throw Error("reweight_probabilities: row does not sum to 1");
    row[std::size_t(label)] *= factor;
    double new_sum = 0.0;
    for (double p : row) new_sum += p;
    for (double& p : row) p /= new_sum;
    return row;
}

// Pluggable cardinal-token tagger; the default approximates CARDINAL
// entities as digit-containing tokens.
struct CardinalTagger {
    virtual ~CardinalTagger() = default;
    virtual bool is_cardinal(const std::string& token) const = 0;
};

struct DigitTokenTagger final : CardinalTagger {
    bool is_cardinal(const std::string& token) const override {
        for (char ch : token)
            if (ch >= '0' && ch <= '9') return true;
        return false;
    }
};

inline const CardinalTagger& default_cardinal_tagger() {
    static const DigitTokenTagger tagger;
    return tagger;
}

namespace detail {

inline bool is_word_token(const std::string& token) {
    auto cps = text::decode_utf8(token);
    return !cps.empty() && text::is_word_char(cps[0]);
}

}  // namespace detail

// Converts a portion of predicted-opinion articles: when the article's
// cardinal-token share of words exceeds `threshold`, relabel as satire if
// the text contains '!' or '?' and as reporting otherwise. Predictions other
// than opinion are never touched.
inline std::vector<Genre> heuristic_relabel(const std::vector<const Article*>& articles,
                                            std::vector<Genre> pred, double threshold = 0.008,
                                            const CardinalTagger& tagger = default_cardinal_tagger()) {
    if (articles.size() != pred.size())
        throw Error("heuristic_relabel: articles and predictions are not aligned");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] != Genre::opinion) continue;
        const std::string& body = articles[i]->text;
        std::size_t words = 0, cardinals = 0;
        for (const auto& tok : tokenize(body, body.size() + 1)) {
            if (!detail::is_word_token(tok)) continue;
            ++words;
            if (tagger.is_cardinal(tok)) ++cardinals;
        }
        if (words == 0) continue;
        if (double(cardinals) / double(words) > threshold) {
            bool excl = body.find('!') != std::string::npos || body.find('?') != std::string::npos;
            pred[i] = excl ? Genre::satire : Genre::reporting;
        }
    }
    return pred;
}

// ---------------------------------------------------------------------------
// Applying a spec
// ---------------------------------------------------------------------------

// combined probabilities for one label ensemble; genre -> full rows,
// frames -> the single label column
inline std::vector<std::vector<double>> combine_genre(const LabelEnsemble& le,
                                                      const PredictionMatrix& preds) {
    return top_n_average(le.members, preds);
}

inline std::vector<double> combine_frames_label(const LabelEnsemble& le, const PredictionMatrix& preds,
                                                int label) {
    if (le.method.method == EnsembleMethod::stacking) {
        if (!le.stacker) throw Error("stacking ensemble is missing its fitted model");
        std::vector<double> out(preds.example_ids.size());
        for (std::size_t e = 0; e < out.size(); ++e) {
            std::vector<double> feats;
            feats.reserve(le.members.size());
            for (const auto& id : le.members)
                feats.push_back(preds.probs[preds.model_index(id)][e][std::size_t(label)]);
            out[e] = stacking_predict(*le.stacker, feats);
        }
        return out;
    }
    auto rows = top_n_average(le.members, preds);
    std::vector<double> out(rows.size());
    for (std::size_t e = 0; e < rows.size(); ++e) out[e] = rows[e][std::size_t(label)];
    return out;
}

struct ApplyResult {
    ScoreRows probabilities;  // final per-example probabilities (after reweighting)
    std::vector<std::pair<std::string, Genre>> genre_labels;
    std::vector<std::pair<std::string, FrameSet>> frame_labels;
};

// Combines per the spec and applies postprocessors in order: probability
// reweighting first, then heuristic relabeling.
inline ApplyResult apply_ensemble(const EnsembleSpec& spec, const PredictionMatrix& preds,
                                  const Dataset& articles) {
    spec.validate();
    if (preds.example_ids.size() != articles.size())
        throw Error("apply_ensemble: prediction matrix and articles are not aligned");
    for (std::size_t e = 0; e < preds.example_ids.size(); ++e)
        if (preds.example_ids[e] != articles.articles[e].id)
            throw Error("apply_ensemble: example order mismatch at '" + preds.example_ids[e] + "'");

    ApplyResult res;
    if (spec.task == Task::genre) {
        auto rows = combine_genre(spec.per_label[0], preds);
        if (spec.postprocess.reweight) {
            const auto& [label, factor] = *spec.postprocess.reweight;
            for (auto& row : rows) row = reweight_probabilities(std::move(row), int(label), factor);
        }
        std::vector<Genre> labels;
        labels.reserve(rows.size());
        for (const auto& row : rows) labels.push_back(argmax_genre(row));
        if (spec.postprocess.relabel) {
            std::vector<const Article*> arts;
            for (const auto& a : articles.articles) arts.push_back(&a);
            labels = heuristic_relabel(arts, std::move(labels), spec.postprocess.relabel_threshold);
        }
        for (std::size_t e = 0; e < rows.size(); ++e) {
            res.probabilities.emplace_back(preds.example_ids[e], rows[e]);
            res.genre_labels.emplace_back(preds.example_ids[e], labels[e]);
        }
    } else {
        std::vector<std::vector<double>> rows(preds.example_ids.size(),
                                              std::vector<double>(kNumFrames, 0.0));
        for (int c = 0; c < kNumFrames; ++c) {
            const LabelEnsemble& le = spec.per_label[std::size_t(c)];
            if (le.label != c) throw Error("ensemble spec per-label entries are out of order");
            std::vector<double> col = combine_frames_label(le, preds, c);
            for (std::size_t e = 0; e < col.size(); ++e) rows[e][std::size_t(c)] = col[e];
        }
        for (std::size_t e = 0; e < rows.size(); ++e) {
            res.probabilities.emplace_back(preds.example_ids[e], rows[e]);
            res.frame_labels.emplace_back(preds.example_ids[e], threshold_frames(rows[e]));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Spec serialization (human readable)
// ---------------------------------------------------------------------------

inline std::string serialize_ensemble_spec(const EnsembleSpec& spec) {
    std::string out;
    out += "version = 1\n";
    out += "language = " + spec.language + "\n";
    out += "task = " + std::string(task_name(spec.task)) + "\n";
    if (spec.task == Task::genre) {
        if (spec.postprocess.reweight)
            out += "postprocess.reweight = " + genre_name(spec.postprocess.reweight->first) + ":" +
                   fmt_double(spec.postprocess.reweight->second) + "\n";
        else
            out += "postprocess.reweight = n/a\n";
        out += std::string("postprocess.relabel = ") + (spec.postprocess.relabel ? "yes" : "no") + "\n";
        out += "postprocess.relabel_threshold = " + fmt_double(spec.postprocess.relabel_threshold) + "\n";
    }
    for (std::size_t i = 0; i < spec.per_label.size(); ++i) {
        const LabelEnsemble& le = spec.per_label[i];
        std::string p = "ensemble." + std::to_string(i) + ".";
        if (spec.task == Task::frames)
            out += p + "label = " + frame_class_names()[std::size_t(le.label)] + "\n";
        out += p + "method = " + method_name(le.method.method) + "\n";
        if (le.method.method == EnsembleMethod::top_n_average) {
            out += p + "top_n = " + std::to_string(le.method.top_n) + "\n";
            out += p + "ranking_metric = " + metric_name(le.method.ranking_metric) + "\n";
        }
        if (le.method.method == EnsembleMethod::bootstrap_bagging)
            out += p + "bagging_max_size = " + std::to_string(le.method.bagging_max_size) + "\n";
        out += p + "pool = " + pool_name(le.pool) + "\n";
        std::string members;
        for (std::size_t k = 0; k < le.members.size(); ++k) {
            if (k) members += ", ";
            members += le.members[k];
        }
        out += p + "members = " + members + "\n";
        if (le.stacker) {
            out += p + "stacker.constant = " + (le.stacker->constant ? "yes" : "no") + "\n";
            out += p + "stacker.constant_value = " + fmt_double(le.stacker->constant_value) + "\n";
            out += p + "stacker.intercept = " + fmt_double(le.stacker->intercept) + "\n";
            std::string coefs;
            for (std::size_t k = 0; k < le.stacker->coef.size(); ++k) {
                if (k) coefs += ", ";
                coefs += fmt_double(le.stacker->coef[k]);
            }
            out += p + "stacker.coef = " + coefs + "\n";
        }
    }
    return out;
}

inline EnsembleSpec parse_ensemble_spec(const std::string& text) {
    std::map<std::string, std::string> m;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("bad ensemble spec line: " + line);
        m[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    EnsembleSpec spec;
    spec.language = m.at("language");
    spec.task = parse_task(m.at("task"));
    if (spec.task == Task::genre) {
        std::string rw = m.at("postprocess.reweight");
        if (rw != "n/a") {
            auto colon = rw.rfind(':');
            if (colon == std::string::npos) throw Error("bad reweight value: " + rw);
            spec.postprocess.reweight = {parse_genre(trim(rw.substr(0, colon))),
                                         std::stod(rw.substr(colon + 1))};
        }
        spec.postprocess.relabel = m.at("postprocess.relabel") == "yes";
        spec.postprocess.relabel_threshold = std::stod(m.at("postprocess.relabel_threshold"));
    }
    const std::size_t count = spec.task == Task::genre ? 1 : std::size_t(kNumFrames);
    for (std::size_t i = 0; i < count; ++i) {
        std::string p = "ensemble." + std::to_string(i) + ".";
        LabelEnsemble le;
        if (spec.task == Task::frames) {
            le.label = -1;
            const std::string& name = m.at(p + "label");
            for (int c = 0; c < kNumFrames; ++c)
                if (frame_class_names()[std::size_t(c)] == name) le.label = c;
            if (le.label < 0) throw Error("unknown frame label in spec: " + name);
        }
        le.method.method = parse_method(m.at(p + "method"));
        if (le.method.method == EnsembleMethod::top_n_average) {
            le.method.top_n = std::stoi(m.at(p + "top_n"));
            le.method.ranking_metric = parse_metric(m.at(p + "ranking_metric"));
        }
        if (le.method.method == EnsembleMethod::bootstrap_bagging)
            le.method.bagging_max_size = std::stoi(m.at(p + "bagging_max_size"));
        le.pool = parse_pool(m.at(p + "pool"));
        for (const auto& part : split(m.at(p + "members"), ','))
            if (!trim(part).empty()) le.members.push_back(trim(part));
        if (m.count(p + "stacker.intercept")) {
            StackingModel sm;
            sm.constant = m.at(p + "stacker.constant") == "yes";
            sm.constant_value = std::stod(m.at(p + "stacker.constant_value"));
            sm.intercept = std::stod(m.at(p + "stacker.intercept"));
            for (const auto& part : split(m.at(p + "stacker.coef"), ','))
                if (!trim(part).empty()) sm.coef.push_back(std::stod(trim(part)));
            le.stacker = sm;
        }
        spec.per_label.push_back(le);
    }
    spec.validate();
    return spec;
}

}  // namespace framelab
