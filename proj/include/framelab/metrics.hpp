#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/corpus.hpp"

namespace framelab {

enum class MetricName { macro_f1, micro_f1, roc_auc, map };

inline const char* metric_name(MetricName m) {
    switch (m) {
        case MetricName::macro_f1: return "macro_f1";
        case MetricName::micro_f1: return "micro_f1";
        case MetricName::roc_auc: return "roc_auc";
        default: return "map";
    }
}

inline MetricName parse_metric(const std::string& s) {
    for (MetricName m : {MetricName::macro_f1, MetricName::micro_f1, MetricName::roc_auc, MetricName::map})
        if (s == metric_name(m)) return m;
    throw Error("unknown metric: '" + s + "'");
}

inline const std::vector<MetricName>& champion_metrics() {
    static const std::vector<MetricName> all = {MetricName::macro_f1, MetricName::micro_f1,
                                                MetricName::roc_auc, MetricName::map};
    return all;
}

// id-tagged labels and scores
using GenreExamples = std::vector<std::pair<std::string, Genre>>;
using FrameExamples = std::vector<std::pair<std::string, FrameSet>>;
using ScoreRows = std::vector<std::pair<std::string, std::vector<double>>>;

namespace detail {

// Alignment by id: both sides must hold the same id set; comparisons are
// done in sorted-by-id order so all metrics are permutation invariant.
template <typename A, typename B>
void align_by_id(std::vector<std::pair<std::string, A>> a, std::vector<std::pair<std::string, B>> b,
                 std::vector<A>& out_a, std::vector<B>& out_b, std::vector<std::string>* out_ids) {
    if (a.size() != b.size())
        throw Error("metric inputs differ in size: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
    auto by_id = [](const auto& x, const auto& y) { return x.first < y.first; };
    std::sort(a.begin(), a.end(), by_id);
    std::sort(b.begin(), b.end(), by_id);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first)
            throw Error("metric inputs are not aligned by id: '" + a[i].first + "' vs '" +
                        b[i].first + "'");
    out_a.clear();
    out_b.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
        out_a.push_back(a[i].second);
        out_b.push_back(b[i].second);
        if (out_ids) out_ids->push_back(a[i].first);
    }
}

struct BinaryCounts {
    double tp = 0, fp = 0, fn = 0;
};

// F1 with the 0/0 := 0 convention throughout
inline double f1_from_counts(const BinaryCounts& c) {
    double p = (c.tp + c.fp) > 0 ? c.tp / (c.tp + c.fp) : 0.0;
    double r = (c.tp + c.fn) > 0 ? c.tp / (c.tp + c.fn) : 0.0;
    return (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace detail

struct F1Report {
    std::vector<double> per_class;
    double macro = 0.0;
    double micro = 0.0;
};

// Single-label F1. micro pools per-class decisions, which for single-label
// classification equals accuracy.
inline F1Report f1_scores(const GenreExamples& gold, const GenreExamples& pred) {
    std::vector<Genre> g, p;
    detail::align_by_id(gold, pred, g, p, nullptr);
    const int k = genre_task().num_classes();
    std::vector<detail::BinaryCounts> counts(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (int c = 0; c < k; ++c) {
            bool is_gold = int(g[i]) == c;
            bool is_pred = int(p[i]) == c;
            if (is_gold && is_pred) counts[std::size_t(c)].tp++;
            else if (is_pred) counts[std::size_t(c)].fp++;
            else if (is_gold) counts[std::size_t(c)].fn++;
        }
    }
    F1Report rep;
    detail::BinaryCounts pooled;
    for (const auto& c : counts) {
        rep.per_class.push_back(detail::f1_from_counts(c));
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
    }
    rep.macro = std::accumulate(rep.per_class.begin(), rep.per_class.end(), 0.0) / double(k);
    rep.micro = detail::f1_from_counts(pooled);
    return rep;
}

// Multi-label F1 over the 14 frames; macro averages over the full class list
// (absent classes contribute 0), micro pools all (example, class) decisions.
inline F1Report f1_scores(const FrameExamples& gold, const FrameExamples& pred) {
    std::vector<FrameSet> g, p;
    detail::align_by_id(gold, pred, g, p, nullptr);
    const int k = kNumFrames;
    std::vector<detail::BinaryCounts> counts(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (int c = 0; c < k; ++c) {
            bool is_gold = g[i].has(c);
            bool is_pred = p[i].has(c);
            if (is_gold && is_pred) counts[std::size_t(c)].tp++;
            else if (is_pred) counts[std::size_t(c)].fp++;
            else if (is_gold) counts[std::size_t(c)].fn++;
        }
    }
    F1Report rep;
    detail::BinaryCounts pooled;
    for (const auto& c : counts) {
        rep.per_class.push_back(detail::f1_from_counts(c));
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.fn += c.fn;
    }
    rep.macro = std::accumulate(rep.per_class.begin(), rep.per_class.end(), 0.0) / double(k);
    rep.micro = detail::f1_from_counts(pooled);
    return rep;
}

inline double binary_f1(const std::vector<bool>& gold, const std::vector<bool>& pred) {
    detail::BinaryCounts c;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] && pred[i]) c.tp++;
        else if (pred[i]) c.fp++;
        else if (gold[i]) c.fn++;
    }
    return detail::f1_from_counts(c);
}

// One-vs-rest AUC by the rank statistic; tied scores count one half.
// Returns nullopt when a polarity is missing.
inline std::optional<double> binary_auc(const std::vector<bool>& gold,
                                        const std::vector<double>& scores) {
    std::size_t n_pos = 0, n_neg = 0;
    for (bool g : gold) (g ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    std::vector<std::size_t> idx(gold.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        double avg_rank = (double(i + 1) + double(j)) / 2.0;  // 1-based ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (gold[idx[t]]) pos_rank_sum += avg_rank;
        i = j;
    }
    double np = double(n_pos), nn = double(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// Average precision over the score-descending ranking, no interpolation.
// Ties are made order independent by a secondary ascending sort on id.
// Returns nullopt when the class has no positives.
inline std::optional<double> binary_average_precision(const std::vector<bool>& gold,
                                                      const std::vector<double>& scores,
                                                      const std::vector<std::string>& ids) {
    std::size_t n_pos = 0;
    for (bool g : gold) n_pos += g;
    if (n_pos == 0) return std::nullopt;
    std::vector<std::size_t> idx(gold.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    double hits = 0.0, sum = 0.0;
    for (std::size_t rank = 1; rank <= idx.size(); ++rank) {
        if (gold[idx[rank - 1]]) {
            hits += 1.0;
            sum += hits / double(rank);
        }
    }
    return sum / double(n_pos);
}

namespace detail {

template <typename LabelT>
std::vector<bool> class_membership(const std::vector<LabelT>& labels, int cls);

template <>
inline std::vector<bool> class_membership<Genre>(const std::vector<Genre>& labels, int cls) {
    std::vector<bool> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = int(labels[i]) == cls;
    return out;
}

template <>
inline std::vector<bool> class_membership<FrameSet>(const std::vector<FrameSet>& labels, int cls) {
    std::vector<bool> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i].has(cls);
    return out;
}

template <typename LabelT>
double macro_auc(const std::vector<std::pair<std::string, LabelT>>& gold, const ScoreRows& scores,
                 int num_classes) {
    std::vector<LabelT> g;
    std::vector<std::vector<double>> s;
    detail::align_by_id(gold, scores, g, s, nullptr);
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> col(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (int(s[i].size()) != num_classes) throw Error("score row has wrong class count");
            col[i] = s[i][std::size_t(c)];
        }
        if (auto auc = binary_auc(class_membership(g, c), col)) {
            sum += *auc;
            ++defined;
        }
    }
    if (defined == 0) throw Error("roc_auc undefined: no class has both polarities");
    return sum / double(defined);
}

template <typename LabelT>
double macro_ap(const std::vector<std::pair<std::string, LabelT>>& gold, const ScoreRows& scores,
                int num_classes) {
    std::vector<LabelT> g;
    std::vector<std::vector<double>> s;
    std::vector<std::string> ids;
    detail::align_by_id(gold, scores, g, s, &ids);
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> col(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (int(s[i].size()) != num_classes) throw Error("score row has wrong class count");
            col[i] = s[i][std::size_t(c)];
        }
        if (auto ap = binary_average_precision(class_membership(g, c), col, ids)) {
            sum += *ap;
            ++defined;
        }
    }
    if (defined == 0) throw Error("mean_average_precision undefined: no positives anywhere");
    return sum / double(defined);
}

}  // namespace detail

inline double roc_auc(const GenreExamples& gold, const ScoreRows& scores) {
    return detail::macro_auc(gold, scores, genre_task().num_classes());
}

inline double roc_auc(const FrameExamples& gold, const ScoreRows& scores) {
    return detail::macro_auc(gold, scores, kNumFrames);
}

inline double mean_average_precision(const GenreExamples& gold, const ScoreRows& scores) {
    return detail::macro_ap(gold, scores, genre_task().num_classes());
}

inline double mean_average_precision(const FrameExamples& gold, const ScoreRows& scores) {
    return detail::macro_ap(gold, scores, kNumFrames);
}

// ---------------------------------------------------------------------------
// Leave-one-out (jackknife) metrics
// ---------------------------------------------------------------------------

struct LooResult {
    std::vector<double> values;     // one per example; meaningful where defined
    std::vector<bool> defined;      // false where the metric was undefined
    double mean = 0.0;
    double stddev = 0.0;            // population stddev over the defined values
    std::size_t n_defined = 0;
};

namespace detail {

template <typename Fn>
LooResult jackknife(std::size_t n, Fn&& eval_without) {
    if (n < 2) throw Error("loo_metrics: need at least 2 examples");
    LooResult res;
    res.values.resize(n, 0.0);
    res.defined.resize(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<double> v = eval_without(i);
        if (v) {
            res.values[i] = *v;
            res.defined[i] = true;
            ++res.n_defined;
        }
    }
    if (res.n_defined > 0) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (res.defined[i]) sum += res.values[i];
        res.mean = sum / double(res.n_defined);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (res.defined[i]) var += (res.values[i] - res.mean) * (res.values[i] - res.mean);
        res.stddev = std::sqrt(var / double(res.n_defined));
    }
    return res;
}

template <typename T>
std::vector<std::pair<std::string, T>> drop_one(const std::vector<std::pair<std::string, T>>& v,
                                                std::size_t skip) {
    std::vector<std::pair<std::string, T>> out;
    out.reserve(v.size() - 1);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i != skip) out.push_back(v[i]);
    return out;
}

}  // namespace detail

// Label-based jackknife (macro/micro F1)
template <typename LabelT>
LooResult loo_metrics(const std::vector<std::pair<std::string, LabelT>>& gold,
                      const std::vector<std::pair<std::string, LabelT>>& pred, MetricName metric) {
    if (metric != MetricName::macro_f1 && metric != MetricName::micro_f1)
        throw Error("loo_metrics over labels supports macro_f1/micro_f1 only");
    // validate alignment up front
    {
        std::vector<LabelT> g, p;
        detail::align_by_id(gold, pred, g, p, nullptr);
    }
    return detail::jackknife(gold.size(), [&](std::size_t skip) -> std::optional<double> {
        F1Report rep = f1_scores(detail::drop_one(gold, skip), detail::drop_one(pred, skip));
        return metric == MetricName::macro_f1 ? rep.macro : rep.micro;
    });
}

// Score-based jackknife (ROC-AUC / mAP); values undefined on a subset are
// flagged and left out of the summary.
template <typename LabelT>
LooResult loo_metrics(const std::vector<std::pair<std::string, LabelT>>& gold,
                      const ScoreRows& scores, MetricName metric) {
    if (metric != MetricName::roc_auc && metric != MetricName::map)
        throw Error("loo_metrics over scores supports roc_auc/map only");
    const int k = std::is_same_v<LabelT, Genre> ? genre_task().num_classes() : kNumFrames;
    {
        std::vector<LabelT> g;
        std::vector<std::vector<double>> s;
        detail::align_by_id(gold, scores, g, s, nullptr);
    }
    return detail::jackknife(gold.size(), [&](std::size_t skip) -> std::optional<double> {
        auto g = detail::drop_one(gold, skip);
        auto s = detail::drop_one(scores, skip);
        try {
            return metric == MetricName::roc_auc ? detail::macro_auc(g, s, k)
                                                 : detail::macro_ap(g, s, k);
        } catch (const Error&) {
            return std::nullopt;
        }
    });
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string language;
    Task task = Task::genre;
    std::size_t n_examples = 0;
    std::vector<double> per_class_f1;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double roc_auc = 0.0;
    double map = 0.0;
};

inline double metric_value(const EvalReport& r, MetricName m) {
    switch (m) {
        case MetricName::macro_f1: return r.macro_f1;
        case MetricName::micro_f1: return r.micro_f1;
        case MetricName::roc_auc: return r.roc_auc;
        default: return r.map;
    }
}

inline Genre argmax_genre(const std::vector<double>& probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return Genre(int(best));
}

// frame decision threshold is 0.5; strictly greater so an all-zero model
// predicts the empty set
inline FrameSet threshold_frames(const std::vector<double>& probs) {
    FrameSet fs;
    for (int c = 0; c < kNumFrames && c < int(probs.size()); ++c)
        if (probs[std::size_t(c)] > 0.5) fs.add(c);
    return fs;
}

inline EvalReport evaluate_genre(const std::string& language, const GenreExamples& gold,
                                 const ScoreRows& probs) {
    GenreExamples pred;
    for (const auto& [id, p] : probs) pred.emplace_back(id, argmax_genre(p));
    F1Report f1 = f1_scores(gold, pred);
    EvalReport rep;
    rep.language = language;
    rep.task = Task::genre;
    rep.n_examples = gold.size();
    rep.per_class_f1 = f1.per_class;
    rep.macro_f1 = f1.macro;
    rep.micro_f1 = f1.micro;
    rep.roc_auc = roc_auc(gold, probs);
    rep.map = mean_average_precision(gold, probs);
    return rep;
}

inline EvalReport evaluate_frames(const std::string& language, const FrameExamples& gold,
                                  const ScoreRows& probs) {
    FrameExamples pred;
    for (const auto& [id, p] : probs) pred.emplace_back(id, threshold_frames(p));
    F1Report f1 = f1_scores(gold, pred);
    EvalReport rep;
    rep.language = language;
    rep.task = Task::frames;
    rep.n_examples = gold.size();
    rep.per_class_f1 = f1.per_class;
    rep.macro_f1 = f1.macro;
    rep.micro_f1 = f1.micro;
    rep.roc_auc = roc_auc(gold, probs);
    rep.map = mean_average_precision(gold, probs);
    return rep;
}

// flat key=value record, one per trial target pair
inline std::string serialize_eval_report(const EvalReport& r) {
    std::string out;
    out += "task = " + std::string(task_name(r.task)) + "\n";
    out += "language = " + r.language + "\n";
    out += "n_examples = " + std::to_string(r.n_examples) + "\n";
    out += "macro_f1 = " + fmt_double(r.macro_f1) + "\n";
    out += "micro_f1 = " + fmt_double(r.micro_f1) + "\n";
    out += "roc_auc = " + fmt_double(r.roc_auc) + "\n";
    out += "map = " + fmt_double(r.map) + "\n";
    const auto& names = r.task == Task::genre ? genre_class_names() : frame_class_names();
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c)
        out += "f1." + names[c] + " = " + fmt_double(r.per_class_f1[c]) + "\n";
    return out;
}

inline EvalReport parse_eval_report(const std::string& content) {
    EvalReport r;
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& line : split(content, '\n')) {
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("bad report line: " + line);
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    std::map<std::string, std::string> m(kv.begin(), kv.end());
    r.task = parse_task(m.at("task"));
    r.language = m.at("language");
    r.n_examples = std::stoull(m.at("n_examples"));
    r.macro_f1 = std::stod(m.at("macro_f1"));
    r.micro_f1 = std::stod(m.at("micro_f1"));
    r.roc_auc = std::stod(m.at("roc_auc"));
    r.map = std::stod(m.at("map"));
    const auto& names = r.task == Task::genre ? genre_class_names() : frame_class_names();
    for (const auto& n : names) r.per_class_f1.push_back(std::stod(m.at("f1." + n)));
    return r;
}

}  // namespace framelab
