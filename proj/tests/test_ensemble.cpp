#include <doctest.h>

#include <cmath>

#include "framelab/ensemble.hpp"
#include "framelab/ensemble_build.hpp"
#include "testutil.hpp"

using namespace framelab;

namespace {

// Six-example genre dev set: two articles per class.
Dataset genre_dev() {
    Dataset d;
    const Genre gold[] = {Genre::satire,    Genre::satire,  Genre::reporting,
                          Genre::reporting, Genre::opinion, Genre::opinion};
    for (int i = 0; i < 6; ++i)
        d.articles.push_back(
            testutil::article("e" + std::to_string(i), "en", "plain text body", gold[i]));
    return d;
}

std::vector<double> one_hot_row(Genre g, double confidence) {
    std::vector<double> row(3, (1.0 - confidence) / 2.0);
    row[std::size_t(int(g))] = confidence;
    return row;
}

// model that predicts `labels` with the given confidence
std::vector<std::vector<double>> rows_for(const std::vector<Genre>& labels, double confidence) {
    std::vector<std::vector<double>> rows;
    for (Genre g : labels) rows.push_back(one_hot_row(g, confidence));
    return rows;
}

PredictionMatrix matrix_for(const Dataset& dev,
                            const std::vector<std::pair<std::string, std::vector<std::vector<double>>>>& models,
                            Task task = Task::genre) {
    PredictionMatrix pm;
    pm.task = task;
    for (const auto& a : dev.articles) pm.example_ids.push_back(a.id);
    for (const auto& [id, rows] : models) {
        pm.model_ids.push_back(id);
        pm.probs.push_back(rows);
    }
    pm.validate();
    return pm;
}

TrialRecord record_with_report(const std::string& id, Stage stage, const TargetPair& target,
                               const Dataset& dev, const std::vector<std::vector<double>>& rows) {
    TrialRecord rec;
    rec.config.trial_id = id;
    rec.config.stage = stage;
    rec.config.paradigm = stage == Stage::one ? Paradigm::multi_task : Paradigm::single;
    rec.config.languages = {target.language};
    rec.config.tasks = {target.task};
    rec.config.dataset_choice = "official";
    rec.ok = true;
    rec.has_checkpoint = true;
    ScoreRows probs;
    for (std::size_t e = 0; e < dev.size(); ++e) probs.emplace_back(dev.articles[e].id, rows[e]);
    if (target.task == Task::genre) {
        GenreExamples gold;
        for (const auto& a : dev.articles) gold.emplace_back(a.id, *a.genre);
        rec.reports[target.key()] = evaluate_genre(target.language, gold, probs);
    } else {
        FrameExamples gold;
        for (const auto& a : dev.articles) gold.emplace_back(a.id, *a.frames);
        rec.reports[target.key()] = evaluate_frames(target.language, gold, probs);
    }
    return rec;
}

}  // namespace

TEST_CASE("rank_models: descending metric with id tie-break") {
    TargetPair target{"en", Task::genre};
    Dataset dev = genre_dev();
    auto perfect = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::reporting,
                             Genre::opinion, Genre::opinion},
                            0.9);
    auto ok = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::reporting,
                        Genre::opinion, Genre::satire},
                       0.9);
    auto poor = rows_for({Genre::reporting, Genre::reporting, Genre::opinion, Genre::opinion,
                          Genre::satire, Genre::satire},
                         0.9);
    std::vector<TrialRecord> recs;
    recs.push_back(record_with_report("s2-b", Stage::two, target, dev, ok));       // macro mid
    recs.push_back(record_with_report("s2-a", Stage::two, target, dev, perfect));  // macro best
    recs.push_back(record_with_report("s2-c", Stage::two, target, dev, poor));     // macro worst

    CHECK(rank_models(recs, MetricName::macro_f1, target) ==
          std::vector<std::string>{"s2-a", "s2-b", "s2-c"});

    SUBCASE("equal scores fall back to trial id order") {
        std::vector<TrialRecord> tie;
        tie.push_back(record_with_report("s2-z", Stage::two, target, dev, perfect));
        tie.push_back(record_with_report("s2-y", Stage::two, target, dev, perfect));
        CHECK(rank_models(tie, MetricName::macro_f1, target) ==
              std::vector<std::string>{"s2-y", "s2-z"});
    }
    SUBCASE("missing report is an error") {
        TrialRecord stray = recs[0];
        stray.reports.clear();
        CHECK_THROWS_AS(rank_models({stray}, MetricName::macro_f1, target), Error);
    }
    SUBCASE("AP and ROC orderings can disagree") {
        std::vector<TrialRecord> two;
        TrialRecord a = record_with_report("s2-a", Stage::two, target, dev, perfect);
        TrialRecord b = record_with_report("s2-b", Stage::two, target, dev, perfect);
        a.reports[target.key()].roc_auc = 0.9;
        a.reports[target.key()].map = 0.4;
        b.reports[target.key()].roc_auc = 0.6;
        b.reports[target.key()].map = 0.8;
        two.push_back(a);
        two.push_back(b);
        CHECK(rank_models(two, MetricName::roc_auc, target) ==
              std::vector<std::string>{"s2-a", "s2-b"});
        CHECK(rank_models(two, MetricName::map, target) ==
              std::vector<std::string>{"s2-b", "s2-a"});
    }
}

TEST_CASE("top_n_average: idempotent mean, plain arithmetic, multiset weights, convexity") {
    Dataset dev = genre_dev();
    std::vector<std::vector<double>> a_rows(6, std::vector<double>{1.0, 0.0, 0.0});
    std::vector<std::vector<double>> b_rows(6, std::vector<double>{0.0, 1.0, 0.0});
    PredictionMatrix pm = matrix_for(dev, {{"s2-a", a_rows}, {"s2-b", b_rows}});

    SUBCASE("n identical members equal the single model exactly") {
        auto one = top_n_average({"s2-a"}, pm);
        auto three = top_n_average({"s2-a", "s2-a", "s2-a"}, pm);
        CHECK(one == three);
    }
    SUBCASE("(1,0,0) and (0,1,0) average to (0.5,0.5,0)") {
        auto avg = top_n_average({"s2-a", "s2-b"}, pm);
        for (const auto& row : avg) {
            CHECK(row[0] == 0.5);
            CHECK(row[1] == 0.5);
            CHECK(row[2] == 0.0);
        }
    }
    SUBCASE("multiset semantics: {A, A, B} = (2A + B) / 3") {
        auto avg = top_n_average({"s2-a", "s2-a", "s2-b"}, pm);
        for (const auto& row : avg) {
            CHECK(row[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
            CHECK(row[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }
    }
    SUBCASE("output entries stay within the member min/max envelope") {
        Rng rng(88);
        std::vector<std::vector<double>> r1, r2;
        for (int e = 0; e < 6; ++e) {
            std::vector<double> x = {rng.next_double(), rng.next_double(), rng.next_double()};
            double s = x[0] + x[1] + x[2];
            for (double& v : x) v /= s;
            r1.push_back(x);
            std::vector<double> y = {rng.next_double(), rng.next_double(), rng.next_double()};
            s = y[0] + y[1] + y[2];
            for (double& v : y) v /= s;
            r2.push_back(y);
        }
        PredictionMatrix rpm = matrix_for(dev, {{"s2-a", r1}, {"s2-b", r2}});
        auto avg = top_n_average({"s2-a", "s2-b"}, rpm);
        for (std::size_t e = 0; e < avg.size(); ++e)
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(avg[e][c] >= std::min(r1[e][c], r2[e][c]) - 1e-15);
                CHECK(avg[e][c] <= std::max(r1[e][c], r2[e][c]) + 1e-15);
            }
    }
    SUBCASE("unknown member is an error") {
        CHECK_THROWS_AS(top_n_average({"s2-nope"}, pm), Error);
    }
}

TEST_CASE("bootstrap_bagging: greedy forward selection under min-class F1") {
    Dataset dev = genre_dev();
    GenreExamples gold;
    for (const auto& a : dev.articles) gold.emplace_back(a.id, *a.genre);

    // A is correct on satire and opinion but leans satire on reporting rows;
    // B is correct on reporting and opinion but leans reporting on satire rows
    std::vector<std::vector<double>> a_rows = {
        {0.9, 0.05, 0.05}, {0.9, 0.05, 0.05}, {0.6, 0.4, 0.0},
        {0.6, 0.4, 0.0},   {0.05, 0.05, 0.9}, {0.05, 0.05, 0.9}};
    std::vector<std::vector<double>> b_rows = {
        {0.4, 0.6, 0.0},   {0.4, 0.6, 0.0},   {0.05, 0.9, 0.05},
        {0.05, 0.9, 0.05}, {0.05, 0.05, 0.9}, {0.05, 0.05, 0.9}};
    PredictionMatrix pm = matrix_for(dev, {{"s2-a", a_rows}, {"s2-b", b_rows}});

    auto min_class_f1 = [&](const std::vector<std::vector<double>>& rows) {
        GenreExamples pred;
        for (std::size_t e = 0; e < rows.size(); ++e)
            pred.emplace_back(dev.articles[e].id, argmax_genre(rows[e]));
        F1Report rep = f1_scores(gold, pred);
        double mn = 1.0;
        for (double f : rep.per_class) mn = std::min(mn, f);
        return mn;
    };

    SUBCASE("pool of one returns that model") {
        BaggingResult r = bootstrap_bagging({"s2-a"}, pm, min_class_f1);
        CHECK(r.members == std::vector<std::string>{"s2-a"});
    }
    SUBCASE("complementary models are both selected and beat either alone") {
        BaggingResult r = bootstrap_bagging({"s2-a", "s2-b"}, pm, min_class_f1);
        double alone_a = min_class_f1(top_n_average({"s2-a"}, pm));
        double alone_b = min_class_f1(top_n_average({"s2-b"}, pm));
        double combined = r.objective_trace.back();
        CHECK(combined >= alone_a);
        CHECK(combined >= alone_b);
        CHECK(combined == doctest::Approx(1.0));
        CHECK(r.members.size() == 2);

        // exhaustive check over all multisets of size <= 5: nothing beats it
        std::vector<std::string> pool = {"s2-a", "s2-b"};
        double best_possible = 0.0;
        std::function<void(std::vector<std::string>&, std::size_t)> enumerate =
            [&](std::vector<std::string>& ms, std::size_t from) {
                if (!ms.empty())
                    best_possible = std::max(best_possible, min_class_f1(top_n_average(ms, pm)));
                if (ms.size() == 5) return;
                for (std::size_t i = from; i < pool.size(); ++i) {
                    ms.push_back(pool[i]);
                    enumerate(ms, i);
                    ms.pop_back();
                }
            };
        std::vector<std::string> ms;
        enumerate(ms, 0);
        CHECK(combined == doctest::Approx(best_possible).epsilon(1e-12));
    }
    SUBCASE("greedy path matches an independent re-simulation, trace non-decreasing") {
        PredictionMatrix big = matrix_for(
            dev, {{"s2-a", a_rows}, {"s2-b", b_rows}, {"s2-c", rows_for({Genre::opinion, Genre::opinion, Genre::opinion, Genre::opinion, Genre::opinion, Genre::opinion}, 0.8)}});
        BaggingResult r = bootstrap_bagging({"s2-a", "s2-b", "s2-c"}, big, min_class_f1);
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
            CHECK(r.objective_trace[i] >= r.objective_trace[i - 1]);
        CHECK(int(r.members.size()) <= 5);

        // independent greedy simulation with the same tie rules
        std::vector<std::string> pool = {"s2-a", "s2-b", "s2-c"};
        std::vector<std::string> sim;
        double best = -1;
        for (const auto& id : pool) {
            double v = min_class_f1(top_n_average({id}, big));
            if (v > best) {
                best = v;
                sim = {id};
            }
        }
        while (sim.size() < 5) {
            double gain = best;
            const std::string* chosen = nullptr;
            for (const auto& id : pool) {
                auto trial = sim;
                trial.push_back(id);
                double v = min_class_f1(top_n_average(trial, big));
                if (v > gain) {
                    gain = v;
                    chosen = &id;
                }
            }
            if (!chosen) break;
            sim.push_back(*chosen);
            best = gain;
        }
        CHECK(r.members == sim);
        CHECK(r.objective_trace.back() == doctest::Approx(best).epsilon(1e-12));
    }
    SUBCASE("result objective never falls below the best single model") {
        Rng rng(99);
        for (int it = 0; it < 10; ++it) {
            std::vector<std::pair<std::string, std::vector<std::vector<double>>>> models;
            for (int m = 0; m < 4; ++m) {
                std::vector<std::vector<double>> rows;
                for (int e = 0; e < 6; ++e) {
                    std::vector<double> row = {rng.next_double(), rng.next_double(),
                                               rng.next_double()};
                    double s = row[0] + row[1] + row[2];
                    for (double& v : row) v /= s;
                    rows.push_back(row);
                }
                models.emplace_back("s2-m" + std::to_string(m), rows);
            }
            PredictionMatrix rpm = matrix_for(dev, models);
            std::vector<std::string> pool;
            double best_single = 0.0;
            for (const auto& [id, rows] : models) {
                pool.push_back(id);
                best_single = std::max(best_single, min_class_f1(rows));
            }
            BaggingResult r = bootstrap_bagging(pool, rpm, min_class_f1);
            CHECK(r.objective_trace.back() >= best_single - 1e-12);
        }
    }
}

TEST_CASE("fit_stacking: L1 logistic regression on member probabilities") {
    SUBCASE("a perfectly separating feature at least matches its 0.5 threshold") {
        std::vector<std::vector<double>> feats;
        std::vector<bool> labels;
        for (int i = 0; i < 4; ++i) {
            feats.push_back({0.9});
            labels.push_back(true);
            feats.push_back({0.1});
            labels.push_back(false);
        }
        StackingModel sm = fit_stacking(feats, labels);
        std::vector<bool> baseline, stacked;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            baseline.push_back(feats[i][0] > 0.5);
            stacked.push_back(stacking_predict(sm, feats[i]) > 0.5);
        }
        CHECK(binary_f1(labels, stacked) >= binary_f1(labels, baseline));
        CHECK(binary_f1(labels, stacked) == doctest::Approx(1.0));
    }
    SUBCASE("all-zero features keep zero coefficients and predict the base rate") {
        std::vector<std::vector<double>> feats(8, std::vector<double>{0.0, 0.0});
        std::vector<bool> labels = {true, true, true, false, false, false, false, false};
        StackingModel sm = fit_stacking(feats, labels);
        CHECK(sm.coef[0] == 0.0);
        CHECK(sm.coef[1] == 0.0);
        CHECK(stacking_predict(sm, {0.0, 0.0}) == doctest::Approx(3.0 / 8.0).epsilon(1e-3));
    }
    SUBCASE("duplicated feature column leaves predictions unchanged within 1e-4") {
        Rng rng(12);
        std::vector<std::vector<double>> one_col, two_col;
        std::vector<bool> labels;
        for (int i = 0; i < 16; ++i) {
            double x = rng.next_double();
            one_col.push_back({x});
            two_col.push_back({x, x});
            labels.push_back(x + 0.3 * (rng.next_double() - 0.5) > 0.5);
        }
        if (std::count(labels.begin(), labels.end(), true) == 0) labels[0] = true;
        if (std::count(labels.begin(), labels.end(), false) == 0) labels[1] = false;
        StackingModel single = fit_stacking(one_col, labels);
        StackingModel dup = fit_stacking(two_col, labels);
        for (std::size_t i = 0; i < one_col.size(); ++i)
            CHECK(stacking_predict(single, one_col[i]) ==
                  doctest::Approx(stacking_predict(dup, two_col[i])).epsilon(1e-4));
    }
    SUBCASE("degenerate one-class labels fall back to a flagged constant") {
        std::vector<std::vector<double>> feats(4, std::vector<double>{0.5});
        StackingModel sm = fit_stacking(feats, {true, true, true, true});
        CHECK(sm.constant);
        CHECK(sm.constant_value == 1.0);
        CHECK(stacking_predict(sm, {0.123}) == 1.0);
    }
}

TEST_CASE("reweight_probabilities") {
    SUBCASE("satire x 1.5 on (0.2, 0.5, 0.3)") {
        auto row = reweight_probabilities({0.2, 0.5, 0.3}, int(Genre::satire), 1.5);
        CHECK(row[0] == doctest::Approx(0.27273).epsilon(1e-4));
        CHECK(row[1] == doctest::Approx(0.45455).epsilon(1e-4));
        CHECK(row[2] == doctest::Approx(0.27273).epsilon(1e-4));
        CHECK(std::abs(row[0] + row[1] + row[2] - 1.0) < 1e-12);
    }
    SUBCASE("factor 1.0 is the identity") {
        auto row = reweight_probabilities({0.2, 0.5, 0.3}, 0, 1.0);
        CHECK(row[0] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(row[1] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(row[2] == doctest::Approx(0.3).epsilon(1e-15));
    }
    SUBCASE("factor 20 flips the argmax on (0.05, 0.9, 0.05)") {
        auto row = reweight_probabilities({0.05, 0.9, 0.05}, 0, 20.0);
        CHECK(row[0] == doctest::Approx(1.0 / 1.95).epsilon(1e-4));
        CHECK(argmax_genre(row) == Genre::satire);
    }
    SUBCASE("factor 1 preserves the argmax on 1000 random rows; sums stay 1") {
        Rng rng(55);
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> row = {rng.next_double(), rng.next_double(), rng.next_double()};
            double s = row[0] + row[1] + row[2];
            if (s == 0) continue;
            for (double& v : row) v /= s;
            Genre before = argmax_genre(row);
            auto after = reweight_probabilities(row, 0, 1.0);
            CHECK(argmax_genre(after) == before);
            CHECK(std::abs(after[0] + after[1] + after[2] - 1.0) < 1e-12);
            // non-target ordering is preserved under any factor
            auto scaled = reweight_probabilities(row, 0, 3.7);
            CHECK((scaled[1] < scaled[2]) == (row[1] < row[2]));
        }
    }
    SUBCASE("bad inputs are rejected") {
        CHECK_THROWS_AS(reweight_probabilities({0.5, 0.2, 0.1}, 0, 1.5), Error);  // sum != 1
        CHECK_THROWS_AS(reweight_probabilities({0.2, 0.5, 0.3}, 0, 0.0), Error);
        CHECK_THROWS_AS(reweight_probabilities({0.2, 0.5, 0.3}, 5, 1.5), Error);
    }
}

TEST_CASE("heuristic_relabel: gating, punctuation rule, properties") {
    auto words_text = [](int plain_words, int numeric_words, const std::string& tail) {
        std::string t;
        for (int i = 0; i < plain_words; ++i) t += "word ";
        for (int i = 0; i < numeric_words; ++i) t += std::to_string(100 + i) + " ";
        t += tail;
        return t;
    };

    SUBCASE("predicted reporting stays untouched even with 50% numerals") {
        Article a = testutil::article("r", "en", words_text(10, 10, ""), Genre::reporting);
        auto out = heuristic_relabel({&a}, {Genre::reporting});
        CHECK(out[0] == Genre::reporting);
    }
    SUBCASE("opinion, 200 words, 3 numerals (1.5% > 0.8%), '!' present -> satire") {
        Article a = testutil::article("s", "en", words_text(197, 3, "zing!"), Genre::opinion);
        // 197 plain + 3 numeric + "zing" = 201 words; still > 0.8%
        auto out = heuristic_relabel({&a}, {Genre::opinion});
        CHECK(out[0] == Genre::satire);
    }
    SUBCASE("opinion, numerals above threshold, no '!' or '?' -> reporting") {
        Article a = testutil::article("p", "en", words_text(197, 3, "calm end."), Genre::opinion);
        auto out = heuristic_relabel({&a}, {Genre::opinion});
        CHECK(out[0] == Genre::reporting);
    }
    SUBCASE("opinion below the numeric threshold stays opinion") {
        Article a = testutil::article("o", "en", words_text(400, 1, "nothing much."), Genre::opinion);
        auto out = heuristic_relabel({&a}, {Genre::opinion});
        CHECK(out[0] == Genre::opinion);
    }
    SUBCASE("question mark also triggers the satire branch") {
        Article a = testutil::article("q", "en", words_text(100, 2, "really?"), Genre::opinion);
        auto out = heuristic_relabel({&a}, {Genre::opinion});
        CHECK(out[0] == Genre::satire);
    }
    SUBCASE("pluggable tagger: a strict tagger suppresses relabeling") {
        struct NoneTagger final : CardinalTagger {
            bool is_cardinal(const std::string&) const override { return false; }
        } none;
        Article a = testutil::article("s", "en", words_text(197, 3, "zing!"), Genre::opinion);
        auto out = heuristic_relabel({&a}, {Genre::opinion}, 0.008, none);
        CHECK(out[0] == Genre::opinion);
    }
    SUBCASE("properties: non-opinion never changes; relabeled articles are never opinion") {
        Rng rng(777);
        for (int it = 0; it < 200; ++it) {
            Article a = testutil::article(
                "x", "en",
                words_text(int(rng.below(50)) + 1, int(rng.below(5)),
                           rng.next_double() < 0.5 ? "boom!" : "flat."),
                Genre::opinion);
            Genre pred = Genre(int(rng.below(3)));
            auto out = heuristic_relabel({&a}, {pred});
            if (pred != Genre::opinion) CHECK(out[0] == pred);
            if (out[0] != pred) CHECK(out[0] != Genre::opinion);
        }
    }
}

TEST_CASE("apply_ensemble: passthrough, identity postprocess, full pipeline vs step oracles") {
    Dataset dev = genre_dev();
    auto perfect = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::reporting,
                             Genre::opinion, Genre::opinion},
                            0.8);
    auto skewed = rows_for({Genre::opinion, Genre::satire, Genre::reporting, Genre::opinion,
                            Genre::opinion, Genre::opinion},
                           0.7);
    PredictionMatrix pm = matrix_for(dev, {{"s2-a", perfect}, {"s2-b", skewed}});

    SUBCASE("top_one without postprocess is an argmax passthrough") {
        EnsembleSpec spec;
        spec.language = "en";
        spec.task = Task::genre;
        LabelEnsemble le;
        le.method.method = EnsembleMethod::top_one;
        le.members = {"s2-b"};
        spec.per_label = {le};
        ApplyResult res = apply_ensemble(spec, pm, dev);
        for (std::size_t e = 0; e < dev.size(); ++e) {
            CHECK(res.genre_labels[e].second == argmax_genre(skewed[e]));
            CHECK(res.probabilities[e].second == skewed[e]);
        }
    }
    SUBCASE("reweight factor 1.0 and no relabel leaves labels unchanged") {
        EnsembleSpec bare;
        bare.language = "en";
        bare.task = Task::genre;
        LabelEnsemble le;
        le.method.method = EnsembleMethod::top_n_average;
        le.method.top_n = 2;
        le.members = {"s2-a", "s2-b"};
        bare.per_label = {le};
        EnsembleSpec with_identity = bare;
        with_identity.postprocess.reweight = {Genre::satire, 1.0};
        auto labels_bare = apply_ensemble(bare, pm, dev).genre_labels;
        auto labels_id = apply_ensemble(with_identity, pm, dev).genre_labels;
        CHECK(labels_bare == labels_id);
    }
    SUBCASE("top-3 + reweight 1.5 + relabel runs the steps in order") {
        // articles with numeral-heavy text so the relabel rule can fire
        Dataset arts = dev;
        arts.articles[4].text = "word 11 22 33 really?";  // opinion-ish rows below
        arts.articles[5].text = "word 44 55 66 flat end";
        PredictionMatrix pm3 =
            matrix_for(arts, {{"s2-a", perfect}, {"s2-b", skewed}, {"s2-c", perfect}});

        EnsembleSpec spec;
        spec.language = "en";
        spec.task = Task::genre;
        LabelEnsemble le;
        le.method.method = EnsembleMethod::top_n_average;
        le.method.top_n = 3;
        le.members = {"s2-a", "s2-b", "s2-c"};
        spec.per_label = {le};
        spec.postprocess.reweight = {Genre::satire, 1.5};
        spec.postprocess.relabel = true;
        ApplyResult res = apply_ensemble(spec, pm3, arts);

        for (std::size_t e = 0; e < arts.size(); ++e) {
            // step oracle 1: elementwise mean
            std::vector<double> mean(3);
            for (int c = 0; c < 3; ++c)
                mean[std::size_t(c)] = (perfect[e][std::size_t(c)] + skewed[e][std::size_t(c)] +
                                        perfect[e][std::size_t(c)]) /
                                       3.0;
            // step oracle 2: reweight satire and renormalize
            mean[0] *= 1.5;
            double s = mean[0] + mean[1] + mean[2];
            for (double& v : mean) v /= s;
            for (int c = 0; c < 3; ++c)
                CHECK(res.probabilities[e].second[std::size_t(c)] ==
                      doctest::Approx(mean[std::size_t(c)]).epsilon(1e-12));
            // step oracle 3: argmax, then the relabel rule on opinion rows
            Genre expect = argmax_genre(mean);
            if (expect == Genre::opinion) {
                const std::string& text = arts.articles[e].text;
                std::size_t words = 0, cardinals = 0;
                for (const auto& tok : tokenize(text, text.size() + 1)) {
                    bool word = false, digit = false;
                    for (char ch : tok) {
                        if (std::isalnum(static_cast<unsigned char>(ch))) word = true;
                        if (ch >= '0' && ch <= '9') digit = true;
                    }
                    if (word) {
                        ++words;
                        cardinals += digit;
                    }
                }
                if (words > 0 && double(cardinals) / double(words) > 0.008) {
                    bool excl = text.find('!') != std::string::npos ||
                                text.find('?') != std::string::npos;
                    expect = excl ? Genre::satire : Genre::reporting;
                }
            }
            CHECK(res.genre_labels[e].second == expect);
        }
    }
}

TEST_CASE("build_ensemble: selection rule, guarantees, report consistency") {
    TargetPair target{"en", Task::genre};
    Dataset dev = genre_dev();
    auto perfect = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::reporting,
                             Genre::opinion, Genre::opinion},
                            0.8);
    auto decent = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::opinion,
                            Genre::opinion, Genre::opinion},
                           0.7);
    auto weak = rows_for({Genre::opinion, Genre::opinion, Genre::reporting, Genre::reporting,
                          Genre::opinion, Genre::opinion},
                         0.6);
    std::vector<TrialRecord> pool;
    pool.push_back(record_with_report("s1-mt-en-0000", Stage::one, target, dev, weak));
    pool.push_back(record_with_report("s2-en-genre-0000", Stage::two, target, dev, perfect));
    pool.push_back(record_with_report("s2-en-genre-0001", Stage::two, target, dev, decent));
    PredictionMatrix pm = matrix_for(dev, {{"s1-mt-en-0000", weak},
                                           {"s2-en-genre-0000", perfect},
                                           {"s2-en-genre-0001", decent}});

    std::vector<CandidateTemplate> candidates = default_genre_candidates({1.0, 1.5});
    BuildResult result = build_ensemble(pool, pm, dev, target, candidates);

    SUBCASE("the chosen spec never scores below the top-one candidate") {
        double top_one_obj = -1;
        for (std::size_t i = 0; i < result.evals[0].size(); ++i) {
            const CandidateEval& ev = result.evals[0][i];
            if (!ev.skipped && ev.tpl.method.method == EnsembleMethod::top_one)
                top_one_obj = std::max(top_one_obj, ev.objective);
        }
        CHECK(result.evals[0][result.chosen_index[0]].objective >= top_one_obj);
    }
    SUBCASE("apply_ensemble on dev reproduces the recorded candidate objective exactly") {
        ApplyResult res = apply_ensemble(result.chosen, pm, dev);
        GenreExamples gold;
        for (const auto& a : dev.articles) gold.emplace_back(a.id, *a.genre);
        CHECK(f1_scores(gold, res.genre_labels).macro ==
              result.evals[0][result.chosen_index[0]].objective);
    }
    SUBCASE("a single candidate is chosen by force") {
        std::vector<CandidateTemplate> one = {candidates[0]};
        BuildResult r1 = build_ensemble(pool, pm, dev, target, one);
        CHECK(r1.chosen_index[0] == 0);
        CHECK(r1.chosen.per_label[0].method.method == one[0].method.method);
    }
    SUBCASE("empty candidate list is an error") {
        CHECK_THROWS_AS(build_ensemble(pool, pm, dev, target, {}), Error);
    }
    SUBCASE("chosen spec round-trips through its text form") {
        std::string text = serialize_ensemble_spec(result.chosen);
        EnsembleSpec back = parse_ensemble_spec(text);
        CHECK(serialize_ensemble_spec(back) == text);
        ApplyResult a = apply_ensemble(result.chosen, pm, dev);
        ApplyResult b = apply_ensemble(back, pm, dev);
        CHECK(a.genre_labels == b.genre_labels);
    }
    SUBCASE("top-one penalty deprioritizes top_one without breaking determinism") {
        BuildOptions opts;
        opts.top_one_penalty = 2.0;  // pushes top_one below everything
        BuildResult penalized = build_ensemble(pool, pm, dev, target, candidates, opts);
        CHECK(penalized.chosen.per_label[0].method.method != EnsembleMethod::top_one);
    }
}

TEST_CASE("build_ensemble on frames selects one method per label") {
    TargetPair target{"en", Task::frames};
    Dataset dev;
    Rng rng(31);
    for (int i = 0; i < 8; ++i) {
        FrameSet fs;
        fs.add(i % kNumFrames);
        if (i % 3 == 0) fs.add((i + 5) % kNumFrames);
        dev.articles.push_back(testutil::article("f" + std::to_string(i), "en", "frame text body",
                                                 std::nullopt, fs));
    }
    auto rows_from_gold = [&](double correct_p, double noise) {
        std::vector<std::vector<double>> rows;
        for (const auto& a : dev.articles) {
            std::vector<double> row(kNumFrames, 0.0);
            for (int c = 0; c < kNumFrames; ++c) {
                double base = a.frames->has(c) ? correct_p : 1.0 - correct_p;
                row[std::size_t(c)] = std::clamp(base + noise * (rng.next_double() - 0.5), 0.0, 1.0);
            }
            rows.push_back(row);
        }
        return rows;
    };
    auto good = rows_from_gold(0.9, 0.1);
    auto meh = rows_from_gold(0.7, 0.3);
    std::vector<TrialRecord> pool;
    pool.push_back(record_with_report("s1-clmt-0000", Stage::one, target, dev, good));
    pool.push_back(record_with_report("s2-en-frames-0000", Stage::two, target, dev, meh));
    PredictionMatrix pm =
        matrix_for(dev, {{"s1-clmt-0000", good}, {"s2-en-frames-0000", meh}}, Task::frames);

    BuildResult result = build_ensemble(pool, pm, dev, target, default_frames_candidates());
    CHECK(result.chosen.per_label.size() == kNumFrames);
    CHECK(result.chosen_index.size() == kNumFrames);
    for (int c = 0; c < kNumFrames; ++c) CHECK(result.chosen.per_label[std::size_t(c)].label == c);

    SUBCASE("spec with stackers round-trips") {
        std::string text = serialize_ensemble_spec(result.chosen);
        EnsembleSpec back = parse_ensemble_spec(text);
        ApplyResult a = apply_ensemble(result.chosen, pm, dev);
        ApplyResult b = apply_ensemble(back, pm, dev);
        REQUIRE(a.probabilities.size() == b.probabilities.size());
        for (std::size_t e = 0; e < a.probabilities.size(); ++e)
            for (int c = 0; c < kNumFrames; ++c)
                CHECK(a.probabilities[e].second[std::size_t(c)] ==
                      doctest::Approx(b.probabilities[e].second[std::size_t(c)]).epsilon(1e-9));
        CHECK(a.frame_labels == b.frame_labels);
    }
    SUBCASE("apply on dev reproduces each label's recorded objective") {
        ApplyResult res = apply_ensemble(result.chosen, pm, dev);
        for (int c = 0; c < kNumFrames; ++c) {
            std::vector<bool> gold_col, pred_col;
            for (std::size_t e = 0; e < dev.size(); ++e) {
                gold_col.push_back(dev.articles[e].frames->has(c));
                pred_col.push_back(res.frame_labels[e].second.has(c));
            }
            CHECK(binary_f1(gold_col, pred_col) ==
                  result.evals[std::size_t(c)][result.chosen_index[std::size_t(c)]].objective);
        }
    }
}

TEST_CASE("prediction matrix validation") {
    Dataset dev = genre_dev();
    auto rows = rows_for({Genre::satire, Genre::satire, Genre::reporting, Genre::reporting,
                          Genre::opinion, Genre::opinion},
                         0.8);
    SUBCASE("genre rows must sum to 1") {
        auto bad = rows;
        bad[0][0] = 0.5;  // breaks the sum
        PredictionMatrix pm;
        pm.task = Task::genre;
        pm.model_ids = {"m"};
        for (const auto& a : dev.articles) pm.example_ids.push_back(a.id);
        pm.probs = {bad};
        CHECK_THROWS_AS(pm.validate(), Error);
    }
    SUBCASE("entries outside [0,1] are rejected") {
        auto bad = rows;
        bad[0] = {1.2, -0.1, -0.1};
        PredictionMatrix pm;
        pm.task = Task::genre;
        pm.model_ids = {"m"};
        for (const auto& a : dev.articles) pm.example_ids.push_back(a.id);
        pm.probs = {bad};
        CHECK_THROWS_AS(pm.validate(), Error);
    }
}
