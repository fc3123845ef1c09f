#include <doctest.h>

#include <cmath>

#include "framelab/model.hpp"
#include "testutil.hpp"

using namespace framelab;

using testutil::fd_max_rel_error;
using testutil::random_example;
using testutil::randomize_params;

namespace {

FeatureVector sparse(std::initializer_list<std::pair<std::uint32_t, double>> entries) {
    return testutil::sparse_vector(entries);
}

FeatureConfig tiny_features(int hash_dim) {
    FeatureConfig cfg;
    cfg.hash_dim = hash_dim;
    cfg.word_ngrams = {1, 1};
    cfg.char_ngrams = {3, 3};
    cfg.max_tokens = 32;
    return cfg;
}

}  // namespace

TEST_CASE("compute_class_weights follows the harmonic-mean rule") {
    SUBCASE("skewed counts (10, 41, 382)") {
        LossWeights w = compute_class_weights({10, 41, 382});
        REQUIRE(w.per_label.size() == 3);
        CHECK(w.per_label[0] == doctest::Approx(2.3621).epsilon(1e-4));
        CHECK(w.per_label[1] == doctest::Approx(0.5761).epsilon(1e-4));
        CHECK(w.per_label[2] == doctest::Approx(0.0618).epsilon(1e-3));
        double sum = w.per_label[0] + w.per_label[1] + w.per_label[2];
        CHECK(std::abs(sum - 3.0) < 1e-12);
    }
    SUBCASE("equal counts give all ones") {
        for (std::size_t k : {1u, 7u, 100u}) {
            LossWeights w = compute_class_weights({k, k, k});
            for (double v : w.per_label) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("threshold clamps without renormalizing") {
        LossWeights w = compute_class_weights({10, 41, 382}, 1.0);
        CHECK(w.per_label[0] == 1.0);
        CHECK(w.per_label[1] == doctest::Approx(0.5761).epsilon(1e-4));
        CHECK(w.per_label[2] == doctest::Approx(0.0618).epsilon(1e-3));
    }
    SUBCASE("zero count is an error") {
        CHECK_THROWS_AS(compute_class_weights({10, 0, 3}), Error);
    }
    SUBCASE("weight ordering is inverse to count ordering") {
        Rng rng(5);
        for (int it = 0; it < 40; ++it) {
            std::vector<std::size_t> counts = {1 + rng.below(500), 1 + rng.below(500),
                                               1 + rng.below(500)};
            LossWeights w = compute_class_weights(counts);
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t b = 0; b < 3; ++b)
                    if (counts[a] < counts[b]) CHECK(w.per_label[a] > w.per_label[b]);
        }
    }
}

TEST_CASE("multitask_loss: masking, closed forms, weighting linearity") {
    FeatureConfig cfg = tiny_features(16);
    MultiTaskModel zero = init_model(cfg, 4, false, 0);
    std::fill(zero.params.begin(), zero.params.end(), 0.0);

    TrainExample genre_only;
    genre_only.id = "g";
    genre_only.x = sparse({{1, 1.0}, {5, 2.0}});
    genre_only.genre = Genre::reporting;

    SUBCASE("uniform softmax gives genre loss ln 3") {
        LossResult r = multitask_loss(zero, {genre_only});
        CHECK(r.genre_loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
        CHECK(r.frames_loss == 0.0);
    }
    SUBCASE("genre-only batch leaves all frame-head gradients at zero") {
        Rng rng(3);
        MultiTaskModel m = init_model(cfg, 4, false, 1);
        randomize_params(m, rng);
        LossResult r = multitask_loss(m, {genre_only});
        ParamLayout l = m.layout();
        for (std::size_t i = l.frames_w; i < l.frames_b + kNumFrames; ++i) CHECK(r.grad[i] == 0.0);
        // and the reverse: frames-only article leaves the genre head untouched
        TrainExample frames_only;
        frames_only.id = "f";
        frames_only.x = sparse({{2, 1.0}});
        frames_only.frames = testutil::frames_of({1, 7});
        LossResult rf = multitask_loss(m, {frames_only});
        for (std::size_t i = l.genre_w; i < l.genre_b + 3; ++i) CHECK(rf.grad[i] == 0.0);
    }
    SUBCASE("doubling every class weight doubles the genre loss exactly") {
        Rng rng(4);
        MultiTaskModel m = init_model(cfg, 4, false, 2);
        randomize_params(m, rng);
        LossWeights w1{{0.5, 1.5, 2.0}};
        LossWeights w2{{1.0, 3.0, 4.0}};
        double l1 = multitask_loss(m, {genre_only}, &w1).genre_loss;
        double l2 = multitask_loss(m, {genre_only}, &w2).genre_loss;
        CHECK(l2 == doctest::Approx(2.0 * l1).epsilon(1e-12));
    }
    SUBCASE("article with no labels at all is an error") {
        TrainExample bare;
        bare.id = "none";
        bare.x = sparse({{0, 1.0}});
        CHECK_THROWS_WITH_AS(multitask_loss(zero, {bare}), doctest::Contains("none"), Error);
    }
}

TEST_CASE("analytic gradients match central finite differences on tiny models") {
    Rng rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        int hash_dim = 8 << rng.below(3);  // 8..32
        int hidden = 2 + int(rng.below(3));
        bool classwise = trial % 3 == 2;
        FeatureConfig cfg = tiny_features(hash_dim);
        MultiTaskModel m = init_model(cfg, hidden, classwise, rng.next_u64());
        randomize_params(m, rng);

        std::vector<TrainExample> batch;
        batch.push_back(random_example(rng, hash_dim, true, false, "a"));
        batch.push_back(random_example(rng, hash_dim, false, true, "b"));
        batch.push_back(random_example(rng, hash_dim, true, true, "c"));

        LossWeights weights{{rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)}};
        worst = std::max(worst, fd_max_rel_error(m, batch, trial % 2 ? &weights : nullptr, nullptr));

        if (trial == 0) {  // fixed dropout masks participate in the same check
            DropoutPlan plan;
            plan.rate = 0.3;
            Rng mask_rng(7);
            plan.input_keep.resize(batch.size());
            plan.hidden_keep.resize(batch.size());
            std::size_t n_enc = classwise ? std::size_t(1 + kNumFrames) : 1;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                plan.input_keep[b].resize(batch[b].x.entries.size());
                for (auto& k : plan.input_keep[b]) k = mask_rng.next_double() >= plan.rate;
                plan.hidden_keep[b].resize(n_enc);
                for (auto& mask : plan.hidden_keep[b]) {
                    mask.resize(std::size_t(hidden));
                    for (auto& k : mask) k = mask_rng.next_double() >= plan.rate;
                }
            }
            worst = std::max(worst, fd_max_rel_error(m, batch, &weights, &plan));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("train: no-op, learning, determinism, schedule, abort") {
    FeatureConfig cfg = tiny_features(256);
    TrainConfig tc;
    tc.max_steps = 200;
    tc.learning_rate = 0.4;
    tc.batch_size = 2;
    tc.seed = 17;

    std::vector<TrainExample> toy;
    {
        TrainExample a;
        a.id = "sat";
        a.x = sparse({{3, 1.0}, {10, 1.0}});
        a.genre = Genre::satire;
        TrainExample a2 = a;
        a2.id = "sat2";
        a2.x = sparse({{3, 1.0}, {11, 1.0}});
        TrainExample b;
        b.id = "opi";
        b.x = sparse({{77, 1.0}, {130, 1.0}});
        b.genre = Genre::opinion;
        TrainExample b2 = b;
        b2.id = "opi2";
        b2.x = sparse({{77, 1.0}, {131, 1.0}});
        toy = {a, a2, b, b2};
    }

    SUBCASE("max_steps = 0 returns the initial model unchanged") {
        TrainConfig zero_cfg = tc;
        zero_cfg.max_steps = 0;
        MultiTaskModel init = init_model(cfg, 4, false, 5);
        MultiTaskModel out = train(init, toy, zero_cfg);
        CHECK(out.params == init.params);
    }
    SUBCASE("separable toy set: loss falls below its starting value") {
        MultiTaskModel init = init_model(cfg, 4, false, 5);
        TrainLog log;
        train(init, toy, tc, &log);
        REQUIRE(log.step_loss.size() == 200);
        double head = 0, tail = 0;
        for (int i = 0; i < 20; ++i) {
            head += log.step_loss[std::size_t(i)];
            tail += log.step_loss[log.step_loss.size() - 1 - std::size_t(i)];
        }
        CHECK(tail / 20.0 < head / 20.0);
        CHECK(log.step_loss.back() < log.step_loss.front());
    }
    SUBCASE("same seed twice gives bit-identical weights") {
        MultiTaskModel init = init_model(cfg, 4, false, 5);
        MultiTaskModel m1 = train(init, toy, tc);
        MultiTaskModel m2 = train(init, toy, tc);
        CHECK(m1.params == m2.params);
        TrainConfig other = tc;
        other.seed = 18;
        MultiTaskModel m3 = train(init, toy, other);
        CHECK(m1.params != m3.params);
    }
    SUBCASE("dropout training is deterministic too") {
        TrainConfig drop_cfg = tc;
        drop_cfg.dropout = 0.2;
        drop_cfg.max_steps = 50;
        MultiTaskModel init = init_model(cfg, 4, false, 5);
        CHECK(train(init, toy, drop_cfg).params == train(init, toy, drop_cfg).params);
    }
    SUBCASE("warmup schedule: zero start, peak at the warmup boundary, near-zero end") {
        TrainConfig sc;
        sc.max_steps = 100;
        sc.learning_rate = 1.0;
        sc.warmup_ratio = 0.2;
        CHECK(lr_at_step(sc, 0) == 0.0);
        CHECK(lr_at_step(sc, 10) == doctest::Approx(0.5));
        CHECK(lr_at_step(sc, 20) == doctest::Approx(1.0));
        for (int t = 0; t < 100; ++t) CHECK(lr_at_step(sc, t) <= 1.0);
        CHECK(lr_at_step(sc, 60) == doctest::Approx(0.5));
        CHECK(lr_at_step(sc, 99) <= 1.0 / 80.0 + 1e-12);
    }
    SUBCASE("non-finite loss aborts with step index and batch ids") {
        MultiTaskModel poisoned = init_model(cfg, 4, false, 5);
        poisoned.params[0] = std::numeric_limits<double>::quiet_NaN();
        TrainExample a;
        a.id = "bad-article";
        a.x = sparse({{0, 1.0}});
        a.genre = Genre::satire;
        TrainConfig one = tc;
        one.max_steps = 3;
        one.batch_size = 1;
        CHECK_THROWS_WITH_AS(train(poisoned, {a}, one), doctest::Contains("step 0"),
                             NonFiniteLossError);
        CHECK_THROWS_WITH_AS(train(poisoned, {a}, one), doctest::Contains("bad-article"),
                             NonFiniteLossError);
    }
}

TEST_CASE("predict_proba: normalization and symmetric baselines") {
    FeatureConfig cfg = tiny_features(64);
    Rng rng(21);
    MultiTaskModel m = init_model(cfg, 3, false, 9);
    randomize_params(m, rng);

    Dataset articles;
    articles.articles.push_back(testutil::article("p1", "en", "alpha beta gamma", Genre::satire));
    articles.articles.push_back(testutil::article("p2", "en", "delta epsilon!", Genre::opinion));

    SUBCASE("genre rows sum to 1 within 1e-9, row order matches input") {
        ScoreRows rows = predict_proba(m, articles, Task::genre);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].first == "p1");
        CHECK(rows[1].first == "p2");
        for (const auto& [id, row] : rows) {
            double sum = row[0] + row[1] + row[2];
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    SUBCASE("zero-weight model: exactly uniform genre, exactly 0.5 frames") {
        MultiTaskModel zero = init_model(cfg, 3, false, 0);
        std::fill(zero.params.begin(), zero.params.end(), 0.0);
        ScoreRows genre_rows = predict_proba(zero, articles, Task::genre);
        for (const auto& [id, row] : genre_rows)
            for (double p : row) CHECK(p == 1.0 / 3.0);
        ScoreRows frame_rows = predict_proba(zero, articles, Task::frames);
        for (const auto& [id, row] : frame_rows)
            for (double p : row) CHECK(p == 0.5);
    }
    SUBCASE("classwise model built from a joint model's weights matches its frame probabilities") {
        MultiTaskModel cw = init_model(cfg, 3, true, 1);
        ParamLayout jl = m.layout();
        ParamLayout cl = cw.layout();
        std::copy(m.params.begin(), m.params.begin() + std::ptrdiff_t(jl.genre_b + 3),
                  cw.params.begin());
        const std::size_t d = std::size_t(cfg.hash_dim), h = 3;
        for (int c = 0; c < kNumFrames; ++c) {
            std::size_t base = cl.units + std::size_t(c) * cl.unit_stride;
            for (std::size_t i = 0; i < d * h; ++i) cw.params[base + i] = m.params[jl.enc_w + i];
            for (std::size_t j = 0; j < h; ++j)
                cw.params[base + d * h + j] = m.params[jl.enc_b + j];
            for (std::size_t j = 0; j < h; ++j)
                cw.params[base + d * h + h + j] =
                    m.params[jl.frames_w + j * kNumFrames + std::size_t(c)];
            cw.params[base + d * h + h + h] = m.params[jl.frames_b + std::size_t(c)];
        }
        ScoreRows joint_rows = predict_proba(m, articles, Task::frames);
        ScoreRows cw_rows = predict_proba(cw, articles, Task::frames);
        for (std::size_t e = 0; e < joint_rows.size(); ++e)
            for (int c = 0; c < kNumFrames; ++c)
                CHECK(cw_rows[e].second[std::size_t(c)] ==
                      doctest::Approx(joint_rows[e].second[std::size_t(c)]).epsilon(1e-12));
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    testutil::TempDir tmp("ckpt");
    FeatureConfig cfg = tiny_features(128);
    cfg.weighting = Weighting::tf;
    Rng rng(31);
    MultiTaskModel m = init_model(cfg, 5, false, 44);
    randomize_params(m, rng);
    TrainConfig tc;
    tc.max_steps = 123;
    tc.loss_scale_threshold = 5.0;
    tc.seed = 99;

    save_checkpoint(tmp / "ck", m, tc);
    Checkpoint back = load_checkpoint(tmp / "ck");
    CHECK(back.model.params == m.params);
    CHECK(back.model.features == m.features);
    CHECK(back.model.hidden_dim == 5);
    CHECK(back.train_config.max_steps == 123);
    REQUIRE(back.train_config.loss_scale_threshold.has_value());
    CHECK(*back.train_config.loss_scale_threshold == 5.0);

    Dataset articles;
    articles.articles.push_back(testutil::article("x", "en", "some text here", Genre::satire));
    ScoreRows a = predict_proba(m, articles, Task::genre);
    ScoreRows b = predict_proba(back.model, articles, Task::genre);
    CHECK(a == b);

    SUBCASE("corrupted magic is rejected") {
        write_text_file(tmp / "bad", "NOTACKPT");
        CHECK_THROWS_AS(load_checkpoint(tmp / "bad"), Error);
    }
}
