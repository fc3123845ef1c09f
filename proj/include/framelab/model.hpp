#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/corpus.hpp"
#include "framelab/features.hpp"
#include "framelab/metrics.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// Training configuration. Field names track the hyperparameter tables the
// search spaces are written in.
// ---------------------------------------------------------------------------

struct TrainConfig {
    int max_steps = 100;
    double learning_rate = 0.1;
    int batch_size = 8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;
    double warmup_ratio = 0.2;
    bool loss_scaling = false;
    std::optional<double> loss_scale_threshold;
    bool classwise = false;
    double dropout = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_steps < 0) throw Error("TrainConfig: max_steps must be >= 0");
        if (!(learning_rate > 0)) throw Error("TrainConfig: learning_rate must be positive");
        if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
        if (weight_decay < 0) throw Error("TrainConfig: weight_decay must be non-negative");
        if (!(grad_clip > 0)) throw Error("TrainConfig: grad_clip must be positive");
        if (warmup_ratio < 0 || warmup_ratio > 1) throw Error("TrainConfig: warmup_ratio in [0,1]");
        if (dropout < 0 || dropout >= 1) throw Error("TrainConfig: dropout in [0,1)");
        if (loss_scale_threshold && !(*loss_scale_threshold > 0))
            throw Error("TrainConfig: loss_scale_threshold must be positive");
    }
};

inline std::string serialize_train_config(const TrainConfig& c) {
    std::string out;
    out += "max_steps = " + std::to_string(c.max_steps) + "\n";
    out += "learning_rate = " + fmt_double(c.learning_rate) + "\n";
    out += "batch_size = " + std::to_string(c.batch_size) + "\n";
    out += "weight_decay = " + fmt_double(c.weight_decay) + "\n";
    out += "grad_clip = " + fmt_double(c.grad_clip) + "\n";
    out += "warmup_ratio = " + fmt_double(c.warmup_ratio) + "\n";
    out += std::string("loss_scaling = ") + (c.loss_scaling ? "yes" : "no") + "\n";
    out += "loss_scale_threshold = " +
           (c.loss_scale_threshold ? fmt_double(*c.loss_scale_threshold) : std::string("n/a")) + "\n";
    out += std::string("classwise = ") + (c.classwise ? "yes" : "no") + "\n";
    out += "dropout = " + fmt_double(c.dropout) + "\n";
    out += "seed = " + std::to_string(c.seed) + "\n";
    return out;
}

inline TrainConfig parse_train_config(const std::string& text) {
    std::map<std::string, std::string> m;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("bad train config line: " + line);
        m[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    TrainConfig c;
    c.max_steps = std::stoi(m.at("max_steps"));
    c.learning_rate = std::stod(m.at("learning_rate"));
    c.batch_size = std::stoi(m.at("batch_size"));
    c.weight_decay = std::stod(m.at("weight_decay"));
    c.grad_clip = std::stod(m.at("grad_clip"));
    c.warmup_ratio = std::stod(m.at("warmup_ratio"));
    c.loss_scaling = m.at("loss_scaling") == "yes";
    if (m.at("loss_scale_threshold") != "n/a") c.loss_scale_threshold = std::stod(m.at("loss_scale_threshold"));
    c.classwise = m.at("classwise") == "yes";
    c.dropout = std::stod(m.at("dropout"));
    c.seed = std::stoull(m.at("seed"));
    return c;
}

// ---------------------------------------------------------------------------
// Class-balancing weights: w_l = hmean(counts) / c_l, optionally clamped to
// an upper threshold (clamping does not renormalize). hmean(counts) / c_l
// makes the weights sum to the number of labels.
// ---------------------------------------------------------------------------

struct LossWeights {
    std::vector<double> per_label;
};

inline LossWeights compute_class_weights(const std::vector<std::size_t>& counts,
                                         std::optional<double> threshold = std::nullopt) {
    if (counts.empty()) throw Error("compute_class_weights: empty counts");
    double inv_sum = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) throw Error("compute_class_weights: zero count for a label");
        inv_sum += 1.0 / double(c);
    }
    double hmean = double(counts.size()) / inv_sum;
    LossWeights w;
    for (std::size_t c : counts) {
        double wl = hmean / double(c);
        if (threshold && wl > *threshold) wl = *threshold;
        w.per_label.push_back(wl);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Multi-task model: sparse-input linear encoder + tanh, one softmax head for
// genre and one sigmoid head for frames. In classwise mode the frames side
// becomes 14 independent encoder+head units; the genre side keeps the main
// encoder either way. All parameters live in one flat vector so the
// optimizer and finite-difference checks can treat the model uniformly.
// ---------------------------------------------------------------------------

struct ParamLayout {
    std::size_t enc_w = 0, enc_b = 0;
    std::size_t genre_w = 0, genre_b = 0;
    std::size_t frames_w = 0, frames_b = 0;
    std::size_t units = 0;        // first classwise unit (classwise only)
    std::size_t unit_stride = 0;  // per-unit parameter count
    std::size_t total = 0;
};

inline ParamLayout make_layout(int hash_dim, int hidden, bool classwise) {
    ParamLayout l;
    std::size_t d = std::size_t(hash_dim), h = std::size_t(hidden);
    l.enc_w = 0;
    l.enc_b = l.enc_w + d * h;
    l.genre_w = l.enc_b + h;
    l.genre_b = l.genre_w + h * 3;
    l.frames_w = l.genre_b + 3;
    l.frames_b = l.frames_w + h * kNumFrames;
    l.total = l.frames_b + kNumFrames;
    if (classwise) {
        l.units = l.total;
        l.unit_stride = d * h + h + h + 1;  // unit encoder w, encoder b, head w, head b
        l.total += std::size_t(kNumFrames) * l.unit_stride;
    }
    return l;
}

struct MultiTaskModel {
    FeatureConfig features;
    int hidden_dim = 16;
    bool classwise = false;
    std::vector<double> params;

    ParamLayout layout() const { return make_layout(features.hash_dim, hidden_dim, classwise); }
};

inline MultiTaskModel init_model(const FeatureConfig& features, int hidden_dim, bool classwise,
                                 std::uint64_t seed) {
    features.validate();
    if (hidden_dim < 1) throw Error("init_model: hidden_dim must be >= 1");
    MultiTaskModel m;
    m.features = features;
    m.hidden_dim = hidden_dim;
    m.classwise = classwise;
    ParamLayout l = m.layout();
    m.params.assign(l.total, 0.0);
    Rng rng(seed);
    auto glorot = [&](std::size_t off, std::size_t count, int fan_in, int fan_out) {
        double r = std::sqrt(6.0 / double(fan_in + fan_out));
        for (std::size_t i = 0; i < count; ++i) m.params[off + i] = rng.uniform(-r, r);
    };
    const int d = features.hash_dim, h = hidden_dim;
    glorot(l.enc_w, std::size_t(d) * std::size_t(h), d, h);
    glorot(l.genre_w, std::size_t(h) * 3, h, 3);
    glorot(l.frames_w, std::size_t(h) * kNumFrames, h, kNumFrames);
    if (classwise) {
        for (int c = 0; c < kNumFrames; ++c) {
            std::size_t base = l.units + std::size_t(c) * l.unit_stride;
            glorot(base, std::size_t(d) * std::size_t(h), d, h);
            glorot(base + std::size_t(d) * std::size_t(h) + std::size_t(h), std::size_t(h), h, 1);
        }
    }
    return m;
}

// A featurized training/evaluation example with optional per-task labels.
struct TrainExample {
    std::string id;
    FeatureVector x;
    std::optional<Genre> genre;
    std::optional<FrameSet> frames;
};

inline TrainExample make_example(const Article& a, const FeatureConfig& cfg) {
    return TrainExample{a.id, featurize_text(a.text, cfg), a.genre, a.frames};
}

// Fixed dropout masks for one batch. Training draws these from the trial
// stream; inference and gradient checks run without them.
struct DropoutPlan {
    double rate = 0.0;
    // [example][input entry] and [example][encoder instance][hidden unit]
    std::vector<std::vector<std::uint8_t>> input_keep;
    std::vector<std::vector<std::vector<std::uint8_t>>> hidden_keep;
};

namespace detail {

inline double softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

struct EncoderScratch {
    std::vector<double> z, h, h_drop;
};

// z = W^T x + b, h = tanh(z); h_drop applies the (optional) mask
inline void encoder_forward(const std::vector<double>& params, std::size_t w_off, std::size_t b_off,
                            int hidden, const FeatureVector& x,
                            const std::vector<std::uint8_t>* input_keep, double in_scale,
                            const std::vector<std::uint8_t>* hidden_keep, double hid_scale,
                            EncoderScratch& s) {
    s.z.assign(std::size_t(hidden), 0.0);
    for (std::size_t e = 0; e < x.entries.size(); ++e) {
        if (input_keep && !(*input_keep)[e]) continue;
        double xv = x.entries[e].second * (input_keep ? in_scale : 1.0);
        std::size_t row = w_off + std::size_t(x.entries[e].first) * std::size_t(hidden);
        for (int j = 0; j < hidden; ++j) s.z[std::size_t(j)] += xv * params[row + std::size_t(j)];
    }
    s.h.resize(std::size_t(hidden));
    s.h_drop.resize(std::size_t(hidden));
    for (int j = 0; j < hidden; ++j) {
        s.z[std::size_t(j)] += params[b_off + std::size_t(j)];
        s.h[std::size_t(j)] = std::tanh(s.z[std::size_t(j)]);
        double keep = hidden_keep ? ((*hidden_keep)[std::size_t(j)] ? hid_scale : 0.0) : 1.0;
        s.h_drop[std::size_t(j)] = s.h[std::size_t(j)] * keep;
    }
}

// accumulates encoder gradients given d loss / d h_drop
inline void encoder_backward(std::size_t w_off, std::size_t b_off, int hidden, const FeatureVector& x,
                             const std::vector<std::uint8_t>* input_keep, double in_scale,
                             const std::vector<std::uint8_t>* hidden_keep, double hid_scale,
                             const EncoderScratch& s, const std::vector<double>& dh_drop,
                             std::vector<double>& grad) {
    std::vector<double> dz(static_cast<std::size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
        double keep = hidden_keep ? ((*hidden_keep)[std::size_t(j)] ? hid_scale : 0.0) : 1.0;
        double dh = dh_drop[std::size_t(j)] * keep;
        dz[std::size_t(j)] = dh * (1.0 - s.h[std::size_t(j)] * s.h[std::size_t(j)]);
        grad[b_off + std::size_t(j)] += dz[std::size_t(j)];
    }
    for (std::size_t e = 0; e < x.entries.size(); ++e) {
        if (input_keep && !(*input_keep)[e]) continue;
        double xv = x.entries[e].second * (input_keep ? in_scale : 1.0);
        std::size_t row = w_off + std::size_t(x.entries[e].first) * std::size_t(hidden);
        for (int j = 0; j < hidden; ++j) grad[row + std::size_t(j)] += xv * dz[std::size_t(j)];
    }
}

}  // namespace detail

struct LossResult {
    double loss = 0.0;
    double genre_loss = 0.0;
    double frames_loss = 0.0;
    std::vector<double> grad;
};

// Summed loss over the batch: genre cross-entropy where a genre label is
// present (optionally class-weighted) plus the mean of the 14 binary
// cross-entropies where frame labels are present. Absent labels contribute
// zero loss and zero gradient to that head.
inline LossResult multitask_loss(const MultiTaskModel& m, const std::vector<TrainExample>& batch,
                                 const LossWeights* weights = nullptr,
                                 const DropoutPlan* drop = nullptr) {
    const ParamLayout l = m.layout();
    const int h = m.hidden_dim;
    LossResult res;
    res.grad.assign(l.total, 0.0);
    const double in_scale = drop ? 1.0 / (1.0 - drop->rate) : 1.0;
    if (drop) {
        const std::size_t n_enc = m.classwise ? std::size_t(1 + kNumFrames) : 1;
        if (drop->input_keep.size() != batch.size() || drop->hidden_keep.size() != batch.size())
            throw Error("multitask_loss: dropout plan does not match the batch size");
        for (std::size_t bi = 0; bi < batch.size(); ++bi)
            if (drop->input_keep[bi].size() != batch[bi].x.entries.size() ||
                drop->hidden_keep[bi].size() != n_enc)
                throw Error("multitask_loss: dropout plan does not match example shapes");
    }

    detail::EncoderScratch enc, unit;
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainExample& ex = batch[bi];
        if (!ex.genre && !ex.frames)
            throw Error("multitask_loss: article '" + ex.id + "' has no labels for either task");
        const std::vector<std::uint8_t>* in_keep = drop ? &drop->input_keep[bi] : nullptr;
        auto hid_keep = [&](std::size_t enc_idx) -> const std::vector<std::uint8_t>* {
            return drop ? &drop->hidden_keep[bi][enc_idx] : nullptr;
        };

        const bool need_main = ex.genre.has_value() || (ex.frames.has_value() && !m.classwise);
        if (need_main)
            detail::encoder_forward(m.params, l.enc_w, l.enc_b, h, ex.x, in_keep, in_scale,
                                    hid_keep(0), in_scale, enc);

        if (ex.genre) {
            // softmax cross-entropy, max-subtracted
            double logits[3];
            for (int c = 0; c < 3; ++c) {
                double u = m.params[l.genre_b + std::size_t(c)];
                for (int j = 0; j < h; ++j)
                    u += enc.h_drop[std::size_t(j)] * m.params[l.genre_w + std::size_t(j) * 3 + std::size_t(c)];
                logits[c] = u;
            }
            double mx = std::max({logits[0], logits[1], logits[2]});
            double Z = 0.0;
            double p[3];
            for (int c = 0; c < 3; ++c) Z += std::exp(logits[c] - mx);
            for (int c = 0; c < 3; ++c) p[c] = std::exp(logits[c] - mx) / Z;
            const int y = int(*ex.genre);
            const double w = weights ? weights->per_label[std::size_t(y)] : 1.0;
            res.genre_loss += w * (std::log(Z) + mx - logits[y]);

            std::vector<double> dh(std::size_t(h), 0.0);
            for (int c = 0; c < 3; ++c) {
                double du = w * (p[c] - (c == y ? 1.0 : 0.0));
                res.grad[l.genre_b + std::size_t(c)] += du;
                for (int j = 0; j < h; ++j) {
                    res.grad[l.genre_w + std::size_t(j) * 3 + std::size_t(c)] += enc.h_drop[std::size_t(j)] * du;
                    dh[std::size_t(j)] += m.params[l.genre_w + std::size_t(j) * 3 + std::size_t(c)] * du;
                }
            }
            detail::encoder_backward(l.enc_w, l.enc_b, h, ex.x, in_keep, in_scale,
                                     hid_keep(0), in_scale, enc, dh, res.grad);
        }

        if (ex.frames) {
            const double inv_k = 1.0 / double(kNumFrames);
            if (!m.classwise) {
                std::vector<double> dh(std::size_t(h), 0.0);
                for (int c = 0; c < kNumFrames; ++c) {
                    double v = m.params[l.frames_b + std::size_t(c)];
                    for (int j = 0; j < h; ++j)
                        v += enc.h_drop[std::size_t(j)] *
                             m.params[l.frames_w + std::size_t(j) * kNumFrames + std::size_t(c)];
                    double y = ex.frames->has(c) ? 1.0 : 0.0;
                    // BCE in softplus form: -y log sigma(v) - (1-y) log(1-sigma(v))
                    res.frames_loss += inv_k * (detail::softplus(v) - y * v);
                    double sig = 1.0 / (1.0 + std::exp(-v));
                    double dv = inv_k * (sig - y);
                    res.grad[l.frames_b + std::size_t(c)] += dv;
                    for (int j = 0; j < h; ++j) {
                        res.grad[l.frames_w + std::size_t(j) * kNumFrames + std::size_t(c)] +=
                            enc.h_drop[std::size_t(j)] * dv;
                        dh[std::size_t(j)] +=
                            m.params[l.frames_w + std::size_t(j) * kNumFrames + std::size_t(c)] * dv;
                    }
                }
                detail::encoder_backward(l.enc_w, l.enc_b, h, ex.x, in_keep, in_scale,
                                         hid_keep(0), in_scale, enc, dh, res.grad);
            } else {
                for (int c = 0; c < kNumFrames; ++c) {
                    std::size_t base = l.units + std::size_t(c) * l.unit_stride;
                    std::size_t uw = base;
                    std::size_t ub = base + std::size_t(m.features.hash_dim) * std::size_t(h);
                    std::size_t hw = ub + std::size_t(h);
                    std::size_t hb = hw + std::size_t(h);
                    detail::encoder_forward(m.params, uw, ub, h, ex.x, in_keep, in_scale,
                                            hid_keep(std::size_t(1 + c)), in_scale, unit);
                    double v = m.params[hb];
                    for (int j = 0; j < h; ++j)
                        v += unit.h_drop[std::size_t(j)] * m.params[hw + std::size_t(j)];
                    double y = ex.frames->has(c) ? 1.0 : 0.0;
                    res.frames_loss += inv_k * (detail::softplus(v) - y * v);
                    double sig = 1.0 / (1.0 + std::exp(-v));
                    double dv = inv_k * (sig - y);
                    res.grad[hb] += dv;
                    std::vector<double> dh(std::size_t(h), 0.0);
                    for (int j = 0; j < h; ++j) {
                        res.grad[hw + std::size_t(j)] += unit.h_drop[std::size_t(j)] * dv;
                        dh[std::size_t(j)] = m.params[hw + std::size_t(j)] * dv;
                    }
                    detail::encoder_backward(uw, ub, h, ex.x, in_keep, in_scale,
                                             hid_keep(std::size_t(1 + c)), in_scale, unit, dh, res.grad);
                }
            }
        }
    }
    res.loss = res.genre_loss + res.frames_loss;
    return res;
}

// ---------------------------------------------------------------------------
// Training: plain mini-batch gradient descent with decoupled weight decay,
// linear warmup then linear decay, global gradient-norm clipping.
// ---------------------------------------------------------------------------

inline double lr_at_step(const TrainConfig& cfg, int step) {
    const int warmup = int(std::llround(cfg.warmup_ratio * double(cfg.max_steps)));
    double factor;
    if (step < warmup) {
        factor = double(step) / double(warmup);
    } else if (cfg.max_steps == warmup) {
        factor = double(step) / double(std::max(1, cfg.max_steps));
    } else {
        factor = double(cfg.max_steps - step) / double(cfg.max_steps - warmup);
    }
    return cfg.learning_rate * factor;
}

struct TrainLog {
    std::vector<double> step_loss;
    std::vector<double> step_lr;
};

struct NonFiniteLossError : Error {
    using Error::Error;
};

inline MultiTaskModel train(MultiTaskModel model, const std::vector<TrainExample>& data,
                            const TrainConfig& cfg, TrainLog* log = nullptr) {
    cfg.validate();
    if (data.empty()) throw Error("train: empty dataset");
    if (cfg.classwise != model.classwise)
        throw Error("train: classwise flag does not match the model layout");

    // class weights from the genre distribution of the training data; skipped
    // when no article carries a genre label (frames-only training)
    std::optional<LossWeights> weights;
    if (cfg.loss_scaling) {
        std::vector<std::size_t> counts(genre_class_names().size(), 0);
        std::size_t labeled = 0;
        for (const auto& ex : data)
            if (ex.genre) {
                counts[std::size_t(*ex.genre)]++;
                ++labeled;
            }
        if (labeled > 0) weights = compute_class_weights(counts, cfg.loss_scale_threshold);
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t cursor = 0;

    const ParamLayout l = model.layout();
    const std::size_t n_encoders = model.classwise ? std::size_t(1 + kNumFrames) : 1;

    for (int step = 0; step < cfg.max_steps; ++step) {
        std::vector<TrainExample> batch;
        std::vector<std::string> batch_ids;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(data[order[cursor]]);
            batch_ids.push_back(batch.back().id);
            ++cursor;
        }

        DropoutPlan plan;
        DropoutPlan* plan_ptr = nullptr;
        if (cfg.dropout > 0.0) {
            plan.rate = cfg.dropout;
            plan.input_keep.resize(batch.size());
            plan.hidden_keep.resize(batch.size());
            for (std::size_t bi = 0; bi < batch.size(); ++bi) {
                plan.input_keep[bi].resize(batch[bi].x.entries.size());
                for (auto& k : plan.input_keep[bi]) k = rng.next_double() >= cfg.dropout;
                plan.hidden_keep[bi].resize(n_encoders);
                for (auto& mask : plan.hidden_keep[bi]) {
                    mask.resize(std::size_t(model.hidden_dim));
                    for (auto& k : mask) k = rng.next_double() >= cfg.dropout;
                }
            }
            plan_ptr = &plan;
        }

        LossResult r = multitask_loss(model, batch, weights ? &*weights : nullptr, plan_ptr);
        if (!std::isfinite(r.loss)) {
            std::string ids;
            for (std::size_t i = 0; i < batch_ids.size(); ++i) {
                if (i) ids += ",";
                ids += batch_ids[i];
            }
            throw NonFiniteLossError("train: non-finite loss at step " + std::to_string(step) +
                                     " (batch ids: " + ids + ")");
        }

        double norm_sq = 0.0;
        for (double g : r.grad) norm_sq += g * g;
        double norm = std::sqrt(norm_sq);
        double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

        const double lr = lr_at_step(cfg, step);
        const double decay = 1.0 - lr * cfg.weight_decay;
        for (std::size_t i = 0; i < l.total; ++i)
            model.params[i] = model.params[i] * decay - lr * scale * r.grad[i];

        if (log) {
            log->step_loss.push_back(r.loss);
            log->step_lr.push_back(lr);
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Inference (dropout disabled)
// ---------------------------------------------------------------------------

inline std::vector<double> predict_genre_proba(const MultiTaskModel& m, const FeatureVector& x) {
    const ParamLayout l = m.layout();
    detail::EncoderScratch enc;
    detail::encoder_forward(m.params, l.enc_w, l.enc_b, m.hidden_dim, x, nullptr, 1.0, nullptr, 1.0, enc);
    double logits[3];
    for (int c = 0; c < 3; ++c) {
        double u = m.params[l.genre_b + std::size_t(c)];
        for (int j = 0; j < m.hidden_dim; ++j)
            u += enc.h_drop[std::size_t(j)] * m.params[l.genre_w + std::size_t(j) * 3 + std::size_t(c)];
        logits[c] = u;
    }
    double mx = std::max({logits[0], logits[1], logits[2]});
    double Z = 0.0;
    for (int c = 0; c < 3; ++c) Z += std::exp(logits[c] - mx);
    return {std::exp(logits[0] - mx) / Z, std::exp(logits[1] - mx) / Z, std::exp(logits[2] - mx) / Z};
}

inline std::vector<double> predict_frames_proba(const MultiTaskModel& m, const FeatureVector& x) {
    const ParamLayout l = m.layout();
    detail::EncoderScratch enc;
    std::vector<double> out(kNumFrames);
    if (!m.classwise) {
        detail::encoder_forward(m.params, l.enc_w, l.enc_b, m.hidden_dim, x, nullptr, 1.0, nullptr, 1.0, enc);
        for (int c = 0; c < kNumFrames; ++c) {
            double v = m.params[l.frames_b + std::size_t(c)];
            for (int j = 0; j < m.hidden_dim; ++j)
                v += enc.h_drop[std::size_t(j)] *
                     m.params[l.frames_w + std::size_t(j) * kNumFrames + std::size_t(c)];
            out[std::size_t(c)] = 1.0 / (1.0 + std::exp(-v));
        }
    } else {
        for (int c = 0; c < kNumFrames; ++c) {
            std::size_t base = l.units + std::size_t(c) * l.unit_stride;
            std::size_t uw = base;
            std::size_t ub = base + std::size_t(m.features.hash_dim) * std::size_t(m.hidden_dim);
            std::size_t hw = ub + std::size_t(m.hidden_dim);
            std::size_t hb = hw + std::size_t(m.hidden_dim);
            detail::encoder_forward(m.params, uw, ub, m.hidden_dim, x, nullptr, 1.0, nullptr, 1.0, enc);
            double v = m.params[hb];
            for (int j = 0; j < m.hidden_dim; ++j)
                v += enc.h_drop[std::size_t(j)] * m.params[hw + std::size_t(j)];
            out[std::size_t(c)] = 1.0 / (1.0 + std::exp(-v));
        }
    }
    return out;
}

// Row order matches input order; ids are carried along.
inline ScoreRows predict_proba(const MultiTaskModel& m, const Dataset& articles, Task task) {
    ScoreRows rows;
    rows.reserve(articles.size());
    for (const auto& a : articles.articles) {
        FeatureVector x = featurize_text(a.text, m.features);
        rows.emplace_back(a.id, task == Task::genre ? predict_genre_proba(m, x)
                                                    : predict_frames_proba(m, x));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container with the feature config, label
// spaces, the producing train config and all weights, bit-exact round trip.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += char((v >> (8 * i)) & 0xff);
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out += char((v >> (8 * i)) & 0xff);
}
inline void put_str(std::string& out, const std::string& s) {
    put_u32(out, std::uint32_t(s.size()));
    out += s;
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::uint32_t u32() {
        if (pos + 4 > buf.size()) throw Error("checkpoint truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t((unsigned char)buf[pos + std::size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        if (pos + 8 > buf.size()) throw Error("checkpoint truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t((unsigned char)buf[pos + std::size_t(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        if (pos + n > buf.size()) throw Error("checkpoint truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[] = "FRAMELAB-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;
// feature hash identity; a checkpoint is only valid with the hash it names
inline constexpr char kFeatureHashName[] = "fnv1a64";

inline std::string serialize_checkpoint(const MultiTaskModel& m, const TrainConfig& producing_cfg) {
    std::string out;
    out += kCheckpointMagic;
    detail::put_u32(out, kCheckpointVersion);
    detail::put_str(out, kFeatureHashName);
    detail::put_u32(out, std::uint32_t(m.features.hash_dim));
    detail::put_u32(out, std::uint32_t(m.features.word_ngrams.min_n));
    detail::put_u32(out, std::uint32_t(m.features.word_ngrams.max_n));
    detail::put_u32(out, std::uint32_t(m.features.char_ngrams.min_n));
    detail::put_u32(out, std::uint32_t(m.features.char_ngrams.max_n));
    detail::put_u32(out, std::uint32_t(m.features.max_tokens));
    detail::put_u32(out, std::uint32_t(m.features.weighting));
    detail::put_u32(out, std::uint32_t(m.hidden_dim));
    detail::put_u32(out, m.classwise ? 1 : 0);
    detail::put_u32(out, std::uint32_t(genre_class_names().size()));
    for (const auto& n : genre_class_names()) detail::put_str(out, n);
    detail::put_u32(out, std::uint32_t(frame_class_names().size()));
    for (const auto& n : frame_class_names()) detail::put_str(out, n);
    detail::put_str(out, serialize_train_config(producing_cfg));
    detail::put_u64(out, m.params.size());
    for (double p : m.params) detail::put_u64(out, std::bit_cast<std::uint64_t>(p));
    return out;
}

struct Checkpoint {
    MultiTaskModel model;
    TrainConfig train_config;
};

inline Checkpoint parse_checkpoint(const std::string& buf) {
    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (buf.size() < magic_len || buf.compare(0, magic_len, kCheckpointMagic) != 0)
        throw Error("not a checkpoint file");
    detail::Reader r{buf, magic_len};
    if (r.u32() != kCheckpointVersion) throw Error("unsupported checkpoint version");
    if (r.str() != kFeatureHashName) throw Error("checkpoint uses an unknown feature hash");
    Checkpoint ck;
    ck.model.features.hash_dim = int(r.u32());
    ck.model.features.word_ngrams.min_n = int(r.u32());
    ck.model.features.word_ngrams.max_n = int(r.u32());
    ck.model.features.char_ngrams.min_n = int(r.u32());
    ck.model.features.char_ngrams.max_n = int(r.u32());
    ck.model.features.max_tokens = int(r.u32());
    ck.model.features.weighting = Weighting(r.u32());
    ck.model.hidden_dim = int(r.u32());
    ck.model.classwise = r.u32() != 0;
    std::uint32_t ng = r.u32();
    for (std::uint32_t i = 0; i < ng; ++i)
        if (r.str() != genre_class_names()[i]) throw Error("checkpoint genre label space mismatch");
    std::uint32_t nf = r.u32();
    for (std::uint32_t i = 0; i < nf; ++i)
        if (r.str() != frame_class_names()[i]) throw Error("checkpoint frame label space mismatch");
    ck.train_config = parse_train_config(r.str());
    std::uint64_t n = r.u64();
    ck.model.params.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) ck.model.params[i] = std::bit_cast<double>(r.u64());
    if (ck.model.params.size() != ck.model.layout().total)
        throw Error("checkpoint parameter count does not match its layout");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const MultiTaskModel& m,
                            const TrainConfig& cfg) {
    write_text_file(path, serialize_checkpoint(m, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_text_file(path));
}

}  // namespace framelab
