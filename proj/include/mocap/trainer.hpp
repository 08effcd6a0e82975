#pragma once

// Heavy-ball SGD, the halving learning-rate schedule, early stopping, the
// two-phase protocol and majority-vote window evaluation for MultiDecModel.
//
// Everything random in an epoch (batch order, corruption noise) comes from a
// generator seeded by (seed, phase, epoch), so a run resumed from an epoch
// checkpoint continues exactly as the uninterrupted run would.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mocap/multidec.hpp"
#include "mocap/nn/checkpoint.hpp"
#include "mocap/preprocess.hpp"
#include "mocap/sequence.hpp"

namespace mocap::trainer {

using nn::Index;
using nn::Matrix;
using nn::Tensor;

struct TrainConfig {
    double lr0 = 0.04;
    int lr_halving_patience = 3;
    double lr_floor = 1e-4;
    double momentum = 0.9;
    int early_stop_patience = 25;
    int batch_labeled = 8;
    int batch_mixed = 32;
    double unlabeled_scale = 0.0; // 0: frame-count ratio from the data
    double clip_norm = 5.0;       // <= 0 disables clipping
    int max_epochs = 100;
    int threads = 1;              // evaluation workers

    void validate() const {
        if (!(lr0 > 0 && lr_floor > 0 && momentum >= 0 && momentum < 1 && lr_halving_patience > 0 &&
              early_stop_patience > 0 && batch_labeled > 0 && batch_mixed > 0 && unlabeled_scale >= 0 && max_epochs > 0 &&
              threads > 0))
            throw Error(ErrorCode::ConfigInvalid, "training parameters must be positive (momentum in [0, 1))");
    }
};

// ---- optimizer ---------------------------------------------------------------

// v <- momentum v - lr g;  p <- p + v
inline void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
        throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from parameter");
    if (!grad.allFinite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient");
    if (velocity.size() == 0) velocity = Matrix::Zero(param.rows(), param.cols());
    velocity = momentum * velocity - lr * grad;
    param += velocity;
}

inline double gradient_norm(const nn::ParamStore& params) {
    double sq = 0.0;
    for (const auto& [name, t] : params.entries())
        if (t.has_grad()) sq += t.node()->grad.squaredNorm();
    return std::sqrt(sq);
}

// Rescales all gradients so their global norm is at most `max_norm`.
inline double clip_gradients(nn::ParamStore& params, double max_norm) {
    const double norm = gradient_norm(params);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, t] : params.entries())
            if (t.has_grad()) t.node()->grad *= s;
    }
    return norm;
}

class MomentumSgd {
public:
    explicit MomentumSgd(double momentum = 0.9) : momentum_(momentum) {}

    // Checks every gradient before touching any parameter.
    void step(nn::ParamStore& params, double lr) {
        auto& entries = params.entries();
        if (velocity_.size() != entries.size()) velocity_.assign(entries.size(), Matrix());
        for (const auto& [name, t] : entries)
            if (t.has_grad() && !t.node()->grad.allFinite())
                throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in " + name);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto& t = entries[i].second;
            sgd_step(t.mutable_value(), t.grad(), velocity_[i], lr, momentum_);
        }
    }

    std::vector<Matrix>& velocity() { return velocity_; }
    const std::vector<Matrix>& velocity() const { return velocity_; }

private:
    double momentum_;
    std::vector<Matrix> velocity_;
};

// ---- schedules ---------------------------------------------------------------

// Halves lr after `patience` consecutive epochs without a strictly better
// score. A halving that would go below the floor ends training instead.
struct LrSchedule {
    double lr = 0.04;
    int patience = 3;
    double floor = 1e-4;
    double best = -std::numeric_limits<double>::infinity();
    int since_best = 0;
    bool exhausted = false;

    LrSchedule() = default;
    LrSchedule(double lr0, int patience_, double floor_) : lr(lr0), patience(patience_), floor(floor_) {}

    double observe(double score) {
        if (score > best) {
            best = score;
            since_best = 0;
        } else if (++since_best >= patience) {
            since_best = 0;
            if (lr * 0.5 < floor)
                exhausted = true;
            else
                lr *= 0.5;
        }
        return lr;
    }
};

struct EarlyStopping {
    int patience = 25;
    double best = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int since_best = 0;

    // True when `score` is a new best.
    bool observe(double score, int epoch) {
        if (score > best) {
            best = score;
            best_epoch = epoch;
            since_best = 0;
            return true;
        }
        ++since_best;
        return false;
    }
    bool should_stop() const { return since_best >= patience; }
};

inline bool phase_two_reached(double monitored_accuracy, double phase1_train_accuracy) {
    return monitored_accuracy >= phase1_train_accuracy;
}

// ---- losses ------------------------------------------------------------------

// mean(labeled) + mean(unlabeled) / scale
inline Tensor mixed_batch_loss(const std::vector<Tensor>& labeled, const std::vector<Tensor>& unlabeled, double scale) {
    if (!(scale > 0)) throw Error(ErrorCode::ConfigInvalid, "unlabeled scale must be positive");
    if (labeled.empty() && unlabeled.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
    auto mean_of = [](const std::vector<Tensor>& xs) {
        Tensor s = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i) s = nn::add(s, xs[i]);
        return nn::scale(s, 1.0 / static_cast<double>(xs.size()));
    };
    if (unlabeled.empty()) return mean_of(labeled);
    const Tensor u = nn::scale(mean_of(unlabeled), 1.0 / scale);
    return labeled.empty() ? u : nn::add(mean_of(labeled), u);
}

// Ratio of unlabeled to labeled frame counts (1 when either side is empty).
inline double unlabeled_scale(const std::vector<MotionSequence>& labeled, const std::vector<MotionSequence>& unlabeled) {
    double l = 0, u = 0;
    for (const auto& s : labeled) l += s.length();
    for (const auto& s : unlabeled) u += s.length();
    return (l > 0 && u > 0) ? u / l : 1.0;
}

// ---- evaluation --------------------------------------------------------------

// Mode of per-window argmax; ties go to the class with the larger summed
// probability over all windows.
inline int majority_vote(const std::vector<Eigen::VectorXd>& window_probs) {
    if (window_probs.empty()) throw Error(ErrorCode::EmptyInput, "no windows to vote on");
    const Index k = window_probs.front().size();
    std::vector<int> votes(static_cast<std::size_t>(k), 0);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(k);
    for (const auto& p : window_probs) {
        Index best;
        p.maxCoeff(&best);
        ++votes[static_cast<std::size_t>(best)];
        mass += p;
    }
    int winner = 0;
    for (int c = 1; c < k; ++c) {
        const auto vc = votes[static_cast<std::size_t>(c)], vw = votes[static_cast<std::size_t>(winner)];
        if (vc > vw || (vc == vw && mass[c] > mass[winner])) winner = c;
    }
    return winner;
}

struct EvalReport {
    double accuracy = 0.0;
    std::vector<int> predicted;
    std::vector<std::vector<int>> confusion; // [true][predicted]
};

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(threads, static_cast<int>(n))));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline EvalReport evaluate_windows(const multidec::MultiDecModel& model, const std::vector<MotionSequence>& sequences,
                                   int width, int offset, int threads = 1) {
    const int k = model.dims().classes;
    EvalReport report;
    report.predicted.assign(sequences.size(), -1);
    report.confusion.assign(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(k), 0));
    parallel_for(sequences.size(), threads, [&](std::size_t i) {
        const auto batch = sliding_windows(sequences[i], width, offset);
        std::vector<Eigen::VectorXd> probs;
        for (const auto& w : batch.windows) probs.push_back(model.predict(w.frames));
        report.predicted[i] = majority_vote(probs);
    });
    int correct = 0, counted = 0;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        if (!sequences[i].label) continue;
        ++counted;
        const int truth = *sequences[i].label;
        if (truth == report.predicted[i]) ++correct;
        if (truth >= 0 && truth < k) ++report.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(report.predicted[i])];
    }
    report.accuracy = counted ? static_cast<double>(correct) / counted : 0.0;
    return report;
}

// ---- training loop -----------------------------------------------------------

struct Example {
    Matrix frames; // clean
    std::optional<int> label;
};

inline std::vector<Example> make_examples(const std::vector<MotionSequence>& sequences, int width, int offset,
                                          bool keep_labels = true) {
    std::vector<Example> out;
    for (const auto& s : sequences)
        for (auto& w : sliding_windows(s, width, offset).windows)
            out.push_back({std::move(w.frames), keep_labels ? s.label : std::nullopt});
    return out;
}

struct CurveRow {
    int phase = 1;
    int epoch = 0;
    double lr = 0, loss = 0, l_fr = 0, l_fc = 0, l_sr = 0, l_sc = 0, train_acc = 0, valid_acc = 0;

    nlohmann::ordered_json to_json() const {
        return {{"phase", phase}, {"epoch", epoch}, {"lr", lr}, {"loss", loss}, {"l_fr", l_fr}, {"l_fc", l_fc},
                {"l_sr", l_sr}, {"l_sc", l_sc}, {"train_acc", train_acc}, {"valid_acc", valid_acc}};
    }
    Eigen::RowVectorXd pack() const {
        Eigen::RowVectorXd r(10);
        r << phase, epoch, lr, loss, l_fr, l_fc, l_sr, l_sc, train_acc, valid_acc;
        return r;
    }
    static CurveRow unpack(const Eigen::RowVectorXd& r) {
        CurveRow c;
        c.phase = static_cast<int>(r[0]);
        c.epoch = static_cast<int>(r[1]);
        c.lr = r[2], c.loss = r[3], c.l_fr = r[4], c.l_fc = r[5], c.l_sr = r[6], c.l_sc = r[7], c.train_acc = r[8], c.valid_acc = r[9];
        return c;
    }
};

inline std::string curves_to_jsonl(const std::vector<CurveRow>& rows, const std::string& config_hash, std::uint64_t seed) {
    nlohmann::ordered_json header = {{"config_hash", config_hash}, {"seed", seed}};
    std::string out = header.dump() + "\n";
    for (const auto& r : rows) out += r.to_json().dump() + "\n";
    return out;
}

struct TrainData {
    std::vector<MotionSequence> train;     // labeled, preprocessed
    std::vector<MotionSequence> valid;     // labeled, preprocessed
    std::vector<MotionSequence> unlabeled; // optional extra sequences for reconstruction
};

enum class Phase { One = 1, Two = 2 };

struct PhaseOptions {
    Phase phase = Phase::One;
    double phase1_train_accuracy = 0.0; // phase two threshold
    std::uint64_t seed = 0;
    std::string config_hash;
    int window_width = 30;
    int window_offset = 15;
    double noise_sigma = 0.05;
    const nn::Checkpoint* resume = nullptr;
    // Called after every epoch with a resumable checkpoint.
    std::function<void(const nn::Checkpoint&)> on_epoch;
};

struct PhaseResult {
    std::vector<CurveRow> curves;
    nn::Checkpoint best;        // model parameters only
    double best_score = 0.0;    // monitored accuracy at `best`
    int best_epoch = -1;
    int epochs_run = 0;
    double train_accuracy = 0.0; // accuracy on the phase's training sequences at `best`
    std::string stop_reason;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    auto splitmix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

namespace detail {

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

struct LoopState {
    int next_epoch = 0;
    LrSchedule schedule;
    EarlyStopping stopper;
    double best_train_accuracy = 0.0;
    std::vector<CurveRow> curves;
};

inline nn::Checkpoint pack_state(const multidec::MultiDecModel& model, const MomentumSgd& opt, const nn::Checkpoint& best,
                                 const LoopState& s, const std::string& hash) {
    nn::Checkpoint ck;
    ck.config_hash = hash;
    ck.put_params(model.params(), "model/");
    const auto& entries = model.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Matrix& v = i < opt.velocity().size() && opt.velocity()[i].size() ? opt.velocity()[i]
                                                                                 : Matrix(Matrix::Zero(entries[i].second.rows(), entries[i].second.cols()));
        ck.put("velocity/" + entries[i].first, v);
    }
    for (const auto& [name, m] : best.entries) ck.put("best/" + name, m);
    ck.put("state/next_epoch", scalar(s.next_epoch));
    ck.put("state/lr", scalar(s.schedule.lr));
    ck.put("state/lr_best", scalar(s.schedule.best));
    ck.put("state/lr_since", scalar(s.schedule.since_best));
    ck.put("state/lr_exhausted", scalar(s.schedule.exhausted));
    ck.put("state/stop_best", scalar(s.stopper.best));
    ck.put("state/stop_best_epoch", scalar(s.stopper.best_epoch));
    ck.put("state/stop_since", scalar(s.stopper.since_best));
    ck.put("state/best_train_accuracy", scalar(s.best_train_accuracy));
    Matrix rows(static_cast<Index>(s.curves.size()), 10);
    for (std::size_t i = 0; i < s.curves.size(); ++i) rows.row(static_cast<Index>(i)) = s.curves[i].pack();
    ck.put("state/curves", rows);
    return ck;
}

inline void unpack_state(const nn::Checkpoint& ck, multidec::MultiDecModel& model, MomentumSgd& opt, nn::Checkpoint& best,
                         LoopState& s) {
    ck.restore_params(model.params(), "model/");
    opt.velocity().clear();
    for (const auto& [name, t] : model.params().entries()) opt.velocity().push_back(ck.at("velocity/" + name));
    best.entries.clear();
    for (const auto& [name, m] : ck.entries)
        if (name.rfind("best/", 0) == 0) best.put(name.substr(5), m);
    auto get = [&](const std::string& k) { return ck.at("state/" + k)(0, 0); };
    s.next_epoch = static_cast<int>(get("next_epoch"));
    s.schedule.lr = get("lr");
    s.schedule.best = get("lr_best");
    s.schedule.since_best = static_cast<int>(get("lr_since"));
    s.schedule.exhausted = get("lr_exhausted") != 0.0;
    s.stopper.best = get("stop_best");
    s.stopper.best_epoch = static_cast<int>(get("stop_best_epoch"));
    s.stopper.since_best = static_cast<int>(get("stop_since"));
    s.best_train_accuracy = get("best_train_accuracy");
    const Matrix& rows = ck.at("state/curves");
    s.curves.clear();
    for (Index i = 0; i < rows.rows(); ++i) s.curves.push_back(CurveRow::unpack(rows.row(i)));
}

} // namespace detail

// One protocol phase. Phase one early-stops on validation accuracy and
// restores the best parameters. Phase two trains on train+valid and stops as
// soon as accuracy on the original training set reaches the phase-one value.
inline PhaseResult train_phase(multidec::MultiDecModel& model, const TrainData& data, const TrainConfig& cfg,
                               const PhaseOptions& opt) {
    cfg.validate();
    if (data.train.empty()) throw Error(ErrorCode::EmptyInput, "no training sequences");
    const bool two = opt.phase == Phase::Two;

    std::vector<MotionSequence> fit_set = data.train;
    if (two) fit_set.insert(fit_set.end(), data.valid.begin(), data.valid.end());
    // Phase one watches validation (training accuracy when there is no
    // validation set); phase two watches the original training set.
    const std::vector<MotionSequence>& monitor = two ? data.train : (data.valid.empty() ? data.train : data.valid);

    const auto labeled = make_examples(fit_set, opt.window_width, opt.window_offset);
    const auto unlabeled = make_examples(data.unlabeled, opt.window_width, opt.window_offset, false);
    const double u_scale = cfg.unlabeled_scale > 0 ? cfg.unlabeled_scale : unlabeled_scale(fit_set, data.unlabeled);
    if (labeled.empty()) throw Error(ErrorCode::EmptyInput, "no training windows");

    MomentumSgd sgd(cfg.momentum);
    nn::Checkpoint best;
    best.config_hash = opt.config_hash;
    detail::LoopState state;
    state.schedule = LrSchedule(cfg.lr0, cfg.lr_halving_patience, cfg.lr_floor);
    state.stopper.patience = cfg.early_stop_patience;
    if (opt.resume) {
        nn::require_hash(*opt.resume, opt.config_hash);
        detail::unpack_state(*opt.resume, model, sgd, best, state);
    }

    PhaseResult result;
    result.stop_reason = "max_epochs";
    const auto phase_id = static_cast<std::uint64_t>(opt.phase);
    for (int epoch = state.next_epoch; epoch < cfg.max_epochs; ++epoch) {
        std::mt19937_64 rng(mix_seed(opt.seed, phase_id, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(labeled.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::size_t> u_order(unlabeled.size());
        std::iota(u_order.begin(), u_order.end(), 0);
        std::shuffle(u_order.begin(), u_order.end(), rng);

        CurveRow row;
        row.phase = static_cast<int>(opt.phase);
        row.epoch = epoch;
        row.lr = state.schedule.lr;
        int steps = 0, labeled_seen = 0;
        std::size_t u_pos = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_labeled)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_labeled));
            std::vector<Tensor> l_terms, u_terms;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& ex = labeled[order[i]];
                const auto terms = model.loss(ex.frames, corrupt(ex.frames, opt.noise_sigma, rng), ex.label);
                l_terms.push_back(terms.total);
                row.l_fr += terms.report.l_fr;
                row.l_fc += terms.report.l_fc;
                row.l_sr += terms.report.l_sr;
                row.l_sc += terms.report.l_sc;
                ++labeled_seen;
            }
            for (int j = 0; j < cfg.batch_mixed && !unlabeled.empty(); ++j) {
                const auto& ex = unlabeled[u_order[u_pos]];
                u_pos = (u_pos + 1) % unlabeled.size();
                u_terms.push_back(model.loss(ex.frames, corrupt(ex.frames, opt.noise_sigma, rng), std::nullopt).total);
            }
            const Tensor loss = mixed_batch_loss(l_terms, u_terms, u_scale);
            model.params().zero_grad();
            nn::backward(loss);
            if (cfg.clip_norm > 0) clip_gradients(model.params(), cfg.clip_norm);
            sgd.step(model.params(), state.schedule.lr);
            row.loss += loss.item();
            ++steps;
        }
        row.loss /= steps;
        row.l_fr /= labeled_seen;
        row.l_fc /= labeled_seen;
        row.l_sr /= labeled_seen;
        row.l_sc /= labeled_seen;

        row.train_acc = evaluate_windows(model, two ? data.train : fit_set, opt.window_width, opt.window_offset, cfg.threads).accuracy;
        const double monitored = &monitor == &data.train
                                     ? row.train_acc
                                     : evaluate_windows(model, monitor, opt.window_width, opt.window_offset, cfg.threads).accuracy;
        row.valid_acc = data.valid.empty() ? row.train_acc
                      : (&monitor == &data.valid ? monitored
                                                 : evaluate_windows(model, data.valid, opt.window_width, opt.window_offset, cfg.threads).accuracy);
        state.curves.push_back(row);
        state.next_epoch = epoch + 1;

        bool stop = false;
        if (two) {
            best.entries.clear();
            best.put_params(model.params());
            state.stopper.observe(monitored, epoch);
            state.best_train_accuracy = row.train_acc;
            if (phase_two_reached(monitored, opt.phase1_train_accuracy)) {
                result.stop_reason = "reached_phase1_accuracy";
                stop = true;
            }
        } else {
            if (state.stopper.observe(monitored, epoch)) {
                best.entries.clear();
                best.put_params(model.params());
                state.best_train_accuracy = row.train_acc;
            }
            if (state.stopper.should_stop()) {
                result.stop_reason = "early_stopping";
                stop = true;
            }
        }
        state.schedule.observe(monitored);
        if (!stop && state.schedule.exhausted) {
            result.stop_reason = "lr_floor";
            stop = true;
        }
        if (opt.on_epoch) opt.on_epoch(detail::pack_state(model, sgd, best, state, opt.config_hash));
        if (stop) break;
    }

    if (!best.entries.empty()) best.restore_params(model.params());
    result.curves = state.curves;
    result.best = best;
    result.best_score = state.stopper.best;
    result.best_epoch = state.stopper.best_epoch;
    result.epochs_run = state.next_epoch;
    result.train_accuracy = state.best_train_accuracy;
    return result;
}

struct TwoPhaseResult {
    PhaseResult one;
    PhaseResult two;
};

// Phase one on `model`, then a fresh initialization (from `init_seed`) for
// phase two on train+valid. `model` ends holding the phase-two parameters.
inline TwoPhaseResult train_two_phase(multidec::MultiDecModel& model, const TrainData& data, const TrainConfig& cfg,
                                      PhaseOptions opt, std::uint64_t init_seed) {
    TwoPhaseResult r;
    opt.phase = Phase::One;
    r.one = train_phase(model, data, cfg, opt);
    std::mt19937_64 rng(init_seed);
    model = multidec::MultiDecModel(model.dims(), model.variant(), rng);
    opt.phase = Phase::Two;
    opt.phase1_train_accuracy = r.one.train_accuracy;
    opt.resume = nullptr;
    r.two = train_phase(model, data, cfg, opt);
    return r;
}

} // namespace mocap::trainer
