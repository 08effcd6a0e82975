#pragma once

// Conditional recurrent transition generator with a bidirectional recurrent
// discriminator and skeleton-statistics constraint losses.
//
//   past encoder    : frame encoder -> recurrent stack (bidirectional first) -> tanh dense -> c_p
//   future encoder  : sigmoid dense stack on the target key-pose -> c_f (same width as c_p)
//   generator       : LSTM stack; W_cond [z; c_p; c_f] joins the first layer's gate
//                     pre-activations at every step. Input at step t is the previous
//                     frame (the last past frame at t = 0); output is a residual,
//                     x_t = x_{t-1} + W h_t + b. Stops once ||x_t - target||^2 < lambda
//                     or after max_len frames.
//   discriminator   : BDLSTM stack over [past | transition | target]; per-frame scalar
//                     activations summed over the transition frames, then sigmoid.
//
// Bone and velocity terms use the frame sequence [last past frame, generated
// frames..., target], which has T+2 consecutive differences for T+1
// generated frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mocap/multidec.hpp"
#include "mocap/nn/checkpoint.hpp"
#include "mocap/sequence.hpp"
#include "mocap/trainer.hpp"

namespace mocap::regan {

using nn::Index;
using nn::Matrix;
using nn::Tensor;

inline constexpr double kVarianceFloor = 1e-8;

struct LossWeights {
    double adv = 1.0, rec = 10.0, bone = 1.0, vel = 1.0;

    bool all_zero() const { return adv == 0 && rec == 0 && bone == 0 && vel == 0; }
    void validate() const {
        if (adv < 0 || rec < 0 || bone < 0 || vel < 0) throw Error(ErrorCode::ConfigInvalid, "loss weights must be >= 0");
        if (all_zero()) throw Error(ErrorCode::AllWeightsZero, "every generator loss weight is zero");
    }
};

// The three ablation regimes, plus the default mix.
inline LossWeights regime(const std::string& name) {
    if (name == "unconstrained") return {1, 0, 0, 0};
    if (name == "reconstructive") return {0, 1, 1, 1};
    if (name == "constrained") return {1, 0, 1, 1};
    if (name == "default") return {};
    throw Error(ErrorCode::ConfigInvalid, "unknown generator regime '" + name + "'");
}

struct GenConfig {
    int frame_dim = 69;
    std::vector<int> past_frame_encoder{64, 32};
    std::vector<int> past_seq_encoder{32, 32};
    int context = 32;     // width of c_p and of every future-encoder layer
    int future_layers = 1;
    int noise_dim = 64;
    std::vector<int> generator{64, 64};
    std::vector<int> discriminator{32, 32};
    double lambda = 0.05;
    int max_len = 45;
    bool literal_density = false; // printed LLB/LLV form instead of the Gaussian log-density

    void validate() const {
        auto positive = [](const std::vector<int>& v) {
            return !v.empty() && std::all_of(v.begin(), v.end(), [](int x) { return x > 0; });
        };
        if (frame_dim <= 0 || frame_dim % 3 != 0) throw Error(ErrorCode::ConfigInvalid, "frame_dim must be a positive multiple of 3");
        if (!positive(past_frame_encoder) || !positive(past_seq_encoder) || !positive(generator) || !positive(discriminator) ||
            context <= 0 || future_layers <= 0 || noise_dim < 0)
            throw Error(ErrorCode::ConfigInvalid, "generator layer sizes must be positive");
        if (!(lambda > 0)) throw Error(ErrorCode::ConfigInvalid, "lambda must be > 0");
        if (max_len < 1) throw Error(ErrorCode::ConfigInvalid, "max_len must be >= 1");
    }
};

struct TransitionSample {
    Matrix past;            // dim x P
    Matrix transition;      // dim x (T+1)
    Eigen::VectorXd target; // frame right after the transition
};

// Cuts (past, transition, target) triples from each sequence every `stride` frames.
inline std::vector<TransitionSample> make_transition_samples(const std::vector<MotionSequence>& seqs, int past_len,
                                                             int trans_len, int stride) {
    if (past_len < 1 || trans_len < 1 || stride < 1) throw Error(ErrorCode::ConfigInvalid, "sample lengths must be >= 1");
    std::vector<TransitionSample> out;
    const int span = past_len + trans_len + 1;
    for (const auto& s : seqs)
        for (int start = 0; start + span <= s.length(); start += stride)
            out.push_back({s.frames.middleCols(start, past_len), s.frames.middleCols(start + past_len, trans_len),
                           s.frames.col(start + past_len + trans_len)});
    return out;
}

// ---- skeleton statistics -----------------------------------------------------

struct Gaussian {
    double mean = 0.0, var = 1.0, weight = 0.5;
};

struct VelocityMixture {
    Gaussian spike, broad;
};

struct MixtureFit {
    VelocityMixture mixture;
    std::vector<double> log_likelihood; // mean per-sample value after each iteration
    int iterations = 0;
};

inline double gaussian_log_density(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (x - mean) * (x - mean) / var;
}

// Two-component 1-D EM. One component starts at 0 with a small variance,
// the other at the sample mean and variance. The narrower result is `spike`.
inline MixtureFit fit_velocity_mixture(const std::vector<double>& xs, int max_iter = 100, double tol = 1e-8) {
    if (xs.empty()) throw Error(ErrorCode::EmptyInput, "no velocity samples");
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = std::max(var / n, kVarianceFloor);

    std::array<Gaussian, 2> c{Gaussian{0.0, std::max(1e-3 * var, kVarianceFloor), 0.5}, Gaussian{mean, var, 0.5}};
    MixtureFit fit;
    std::vector<double> r0(xs.size());
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        double ll = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double a = std::log(c[0].weight) + gaussian_log_density(xs[i], c[0].mean, c[0].var);
            const double b = std::log(c[1].weight) + gaussian_log_density(xs[i], c[1].mean, c[1].var);
            const double m = std::max(a, b);
            const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
            r0[i] = std::exp(a - lse);
            ll += lse;
        }
        ll /= n;
        fit.log_likelihood.push_back(ll);
        fit.iterations = it;
        if (it > 0 && std::abs(ll - prev) <= tol * std::max(1.0, std::abs(prev))) break;
        prev = ll;

        for (int k = 0; k < 2; ++k) {
            double w = 0, s = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double r = k == 0 ? r0[i] : 1.0 - r0[i];
                w += r;
                s += r * xs[i];
            }
            if (w < 1e-12) { // dead component: restart it broad
                c[static_cast<std::size_t>(k)] = Gaussian{mean, var, 1e-6};
                continue;
            }
            const double mu = s / w;
            double v = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double r = k == 0 ? r0[i] : 1.0 - r0[i];
                v += r * (xs[i] - mu) * (xs[i] - mu);
            }
            c[static_cast<std::size_t>(k)] = Gaussian{mu, std::max(v / w, kVarianceFloor), w / n};
        }
        const double total = c[0].weight + c[1].weight;
        c[0].weight /= total;
        c[1].weight /= total;
    }
    if (c[0].var <= c[1].var)
        fit.mixture = {c[0], c[1]};
    else
        fit.mixture = {c[1], c[0]};
    // keep the invariant spike.var < broad.var even for degenerate data
    if (!(fit.mixture.spike.var < fit.mixture.broad.var)) fit.mixture.broad.var = fit.mixture.spike.var * (1.0 + 1e-6) + kVarianceFloor;
    return fit;
}

struct SkeletonStats {
    std::vector<std::pair<int, int>> bones; // marker indices
    Eigen::VectorXd bone_mean, bone_var;   // per bone
    std::vector<VelocityMixture> velocity; // per frame dimension
};

inline Eigen::VectorXd bone_lengths(const Eigen::VectorXd& frame, const std::vector<std::pair<int, int>>& bones) {
    Eigen::VectorXd out(static_cast<Index>(bones.size()));
    for (std::size_t n = 0; n < bones.size(); ++n)
        out[static_cast<Index>(n)] = (frame.segment<3>(3 * bones[n].first) - frame.segment<3>(3 * bones[n].second)).norm();
    return out;
}

inline SkeletonStats fit_skeleton_stats(const std::vector<MotionSequence>& seqs, const std::vector<std::pair<int, int>>& bones,
                                        int em_iterations = 100) {
    if (seqs.empty()) throw Error(ErrorCode::EmptyInput, "no training sequences for skeleton statistics");
    const Index dim = seqs.front().frames.rows();
    for (const auto& [a, b] : bones)
        if (a < 0 || b < 0 || 3 * std::max(a, b) + 3 > dim) throw Error(ErrorCode::ConfigInvalid, "bone index out of range");
    SkeletonStats st;
    st.bones = bones;
    const Index nb = static_cast<Index>(bones.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(nb), sq = Eigen::VectorXd::Zero(nb);
    std::vector<std::vector<double>> vel(static_cast<std::size_t>(dim));
    double count = 0;
    for (const auto& s : seqs) {
        if (s.length() < 2) throw Error(ErrorCode::EmptySequence, "skeleton statistics need >= 2 frames per sequence");
        if (s.frames.rows() != dim) throw Error(ErrorCode::ShapeMismatch, "sequences differ in frame dimension");
        Eigen::VectorXd prev = bone_lengths(s.frames.col(0), bones);
        for (int t = 1; t < s.length(); ++t) {
            const Eigen::VectorXd cur = bone_lengths(s.frames.col(t), bones);
            const Eigen::VectorXd d = cur - prev;
            sum += d;
            sq += d.cwiseAbs2();
            prev = cur;
            count += 1;
            for (Index k = 0; k < dim; ++k) vel[static_cast<std::size_t>(k)].push_back(s.frames(k, t) - s.frames(k, t - 1));
        }
    }
    st.bone_mean = sum / count;
    st.bone_var = (sq / count - st.bone_mean.cwiseAbs2()).cwiseMax(kVarianceFloor);
    for (const auto& xs : vel) st.velocity.push_back(fit_velocity_mixture(xs, em_iterations).mixture);
    return st;
}

inline void put_stats(nn::Checkpoint& ck, const SkeletonStats& st) {
    Matrix bones(static_cast<Index>(st.bones.size()), 2);
    for (std::size_t i = 0; i < st.bones.size(); ++i) bones.row(static_cast<Index>(i)) << st.bones[i].first, st.bones[i].second;
    ck.put("stats/bones", bones);
    ck.put("stats/bone_mean", st.bone_mean);
    ck.put("stats/bone_var", st.bone_var);
    Matrix v(static_cast<Index>(st.velocity.size()), 6);
    for (std::size_t d = 0; d < st.velocity.size(); ++d) {
        const auto& m = st.velocity[d];
        v.row(static_cast<Index>(d)) << m.spike.mean, m.spike.var, m.spike.weight, m.broad.mean, m.broad.var, m.broad.weight;
    }
    ck.put("stats/velocity", v);
}

inline SkeletonStats get_stats(const nn::Checkpoint& ck) {
    SkeletonStats st;
    const Matrix& bones = ck.at("stats/bones");
    for (Index i = 0; i < bones.rows(); ++i) st.bones.emplace_back(static_cast<int>(bones(i, 0)), static_cast<int>(bones(i, 1)));
    st.bone_mean = ck.at("stats/bone_mean");
    st.bone_var = ck.at("stats/bone_var");
    const Matrix& v = ck.at("stats/velocity");
    for (Index d = 0; d < v.rows(); ++d)
        st.velocity.push_back({{v(d, 0), v(d, 1), v(d, 2)}, {v(d, 3), v(d, 4), v(d, 5)}});
    return st;
}

// ---- constraint losses -------------------------------------------------------

// Columns: [anchor, generated..., target].
inline Tensor constraint_track(const Eigen::VectorXd& anchor, const Tensor& generated, const Eigen::VectorXd& target) {
    return nn::hstack({Tensor(Matrix(anchor)), generated, Tensor(Matrix(target))});
}

namespace detail {

// -log density of `x` (rows broadcast per-row statistics) as a tensor;
// `literal` swaps in the printed form, whose residual divides by the mean and
// whose log term has the opposite sign.
inline Tensor negative_log_density(const Tensor& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& var, bool literal) {
    const Index rows = x.rows(), cols = x.cols();
    Matrix inv(rows, cols);
    Matrix log_term(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const double denom = literal ? std::max(std::abs(mean[r]), kVarianceFloor) * (mean[r] < 0 ? -1.0 : 1.0) : var[r];
        inv.row(r).setConstant(1.0 / (2.0 * denom));
        const double lt = 0.5 * std::log(2.0 * M_PI * var[r]);
        log_term.row(r).setConstant(literal ? -lt : lt);
    }
    const Tensor resid = nn::add(x, Tensor(Matrix(-mean)));
    return nn::add(nn::mul(nn::square(resid), Tensor(std::move(inv))), Tensor(std::move(log_term)));
}

} // namespace detail

// Bone-length differences between consecutive columns: N x (M-1).
inline Tensor bone_length_differences(const Tensor& track, const std::vector<std::pair<int, int>>& bones) {
    std::vector<Tensor> rows;
    const Tensor ones = Tensor(Matrix::Ones(1, 3));
    for (const auto& [a, b] : bones) {
        const Tensor d = nn::sub(nn::slice(track, 3 * a, 3), nn::slice(track, 3 * b, 3));
        rows.push_back(nn::sqrt(nn::matmul(ones, nn::square(d))));
    }
    const Tensor len = nn::concat(rows);
    const Index m = track.cols();
    return nn::sub(nn::cols(len, 1, m - 1), nn::cols(len, 0, m - 1));
}

inline Tensor velocities(const Tensor& track) {
    const Index m = track.cols();
    return nn::sub(nn::cols(track, 1, m - 1), nn::cols(track, 0, m - 1));
}

// (1/N)(1/(T+2)) sum -LLB over bones and differences.
inline Tensor loss_bone(const Tensor& track, const SkeletonStats& st, bool literal = false) {
    if (st.bones.empty()) throw Error(ErrorCode::ConfigInvalid, "no bones in skeleton statistics");
    return nn::mean(detail::negative_log_density(bone_length_differences(track, st.bones), st.bone_mean, st.bone_var, literal));
}

// (1/D)(1/(T+2)) sum over (d, t) of min(-LLV_spike, -LLV_broad).
inline Tensor loss_velocity(const Tensor& track, const SkeletonStats& st, bool literal = false) {
    const Index dim = track.rows();
    if (static_cast<Index>(st.velocity.size()) != dim) throw Error(ErrorCode::ShapeMismatch, "velocity statistics dimension mismatch");
    Eigen::VectorXd sm(dim), sv(dim), bm(dim), bv(dim);
    for (Index d = 0; d < dim; ++d) {
        const auto& m = st.velocity[static_cast<std::size_t>(d)];
        sm[d] = m.spike.mean, sv[d] = m.spike.var, bm[d] = m.broad.mean, bv[d] = m.broad.var;
    }
    const Tensor v = velocities(track);
    return nn::mean(nn::minimum(detail::negative_log_density(v, sm, sv, literal), detail::negative_log_density(v, bm, bv, literal)));
}

// Mean of 1/2 ||x^_t - x_t||^2 over the frames both sequences have.
inline Tensor loss_reconstruction(const Tensor& generated, const Matrix& truth) {
    const Index n = std::min(generated.cols(), truth.cols());
    if (n == 0) throw Error(ErrorCode::EmptySequence, "empty transition");
    if (generated.rows() != truth.rows()) throw Error(ErrorCode::ShapeMismatch, "frame dimension mismatch");
    return nn::scale(nn::half_squared_error(nn::cols(generated, 0, n), Tensor(Matrix(truth.leftCols(n)))), 1.0 / static_cast<double>(n));
}

struct AdversarialLosses {
    Tensor l_d, l_g;
};

// From discriminator logits s: D = sigmoid(s).
//   l_D = -[log D(real) + log(1 - D(fake))],  l_G = -log D(fake)
inline AdversarialLosses loss_adversarial(const Tensor& real_logit, const Tensor& fake_logit) {
    AdversarialLosses out;
    out.l_d = nn::scale(nn::add(nn::log_sigmoid(real_logit), nn::log_sigmoid(nn::scale(fake_logit, -1.0))), -1.0);
    out.l_g = nn::scale(nn::log_sigmoid(fake_logit), -1.0);
    return out;
}

struct GeneratorParts {
    Tensor l_g, l_rec, l_bone, l_vel; // undefined when not computed
};

inline Tensor total_generator_loss(const GeneratorParts& p, const LossWeights& w) {
    w.validate();
    std::vector<Tensor> terms;
    auto take = [&](double weight, const Tensor& t, const char* name) {
        if (weight == 0) return;
        if (!t.defined()) throw Error(ErrorCode::ConfigInvalid, std::string("loss part ") + name + " has a weight but was not computed");
        terms.push_back(nn::scale(t, weight));
    };
    take(w.adv, p.l_g, "l_G");
    take(w.rec, p.l_rec, "l_rec");
    take(w.bone, p.l_bone, "l_bone");
    take(w.vel, p.l_vel, "l_vel");
    Tensor total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
    return total;
}

// ---- model -------------------------------------------------------------------

struct Generation {
    Tensor frames;     // dim x L
    int length = 0;
    bool reached = false; // stopped on the distance criterion
    std::vector<double> distances; // ||x_t - target||^2 per emitted frame
};

class Regan {
public:
    Regan(const GenConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        cfg_.validate();
        build(rng);
    }
    Regan(const Regan&) = delete;
    Regan& operator=(const Regan&) = delete;
    Regan(Regan&&) = default;
    Regan& operator=(Regan&&) = default;

    const GenConfig& config() const { return cfg_; }
    GenConfig& mutable_config() { return cfg_; }
    nn::ParamStore& generator_params() { return gen_; }
    const nn::ParamStore& generator_params() const { return gen_; }
    nn::ParamStore& discriminator_params() { return disc_; }
    const nn::ParamStore& discriminator_params() const { return disc_; }

    Tensor encode_past(const Matrix& past) const {
        if (past.cols() == 0) throw Error(ErrorCode::EmptySequence, "empty past context");
        const auto states = past_seq_.run(past_frames_.encode(Tensor(past)));
        return past_summary_(states.back(), nn::Activation::Tanh);
    }

    Tensor encode_future(const Eigen::VectorXd& target) const {
        if (target.size() != cfg_.frame_dim) throw Error(ErrorCode::ShapeMismatch, "target frame dimension mismatch");
        Tensor h{Matrix(target)};
        for (const auto& layer : future_) h = layer(h, nn::Activation::Sigmoid);
        return h;
    }

    // Rolls the generator from `anchor` (last past frame) toward `target`.
    Generation generate_transition(const Tensor& c_p, const Tensor& c_f, const Tensor& z, const Eigen::VectorXd& anchor,
                                   const Eigen::VectorXd& target) const {
        if (z.rows() != cfg_.noise_dim) throw Error(ErrorCode::ShapeMismatch, "noise dimension mismatch");
        const std::vector<Tensor> parts = cfg_.noise_dim > 0 ? std::vector<Tensor>{z, c_p, c_f} : std::vector<Tensor>{c_p, c_f};
        const Tensor conditioning = nn::add(nn::matmul(condition_, nn::concat(parts)), cells_[0].bias);

        std::vector<nn::LstmState> states;
        for (const auto& cell : cells_) states.push_back(nn::zero_state(cell.hidden()));
        Tensor previous{Matrix(anchor)};
        Generation g;
        std::vector<Tensor> frames;
        for (int t = 0; t < cfg_.max_len; ++t) {
            states[0] = nn::lstm_step_from_projection(cells_[0], nn::add(nn::matmul(cells_[0].w_input, previous), conditioning), states[0]);
            for (std::size_t l = 1; l < cells_.size(); ++l)
                states[l] = nn::lstm_step_from_projection(
                    cells_[l], nn::add(nn::matmul(cells_[l].w_input, states[l - 1].h), cells_[l].bias), states[l]);
            previous = nn::add(previous, output_(states.back().h));
            frames.push_back(previous);
            const double dist = (previous.value().col(0) - target).squaredNorm();
            g.distances.push_back(dist);
            if (dist < cfg_.lambda) {
                g.reached = true;
                break;
            }
        }
        g.frames = nn::hstack(frames);
        g.length = static_cast<int>(frames.size());
        return g;
    }

    Generation generate(const Matrix& past, const Eigen::VectorXd& target, const Eigen::VectorXd& z) const {
        return generate_transition(encode_past(past), encode_future(target), Tensor(Matrix(z)), past.col(past.cols() - 1), target);
    }

    Eigen::VectorXd sample_noise(std::mt19937_64& rng) const {
        std::normal_distribution<double> n(0.0, 1.0);
        Eigen::VectorXd z(cfg_.noise_dim);
        for (Index i = 0; i < z.size(); ++i) z[i] = n(rng);
        return z;
    }

    // Per-frame activations a_t over [past | transition | target] (1 x total).
    Tensor discriminator_activations(const Matrix& past, const Tensor& transition, const Eigen::VectorXd& target) const {
        std::vector<Tensor> seq;
        for (Index t = 0; t < past.cols(); ++t) seq.emplace_back(Matrix(past.col(t)));
        for (Index t = 0; t < transition.cols(); ++t) seq.push_back(nn::col(transition, t));
        seq.emplace_back(Matrix(target));
        for (std::size_t l = 0; l < disc_fwd_.size(); ++l) seq = nn::bdlstm_layer(disc_fwd_[l], disc_bwd_[l], seq);
        return disc_out_(nn::hstack(seq));
    }

    // Sum of the transition frames' activations.
    Tensor discriminator_logit(const Matrix& past, const Tensor& transition, const Eigen::VectorXd& target) const {
        return nn::sum(nn::cols(discriminator_activations(past, transition, target), past.cols(), transition.cols()));
    }

    double discriminate(const Matrix& past, const Matrix& transition, const Eigen::VectorXd& target) const {
        nn::NoGradGuard guard;
        return nn::sigmoid(discriminator_logit(past, Tensor(transition), target)).item();
    }

    nn::Checkpoint checkpoint(const std::string& hash) const {
        nn::Checkpoint ck;
        ck.config_hash = hash;
        ck.put_params(gen_, "generator/");
        ck.put_params(disc_, "discriminator/");
        return ck;
    }
    void restore(const nn::Checkpoint& ck) {
        ck.restore_params(gen_, "generator/");
        ck.restore_params(disc_, "discriminator/");
    }

private:
    void build(std::mt19937_64& rng) {
        past_frames_ = multidec::FrameCodec::create(gen_, "past_frame", cfg_.frame_dim, cfg_.past_frame_encoder, false, rng);
        past_seq_ = nn::RecurrentStack::create(gen_, "past_seq", cfg_.past_frame_encoder.back(), cfg_.past_seq_encoder, true, rng);
        past_summary_ = nn::Dense::create(gen_, "past_summary", past_seq_.output_dim(), cfg_.context, rng);
        int in = cfg_.frame_dim;
        for (int l = 0; l < cfg_.future_layers; ++l) {
            future_.push_back(nn::Dense::create(gen_, "future/" + std::to_string(l), in, cfg_.context, rng));
            in = cfg_.context;
        }
        in = cfg_.frame_dim;
        for (std::size_t l = 0; l < cfg_.generator.size(); ++l) {
            cells_.push_back(nn::LstmCellParams::create(gen_, "generator/layer" + std::to_string(l), in, cfg_.generator[l], rng));
            in = cfg_.generator[l];
        }
        condition_ = gen_.add("generator/W_condition",
                              nn::uniform_fanin(4 * cfg_.generator[0], cfg_.noise_dim + 2 * cfg_.context, rng));
        output_ = nn::Dense::create(gen_, "generator/output", cfg_.generator.back(), cfg_.frame_dim, rng);

        in = cfg_.frame_dim;
        for (std::size_t l = 0; l < cfg_.discriminator.size(); ++l) {
            const std::string p = "disc/layer" + std::to_string(l);
            disc_fwd_.push_back(nn::LstmCellParams::create(disc_, p + "/fwd", in, cfg_.discriminator[l], rng));
            disc_bwd_.push_back(nn::LstmCellParams::create(disc_, p + "/bwd", in, cfg_.discriminator[l], rng));
            in = 2 * cfg_.discriminator[l];
        }
        disc_out_ = nn::Dense::create(disc_, "disc/output", in, 1, rng);
    }

    GenConfig cfg_;
    nn::ParamStore gen_, disc_;
    multidec::FrameCodec past_frames_;
    nn::RecurrentStack past_seq_;
    nn::Dense past_summary_;
    std::vector<nn::Dense> future_;
    std::vector<nn::LstmCellParams> cells_;
    Tensor condition_;
    nn::Dense output_;
    std::vector<nn::LstmCellParams> disc_fwd_, disc_bwd_;
    nn::Dense disc_out_;
};

// Generator-side loss parts for one sample and one generation.
inline GeneratorParts generator_parts(const Regan& model, const TransitionSample& s, const Generation& g,
                                      const SkeletonStats& st, const LossWeights& w) {
    GeneratorParts p;
    const bool literal = model.config().literal_density;
    if (w.adv > 0) p.l_g = loss_adversarial(Tensor(Matrix::Zero(1, 1)), model.discriminator_logit(s.past, g.frames, s.target)).l_g;
    if (w.rec > 0) p.l_rec = loss_reconstruction(g.frames, s.transition);
    if (w.bone > 0 || w.vel > 0) {
        const Tensor track = constraint_track(s.past.col(s.past.cols() - 1), g.frames, s.target);
        if (w.bone > 0) p.l_bone = loss_bone(track, st, literal);
        if (w.vel > 0) p.l_vel = loss_velocity(track, st, literal);
    }
    return p;
}

// ---- alternating training ----------------------------------------------------

struct GanTrainConfig {
    int steps = 200;
    int batch = 8;
    double lr_generator = 0.01;
    double lr_discriminator = 0.01;
    double momentum = 0.9;
    double clip_norm = 5.0;
};

struct GanStep {
    int step = 0;
    double l_d = 0, l_g = 0, l_rec = 0, l_bone = 0, l_vel = 0, d_real = 0, d_fake = 0, mean_length = 0;
};

// One discriminator update on (real, detached fake) pairs, then one generator
// update on the weighted generator loss. The discriminator is only trained
// when the adversarial term is in use.
inline std::vector<GanStep> train_regan(Regan& model, const std::vector<TransitionSample>& samples, const SkeletonStats& stats,
                                        const LossWeights& weights, const GanTrainConfig& cfg, std::uint64_t seed) {
    weights.validate();
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no transition samples");
    trainer::MomentumSgd opt_g(cfg.momentum), opt_d(cfg.momentum);
    std::vector<GanStep> history;
    for (int step = 0; step < cfg.steps; ++step) {
        std::mt19937_64 rng(trainer::mix_seed(seed, 7, static_cast<std::uint64_t>(step)));
        std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
        std::vector<const TransitionSample*> batch;
        std::vector<Eigen::VectorXd> noise;
        for (int b = 0; b < cfg.batch; ++b) {
            batch.push_back(&samples[pick(rng)]);
            noise.push_back(model.sample_noise(rng));
        }
        GanStep rec;
        rec.step = step;
        const double inv = 1.0 / static_cast<double>(batch.size());

        if (weights.adv > 0) {
            std::vector<Tensor> terms;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const auto& s = *batch[b];
                Matrix fake;
                {
                    nn::NoGradGuard guard;
                    fake = model.generate(s.past, s.target, noise[b]).frames.value();
                }
                const Tensor real_logit = model.discriminator_logit(s.past, Tensor(s.transition), s.target);
                const Tensor fake_logit = model.discriminator_logit(s.past, Tensor(fake), s.target);
                terms.push_back(loss_adversarial(real_logit, fake_logit).l_d);
                rec.d_real += inv / (1.0 + std::exp(-real_logit.item()));
                rec.d_fake += inv / (1.0 + std::exp(-fake_logit.item()));
            }
            Tensor l_d = terms.front();
            for (std::size_t i = 1; i < terms.size(); ++i) l_d = nn::add(l_d, terms[i]);
            l_d = nn::scale(l_d, inv);
            model.discriminator_params().zero_grad();
            nn::backward(l_d);
            if (cfg.clip_norm > 0) trainer::clip_gradients(model.discriminator_params(), cfg.clip_norm);
            opt_d.step(model.discriminator_params(), cfg.lr_discriminator);
            rec.l_d = l_d.item();
        }

        std::vector<Tensor> totals;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& s = *batch[b];
            const Generation g = model.generate(s.past, s.target, noise[b]);
            const GeneratorParts p = generator_parts(model, s, g, stats, weights);
            totals.push_back(total_generator_loss(p, weights));
            if (p.l_g.defined()) rec.l_g += inv * p.l_g.item();
            if (p.l_rec.defined()) rec.l_rec += inv * p.l_rec.item();
            if (p.l_bone.defined()) rec.l_bone += inv * p.l_bone.item();
            if (p.l_vel.defined()) rec.l_vel += inv * p.l_vel.item();
            rec.mean_length += inv * g.length;
        }
        Tensor total = totals.front();
        for (std::size_t i = 1; i < totals.size(); ++i) total = nn::add(total, totals[i]);
        total = nn::scale(total, inv);
        model.generator_params().zero_grad();
        model.discriminator_params().zero_grad();
        nn::backward(total);
        if (cfg.clip_norm > 0) trainer::clip_gradients(model.generator_params(), cfg.clip_norm);
        opt_g.step(model.generator_params(), cfg.lr_generator);
        model.discriminator_params().zero_grad();
        history.push_back(rec);
    }
    return history;
}

} // namespace mocap::regan
