#pragma once

// Recurrent encoder / multi-decoder classifier.
//
//   frame encoder z()      : x_t -> h^FE_t           (dense tanh stack)
//   frame decoder g()      : h^FE_t -> x^_t          (tied transposes of z, untied biases)
//   frame classifier       : a_f = sum_t (W h^FE_t + b), softmax
//   sequence encoder       : LSTM stack over H^FE, first layer bidirectional
//   summary                : c = tanh(W_sc h^SE_T + b)
//   sequence decoder       : conditional LSTM stack fed its own previous feature
//                            prediction, conditioned on c; frames through g()
//   sequence classifier    : h^C = W c + b, a_seq = W h^C + b, softmax
//
// Losses combine as  l = r l_SC + (1 - r) * mean of the enabled {l_FR, l_SR, l_FC}.

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mocap/error.hpp"
#include "mocap/nn/layers.hpp"

namespace mocap::multidec {

using nn::Index;
using nn::Matrix;
using nn::Tensor;

struct ModelVariant {
    bool frame_recon = false; // i_FR
    bool seq_recon = false;   // i_SR
    bool frame_class = false; // i_FC
    double ratio = 1.0;       // r

    int enabled_count() const { return int(frame_recon) + int(seq_recon) + int(frame_class); }

    // Accepts SC, FR-SC, SRC, FR-SRC and FRC-SRC.
    static ModelVariant named(const std::string& name, double ratio = 0.5) {
        ModelVariant v;
        v.ratio = ratio;
        if (name == "SC") {
            v.ratio = 1.0;
        } else if (name == "FR-SC") {
            v.frame_recon = true;
        } else if (name == "SRC") {
            v.seq_recon = true;
        } else if (name == "FR-SRC") {
            v.frame_recon = v.seq_recon = true;
        } else if (name == "FRC-SRC") {
            v.frame_recon = v.seq_recon = v.frame_class = true;
        } else {
            throw Error(ErrorCode::ConfigInvalid, "unknown variant '" + name + "'");
        }
        v.validate();
        return v;
    }

    std::string name() const {
        if (ratio >= 1.0 || enabled_count() == 0) return "SC";
        if (frame_recon && seq_recon && frame_class) return "FRC-SRC";
        if (frame_recon && seq_recon) return "FR-SRC";
        if (seq_recon && !frame_class) return "SRC";
        if (frame_recon && !frame_class) return "FR-SC";
        return "custom";
    }

    void validate() const {
        if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "ratio r must lie in [0, 1]");
        if (ratio < 1.0 && enabled_count() == 0)
            throw Error(ErrorCode::NoEnabledLoss, "r < 1 needs at least one of FR, SR, FC enabled");
    }

    // Effective coefficients of each part in the total loss.
    struct Weights {
        double sc = 1.0, fr = 0.0, sr = 0.0, fc = 0.0;
    };
    Weights weights() const {
        validate();
        Weights w;
        w.sc = ratio;
        if (ratio >= 1.0) return w;
        const double share = (1.0 - ratio) / enabled_count();
        if (frame_recon) w.fr = share;
        if (seq_recon) w.sr = share;
        if (frame_class) w.fc = share;
        return w;
    }
};

struct LossReport {
    double l_fr = 0.0, l_fc = 0.0, l_sr = 0.0, l_sc = 0.0, total = 0.0;
    bool fr = false, fc = false, sr = false;
};

// r l_SC + (1 - r) * sum(i_m l_m) / sum(i_m); r = 1 gives l_SC.
inline double composite_loss(const ModelVariant& variant, const LossReport& parts) {
    const auto w = variant.weights();
    return w.sc * parts.l_sc + w.fr * parts.l_fr + w.sr * parts.l_sr + w.fc * parts.l_fc;
}

struct ModelDims {
    int frame_dim = 69;
    std::vector<int> frame_encoder{1024, 512};
    std::vector<int> seq_encoder{512, 512, 256};
    int summary = 1024;
    int class_hidden = 512;
    int classes = 65;
    bool bidirectional_first = true;
    bool class_hidden_tanh = false;
    bool reverse_decoder = false;

    int feature_dim() const { return frame_encoder.back(); }

    // One decoder layer per encoder layer, widths mirroring the encoder's outputs.
    std::vector<int> seq_decoder() const {
        std::vector<int> out;
        for (std::size_t l = seq_encoder.size(); l-- > 0;) {
            const int width = (l == 0 && bidirectional_first) ? 2 * seq_encoder[l] : seq_encoder[l];
            out.push_back(width);
        }
        return out;
    }

    void validate() const {
        auto positive = [](int v) { return v > 0; };
        if (frame_dim <= 0 || summary <= 0 || class_hidden <= 0 || classes < 2 || frame_encoder.empty() ||
            seq_encoder.empty() || !std::all_of(frame_encoder.begin(), frame_encoder.end(), positive) ||
            !std::all_of(seq_encoder.begin(), seq_encoder.end(), positive))
            throw Error(ErrorCode::ConfigInvalid, "model dimensions must be positive and classes >= 2");
    }
};

// Differentiable pieces of one forward pass.
struct LossTerms {
    Tensor l_fr, l_fc, l_sr, l_sc, total;
    Tensor seq_logits;
    LossReport report;
};

// Tied-weight frame auto-encoder; shared between the multi-decoder model
// and the generator's past-context encoder.
struct FrameCodec {
    std::vector<nn::Dense> encoder;
    std::vector<Tensor> decoder_bias; // decoder layer j mirrors encoder layer L-1-j

    static FrameCodec create(nn::ParamStore& store, const std::string& prefix, int in, const std::vector<int>& widths,
                             bool with_decoder, std::mt19937_64& rng) {
        FrameCodec f;
        int width_in = in;
        for (std::size_t l = 0; l < widths.size(); ++l) {
            f.encoder.push_back(nn::Dense::create(store, prefix + "_encoder/" + std::to_string(l), width_in, widths[l], rng));
            width_in = widths[l];
        }
        if (with_decoder) {
            for (std::size_t j = 0; j < widths.size(); ++j) {
                const auto& mirrored = f.encoder[widths.size() - 1 - j];
                f.decoder_bias.push_back(store.add(prefix + "_decoder/" + std::to_string(j) + "/b", Matrix::Zero(mirrored.in_dim(), 1)));
            }
        }
        return f;
    }

    // z(): columns are frames.
    Tensor encode(const Tensor& frames) const {
        Tensor h = frames;
        for (const auto& layer : encoder) h = layer(h, nn::Activation::Tanh);
        return h;
    }

    // g(): tanh on hidden layers, linear output layer.
    Tensor decode(const Tensor& features) const {
        Tensor h = features;
        const std::size_t n = encoder.size();
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mirrored = encoder[n - 1 - j];
            h = nn::add(nn::matmul(nn::transpose(mirrored.weight), h), decoder_bias[j]);
            if (j + 1 < n) h = nn::tanh(h);
        }
        return h;
    }
};

class MultiDecModel {
public:
    MultiDecModel(const ModelDims& dims, const ModelVariant& variant, std::mt19937_64& rng) : dims_(dims), variant_(variant) {
        dims_.validate();
        variant_.validate();
        build(rng);
    }

    MultiDecModel(const MultiDecModel&) = delete;
    MultiDecModel& operator=(const MultiDecModel&) = delete;
    MultiDecModel(MultiDecModel&&) = default;
    MultiDecModel& operator=(MultiDecModel&&) = default;

    const ModelDims& dims() const { return dims_; }
    const ModelVariant& variant() const { return variant_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Parameter-name prefixes touched only by one decoder (for gradient audits).
    static std::vector<std::string> private_prefixes_frame_class() { return {"frame_classifier/"}; }
    static std::vector<std::string> private_prefixes_seq_recon() { return {"seq_decoder/", "decoder_feature/"}; }
    // g() biases serve both reconstruction paths.
    static std::vector<std::string> private_prefixes_reconstruction() { return {"frame_decoder/"}; }

    Tensor frame_encode(const Tensor& frames) const { return codec_.encode(frames); }
    Tensor frame_reconstruct(const Tensor& features) const { return codec_.decode(features); }

    // sum_t (W h_t + b) -> K x 1 logits.
    Tensor frame_class_logits(const Tensor& features) const { return nn::sum_cols(frame_classifier_(features)); }

    Tensor sequence_encode(const Tensor& features) const {
        const auto states = seq_encoder_.run(features);
        return summary_(states.back(), nn::Activation::Tanh);
    }

    // Feature predictions h^FE_1..T (feature_dim x T), decoding from c.
    Tensor sequence_decode_features(const Tensor& summary, Index steps) const {
        if (steps < 1) throw Error(ErrorCode::EmptySequence, "decode length must be >= 1");
        const Tensor conditioning = nn::add(nn::matmul(decoder_condition_, summary), decoder_layers_[0].bias);
        std::vector<nn::LstmState> states;
        for (const auto& layer : decoder_layers_) states.push_back(nn::zero_state(layer.hidden()));
        Tensor previous = Tensor::zeros(dims_.feature_dim());
        std::vector<Tensor> predictions;
        predictions.reserve(static_cast<std::size_t>(steps));
        for (Index t = 0; t < steps; ++t) {
            Tensor projected = nn::add(nn::matmul(decoder_layers_[0].w_input, previous), conditioning);
            states[0] = nn::lstm_step_from_projection(decoder_layers_[0], projected, states[0]);
            for (std::size_t l = 1; l < decoder_layers_.size(); ++l) {
                const auto& cell = decoder_layers_[l];
                states[l] = nn::lstm_step_from_projection(
                    cell, nn::add(nn::matmul(cell.w_input, states[l - 1].h), cell.bias), states[l]);
            }
            previous = decoder_feature_(states.back().h, nn::Activation::Tanh);
            predictions.push_back(previous);
        }
        return nn::hstack(predictions);
    }

    Tensor sequence_decode(const Tensor& summary, Index steps) const {
        return codec_.decode(sequence_decode_features(summary, steps));
    }

    Tensor sequence_class_logits(const Tensor& summary) const {
        const Tensor hidden = class_hidden_(summary, dims_.class_hidden_tanh ? nn::Activation::Tanh : nn::Activation::Identity);
        return class_out_(hidden);
    }

    // One sequence (columns are frames). `input` is the possibly corrupted
    // copy fed to the network; `clean` is the reconstruction target. Without
    // a label only reconstruction terms are formed and `total` is their mean.
    LossTerms loss(const Matrix& clean, const Matrix& input, std::optional<int> label) const {
        if (clean.cols() == 0) throw Error(ErrorCode::EmptySequence, "empty sequence");
        if (clean.rows() != dims_.frame_dim || input.rows() != clean.rows() || input.cols() != clean.cols())
            throw Error(ErrorCode::ShapeMismatch, "frame dimension mismatch");
        if (label && (*label < 0 || *label >= dims_.classes))
            throw Error(ErrorCode::ShapeMismatch, "label outside [0, classes)");

        const auto w = variant_.weights();
        const bool labeled = label.has_value();
        const bool want_fr = labeled ? w.fr > 0 : variant_.frame_recon;
        const bool want_sr = labeled ? w.sr > 0 : variant_.seq_recon;
        const bool want_fc = labeled && w.fc > 0;

        const Tensor target(clean);
        const double steps = static_cast<double>(clean.cols());
        const Tensor features = frame_encode(Tensor(input));
        LossTerms out;
        std::vector<Tensor> weighted;

        if (want_fr) {
            out.l_fr = nn::scale(nn::half_squared_error(frame_reconstruct(features), target), 1.0 / steps);
            out.report.l_fr = out.l_fr.item();
            out.report.fr = true;
        }
        if (want_fc) {
            out.l_fc = nn::nll_from_logits(frame_class_logits(features), *label);
            out.report.l_fc = out.l_fc.item();
            out.report.fc = true;
        }
        const bool need_summary = labeled || want_sr;
        Tensor summary;
        if (need_summary) summary = sequence_encode(features);
        if (want_sr) {
            Tensor recon = sequence_decode(summary, clean.cols());
            const Tensor aligned = dims_.reverse_decoder ? Tensor(Matrix(clean.rowwise().reverse())) : target;
            out.l_sr = nn::scale(nn::half_squared_error(recon, aligned), 1.0 / steps);
            out.report.l_sr = out.l_sr.item();
            out.report.sr = true;
        }
        if (labeled) {
            out.seq_logits = sequence_class_logits(summary);
            out.l_sc = nn::nll_from_logits(out.seq_logits, *label);
            out.report.l_sc = out.l_sc.item();
            weighted.push_back(nn::scale(out.l_sc, w.sc));
            if (want_fr) weighted.push_back(nn::scale(out.l_fr, w.fr));
            if (want_sr) weighted.push_back(nn::scale(out.l_sr, w.sr));
            if (want_fc) weighted.push_back(nn::scale(out.l_fc, w.fc));
        } else {
            const int n = int(want_fr) + int(want_sr);
            if (n == 0) throw Error(ErrorCode::NoEnabledLoss, "unlabeled sequence but no reconstruction decoder enabled");
            if (want_fr) weighted.push_back(nn::scale(out.l_fr, 1.0 / n));
            if (want_sr) weighted.push_back(nn::scale(out.l_sr, 1.0 / n));
        }
        out.total = weighted.front();
        for (std::size_t i = 1; i < weighted.size(); ++i) out.total = nn::add(out.total, weighted[i]);
        out.report.total = out.total.item();
        return out;
    }

    // Sequence-classifier probabilities on clean frames.
    Eigen::VectorXd predict(const Matrix& frames) const {
        nn::NoGradGuard guard;
        const Tensor logits = sequence_class_logits(sequence_encode(frame_encode(Tensor(frames))));
        return nn::softmax(logits).value().col(0);
    }

    // Summary vector c(X) on clean frames.
    Eigen::VectorXd embed(const Matrix& frames) const {
        nn::NoGradGuard guard;
        return sequence_encode(frame_encode(Tensor(frames))).value().col(0);
    }

private:
    void build(std::mt19937_64& rng) {
        const int feat = dims_.feature_dim();
        codec_ = FrameCodec::create(params_, "frame", dims_.frame_dim, dims_.frame_encoder, true, rng);
        frame_classifier_ = nn::Dense::create(params_, "frame_classifier", feat, dims_.classes, rng);
        seq_encoder_ = nn::RecurrentStack::create(params_, "seq_encoder", feat, dims_.seq_encoder, dims_.bidirectional_first, rng);
        summary_ = nn::Dense::create(params_, "summary", seq_encoder_.output_dim(), dims_.summary, rng);

        const auto widths = dims_.seq_decoder();
        int width_in = feat;
        for (std::size_t l = 0; l < widths.size(); ++l) {
            decoder_layers_.push_back(
                nn::LstmCellParams::create(params_, "seq_decoder/layer" + std::to_string(l), width_in, widths[l], rng));
            width_in = widths[l];
        }
        decoder_condition_ = params_.add("seq_decoder/W_condition", nn::uniform_fanin(4 * widths[0], dims_.summary, rng));
        decoder_feature_ = nn::Dense::create(params_, "decoder_feature", widths.back(), feat, rng);

        class_hidden_ = nn::Dense::create(params_, "seq_classifier/hidden", dims_.summary, dims_.class_hidden, rng);
        class_out_ = nn::Dense::create(params_, "seq_classifier/out", dims_.class_hidden, dims_.classes, rng);
    }

    ModelDims dims_;
    ModelVariant variant_;
    nn::ParamStore params_;
    FrameCodec codec_;
    nn::Dense frame_classifier_;
    nn::RecurrentStack seq_encoder_;
    nn::Dense summary_;
    std::vector<nn::LstmCellParams> decoder_layers_;
    Tensor decoder_condition_;
    nn::Dense decoder_feature_;
    nn::Dense class_hidden_;
    nn::Dense class_out_;
};

} // namespace mocap::multidec
