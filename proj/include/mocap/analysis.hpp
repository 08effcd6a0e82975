#pragma once

// Summary-vector clustering: K-means++ seeding, diagonal-covariance GMM fit by
// EM on 90% of the points, K chosen by the mean log-likelihood of the other 10%.
// Points are rows of an N x D matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocap/multidec.hpp"
#include "mocap/trainer.hpp"

namespace mocap::analysis {

using nn::Index;
using nn::Matrix;

inline constexpr double kCovarianceFloor = 1e-6;

struct EmbeddingSet {
    Matrix vectors; // N x D
    std::vector<std::string> ids;
    std::vector<std::optional<int>> labels;

    Index size() const { return vectors.rows(); }
    void validate() const {
        if (static_cast<std::size_t>(vectors.rows()) != ids.size() || ids.size() != labels.size())
            throw Error(ErrorCode::ShapeMismatch, "embedding set fields are not aligned");
        if (!vectors.allFinite()) throw Error(ErrorCode::InvalidFile, "embedding set holds non-finite values");
    }
};

inline EmbeddingSet extract_embeddings(const multidec::MultiDecModel& model, const std::vector<MotionSequence>& seqs,
                                       int threads = 1) {
    EmbeddingSet out;
    out.vectors.resize(static_cast<Index>(seqs.size()), model.dims().summary);
    std::vector<Eigen::VectorXd> rows(seqs.size());
    trainer::parallel_for(seqs.size(), threads, [&](std::size_t i) { rows[i] = model.embed(seqs[i].frames); });
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        out.vectors.row(static_cast<Index>(i)) = rows[i].transpose();
        out.ids.push_back(seqs[i].id);
        out.labels.push_back(seqs[i].label);
    }
    return out;
}

// D^2 seeding. Returns K x D.
inline Matrix kmeans_pp_init(const Matrix& x, int k, std::mt19937_64& rng) {
    const Index n = x.rows();
    if (k < 1) throw Error(ErrorCode::ConfigInvalid, "K must be >= 1");
    if (k > n) throw Error(ErrorCode::KTooLarge, "K=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    Matrix centers(k, x.cols());
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    std::uniform_int_distribution<Index> first(0, n - 1);
    Index pick = first(rng);
    Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0;
            for (Index i = 0; i < n; ++i)
                if (!taken[static_cast<std::size_t>(i)]) total += d2[i];
            if (total > 0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double r = u(rng);
                pick = -1;
                for (Index i = 0; i < n; ++i) {
                    if (taken[static_cast<std::size_t>(i)] || d2[i] <= 0) continue;
                    pick = i;
                    r -= d2[i];
                    if (r < 0) break;
                }
            } else { // all remaining points coincide with chosen centers
                std::vector<Index> free;
                for (Index i = 0; i < n; ++i)
                    if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
                std::uniform_int_distribution<std::size_t> u(0, free.size() - 1);
                pick = free[u(rng)];
            }
        }
        taken[static_cast<std::size_t>(pick)] = 1;
        centers.row(c) = x.row(pick);
        for (Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - x.row(pick)).squaredNorm());
    }
    return centers;
}

struct GmmModel {
    Matrix means;              // K x D
    Matrix variances;          // K x D
    Eigen::VectorXd weights;   // K

    int k() const { return static_cast<int>(means.rows()); }

    // Per-component log(w_k N(x | mu_k, diag var_k)), N x K.
    Matrix component_log_density(const Matrix& x) const {
        const Index n = x.rows(), d = x.cols();
        Matrix out(n, k());
        for (int c = 0; c < k(); ++c) {
            const Eigen::RowVectorXd inv = variances.row(c).cwiseInverse();
            const double base = std::log(weights[c]) - 0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) +
                                                             variances.row(c).array().log().sum());
            for (Index i = 0; i < n; ++i)
                out(i, c) = base - 0.5 * ((x.row(i) - means.row(c)).array().square() * inv.array()).sum();
        }
        return out;
    }

    // Responsibilities (N x K) and per-point log-likelihood.
    Matrix responsibilities(const Matrix& x, Eigen::VectorXd* point_ll = nullptr) const {
        Matrix r = component_log_density(x);
        if (point_ll) point_ll->resize(x.rows());
        for (Index i = 0; i < r.rows(); ++i) {
            const double m = r.row(i).maxCoeff();
            const double lse = m + std::log((r.row(i).array() - m).exp().sum());
            r.row(i) = (r.row(i).array() - lse).exp();
            r.row(i) /= r.row(i).sum();
            if (point_ll) (*point_ll)[i] = lse;
        }
        return r;
    }

    double mean_log_likelihood(const Matrix& x) const {
        Eigen::VectorXd ll;
        responsibilities(x, &ll);
        return ll.mean();
    }

    std::vector<int> assign(const Matrix& x) const {
        const Matrix r = component_log_density(x);
        std::vector<int> out(static_cast<std::size_t>(x.rows()));
        for (Index i = 0; i < x.rows(); ++i) r.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
        return out;
    }
};

struct EmOptions {
    int max_iter = 200;
    double tol = 1e-7;
};

struct EmResult {
    GmmModel model;
    std::vector<double> log_likelihood; // mean training value before each M-step, then the final one
    std::vector<char> reseeded;         // per M-step: an empty component was reseeded
    int iterations = 0;
};

// EM from given initial means; variances start at the pooled per-dimension variance.
inline EmResult em_gmm(const Matrix& x, const Matrix& init_means, const EmOptions& opt = {}) {
    const Index n = x.rows(), d = x.cols();
    const int k = static_cast<int>(init_means.rows());
    if (n == 0) throw Error(ErrorCode::EmptyInput, "no points to cluster");
    if (k > n) throw Error(ErrorCode::KTooLarge, "more components than points");
    if (init_means.cols() != d) throw Error(ErrorCode::ShapeMismatch, "initial means dimension mismatch");
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::RowVectorXd pooled = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n))
                                          .matrix()
                                          .cwiseMax(kCovarianceFloor);
    EmResult res;
    GmmModel& m = res.model;
    m.means = init_means;
    m.variances = pooled.replicate(k, 1);
    m.weights = Eigen::VectorXd::Constant(k, 1.0 / k);

    Eigen::VectorXd point_ll;
    for (int it = 0;; ++it) {
        const Matrix r = m.responsibilities(x, &point_ll);
        const double ll = point_ll.mean();
        res.log_likelihood.push_back(ll);
        res.iterations = it;
        if (it > 0 && std::abs(ll - res.log_likelihood[res.log_likelihood.size() - 2]) <=
                          opt.tol * std::abs(res.log_likelihood[res.log_likelihood.size() - 2]))
            break;
        if (it == opt.max_iter) break;

        bool reseed = false;
        const Eigen::VectorXd nk = r.colwise().sum().transpose();
        for (int c = 0; c < k; ++c) {
            if (nk[c] < 1e-10) {
                // farthest point from its nearest current mean
                Index far = 0;
                double best = -1;
                for (Index i = 0; i < n; ++i) {
                    double near = std::numeric_limits<double>::infinity();
                    for (int o = 0; o < k; ++o)
                        if (o != c) near = std::min(near, (x.row(i) - m.means.row(o)).squaredNorm());
                    if (near > best) best = near, far = i;
                }
                m.means.row(c) = x.row(far);
                m.variances.row(c) = pooled;
                m.weights[c] = 1.0 / static_cast<double>(n);
                reseed = true;
                continue;
            }
            m.means.row(c) = (r.col(c).transpose() * x) / nk[c];
            m.variances.row(c) = ((r.col(c).transpose() * (x.rowwise() - m.means.row(c)).array().square().matrix()) / nk[c])
                                     .cwiseMax(kCovarianceFloor);
            m.weights[c] = nk[c] / static_cast<double>(n);
        }
        m.weights /= m.weights.sum();
        res.reseeded.push_back(reseed ? 1 : 0);
    }
    return res;
}

// Deterministic 90/10 split of row indices.
struct Split {
    std::vector<Index> train, heldout;
};

inline Split split_rows(Index n, std::uint64_t seed, double heldout_fraction = 0.1) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto h = static_cast<std::size_t>(std::floor(heldout_fraction * static_cast<double>(n)));
    Split s;
    s.heldout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(h));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(h), idx.end());
    return s;
}

inline Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
    return out;
}

struct GmmFit {
    GmmModel model;
    double heldout_log_likelihood = 0;
    double train_log_likelihood = 0;
    EmResult em;
};

struct FitOptions {
    EmOptions em;
    int restarts = 3; // K-means++ seedings; the best training likelihood wins
};

// Fits on `train` with several seeded K-means++ starts and scores on `heldout`.
// An empty held-out set (fewer than 10 points) scores on the training rows.
inline GmmFit fit_gmm_split(const Matrix& train, const Matrix& heldout, int k, std::uint64_t seed, const FitOptions& opt = {}) {
    if (k > train.rows()) throw Error(ErrorCode::KTooLarge, "K=" + std::to_string(k) + " exceeds training points");
    GmmFit best;
    bool have = false;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        std::mt19937_64 rng(trainer::mix_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r)));
        EmResult em = em_gmm(train, kmeans_pp_init(train, k, rng), opt.em);
        const double ll = em.log_likelihood.back();
        if (!have || ll > best.train_log_likelihood) {
            best.model = em.model;
            best.train_log_likelihood = ll;
            best.em = std::move(em);
            have = true;
        }
    }
    best.heldout_log_likelihood = best.model.mean_log_likelihood(heldout.rows() > 0 ? heldout : train);
    return best;
}

inline GmmFit fit_gmm(const Matrix& x, int k, std::uint64_t seed, const FitOptions& opt = {}) {
    const Split s = split_rows(x.rows(), seed);
    return fit_gmm_split(take_rows(x, s.train), take_rows(x, s.heldout), k, seed, opt);
}

struct Selection {
    int best_k = 0;
    GmmFit fit;
    std::vector<std::pair<int, double>> scores; // (K, held-out mean log-likelihood)
};

// One split shared by every K in [k_min, k_max]; K above the training size are skipped.
inline Selection select_k(const Matrix& x, int k_min, int k_max, std::uint64_t seed, const FitOptions& opt = {}) {
    if (k_min < 1 || k_max < k_min) throw Error(ErrorCode::ConfigInvalid, "K range must satisfy 1 <= A <= B");
    if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "no points to cluster");
    const Split s = split_rows(x.rows(), seed);
    const Matrix train = take_rows(x, s.train), held = take_rows(x, s.heldout);
    if (k_min > train.rows()) throw Error(ErrorCode::KTooLarge, "smallest K exceeds training points");
    Selection sel;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= std::min<int>(k_max, static_cast<int>(train.rows())); ++k) {
        GmmFit f = fit_gmm_split(train, held, k, seed, opt);
        sel.scores.emplace_back(k, f.heldout_log_likelihood);
        if (f.heldout_log_likelihood > best) {
            best = f.heldout_log_likelihood;
            sel.best_k = k;
            sel.fit = std::move(f);
        }
    }
    return sel;
}

// ---- export ------------------------------------------------------------------

// First line: {"config_hash", "seed", "count", "dim", "k"}; then one object per
// embedding: {"id", "label" (null when unlabeled), "cluster", "values"}.
inline void export_embeddings(const std::string& path, const EmbeddingSet& set, const std::vector<int>& clusters, int k,
                              const std::string& config_hash, std::uint64_t seed) {
    set.validate();
    if (clusters.size() != set.ids.size()) throw Error(ErrorCode::ShapeMismatch, "cluster assignments not aligned with embeddings");
    for (int c : clusters)
        if (c < 0 || c >= k) throw Error(ErrorCode::ConfigInvalid, "cluster id outside [0, K)");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
    nlohmann::ordered_json head{{"config_hash", config_hash}, {"seed", seed}, {"count", set.size()},
                                {"dim", set.vectors.cols()}, {"k", k}};
    out << head.dump() << '\n';
    for (Index i = 0; i < set.size(); ++i) {
        nlohmann::ordered_json row;
        row["id"] = set.ids[static_cast<std::size_t>(i)];
        const auto& label = set.labels[static_cast<std::size_t>(i)];
        row["label"] = label ? nlohmann::ordered_json(*label) : nlohmann::ordered_json(nullptr);
        row["cluster"] = clusters[static_cast<std::size_t>(i)];
        std::vector<double> v(static_cast<std::size_t>(set.vectors.cols()));
        for (Index j = 0; j < set.vectors.cols(); ++j) v[static_cast<std::size_t>(j)] = set.vectors(i, j);
        row["values"] = v;
        out << row.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path);
}

struct ExportedEmbeddings {
    EmbeddingSet set;
    std::vector<int> clusters;
    int k = 0;
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline ExportedEmbeddings read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::InvalidFile, path + ": missing header line");
    ExportedEmbeddings e;
    try {
        const auto head = nlohmann::json::parse(line);
        e.config_hash = head.at("config_hash").get<std::string>();
        e.seed = head.at("seed").get<std::uint64_t>();
        e.k = head.at("k").get<int>();
        const auto count = head.at("count").get<Index>();
        const auto dim = head.at("dim").get<Index>();
        e.set.vectors.resize(count, dim);
        for (Index i = 0; i < count; ++i) {
            if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedData, path + ": fewer rows than the header states");
            const auto row = nlohmann::json::parse(line);
            e.set.ids.push_back(row.at("id").get<std::string>());
            e.set.labels.push_back(row.at("label").is_null() ? std::nullopt : std::optional<int>(row.at("label").get<int>()));
            e.clusters.push_back(row.at("cluster").get<int>());
            const auto v = row.at("values").get<std::vector<double>>();
            if (static_cast<Index>(v.size()) != dim) throw Error(ErrorCode::InvalidFile, path + ": row width differs from header");
            for (Index j = 0; j < dim; ++j) e.set.vectors(i, j) = v[static_cast<std::size_t>(j)];
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidFile, path + ": " + ex.what());
    }
    return e;
}

} // namespace mocap::analysis
