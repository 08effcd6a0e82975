// mocapseq: ingest, preprocess, train, eval, generate, cluster (and synth for
// desk-scale data). Exit codes: 0 success, 2 configuration error, 3 data error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mocap/analysis.hpp"
#include "mocap/c3d.hpp"
#include "mocap/config.hpp"
#include "mocap/dataset.hpp"
#include "mocap/markers.hpp"
#include "mocap/multidec.hpp"
#include "mocap/preprocess.hpp"
#include "mocap/regan.hpp"
#include "mocap/synthetic.hpp"
#include "mocap/trainer.hpp"

namespace fs = std::filesystem;
using namespace mocap;
using ojson = nlohmann::ordered_json;
using nn::Index;
using nn::Matrix;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::AllWeightsZero:
    case ErrorCode::NoEnabledLoss:
    case ErrorCode::KTooLarge:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::UnknownActor:
        return kExitConfig;
    default:
        return kExitData;
    }
}

struct Options {
    std::string config, data, out, checkpoint, variant, k_range, lambda, weights, split, embeddings, task = "classify", resume;
    std::optional<std::uint64_t> seed;
    int count = 8;
    // synth
    int classes = 3;
    std::string actors = "aa,bb,cc,dd,ee";
    double separation = 1.0;
    double fps = 120.0;
};

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigInvalid, what + ": '" + item + "' is not a number");
        }
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::pair<int, int> parse_k_range(const std::string& text) {
    const auto dots = text.find("..");
    try {
        if (dots == std::string::npos) throw std::invalid_argument(text);
        return {std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigInvalid, "--k-range expects A..B, got '" + text + "'");
    }
}

// Config file plus flag overrides. `hash_lambda` is false for generate, whose
// --lambda only changes the stop threshold at generation time.
struct Run {
    RunConfig cfg;
    std::string hash;
    MarkerSet markers;
};

Run load_run(const Options& o, bool hash_lambda = true) {
    Run r;
    r.cfg = o.config.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config);
    if (o.seed) r.cfg.seed = *o.seed;
    if (!o.variant.empty()) {
        r.cfg.variant = o.variant;
        r.cfg.model_variant(); // reject unknown names early
    }
    if (!o.weights.empty()) {
        const auto w = parse_numbers(o.weights, "--weights");
        if (w.size() != 4) throw Error(ErrorCode::ConfigInvalid, "--weights expects w_adv,w_rec,w_bone,w_vel");
        r.cfg.generator.weights = {w[0], w[1], w[2], w[3]};
        r.cfg.generator.weights.validate();
    }
    auto apply_lambda = [&] {
        if (o.lambda.empty()) return;
        const auto l = parse_numbers(o.lambda, "--lambda");
        if (l.size() != 1 || !(l[0] > 0)) throw Error(ErrorCode::ConfigInvalid, "--lambda expects one positive number");
        r.cfg.generator.model.lambda = l[0];
    };
    if (hash_lambda) apply_lambda();
    if (const char* env = std::getenv("MOCAP_THREADS")) {
        char* end = nullptr;
        const long t = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || t < 1) throw Error(ErrorCode::ConfigInvalid, "MOCAP_THREADS must be a positive integer");
        r.cfg.train.threads = static_cast<int>(t);
    }
    r.hash = config_hash(r.cfg);
    if (!hash_lambda) apply_lambda();
    r.markers = r.cfg.paths.markers.empty() ? default_marker_set() : load_marker_set(r.cfg.paths.markers);
    return r;
}

ojson header(const Run& r, const std::string& kind) { return {{"kind", kind}, {"config_hash", r.hash}, {"seed", r.cfg.seed}}; }

void require_dir(const std::string& path, const char* flag) {
    if (path.empty()) throw Error(ErrorCode::ConfigInvalid, std::string(flag) + " is required");
}

// "<actor>_<label>_<rest>.c3d": label must be an integer; anything else leaves it unset.
std::pair<std::string, std::optional<int>> parse_name(const std::string& stem) {
    const auto parts = split_list(stem);
    std::vector<std::string> fields;
    std::stringstream ss(stem);
    std::string f;
    while (std::getline(ss, f, '_')) fields.push_back(f);
    std::optional<int> label;
    if (fields.size() >= 2 && !fields[1].empty() && std::all_of(fields[1].begin(), fields[1].end(), ::isdigit))
        label = std::stoi(fields[1]);
    return {fields.empty() ? std::string() : fields[0], label};
}

// ---- catalog and sequences ----------------------------------------------------

std::vector<CatalogEntry> read_catalog(const std::string& dir) {
    const std::string text = read_text((fs::path(dir) / "catalog.jsonl").string());
    const auto first = text.find('\n');
    if (first == std::string::npos) throw Error(ErrorCode::InvalidFile, "catalog has no header line");
    return catalog_from_text(text.substr(first + 1));
}

MotionSequence load_sequence(const CatalogEntry& e, const Run& r) {
    MotionSequence raw = select_markers(c3d::load(e.path), r.markers);
    raw.id = e.id;
    raw.label = e.label;
    raw.actor = e.actor;
    raw.source = e.path;
    return preprocess_sequence(raw, r.cfg.preprocess);
}

Partition make_partition(const std::vector<CatalogEntry>& catalog, const Run& r) {
    if (!r.cfg.partition.test_actors.empty())
        return build_partition(catalog, r.cfg.partition.test_actors, r.cfg.partition.valid_actor);
    std::mt19937_64 rng(trainer::mix_seed(r.cfg.seed, 101));
    return build_random_partition(catalog, r.cfg.partition.train_fraction, r.cfg.partition.valid_fraction, rng);
}

struct Loaded {
    std::map<std::string, MotionSequence> by_id;
    Partition partition;
    std::vector<CatalogEntry> catalog;

    std::vector<MotionSequence> take(const std::vector<std::string>& ids) const {
        std::vector<MotionSequence> out;
        for (const auto& id : ids) out.push_back(by_id.at(id));
        return out;
    }
    std::vector<MotionSequence> split(const std::string& name) const {
        if (name == "train") return take(partition.train);
        if (name == "valid") return take(partition.valid);
        if (name == "test") return take(partition.test);
        if (name == "all") {
            std::vector<MotionSequence> out;
            for (const auto& e : catalog) out.push_back(by_id.at(e.id));
            return out;
        }
        throw Error(ErrorCode::ConfigInvalid, "--split must be train, valid, test or all");
    }
};

Loaded load_data(const Options& o, const Run& r) {
    require_dir(o.data, "--data");
    Loaded d;
    d.catalog = read_catalog(o.data);
    if (d.catalog.empty()) throw Error(ErrorCode::EmptyInput, "catalog is empty");
    for (const auto& e : d.catalog) d.by_id.emplace(e.id, load_sequence(e, r));
    d.partition = make_partition(d.catalog, r);
    return d;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path.string(), j.dump(1) + "\n"); }

// ---- commands ---------------------------------------------------------------

int cmd_synth(const Options& o) {
    require_dir(o.out, "--out");
    fs::create_directories(o.out);
    synth::SynthConfig sc;
    sc.classes = o.classes;
    sc.separation = o.separation;
    sc.fps = o.fps;
    std::mt19937_64 rng(o.seed.value_or(1));
    const auto actors = split_list(o.actors);
    const auto seqs = synth::synth_dataset(sc, o.count, actors, rng);
    const auto markers = default_marker_set();
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& s = seqs[i];
        const std::string name = *s.actor + "_" + std::to_string(*s.label) + "_" + std::to_string(i) + ".c3d";
        c3d::save((fs::path(o.out) / name).string(), to_c3d(s, markers));
    }
    std::cout << "wrote " << seqs.size() << " sequences to " << o.out << "\n";
    return 0;
}

int cmd_ingest(const Options& o) {
    const Run r = load_run(o);
    require_dir(o.data, "--data");
    require_dir(o.out, "--out");
    if (!fs::is_directory(o.data)) throw Error(ErrorCode::IoFailure, "data directory " + o.data + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.data))
        if (entry.is_regular_file() && entry.path().extension() == ".c3d") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<CatalogEntry> catalog;
    std::vector<std::string> warnings;
    for (const auto& f : files) {
        try {
            MotionSequence s = select_markers(c3d::load(f.string()), r.markers);
            const auto [actor, label] = parse_name(f.stem().string());
            s.id = f.stem().string();
            s.actor = actor;
            s.label = label;
            s.source = fs::absolute(f).lexically_normal().string();
            catalog.push_back(catalog_entry(s));
        } catch (const Error& e) {
            warnings.push_back(f.filename().string() + ": " + e.what());
            std::cerr << "warning: skipped " << warnings.back() << "\n";
        }
    }
    if (catalog.empty()) {
        std::cerr << "error: no C3D files ingested from " << o.data << "\n";
        return kExitData;
    }
    fs::create_directories(o.out);
    write_text((fs::path(o.out) / "catalog.jsonl").string(), header(r, "catalog").dump() + "\n" + catalog_to_text(catalog));
    auto part = ojson::parse(partition_to_text(make_partition(catalog, r)));
    part["config_hash"] = r.hash;
    part["seed"] = r.cfg.seed;
    write_json(fs::path(o.out) / "partition.json", part);
    ojson report = header(r, "ingest");
    report["ingested"] = catalog.size();
    report["warnings"] = warnings;
    write_json(fs::path(o.out) / "ingest_report.json", report);
    std::cout << "ingested " << catalog.size() << " of " << files.size() << " files\n";
    return 0;
}

int cmd_preprocess(const Options& o) {
    const Run r = load_run(o);
    require_dir(o.out, "--out");
    const Loaded d = load_data(o, r);
    fs::create_directories(o.out);
    const int w = r.cfg.preprocess.window_width, off = r.cfg.preprocess.effective_offset();
    std::size_t windows = 0;
    for (const auto& e : d.catalog) {
        const auto batch = sliding_windows(d.by_id.at(e.id), w, off);
        windows += batch.windows.size();
        save_window_cache(window_cache_path(o.out, e.id, r.hash), batch);
    }
    ojson report = header(r, "preprocess");
    report["sequences"] = d.catalog.size();
    report["windows"] = windows;
    write_json(fs::path(o.out) / "preprocess_report.json", report);
    std::cout << "cached " << windows << " windows from " << d.catalog.size() << " sequences\n";
    return 0;
}

void put_meta(nn::Checkpoint& ck, const Run& r, double kind) {
    ck.put("meta/seed", trainer::detail::scalar(static_cast<double>(r.cfg.seed)));
    ck.put("meta/kind", trainer::detail::scalar(kind));
}

int train_classifier(const Options& o, const Run& r, const Loaded& d) {
    trainer::TrainData data;
    for (auto& s : d.split("train")) (s.label ? data.train : data.unlabeled).push_back(s);
    for (auto& s : d.split("valid"))
        if (s.label) data.valid.push_back(s);
    for (const auto* set : {&data.train, &data.valid})
        for (const auto& s : *set)
            if (*s.label < 0 || *s.label >= r.cfg.model.classes)
                throw Error(ErrorCode::ConfigInvalid, "label " + std::to_string(*s.label) + " of " + s.id + " outside model.classes");

    trainer::PhaseOptions opt;
    opt.seed = r.cfg.seed;
    opt.config_hash = r.hash;
    opt.window_width = r.cfg.preprocess.window_width;
    opt.window_offset = r.cfg.preprocess.effective_offset();
    opt.noise_sigma = r.cfg.preprocess.noise_sigma;
    const fs::path state_path = fs::path(o.out) / "state.ckpt";

    std::optional<nn::Checkpoint> resume;
    int resume_phase = 1;
    if (!o.resume.empty()) {
        resume = nn::load_checkpoint(o.resume);
        nn::require_hash(*resume, r.hash);
        resume_phase = static_cast<int>(resume->at("cli/phase")(0, 0));
    }

    std::mt19937_64 init(trainer::mix_seed(r.cfg.seed, 11));
    multidec::MultiDecModel model(r.cfg.model, r.cfg.model_variant(), init);

    trainer::PhaseResult one;
    if (resume_phase == 1) {
        opt.phase = trainer::Phase::One;
        opt.resume = resume ? &*resume : nullptr;
        opt.on_epoch = [&](const nn::Checkpoint& ck) {
            nn::Checkpoint c = ck;
            c.put("cli/phase", trainer::detail::scalar(1));
            nn::save_checkpoint(state_path, c);
        };
        one = trainer::train_phase(model, data, r.cfg.train, opt);
    } else {
        one.train_accuracy = resume->at("cli/phase1_train_accuracy")(0, 0);
        one.stop_reason = "resumed";
        const Matrix& rows = resume->at("cli/phase1_curves");
        for (Index i = 0; i < rows.rows(); ++i) one.curves.push_back(trainer::CurveRow::unpack(rows.row(i)));
    }

    std::mt19937_64 init2(trainer::mix_seed(r.cfg.seed, 12));
    model = multidec::MultiDecModel(r.cfg.model, r.cfg.model_variant(), init2);
    Matrix phase1_rows(static_cast<Index>(one.curves.size()), 10);
    for (std::size_t i = 0; i < one.curves.size(); ++i) phase1_rows.row(static_cast<Index>(i)) = one.curves[i].pack();
    opt.phase = trainer::Phase::Two;
    opt.phase1_train_accuracy = one.train_accuracy;
    opt.resume = resume && resume_phase == 2 ? &*resume : nullptr;
    opt.on_epoch = [&](const nn::Checkpoint& ck) {
        nn::Checkpoint c = ck;
        c.put("cli/phase", trainer::detail::scalar(2));
        c.put("cli/phase1_train_accuracy", trainer::detail::scalar(one.train_accuracy));
        c.put("cli/phase1_curves", phase1_rows);
        nn::save_checkpoint(state_path, c);
    };
    const trainer::PhaseResult two = trainer::train_phase(model, data, r.cfg.train, opt);

    nn::Checkpoint ck;
    ck.config_hash = r.hash;
    ck.put_params(model.params(), "model/");
    put_meta(ck, r, 1);
    nn::save_checkpoint(fs::path(o.out) / "model.ckpt", ck);
    fs::remove(state_path); // only interrupted runs leave a resumable state
    std::vector<trainer::CurveRow> curves = one.curves;
    curves.insert(curves.end(), two.curves.begin(), two.curves.end());
    write_text((fs::path(o.out) / "curves.jsonl").string(), trainer::curves_to_jsonl(curves, r.hash, r.cfg.seed));
    ojson report = header(r, "train");
    report["variant"] = r.cfg.variant;
    report["phase1"] = {{"epochs", one.epochs_run}, {"stop_reason", one.stop_reason}, {"train_accuracy", one.train_accuracy},
                        {"best_score", one.best_score}};
    report["phase2"] = {{"epochs", two.epochs_run}, {"stop_reason", two.stop_reason}, {"train_accuracy", two.train_accuracy}};
    write_json(fs::path(o.out) / "train_report.json", report);
    std::cout << "phase 1: " << one.epochs_run << " epochs (" << one.stop_reason << "), phase 2: " << two.epochs_run
              << " epochs (" << two.stop_reason << ")\n";
    return 0;
}

int train_generator(const Options& o, const Run& r, const Loaded& d) {
    const auto train = d.split("train");
    const auto& g = r.cfg.generator;
    const auto samples = regan::make_transition_samples(train, g.past_len, g.trans_len, g.sample_stride);
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "training sequences are too short for past_len + trans_len + 1 frames");
    const auto stats = regan::fit_skeleton_stats(train, r.markers.bone_indices());
    std::mt19937_64 init(trainer::mix_seed(r.cfg.seed, 21));
    regan::Regan model(g.model, init);
    const auto history = regan::train_regan(model, samples, stats, g.weights, g.train, r.cfg.seed);

    nn::Checkpoint ck = model.checkpoint(r.hash);
    regan::put_stats(ck, stats);
    put_meta(ck, r, 2);
    nn::save_checkpoint(fs::path(o.out) / "generator.ckpt", ck);
    std::string curves = header(r, "gan_curves").dump() + "\n";
    for (const auto& h : history) {
        ojson row{{"step", h.step}, {"l_d", h.l_d}, {"l_g", h.l_g}, {"l_rec", h.l_rec}, {"l_bone", h.l_bone},
                  {"l_vel", h.l_vel}, {"d_real", h.d_real}, {"d_fake", h.d_fake}, {"mean_length", h.mean_length}};
        curves += row.dump() + "\n";
    }
    write_text((fs::path(o.out) / "gan_curves.jsonl").string(), curves);
    std::cout << "trained generator for " << history.size() << " steps on " << samples.size() << " samples\n";
    return 0;
}

int cmd_train(const Options& o) {
    const Run r = load_run(o);
    require_dir(o.out, "--out");
    if (o.task != "classify" && o.task != "generate") throw Error(ErrorCode::ConfigInvalid, "--task must be classify or generate");
    const Loaded d = load_data(o, r);
    fs::create_directories(o.out);
    return o.task == "classify" ? train_classifier(o, r, d) : train_generator(o, r, d);
}

nn::Checkpoint load_compatible(const std::string& path, const Run& r, double kind) {
    if (path.empty()) throw Error(ErrorCode::ConfigInvalid, "--checkpoint is required");
    nn::Checkpoint ck = nn::load_checkpoint(path);
    nn::require_hash(ck, r.hash);
    if (!ck.find("meta/kind") || ck.at("meta/kind")(0, 0) != kind)
        throw Error(ErrorCode::ConfigInvalid, path + " holds the wrong kind of model for this command");
    return ck;
}

std::vector<MotionSequence> split_or_all(const Loaded& d, const std::string& split) {
    auto seqs = d.split(split.empty() ? "test" : split);
    if (seqs.empty() && split.empty()) seqs = d.split("all");
    return seqs;
}

int cmd_eval(const Options& o) {
    const Run r = load_run(o);
    const nn::Checkpoint ck = load_compatible(o.checkpoint, r, 1);
    const Loaded d = load_data(o, r);
    std::mt19937_64 init(0);
    multidec::MultiDecModel model(r.cfg.model, r.cfg.model_variant(), init);
    ck.restore_params(model.params(), "model/");
    std::vector<MotionSequence> seqs;
    for (auto& s : split_or_all(d, o.split))
        if (s.label) seqs.push_back(s);
    if (seqs.empty()) throw Error(ErrorCode::EmptyInput, "no labeled sequences to evaluate");
    const auto rep = trainer::evaluate_windows(model, seqs, r.cfg.preprocess.window_width, r.cfg.preprocess.effective_offset(),
                                               r.cfg.train.threads);
    ojson report = header(r, "eval");
    report["split"] = o.split.empty() ? "test" : o.split;
    report["accuracy"] = rep.accuracy;
    report["count"] = seqs.size();
    report["confusion"] = rep.confusion;
    ojson rows = ojson::array();
    for (std::size_t i = 0; i < seqs.size(); ++i) rows.push_back({{"id", seqs[i].id}, {"label", *seqs[i].label}, {"predicted", rep.predicted[i]}});
    report["predictions"] = rows;
    if (!o.out.empty()) {
        if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
        write_json(o.out, report);
    }
    std::cout << "accuracy " << rep.accuracy << " on " << seqs.size() << " sequences\n";
    return 0;
}

int cmd_generate(const Options& o) {
    const Run r = load_run(o, false);
    require_dir(o.out, "--out");
    const nn::Checkpoint ck = load_compatible(o.checkpoint, r, 2);
    const Loaded d = load_data(o, r);
    std::mt19937_64 init(0);
    regan::Regan model(r.cfg.generator.model, init);
    model.restore(ck);
    const auto& g = r.cfg.generator;
    auto samples = regan::make_transition_samples(split_or_all(d, o.split), g.past_len, g.trans_len, g.sample_stride);
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no sequence is long enough for a transition sample");
    if (static_cast<int>(samples.size()) > o.count) samples.resize(static_cast<std::size_t>(o.count));

    fs::create_directories(o.out);
    ojson head = header(r, "transitions");
    head["lambda"] = model.config().lambda;
    head["count"] = samples.size();
    std::string text = head.dump() + "\n";
    nn::NoGradGuard guard;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::mt19937_64 zr(trainer::mix_seed(r.cfg.seed, 31, i));
        const auto gen = model.generate(samples[i].past, samples[i].target, model.sample_noise(zr));
        const Matrix& f = gen.frames.value();
        MotionSequence seq;
        seq.frames = f;
        seq.fps = r.cfg.preprocess.target_fps;
        const std::string name = "transition_" + r.hash + "_" + std::to_string(r.cfg.seed) + "_" + std::to_string(i) + ".c3d";
        c3d::save((fs::path(o.out) / name).string(), to_c3d(seq, r.markers));
        ojson frames = ojson::array();
        for (Index t = 0; t < f.cols(); ++t) frames.push_back(std::vector<double>(f.col(t).data(), f.col(t).data() + f.rows()));
        text += ojson{{"index", i}, {"length", gen.length}, {"reached_target", gen.reached}, {"file", name}, {"frames", frames}}.dump() + "\n";
    }
    write_text((fs::path(o.out) / "transitions.jsonl").string(), text);
    std::cout << "generated " << samples.size() << " transitions\n";
    return 0;
}

int cmd_cluster(const Options& o) {
    const Run r = load_run(o);
    require_dir(o.out, "--out");
    auto [k_min, k_max] = std::pair{r.cfg.cluster.k_min, r.cfg.cluster.k_max};
    if (!o.k_range.empty()) std::tie(k_min, k_max) = parse_k_range(o.k_range);

    analysis::EmbeddingSet set;
    if (!o.embeddings.empty()) {
        set = analysis::read_embeddings(o.embeddings).set;
    } else {
        const nn::Checkpoint ck = load_compatible(o.checkpoint, r, 1);
        const Loaded d = load_data(o, r);
        std::mt19937_64 init(0);
        multidec::MultiDecModel model(r.cfg.model, r.cfg.model_variant(), init);
        ck.restore_params(model.params(), "model/");
        set = analysis::extract_embeddings(model, split_or_all(d, o.split), r.cfg.train.threads);
    }
    if (set.size() == 0) throw Error(ErrorCode::EmptyInput, "no embeddings to cluster");
    analysis::FitOptions fo;
    fo.restarts = r.cfg.cluster.restarts;
    const auto sel = analysis::select_k(set.vectors, k_min, k_max, r.cfg.seed, fo);
    const auto clusters = sel.fit.model.assign(set.vectors);

    fs::create_directories(o.out);
    analysis::export_embeddings((fs::path(o.out) / "clusters.jsonl").string(), set, clusters, sel.best_k, r.hash, r.cfg.seed);
    ojson report = header(r, "cluster");
    report["k"] = sel.best_k;
    ojson scores = ojson::array();
    for (const auto& [k, s] : sel.scores) scores.push_back({{"k", k}, {"heldout_log_likelihood", s}});
    report["scores"] = scores;
    write_json(fs::path(o.out) / "cluster_report.json", report);
    std::cout << "K=" << sel.best_k << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motion-capture sequence toolkit"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "run configuration (JSON)");
        c->add_option("--seed", o.seed, "seed override");
        c->add_option("--out", o.out, "output directory or file");
    };
    auto data = [&](CLI::App* c) { c->add_option("--data", o.data, "ingested data directory (catalog.jsonl)"); };

    auto* synth = app.add_subcommand("synth", "write synthetic gesture C3D files");
    common(synth);
    synth->add_option("--count", o.count, "number of sequences");
    synth->add_option("--classes", o.classes, "number of gesture classes (<= 6)");
    synth->add_option("--actors", o.actors, "comma-separated actor names");
    synth->add_option("--separation", o.separation, "class motion amplitude (smaller is harder)");
    synth->add_option("--fps", o.fps, "capture rate");

    auto* ingest = app.add_subcommand("ingest", "scan C3D files into a catalog manifest");
    common(ingest);
    ingest->add_option("--data", o.data, "directory of .c3d files")->required();

    auto* pre = app.add_subcommand("preprocess", "normalize and window every catalog sequence into a cache");
    common(pre);
    data(pre);

    auto* train = app.add_subcommand("train", "train a classifier or a transition generator");
    common(train);
    data(train);
    train->add_option("--variant", o.variant, "SC, FR-SC, SRC, FR-SRC or FRC-SRC");
    train->add_option("--task", o.task, "classify or generate");
    train->add_option("--weights", o.weights, "generator loss weights w_adv,w_rec,w_bone,w_vel");
    train->add_option("--lambda", o.lambda, "generator stop threshold");
    train->add_option("--resume", o.resume, "resume from a state checkpoint");

    auto* eval = app.add_subcommand("eval", "window-voted accuracy and confusion counts");
    common(eval);
    data(eval);
    eval->add_option("--variant", o.variant, "model variant");
    eval->add_option("--checkpoint", o.checkpoint, "classifier checkpoint")->required();
    eval->add_option("--split", o.split, "train, valid, test or all");

    auto* gen = app.add_subcommand("generate", "generate transitions toward target key-poses");
    common(gen);
    data(gen);
    gen->add_option("--checkpoint", o.checkpoint, "generator checkpoint")->required();
    gen->add_option("--split", o.split, "train, valid, test or all");
    gen->add_option("--count", o.count, "maximum number of transitions");
    gen->add_option("--lambda", o.lambda, "stop threshold override");
    gen->add_option("--weights", o.weights, "generator loss weights used at training time");

    auto* cluster = app.add_subcommand("cluster", "GMM clustering of summary vectors");
    common(cluster);
    data(cluster);
    cluster->add_option("--variant", o.variant, "model variant");
    cluster->add_option("--checkpoint", o.checkpoint, "classifier checkpoint");
    cluster->add_option("--embeddings", o.embeddings, "precomputed embeddings file instead of a checkpoint");
    cluster->add_option("--split", o.split, "train, valid, test or all");
    cluster->add_option("--k-range", o.k_range, "candidate component counts A..B");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*ingest) return cmd_ingest(o);
        if (*pre) return cmd_preprocess(o);
        if (*train) return cmd_train(o);
        if (*eval) return cmd_eval(o);
        if (*gen) return cmd_generate(o);
        if (*cluster) return cmd_cluster(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
