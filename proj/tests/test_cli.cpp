#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mocap/analysis.hpp"
#include "mocap/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mocapseq_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Result run(const std::string& args, const fs::path& dir, const std::string& env = "") {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " " + std::string(MOCAPSEQ_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// Small model and short schedule so the pipeline runs in seconds.
const char* kSmallConfig = R"({
  "seed": 5,
  "model": {"frame_encoder": [32], "seq_encoder": [32], "summary": 32, "class_hidden": 16, "classes": 3},
  "train": {"max_epochs": 20, "early_stop_patience": 8},
  "generator": {"layers": [16], "discriminator": [8], "past_frame_encoder": [16], "past_seq_encoder": [8],
                "context": 8, "noise_dim": 4, "steps": 4, "batch": 4, "max_len": 12},
  "cluster": {"k_max": 4}
})";

// One synthetic corpus shared by every test in this file.
class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = scratch("corpus");
        write(root_ / "cfg.json", kSmallConfig);
        ASSERT_EQ(run("synth --out " + (root_ / "raw").string() + " --count 45 --seed 3", root_).code, 0);
        const auto r = run("ingest --config " + cfg() + " --data " + (root_ / "raw").string() + " --out " + data(), root_);
        ASSERT_EQ(r.code, 0) << r.err;
    }
    static std::string cfg() { return (root_ / "cfg.json").string(); }
    static std::string data() { return (root_ / "ingested").string(); }
    static fs::path root_;
};
fs::path Cli::root_;

TEST_F(Cli, EmptyDirectoryExitsNonzero) {
    const auto dir = scratch("empty");
    fs::create_directories(dir / "in");
    const auto r = run("ingest --data " + (dir / "in").string() + " --out " + (dir / "out").string(), dir);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("no C3D files"), std::string::npos) << r.err;
}

TEST_F(Cli, CorruptFileIsSkippedWithWarning) {
    const auto dir = scratch("corrupt");
    ASSERT_EQ(run("synth --out " + (dir / "in").string() + " --count 3 --seed 9", dir).code, 0);
    write(dir / "in" / "zz_0_broken.c3d", "not a c3d file at all");
    const auto r = run("ingest --data " + (dir / "in").string() + " --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto catalog = mocap::catalog_from_text(slurp(dir / "out" / "catalog.jsonl").substr(slurp(dir / "out" / "catalog.jsonl").find('\n') + 1));
    EXPECT_EQ(catalog.size(), 3u);
    EXPECT_NE(r.err.find("zz_0_broken.c3d"), std::string::npos) << r.err;
    const auto report = json::parse(slurp(dir / "out" / "ingest_report.json"));
    EXPECT_EQ(report["warnings"].size(), 1u);
    EXPECT_EQ(report["ingested"], 3);
}

TEST_F(Cli, IngestIsIdempotent) {
    const auto dir = scratch("idem");
    const std::string raw = (root_ / "raw").string();
    ASSERT_EQ(run("ingest --config " + cfg() + " --data " + raw + " --out " + (dir / "a").string(), dir).code, 0);
    const std::string first_catalog = slurp(dir / "a" / "catalog.jsonl"), first_part = slurp(dir / "a" / "partition.json");
    ASSERT_EQ(run("ingest --config " + cfg() + " --data " + raw + " --out " + (dir / "a").string(), dir).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "catalog.jsonl"), first_catalog);
    EXPECT_EQ(slurp(dir / "a" / "partition.json"), first_part);
    EXPECT_EQ(slurp(dir / "a" / "catalog.jsonl"), slurp(root_ / "ingested" / "catalog.jsonl"));
}

TEST_F(Cli, ArtifactsCarryHashAndSeed) {
    const auto head = json::parse(slurp(root_ / "ingested" / "catalog.jsonl").substr(0, slurp(root_ / "ingested" / "catalog.jsonl").find('\n')));
    EXPECT_EQ(head["seed"], 5);
    EXPECT_EQ(head["config_hash"].get<std::string>().size(), 16u);
    const auto part = json::parse(slurp(root_ / "ingested" / "partition.json"));
    EXPECT_EQ(part["config_hash"], head["config_hash"]);
}

TEST_F(Cli, RatioOutsideUnitIntervalRejectedBeforeTraining) {
    const auto dir = scratch("ratio");
    write(dir / "cfg.json", R"({"variant": "FR-SC", "ratio": 1.5})");
    const auto r = run("train --config " + (dir / "cfg.json").string() + " --data " + data() + " --out " + (dir / "run").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("ratio"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST_F(Cli, ConfigErrorsListedTogether) {
    const auto dir = scratch("keys");
    write(dir / "cfg.json", R"({"bogus": 1, "train": {"lr": 0.1, "momentum": "high"}, "preprocess": {"window_width": -3}})");
    const auto r = run("train --config " + (dir / "cfg.json").string() + " --data " + data() + " --out " + (dir / "run").string(), dir);
    EXPECT_EQ(r.code, 2);
    for (const char* needle : {"bogus", "lr", "momentum", "window_width"}) EXPECT_NE(r.err.find(needle), std::string::npos) << needle << "\n" << r.err;
    EXPECT_NE(r.err.find("4 configuration error"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownVariantAndBadFlagsAreConfigErrors) {
    const auto dir = scratch("flags");
    EXPECT_EQ(run("train --config " + cfg() + " --data " + data() + " --out " + dir.string() + " --variant XYZ", dir).code, 2);
    EXPECT_EQ(run("train --task generate --weights 1,2 --config " + cfg() + " --data " + data() + " --out " + dir.string(), dir).code, 2);
    EXPECT_EQ(run("train --task generate --weights 0,0,0,0 --config " + cfg() + " --data " + data() + " --out " + dir.string(), dir).code, 2);
    EXPECT_EQ(run("cluster --embeddings x --k-range 3-4 --out " + dir.string(), dir).code, 2);
    EXPECT_EQ(run("frobnicate", dir).code, 2);
    EXPECT_EQ(run("train --config " + cfg() + " --data " + data() + " --out " + dir.string(), dir, "MOCAP_THREADS=zero").code, 2);
}

TEST_F(Cli, EveryVariantNameTrains) {
    const auto dir = scratch("variants");
    write(dir / "cfg.json", R"({"model": {"frame_encoder": [8], "seq_encoder": [8], "summary": 8, "class_hidden": 4, "classes": 3},
                                "train": {"max_epochs": 1}})");
    for (const char* v : {"SC", "FR-SC", "SRC", "FR-SRC", "FRC-SRC"}) {
        const auto r = run("train --config " + (dir / "cfg.json").string() + " --data " + data() + " --out " + (dir / v).string() + " --variant " + v, dir);
        EXPECT_EQ(r.code, 0) << v << ": " << r.err;
        EXPECT_TRUE(fs::exists(dir / v / "model.ckpt")) << v;
        EXPECT_FALSE(fs::exists(dir / v / "state.ckpt")) << v;
    }
}

TEST_F(Cli, TrainEvalRoundTrip) {
    const auto dir = scratch("train");
    const auto r = run("train --config " + cfg() + " --data " + data() + " --out " + (dir / "run").string() + " --variant SC", dir);
    ASSERT_EQ(r.code, 0) << r.err;

    // converging curve file
    std::ifstream curves(dir / "run" / "curves.jsonl");
    std::string line;
    std::getline(curves, line);
    const auto header = json::parse(line);
    std::vector<double> phase1;
    while (std::getline(curves, line)) {
        const auto row = json::parse(line);
        if (row["phase"] == 1) phase1.push_back(row["loss"].get<double>());
    }
    ASSERT_GE(phase1.size(), 2u);
    EXPECT_LT(phase1.back(), 0.5 * phase1.front());

    // a converged model classifies its own training data perfectly
    const auto e = run("eval --config " + cfg() + " --variant SC --data " + data() + " --split train --checkpoint " +
                           (dir / "run" / "model.ckpt").string() + " --out " + (dir / "eval.json").string(),
                       dir);
    ASSERT_EQ(e.code, 0) << e.err;
    const auto report = json::parse(slurp(dir / "eval.json"));
    EXPECT_DOUBLE_EQ(report["accuracy"].get<double>(), 1.0);
    EXPECT_EQ(report["config_hash"], header["config_hash"]);
    int total = 0;
    for (const auto& row : report["confusion"])
        for (const auto& c : row) total += c.get<int>();
    EXPECT_EQ(total, report["count"].get<int>());

    // a checkpoint from a different configuration is refused
    const auto bad = run("eval --config " + cfg() + " --variant FR-SC --data " + data() + " --checkpoint " +
                             (dir / "run" / "model.ckpt").string(),
                         dir);
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("ChecksumMismatch"), std::string::npos) << bad.err;
}

TEST_F(Cli, SameSeedTrainingIsByteIdentical) {
    const auto dir = scratch("determinism");
    for (const char* out : {"a", "b"}) {
        const auto r = run("train --config " + cfg() + " --data " + data() + " --out " + (dir / out).string() + " --variant FR-SC", dir,
                           std::string("MOCAP_THREADS=") + (out[0] == 'a' ? "1" : "3"));
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (const char* f : {"model.ckpt", "curves.jsonl"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST_F(Cli, GenerateTwiceGivesIdenticalFiles) {
    const auto dir = scratch("generate");
    const auto t = run("train --task generate --config " + cfg() + " --data " + data() + " --out " + (dir / "gen").string(), dir);
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_TRUE(fs::exists(dir / "gen" / "gan_curves.jsonl"));
    for (const char* out : {"a", "b"}) {
        const auto g = run("generate --config " + cfg() + " --data " + data() + " --count 3 --checkpoint " +
                               (dir / "gen" / "generator.ckpt").string() + " --out " + (dir / out).string(),
                           dir);
        ASSERT_EQ(g.code, 0) << g.err;
    }
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        ++files;
        EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << entry.path();
    }
    EXPECT_EQ(files, 4); // three C3D files and the JSONL summary

    // generation-time lambda does not invalidate the checkpoint
    EXPECT_EQ(run("generate --lambda 10 --config " + cfg() + " --data " + data() + " --count 1 --checkpoint " +
                      (dir / "gen" / "generator.ckpt").string() + " --out " + (dir / "c").string(),
                  dir)
                  .code,
              0);
    // different training weights give a different hash
    EXPECT_EQ(run("generate --config " + cfg() + " --data " + data() + " --checkpoint " + (dir / "gen" / "generator.ckpt").string() +
                      " --weights 0,1,1,1 --out " + (dir / "d").string(),
                  dir)
                  .code,
              2);
}

TEST_F(Cli, ClusterFindsThreeBlobs) {
    const auto dir = scratch("cluster");
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    mocap::analysis::EmbeddingSet set;
    const int dim = 16, per = 40;
    set.vectors.resize(3 * per, dim);
    for (int b = 0; b < 3; ++b) {
        Eigen::RowVectorXd centre(dim);
        for (int d = 0; d < dim; ++d) centre[d] = 3.0 * n(rng);
        for (int i = 0; i < per; ++i) {
            for (int d = 0; d < dim; ++d) set.vectors(b * per + i, d) = centre[d] + 0.5 * n(rng);
            set.ids.push_back("s" + std::to_string(b * per + i));
            set.labels.push_back(b);
        }
    }
    mocap::analysis::export_embeddings((dir / "emb.jsonl").string(), set, std::vector<int>(set.size(), 0), 1, "none", 0);
    const auto r = run("cluster --embeddings " + (dir / "emb.jsonl").string() + " --k-range 1..8 --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("K=3"), std::string::npos) << r.out;
    const auto report = json::parse(slurp(dir / "out" / "cluster_report.json"));
    EXPECT_EQ(report["k"], 3);
    EXPECT_EQ(report["scores"].size(), 8u);
    const auto back = mocap::analysis::read_embeddings((dir / "out" / "clusters.jsonl").string());
    EXPECT_EQ(back.set.size(), set.size());
}

TEST_F(Cli, PreprocessWritesCaches) {
    const auto dir = scratch("pre");
    const auto r = run("preprocess --config " + cfg() + " --data " + data() + " --out " + dir.string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(dir / "preprocess_report.json"));
    EXPECT_EQ(report["sequences"], 45);
    int caches = 0;
    for (const auto& e : fs::directory_iterator(dir)) caches += e.path().extension() == ".win";
    EXPECT_EQ(caches, 45);
}

} // namespace
