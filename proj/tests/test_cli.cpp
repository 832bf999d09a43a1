#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include "gazenet/dataio.hpp"
#include "gazenet/image.hpp"
#include "gazenet/json_io.hpp"
#include "gazenet/nnet_io.hpp"
#include "test_util.hpp"

using namespace gazenet;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result run_cli(const std::string& args, const TempDir& dir) {
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = std::string(GAZENET_CLI_PATH) + " " + args + " 2>" + err_file.string();
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf;
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_file);
    return r;
}

fs::path run_dir_of(const Result& r) { return json::parse(r.out).at("run_dir").get<std::string>(); }

json tiny_config(int seed = 4) {
    json j = json::parse(R"({
        "synth": {"image_w": 16, "image_h": 10, "n_subjects": 3, "samples_per_subject": 40},
        "cluster": {"K": 2, "n_restarts": 2},
        "net": {"preset": "tiny", "input_w": 16, "input_h": 10,
                "conv": [{"kernel": 3, "out_channels": 4, "stride": 2}, {"kernel": 3, "out_channels": 6},
                         {"kernel": 3, "out_channels": 6}, {"kernel": 3, "out_channels": 6},
                         {"kernel": 3, "out_channels": 4}],
                "fc6_dim": 16, "fc7_dim": 8},
        "train": {"epochs": 1, "batch_size": 16},
        "eval": {"protocol": "holdout", "test_subjects": [2]}
    })");
    j["seed"] = seed;
    return j;
}

std::string write_config(const TempDir& dir, const json& cfg, const std::string& name = "cfg.json") {
    spit(dir / name, cfg.dump(2));
    return (dir / name).string();
}

fs::path synth(const TempDir& dir, const std::string& cfg, const std::string& out = "runs") {
    const Result r = run_cli("synth --config " + cfg + " --out " + (dir / out).string(), dir);
    EXPECT_EQ(r.code, 0) << r.err;
    return run_dir_of(r);
}

}  // namespace

TEST(Cli, UnknownConfigKeyFails) {
    TempDir dir("cli_unknown");
    json cfg = tiny_config();
    cfg["synth"]["imgae_w"] = 16;
    const Result r = run_cli("synth --config " + write_config(dir, cfg) + " --out " + (dir / "runs").string(), dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("imgae_w"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "runs"));
}

TEST(Cli, UnknownSubcommandAndMissingDatasetFail) {
    TempDir dir("cli_bad");
    EXPECT_NE(run_cli("frobnicate", dir).code, 0);
    const Result r = run_cli("cluster --config " + write_config(dir, tiny_config()) + " --dataset " +
                                 (dir / "nope").string() + " --out " + (dir / "runs").string(),
                             dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("gazenet: error: ", 0), 0u) << r.err;
}

TEST(Cli, SynthIsByteIdenticalAcrossRunsAndThreads) {
    TempDir dir("cli_synth");
    const std::string cfg = write_config(dir, tiny_config());
    const fs::path a = synth(dir, cfg, "a");
    const Result rb = run_cli("synth --config " + cfg + " --threads 3 --out " + (dir / "b").string(), dir);
    ASSERT_EQ(rb.code, 0) << rb.err;
    const fs::path b = run_dir_of(rb);
    EXPECT_EQ(slurp(a / "dataset" / "index.jsonl"), slurp(b / "dataset" / "index.jsonl"));
    EXPECT_EQ(slurp(a / "dataset" / "manifest.json"), slurp(b / "dataset" / "manifest.json"));
    const Dataset ds = read_dataset(a / "dataset");
    EXPECT_EQ(ds.size(), 120u);
    for (const auto& s : ds.samples) EXPECT_EQ(slurp(a / "dataset" / s.image_path), slurp(b / "dataset" / s.image_path));
    EXPECT_EQ(slurp(a / "seed.txt"), "4\n");
    // the emitted config reproduces the run
    const Result rc = run_cli("synth --config " + (a / "resolved_config.json").string() + " --out " + (dir / "c").string(), dir);
    ASSERT_EQ(rc.code, 0) << rc.err;
    EXPECT_EQ(slurp(a / "dataset" / "index.jsonl"), slurp(run_dir_of(rc) / "dataset" / "index.jsonl"));
    // --seed overrides
    const fs::path d = run_dir_of(run_cli("synth --config " + cfg + " --seed 5 --out " + (dir / "d").string(), dir));
    EXPECT_NE(slurp(a / "dataset" / "index.jsonl"), slurp(d / "dataset" / "index.jsonl"));
}

TEST(Cli, ClusterOutputsAndSweep) {
    TempDir dir("cli_cluster");
    json cfg = tiny_config();
    cfg["cluster"]["K"] = 1;
    cfg["cluster"]["sweep"] = {1, 2, 3, 4, 5};
    const std::string path = write_config(dir, cfg);
    const fs::path data = synth(dir, path) / "dataset";
    const Result r = run_cli("cluster --config " + path + " --dataset " + data.string() + " --out " + (dir / "runs").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const fs::path run = run_dir_of(r);
    const json clusters = json::parse(slurp(run / "clusters.json"));
    EXPECT_EQ(clusters.at("K"), 1);
    const ClusterModel m = clusters.get<ClusterModel>();
    EXPECT_EQ(m.K(), 1);
    const std::string assignments = slurp(run / "assignments.csv");
    EXPECT_EQ(std::count(assignments.begin(), assignments.end(), '\n'), 121);

    std::istringstream sweep(slurp(run / "kmeans_sweep.csv"));
    std::string line;
    std::getline(sweep, line);
    EXPECT_EQ(line, "K,objective");
    double prev = 1e300;
    int rows = 0;
    while (std::getline(sweep, line)) {
        const double obj = std::stod(line.substr(line.find(',') + 1));
        EXPECT_LE(obj, prev + 1e-9) << line;
        prev = obj;
        ++rows;
    }
    EXPECT_EQ(rows, 5);
}

TEST(Cli, FixedCentroidsAreEchoed) {
    TempDir dir("cli_fixed");
    json cfg = tiny_config();
    cfg["cluster"]["fixed_centroids_deg"] = {{0.0, -30.0}, {0.0, 0.0}, {10.0, 30.0}};
    const std::string path = write_config(dir, cfg);
    const fs::path data = synth(dir, path) / "dataset";
    const Result r = run_cli("cluster --config " + path + " --dataset " + data.string() + " --out " + (dir / "runs").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json clusters = json::parse(slurp(run_dir_of(r) / "clusters.json"));
    ASSERT_EQ(clusters.at("K"), 3);
    const auto deg = clusters.at("centroids_deg");
    const double expect[3][2] = {{0, -30}, {0, 0}, {10, 30}};
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(deg[k][0].get<double>(), expect[k][0], 1e-9);
        EXPECT_NEAR(deg[k][1].get<double>(), expect[k][1], 1e-9);
    }
}

TEST(Cli, InferWithZeroWeightModelPrintsZero) {
    TempDir dir("cli_infer");
    NetConfig nc = tiny_config().at("net").get<NetConfig>();
    BranchedNet<float> net(nc);
    net.params().fill(0.0f);
    save_model(net, dir / "zero.json");
    write_netpbm(dir / "eye.pgm", EyeImage(16, 10, 1, 128));
    const Result r = run_cli("infer --config " + write_config(dir, tiny_config()) + " --model " + (dir / "zero.json").string() +
                                 " --image " + (dir / "eye.pgm").string() + " --head-pitch 5 --head-yaw -10 --degrees",
                             dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json out = json::parse(r.out);
    EXPECT_EQ(out.at("pitch_rad").get<double>(), 0.0);
    EXPECT_EQ(out.at("yaw_rad").get<double>(), 0.0);
    EXPECT_EQ(out.at("pitch_deg").get<double>(), 0.0);
    EXPECT_EQ(out.at("cluster").get<int>(), 1);
}

TEST(Cli, LabelBaselineReportsZeroError) {
    TempDir dir("cli_baseline");
    json cfg = tiny_config();
    cfg["eval"]["baseline"] = "label";
    const std::string path = write_config(dir, cfg);
    const fs::path data = synth(dir, path) / "dataset";
    const Result r = run_cli("eval --config " + path + " --dataset " + data.string() + " --out " + (dir / "runs").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const json report = json::parse(slurp(run_dir_of(r) / "report.json"));
    EXPECT_EQ(report.at("overall_mean_error_deg").get<double>(), 0.0);
    EXPECT_EQ(report.at("records").size(), 120u);
}

TEST(Cli, TrainEvalInferPipeline) {
    TempDir dir("cli_pipeline");
    const std::string path = write_config(dir, tiny_config());
    const std::string out = " --out " + (dir / "runs").string();
    const fs::path data = synth(dir, path) / "dataset";
    const Result t = run_cli("train --config " + path + " --dataset " + data.string() + out, dir);
    ASSERT_EQ(t.code, 0) << t.err;
    const fs::path train_dir = run_dir_of(t);
    for (const char* f : {"model.json", "model.bin", "clusters.json", "loss_curve.csv", "resolved_config.json", "seed.txt"})
        EXPECT_TRUE(fs::exists(train_dir / f)) << f;
    EXPECT_EQ(load_model(train_dir / "model.json").config().K, 2);

    // loss curve reproducible
    const Result t2 = run_cli("train --config " + path + " --dataset " + data.string() + out, dir);
    ASSERT_EQ(t2.code, 0) << t2.err;
    EXPECT_EQ(slurp(train_dir / "loss_curve.csv"), slurp(run_dir_of(t2) / "loss_curve.csv"));

    const Result e = run_cli("eval --config " + path + " --dataset " + data.string() + " --model " +
                                 (train_dir / "model.json").string() + out,
                             dir);
    ASSERT_EQ(e.code, 0) << e.err;
    const json report = json::parse(slurp(run_dir_of(e) / "report.json"));
    EXPECT_EQ(report.at("K"), 2);
    EXPECT_TRUE(fs::exists(run_dir_of(e) / "summary.csv"));

    const Dataset ds = read_dataset(data);
    const Result i = run_cli("infer --config " + path + " --model " + (train_dir / "model.json").string() + " --image " +
                                 (data / ds.samples[0].image_path).string() + " --head-yaw 0.3",
                             dir);
    ASSERT_EQ(i.code, 0) << i.err;
    const json pred = json::parse(i.out);
    EXPECT_TRUE(std::isfinite(pred.at("yaw_rad").get<double>()));
    EXPECT_GE(pred.at("cluster").get<int>(), 1);
}

TEST(Cli, StatsAndTarget) {
    TempDir dir("cli_stats");
    json cfg = tiny_config();
    const std::string path = write_config(dir, cfg);
    const fs::path data = synth(dir, path, "a") / "dataset";
    cfg["synth"]["head_yaw_range"] = 15.0;
    cfg["synth"]["first_subject"] = 10;
    const fs::path narrow = synth(dir, write_config(dir, cfg, "narrow.json"), "b") / "dataset";
    const std::string out = " --out " + (dir / "runs").string();

    const Result s = run_cli("stats --config " + path + " --dataset " + data.string() + out, dir);
    ASSERT_EQ(s.code, 0) << s.err;
    const json stats = json::parse(slurp(run_dir_of(s) / "stats.json"));
    EXPECT_EQ(stats.size(), 2u);

    const Result t = run_cli("target --config " + path + " --dataset " + data.string() + " --reference " + narrow.string() + out, dir);
    ASSERT_EQ(t.code, 0) << t.err;
    const json rep = json::parse(slurp(run_dir_of(t) / "targeting_report.json"));
    EXPECT_LT(rep.at("chi2_after").get<double>(), rep.at("chi2_before").get<double>());
    const Dataset kept = read_dataset(run_dir_of(t) / "dataset");
    EXPECT_LT(kept.size(), 120u);
}
