#include "gazenet/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "gazenet/dataio.hpp"
#include "gazenet/errors.hpp"
#include "gazenet/hash.hpp"
#include "gazenet/json_io.hpp"
#include "gazenet/nnet_io.hpp"

namespace fs = std::filesystem;

namespace gazenet::cli {

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << text;
    if (!f) throw IoError("write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw IoError("cannot open " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

const std::string& need(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing input: paths.") + what);
    if (!fs::exists(path)) throw IoError(std::string("paths.") + what + " does not exist: " + path);
    return path;
}

ClusterModel load_clusters(const fs::path& p) {
    try {
        return read_json(p).get<ClusterModel>();
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

std::vector<Angles> head_poses(const Dataset& ds) {
    std::vector<Angles> v;
    v.reserve(ds.size());
    for (const auto& s : ds.samples) v.push_back(s.head);
    return v;
}

// Cluster model for a command: explicit file, fixed centroids, or a fresh fit.
ClusterModel resolve_clusters(const RunConfig& cfg, const Dataset& ds) {
    if (!cfg.paths.clusters.empty()) return load_clusters(need(cfg.paths.clusters, "clusters"));
    if (!cfg.cluster.fixed_centroids.empty()) return ClusterModel::from_centroids(cfg.cluster.fixed_centroids);
    return fit_kmeans(head_poses(ds), cfg.cluster.kmeans).model;
}

// Clusters to pair with a saved model: explicit file, else clusters.json next to it.
std::optional<ClusterModel> model_clusters(const RunConfig& cfg) {
    if (!cfg.paths.clusters.empty()) return load_clusters(need(cfg.paths.clusters, "clusters"));
    const fs::path sibling = fs::path(cfg.paths.model).parent_path() / "clusters.json";
    if (fs::exists(sibling)) return load_clusters(sibling);
    return std::nullopt;
}

std::ostream& out_stream(const Context& ctx) { return ctx.out ? *ctx.out : std::cout; }

void announce(const Context& ctx, const std::string& command, const fs::path& dir) {
    out_stream(ctx) << json{{"command", command}, {"run_dir", dir.string()}}.dump() << std::endl;
}

std::string run_hash(const RunConfig& cfg) { return hex64(fnv1a64(cfg.to_json().dump())); }

}  // namespace

fs::path make_run_dir(const Context& ctx, const std::string& command, const RunConfig& cfg) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    const std::string base = command + "-" + stamp;
    fs::create_directories(ctx.out_root);
    fs::path dir = ctx.out_root / base;
    for (int n = 1; fs::exists(dir); ++n) dir = ctx.out_root / (base + "-" + std::to_string(n));
    fs::create_directory(dir);
    write_json(dir / "resolved_config.json", cfg.to_json());
    write_text(dir / "seed.txt", std::to_string(cfg.seed) + "\n");
    return dir;
}

fs::path cmd_synth(const RunConfig& cfg, const Context& ctx) {
    const fs::path dir = make_run_dir(ctx, "synth", cfg);
    GenerationLog log;
    const Dataset ds = generate_dataset(cfg.synth, &log, ctx.threads);
    write_dataset(ds, dir / "dataset");
    json j = log;
    j["samples"] = ds.size();
    j["config_hash"] = config_hash(cfg.synth);
    write_json(dir / "generation_log.json", j);
    announce(ctx, "synth", dir);
    return dir;
}

fs::path cmd_cluster(const RunConfig& cfg, const Context& ctx) {
    const Dataset ds = read_dataset(need(cfg.paths.dataset, "dataset"));
    const fs::path dir = make_run_dir(ctx, "cluster", cfg);
    const std::vector<Angles> poses = head_poses(ds);

    ClusterModel model;
    json fit = json::object();
    if (!cfg.cluster.fixed_centroids.empty()) {
        model = ClusterModel::from_centroids(cfg.cluster.fixed_centroids);
        fit["mode"] = "fixed";
        fit["objective"] = kmeans_objective(poses, model);
    } else {
        const KMeansResult r = fit_kmeans(poses, cfg.cluster.kmeans);
        model = r.model;
        fit["mode"] = "kmeans";
        fit["objective"] = r.objective;
        fit["objective_trace"] = r.objective_trace;
        fit["best_restart"] = r.best_restart;
    }
    write_json(dir / "clusters.json", model);
    write_json(dir / "fit.json", fit);

    std::string csv = "id,cluster\n";
    for (const auto& s : ds.samples) csv += s.id + "," + std::to_string(model.assign(s.head)) + "\n";
    write_text(dir / "assignments.csv", csv);

    if (!cfg.cluster.sweep.empty()) {
        std::string sweep = "K,objective\n";
        char buf[64];
        for (int k : cfg.cluster.sweep) {
            KMeansOptions o = cfg.cluster.kmeans;
            o.K = k;
            std::snprintf(buf, sizeof buf, "%d,%.12g\n", k, fit_kmeans(poses, o).objective);
            sweep += buf;
        }
        write_text(dir / "kmeans_sweep.csv", sweep);
    }
    announce(ctx, "cluster", dir);
    return dir;
}

fs::path cmd_target(const RunConfig& cfg, const Context& ctx) {
    const Dataset source = read_dataset(need(cfg.paths.dataset, "dataset"));
    const Dataset reference = read_dataset(need(cfg.paths.reference_dataset, "reference_dataset"));
    const fs::path dir = make_run_dir(ctx, "target", cfg);
    TargetingReport rep;
    const Dataset kept = target_dataset(source, reference, cfg.targeting, cfg.seed, &rep);
    write_dataset(kept, dir / "dataset");
    const auto ref_h = pose_histogram(reference, cfg.targeting);
    json j = rep;
    j["chi2_before"] = chi2_distance(pose_histogram(source, cfg.targeting), ref_h);
    j["chi2_after"] = kept.empty() ? 1.0 : chi2_distance(pose_histogram(kept, cfg.targeting), ref_h);
    write_json(dir / "targeting_report.json", j);
    announce(ctx, "target", dir);
    return dir;
}

fs::path cmd_train(const RunConfig& cfg, const Context& ctx) {
    const Dataset ds = read_dataset(need(cfg.paths.dataset, "dataset"));
    std::optional<Dataset> val, pre;
    if (!cfg.paths.test_dataset.empty()) val = read_dataset(need(cfg.paths.test_dataset, "test_dataset"));
    if (!cfg.paths.pretrain_dataset.empty())
        pre = read_dataset(need(cfg.paths.pretrain_dataset, "pretrain_dataset"));
    const fs::path dir = make_run_dir(ctx, "train", cfg);

    const ClusterModel model = resolve_clusters(cfg, ds);
    NetConfig nc = cfg.net;
    nc.K = cfg.eval.branched ? model.K() : 1;
    BranchedNet<float> net(nc);
    net.init_he_uniform(cfg.seed);

    json loads = json::object();
    if (!cfg.paths.init_model.empty()) loads["init_model"] = partial_load(net, need(cfg.paths.init_model, "init_model"));
    if (cfg.train.finetune && !cfg.train.finetune->donor_path.empty())
        loads["donor"] = partial_load(net, need(cfg.train.finetune->donor_path, "train.finetune.donor_path"));
    if (!loads.empty()) write_json(dir / "load_report.json", loads);

    std::vector<EpochRecord> curve;
    auto log_epoch = [](const EpochRecord& r) {
        std::fprintf(stderr, "epoch %d %s loss %.6f error %.3f deg\n", r.epoch, r.split.c_str(), r.loss,
                     r.angular_error_deg);
    };
    if (pre && cfg.pretrain_epochs > 0) {
        const auto r = pretrain_finetune(net, *pre, ds, &model, cfg.train, cfg.pretrain_epochs);
        for (auto rec : r.pretrain_curve) {
            rec.split = "pretrain";
            curve.push_back(rec);
        }
        curve.insert(curve.end(), r.finetune_curve.begin(), r.finetune_curve.end());
    } else {
        std::optional<PreparedData> vdata;
        TrainOptions opts;
        opts.on_epoch = log_epoch;
        if (val) {
            vdata = prepare(*val, nc, &model, cfg.train.hist_eq);
            opts.validation = &*vdata;
        }
        curve = train_epochs(net, ds, &model, cfg.train, opts);
    }
    save_model(net, dir / "model.json");
    write_json(dir / "clusters.json", model);
    write_text(dir / "loss_curve.csv", loss_curve_csv(curve));
    announce(ctx, "train", dir);
    return dir;
}

fs::path cmd_eval(const RunConfig& cfg, const Context& ctx) {
    const Dataset ds = read_dataset(need(cfg.paths.dataset, "dataset"));
    std::optional<Dataset> test;
    if (!cfg.paths.test_dataset.empty()) test = read_dataset(need(cfg.paths.test_dataset, "test_dataset"));
    const fs::path dir = make_run_dir(ctx, "eval", cfg);

    EvalOptions eo;
    eo.hist_eq = cfg.train.hist_eq;
    eo.exclude_above_deg = cfg.eval.exclude_above_deg;
    const Dataset& eval_set = test ? *test : ds;

    EvalReport report;
    std::optional<AblationGrid> grid;
    if (cfg.eval.baseline != "none") {
        std::optional<ClusterModel> model;
        if (!cfg.paths.clusters.empty()) model = load_clusters(need(cfg.paths.clusters, "clusters"));
        Predictor p;
        if (cfg.eval.baseline == "zero")
            p = [](const Sample&, const EyeImage&, int) { return Angles{0.0, 0.0}; };
        else
            p = [](const Sample& s, const EyeImage&, int) { return s.gaze; };
        report = evaluate(p, eval_set, model ? &*model : nullptr, eo);
        report.protocol = "baseline_" + cfg.eval.baseline;
    } else if (!cfg.paths.model.empty()) {
        const BranchedNet<float> net = load_model(need(cfg.paths.model, "model"));
        const auto model = model_clusters(cfg);
        if (net.config().K > 1 && !model) throw ConfigError("a branched model needs paths.clusters");
        report = evaluate(net, eval_set, model ? &*model : nullptr, eo);
        report.protocol = "evaluate";
    } else if (test) {
        report = cross_dataset_protocol(ds, *test, cfg.experiment(),
                                        cfg.eval.targeted ? std::optional<TargetingSpec>(cfg.targeting)
                                                          : std::nullopt);
    } else if (cfg.eval.ablation) {
        grid = ablation_grid(ds, cfg.experiment(), cfg.eval.protocol);
    } else {
        report = run_protocol(ds, cfg.experiment(), cfg.eval.protocol);
    }

    if (grid) {
        json cells = json::array();
        for (auto& c : grid->cells) {
            c.meta["config_hash_run"] = run_hash(cfg);
            cells.push_back(c);
        }
        write_json(dir / "ablation.json", cells);
        write_text(dir / "ablation.csv", ablation_table_csv(*grid));
        report = grid->cells[3];
    } else {
        report.config_hash = run_hash(cfg);
        if (report.seeds.empty()) report.seeds = {cfg.seed};
    }
    write_json(dir / "report.json", report);
    write_text(dir / "summary.csv", report_summary_csv(report));
    write_text(dir / "records.csv", report_records_csv(report));
    announce(ctx, "eval", dir);
    return dir;
}

fs::path cmd_stats(const RunConfig& cfg, const Context& ctx) {
    const Dataset ds = read_dataset(need(cfg.paths.dataset, "dataset"));
    const fs::path dir = make_run_dir(ctx, "stats", cfg);
    const ClusterModel model = resolve_clusters(cfg, ds);
    const auto stats = cluster_stats(model, ds);
    write_json(dir / "clusters.json", model);
    write_json(dir / "stats.json", stats);
    write_text(dir / "stats.csv", cluster_stats_csv(stats));
    announce(ctx, "stats", dir);
    return dir;
}

void cmd_infer(const RunConfig& cfg, const Angles& head, std::ostream& os) {
    if (!is_valid(head)) throw InvalidInput("head pose out of range");
    const BranchedNet<float> net = load_model(need(cfg.paths.model, "model"));
    const EyeImage img = read_netpbm(need(cfg.paths.image, "image"));
    const auto model = model_clusters(cfg);
    if (net.config().K > 1 && !model) throw ConfigError("a branched model needs paths.clusters");

    Dataset one;
    one.manifest.width = img.width;
    one.manifest.height = img.height;
    one.manifest.channels = img.channels;
    Sample s;
    s.id = "infer";
    s.head = head;
    one.samples.push_back(s);
    one.images.push_back(img);
    const PreparedData data = prepare(one, net.config(), model ? &*model : nullptr, cfg.train.hist_eq);
    const std::size_t pos = 0;
    const Angles g = predict(net, data, std::span<const std::size_t>(&pos, 1)).front();
    os << json{{"pitch_rad", g.pitch},
               {"yaw_rad", g.yaw},
               {"pitch_deg", rad2deg(g.pitch)},
               {"yaw_deg", rad2deg(g.yaw)},
               {"cluster", data.cluster.front()}}
              .dump()
       << std::endl;
}

int run(int argc, char** argv) {
    CLI::App app{"Head-pose conditioned gaze estimation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out_dir;
    PathsSection paths;
    app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides config)");
    app.add_option("--threads", threads, "worker cap")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "parent directory for run directories");
    app.add_option("--dataset", paths.dataset);
    app.add_option("--test-dataset", paths.test_dataset);
    app.add_option("--reference", paths.reference_dataset);
    app.add_option("--pretrain-dataset", paths.pretrain_dataset);
    app.add_option("--clusters", paths.clusters);
    app.add_option("--model", paths.model);
    app.add_option("--init-model", paths.init_model);

    app.add_subcommand("synth", "generate a procedural dataset");
    app.add_subcommand("cluster", "fit head-pose clusters (optionally a K sweep)");
    app.add_subcommand("target", "subsample a dataset toward a reference distribution");
    app.add_subcommand("train", "train a gaze network");
    app.add_subcommand("eval", "evaluate a model or run a protocol");
    app.add_subcommand("stats", "per-cluster gaze statistics");
    auto* infer = app.add_subcommand("infer", "predict gaze for one image");
    std::string image;
    double head_pitch = 0.0, head_yaw = 0.0;
    bool degrees = false;
    infer->add_option("--image", image)->required();
    infer->add_option("--head-pitch", head_pitch);
    infer->add_option("--head-yaw", head_yaw);
    infer->add_flag("--degrees", degrees, "head pose given in degrees");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(config_path);
        if (seed) cfg.override_seed(*seed);
        auto set = [](std::string& dst, const std::string& src) {
            if (!src.empty()) dst = src;
        };
        set(cfg.paths.dataset, paths.dataset);
        set(cfg.paths.test_dataset, paths.test_dataset);
        set(cfg.paths.reference_dataset, paths.reference_dataset);
        set(cfg.paths.pretrain_dataset, paths.pretrain_dataset);
        set(cfg.paths.clusters, paths.clusters);
        set(cfg.paths.model, paths.model);
        set(cfg.paths.init_model, paths.init_model);
        set(cfg.paths.out, out_dir);
        set(cfg.paths.image, image);

        Context ctx;
        ctx.out_root = cfg.paths.out;
        ctx.threads = threads;

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "synth")
            cmd_synth(cfg, ctx);
        else if (cmd == "cluster")
            cmd_cluster(cfg, ctx);
        else if (cmd == "target")
            cmd_target(cfg, ctx);
        else if (cmd == "train")
            cmd_train(cfg, ctx);
        else if (cmd == "eval")
            cmd_eval(cfg, ctx);
        else if (cmd == "stats")
            cmd_stats(cfg, ctx);
        else if (cmd == "infer")
            cmd_infer(cfg, degrees ? Angles{deg2rad(head_pitch), deg2rad(head_yaw)} : Angles{head_pitch, head_yaw},
                      std::cout);
    } catch (const std::exception& e) {
        std::cerr << "gazenet: error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

}  // namespace gazenet::cli
