#include "gazenet/config.hpp"

#include <fstream>

#include "gazenet/errors.hpp"
#include "gazenet/json_io.hpp"

namespace gazenet {

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == key;
        if (!ok) throw ConfigError(what + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    try {
        reject_unknown(j, {"synth", "cluster", "net", "train", "targeting", "eval", "paths", "seed"}, "config");
        read_opt(j, "seed", c.seed);
        c.synth.seed = c.cluster.kmeans.seed = c.train.seed = c.seed;

        if (j.contains("synth")) j["synth"].get_to(c.synth);

        if (j.contains("cluster")) {
            const json& s = j["cluster"];
            reject_unknown(s, {"K", "max_iter", "n_restarts", "seed", "fixed_centroids_deg", "sweep"}, "cluster");
            json km = s;
            km.erase("fixed_centroids_deg");
            km.erase("sweep");
            km.get_to(c.cluster.kmeans);
            if (s.contains("fixed_centroids_deg")) {
                for (const auto& p : s["fixed_centroids_deg"]) {
                    if (!p.is_array() || p.size() != 2)
                        throw ConfigError("cluster.fixed_centroids_deg: expected [pitch, yaw] pairs");
                    c.cluster.fixed_centroids.push_back(
                        Angles{deg2rad(p[0].get<double>()), deg2rad(p[1].get<double>())});
                }
            }
            read_opt(s, "sweep", c.cluster.sweep);
        }

        if (j.contains("net")) j["net"].get_to(c.net);

        if (j.contains("train")) {
            json t = j["train"];
            if (!t.is_object()) throw ConfigError("train: expected an object");
            if (t.contains("pretrain_epochs")) {
                c.pretrain_epochs = t["pretrain_epochs"].get<int>();
                t.erase("pretrain_epochs");
            }
            t.get_to(c.train);
        }

        if (j.contains("targeting")) j["targeting"].get_to(c.targeting);

        if (j.contains("eval")) {
            const json& s = j["eval"];
            reject_unknown(s,
                           {"protocol", "test_subjects", "folds", "repeats", "train_frac", "ablation", "branched",
                            "exclude_above_deg", "baseline", "targeted"},
                           "eval");
            json p = json::object();
            for (const char* k : {"protocol", "test_subjects", "folds", "repeats", "train_frac"})
                if (s.contains(k)) p[k] = s[k];
            p.get_to(c.eval.protocol);
            read_opt(s, "ablation", c.eval.ablation);
            read_opt(s, "branched", c.eval.branched);
            if (s.contains("exclude_above_deg") && !s["exclude_above_deg"].is_null())
                c.eval.exclude_above_deg = s["exclude_above_deg"].get<double>();
            read_opt(s, "baseline", c.eval.baseline);
            read_opt(s, "targeted", c.eval.targeted);
        }

        if (j.contains("paths")) {
            const json& s = j["paths"];
            reject_unknown(s,
                           {"dataset", "test_dataset", "reference_dataset", "pretrain_dataset", "clusters", "model",
                            "init_model", "image", "out"},
                           "paths");
            read_opt(s, "dataset", c.paths.dataset);
            read_opt(s, "test_dataset", c.paths.test_dataset);
            read_opt(s, "reference_dataset", c.paths.reference_dataset);
            read_opt(s, "pretrain_dataset", c.paths.pretrain_dataset);
            read_opt(s, "clusters", c.paths.clusters);
            read_opt(s, "model", c.paths.model);
            read_opt(s, "init_model", c.paths.init_model);
            read_opt(s, "image", c.paths.image);
            read_opt(s, "out", c.paths.out);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json centers = json::array();
    for (const auto& a : cluster.fixed_centroids) centers.push_back(json::array({rad2deg(a.pitch), rad2deg(a.yaw)}));
    json cl = cluster.kmeans;
    cl["fixed_centroids_deg"] = centers;
    cl["sweep"] = cluster.sweep;

    json tr = train;
    tr["pretrain_epochs"] = pretrain_epochs;

    json ev = eval.protocol;
    ev["ablation"] = eval.ablation;
    ev["branched"] = eval.branched;
    ev["exclude_above_deg"] = eval.exclude_above_deg ? json(*eval.exclude_above_deg) : json(nullptr);
    ev["baseline"] = eval.baseline;
    ev["targeted"] = eval.targeted;

    json pa{{"dataset", paths.dataset},
            {"test_dataset", paths.test_dataset},
            {"reference_dataset", paths.reference_dataset},
            {"pretrain_dataset", paths.pretrain_dataset},
            {"clusters", paths.clusters},
            {"model", paths.model},
            {"init_model", paths.init_model},
            {"image", paths.image},
            {"out", paths.out}};

    return json{{"seed", seed},     {"synth", synth},         {"cluster", cl}, {"net", net},
                {"train", tr},      {"targeting", targeting}, {"eval", ev},    {"paths", pa}};
}

void RunConfig::override_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    cluster.kmeans.seed = s;
    train.seed = s;
}

void RunConfig::validate() const {
    synth.validate();
    train.validate();
    targeting.validate();
    try {
        net.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(std::string("net: ") + e.what());
    }
    if (cluster.kmeans.K < 1) throw ConfigError("cluster.K must be >= 1");
    if (cluster.kmeans.max_iter < 1 || cluster.kmeans.n_restarts < 1)
        throw ConfigError("cluster.max_iter and cluster.n_restarts must be >= 1");
    for (int k : cluster.sweep)
        if (k < 1) throw ConfigError("cluster.sweep values must be >= 1");
    if (pretrain_epochs < 0) throw ConfigError("train.pretrain_epochs must be >= 0");
    if (eval.baseline != "none" && eval.baseline != "zero" && eval.baseline != "label")
        throw ConfigError("eval.baseline must be none, zero or label");
}

ExperimentConfig RunConfig::experiment() const {
    ExperimentConfig e;
    e.net = net;
    e.branched = eval.branched;
    e.train = train;
    e.cluster = cluster.kmeans;
    e.fixed_centroids = cluster.fixed_centroids;
    if (!paths.init_model.empty()) e.init_model = paths.init_model;
    e.seed = seed;
    e.eval.hist_eq = train.hist_eq;
    e.eval.exclude_above_deg = eval.exclude_above_deg;
    return e;
}

}  // namespace gazenet
