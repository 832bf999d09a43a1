#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazenet/clustering.hpp"
#include "gazenet/eval.hpp"
#include "gazenet/nnet.hpp"
#include "gazenet/synthcam.hpp"
#include "gazenet/targeting.hpp"
#include "gazenet/train.hpp"

namespace gazenet {

struct ClusterSection {
    KMeansOptions kmeans;
    std::vector<Angles> fixed_centroids;  // radians; JSON carries degrees
    std::vector<int> sweep;               // K values for the objective-vs-K table
};

struct EvalSection {
    ProtocolSpec protocol;
    bool ablation = false;
    bool branched = true;
    std::optional<double> exclude_above_deg;
    std::string baseline = "none";  // none | zero | label
    bool targeted = false;          // cross-dataset runs: target the source first
};

struct PathsSection {
    std::string dataset;
    std::string test_dataset;
    std::string reference_dataset;
    std::string pretrain_dataset;
    std::string clusters;
    std::string model;
    std::string init_model;
    std::string image;
    std::string out = "runs";
};

/// One JSON document with sections synth, cluster, net, train, targeting,
/// eval, paths and a master seed. Section seeds default to the master seed.
struct RunConfig {
    SynthConfig synth;
    ClusterSection cluster;
    NetConfig net = NetConfig::reduced();
    TrainConfig train;
    int pretrain_epochs = 0;  // train.pretrain_epochs
    TargetingSpec targeting;
    EvalSection eval;
    PathsSection paths;
    std::uint64_t seed = 1;

    /// Throws ConfigError on unknown keys or bad values.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Sets the master seed and every section seed.
    void override_seed(std::uint64_t s);
    void validate() const;

    ExperimentConfig experiment() const;
};

}  // namespace gazenet
