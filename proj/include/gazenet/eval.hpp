#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazenet/clustering.hpp"
#include "gazenet/dataset.hpp"
#include "gazenet/nnet.hpp"
#include "gazenet/targeting.hpp"
#include "gazenet/train.hpp"

namespace gazenet {

struct SampleRecord {
    std::string id;
    int subject = 0;
    int cluster = 1;
    int fold = 0;
    Angles pred;
    Angles label;
    double error_deg = 0.0;
    bool excluded = false;  // dropped by the opt-in outlier filter
};

struct Aggregate {
    std::size_t count = 0;
    double mean = 0.0;
};

struct EvalReport {
    std::string protocol = "holdout";
    int K = 1;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> meta;

    std::vector<SampleRecord> records;
    // derived by finalize()
    double overall_mean = 0.0;          // pooled over samples (headline)
    double subject_mean = 0.0;          // mean of per-subject means
    std::map<int, Aggregate> per_cluster;
    std::map<int, Aggregate> per_subject;
    std::map<int, Aggregate> per_fold;

    /// Recomputes every aggregate from the non-excluded records.
    void finalize();
    void append(const EvalReport& other);
};

struct EvalOptions {
    bool hist_eq = false;
    /// Opt-in: exclude samples whose error exceeds this from aggregates.
    std::optional<double> exclude_above_deg;
};

/// Any gaze predictor; cluster_id is the sample's head-pose cluster.
using Predictor = std::function<Angles(const Sample&, const EyeImage&, int cluster_id)>;

/// Per-sample angular errors and aggregates. Clusters come from `model`
/// when given, else from stored ids, else 1.
EvalReport evaluate(const Predictor& predictor, const Dataset& ds, const ClusterModel* model,
                    const EvalOptions& opts = {});
EvalReport evaluate(const BranchedNet<float>& net, const Dataset& ds, const ClusterModel* model,
                    const EvalOptions& opts = {});

/// Everything needed to train one model inside a protocol fold.
struct ExperimentConfig {
    NetConfig net;            // K is replaced by the cluster count (branched) or 1
    bool branched = true;
    TrainConfig train;
    KMeansOptions cluster;
    std::vector<Angles> fixed_centroids;          // used instead of k-means when non-empty
    std::optional<std::filesystem::path> init_model;  // transfer initialization donor
    std::uint64_t seed = 1;
    EvalOptions eval;

    std::string hash() const;
};

/// Trains on `train` (clusters refit on it) and evaluates on `test`.
EvalReport train_and_evaluate(const Dataset& train, const Dataset& test, const ExperimentConfig& exp, int fold = 0);

/// Fit clusters for a fold: fixed centroids or k-means on the train poses.
ClusterModel fold_clusters(const Dataset& train, const ExperimentConfig& exp);

struct ProtocolSpec {
    enum class Kind { Holdout, Loso, KFold, PersonSpecific };
    Kind kind = Kind::Holdout;
    std::vector<int> test_subjects;  // Holdout
    int folds = 3;                   // KFold
    int repeats = 1;                 // KFold
    double train_frac = 0.8;         // PersonSpecific
};

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Index splits for a protocol; exposed for structural checks.
std::vector<FoldSplit> protocol_splits(const Dataset& ds, const ProtocolSpec& spec, std::uint64_t seed);

EvalReport run_protocol(const Dataset& ds, const ExperimentConfig& exp, const ProtocolSpec& spec);

EvalReport holdout_protocol(const Dataset& ds, const std::vector<int>& test_subjects, const ExperimentConfig& exp);
EvalReport loso_protocol(const Dataset& ds, const ExperimentConfig& exp);
EvalReport kfold_subjects_protocol(const Dataset& ds, int folds, int repeats, const ExperimentConfig& exp);
EvalReport person_specific_protocol(const Dataset& ds, double train_frac, const ExperimentConfig& exp);

/// Train on `source`, test on `target`. With a targeting spec the source is
/// first subsampled toward `reference` (the target itself when null).
EvalReport cross_dataset_protocol(const Dataset& source, const Dataset& target, const ExperimentConfig& exp,
                                  const std::optional<TargetingSpec>& targeting = std::nullopt,
                                  const Dataset* reference = nullptr);

/// Head-pose input x branching grid, cell order:
/// (eye, single), (eye, branched), (eye+pose, single), (eye+pose, branched).
struct AblationGrid {
    std::array<EvalReport, 4> cells;
    static constexpr std::array<const char*, 4> kInput{"eye", "eye", "eye+pose", "eye+pose"};
    static constexpr std::array<const char*, 4> kHeads{"single", "branched", "single", "branched"};
};

AblationGrid ablation_grid(const Dataset& ds, const ExperimentConfig& exp, const ProtocolSpec& spec);

/// scope,key,count,mean_error_deg rows (overall, cluster, subject, fold).
std::string report_summary_csv(const EvalReport& r);
std::string report_records_csv(const EvalReport& r);
/// input,fc7_8,cluster_1..cluster_K,overall rows.
std::string ablation_table_csv(const AblationGrid& g);

}  // namespace gazenet
