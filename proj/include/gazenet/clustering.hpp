#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazenet/dataset.hpp"
#include "gazenet/geometry.hpp"

namespace gazenet {

inline constexpr const char* kClusterModelVersion = "gazenet-clusters-1";

/// K unit-vector centroids over head-pose directions. Cluster ids are 1-based.
struct ClusterModel {
    std::vector<UnitVec3> centroids;
    std::string version = kClusterModelVersion;

    int K() const { return static_cast<int>(centroids.size()); }

    /// Nearest centroid by cosine distance; ties go to the lowest id.
    int assign(const Angles& pose) const;
    int assign(const UnitVec3& v) const;

    Angles centroid_angles(int cluster_id) const;

    /// Model with fixed, user-supplied centroids (e.g. discrete capture yaws).
    static ClusterModel from_centroids(std::span<const Angles> centers);

    /// Throws InvalidInput if empty, non-unit or duplicated.
    void validate() const;
};

struct KMeansOptions {
    int K = 7;
    int max_iter = 100;
    int n_restarts = 10;
    std::uint64_t seed = 1;
};

struct KMeansResult {
    ClusterModel model;
    double objective = 0.0;              // sum of cosine distances to assigned centroid
    std::vector<int> assignment;         // 1-based, parallel to input poses
    std::vector<double> objective_trace;  // per Lloyd iteration of the winning restart
    int best_restart = 0;
};

/// Lloyd's k-means on the unit sphere with cosine distance and k-means++
/// seeding. Returns the best of n_restarts. Throws InvalidInput on empty
/// input or when K exceeds the number of distinct directions.
KMeansResult fit_kmeans(std::span<const Angles> poses, const KMeansOptions& opt);

/// Optional restart observer used by tests: receives every restart's trace.
KMeansResult fit_kmeans(std::span<const Angles> poses, const KMeansOptions& opt,
                        std::vector<std::vector<double>>* all_traces);

/// Sum over points of cosine_distance to their assigned centroid.
double kmeans_objective(std::span<const Angles> poses, const ClusterModel& model);

struct ClusterStats {
    int cluster_id = 0;
    std::size_t count = 0;
    Angles head_centroid;                  // from the model centroid
    std::optional<Angles> gaze_mean;       // radians
    std::optional<std::array<double, 4>> gaze_cov;  // row-major 2x2 over (pitch, yaw), radians^2
    std::vector<std::uint32_t> histogram;  // gaze pitch rows x yaw cols, 2-degree bins over [-90, 90]^2
};

inline constexpr double kStatsBinDeg = 2.0;
inline constexpr int kStatsBins = 90;

/// Per-cluster gaze statistics, using stored cluster ids when present.
std::vector<ClusterStats> cluster_stats(const ClusterModel& model, const Dataset& ds);

/// Writes one CSV row per cluster.
std::string cluster_stats_csv(const std::vector<ClusterStats>& stats);

}  // namespace gazenet
