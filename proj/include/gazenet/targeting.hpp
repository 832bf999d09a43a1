#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gazenet/dataset.hpp"

namespace gazenet {

/// Binning used to match a source dataset to a reference distribution.
/// Bins are bin_deg wide and span [-90, 90) degrees on each axis.
struct TargetingSpec {
    double bin_deg = 5.0;
    bool joint_gaze = false;   // also bin gaze (pitch, yaw)
    double gaze_bin_deg = 10.0;
    double max_keep_ratio = 1.0;

    void validate() const;
    std::size_t bin_count() const;
    /// Flat bin index of a sample.
    std::size_t bin_of(const Sample& s) const;
};

/// Normalized histogram of the dataset over the bins of `spec`.
std::vector<double> pose_histogram(const Dataset& ds, const TargetingSpec& spec);

/// Symmetric chi-square distance 0.5 * sum (p - q)^2 / (p + q), in [0, 1]
/// for normalized histograms.
double chi2_distance(std::span<const double> p, std::span<const double> q);

struct TargetingReport {
    std::vector<double> keep_probability;  // per bin
    std::size_t kept = 0;
    std::size_t source = 0;
};

/// Rejection subsampling: each source sample survives with probability
/// max_keep_ratio * r(bin) / max r, where r = target density / source
/// density. Output is an order-preserving subset of `source`. Throws
/// TargetingInfeasible when no occupied bins overlap.
Dataset target_dataset(const Dataset& source, const Dataset& reference, const TargetingSpec& spec, std::uint64_t seed,
                       TargetingReport* report = nullptr);

}  // namespace gazenet
