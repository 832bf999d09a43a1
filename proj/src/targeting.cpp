#include "gazenet/targeting.hpp"

#include <algorithm>
#include <cmath>

#include "gazenet/errors.hpp"
#include "gazenet/rng.hpp"

namespace gazenet {

namespace {

std::size_t axis_bins(double width) { return static_cast<std::size_t>(std::ceil(180.0 / width)); }

std::size_t axis_index(double radians, double width) {
    const auto n = static_cast<long>(axis_bins(width));
    const long b = static_cast<long>(std::floor((rad2deg(radians) + 90.0) / width));
    return static_cast<std::size_t>(std::clamp(b, 0L, n - 1));
}

}  // namespace

void TargetingSpec::validate() const {
    if (!(bin_deg > 0.0 && bin_deg <= 180.0)) throw ConfigError("targeting: bin_deg must be in (0, 180]");
    if (joint_gaze && !(gaze_bin_deg > 0.0 && gaze_bin_deg <= 180.0))
        throw ConfigError("targeting: gaze_bin_deg must be in (0, 180]");
    if (!(max_keep_ratio > 0.0 && max_keep_ratio <= 1.0)) throw ConfigError("targeting: max_keep_ratio must be in (0, 1]");
}

std::size_t TargetingSpec::bin_count() const {
    std::size_t n = axis_bins(bin_deg) * axis_bins(bin_deg);
    if (joint_gaze) n *= axis_bins(gaze_bin_deg) * axis_bins(gaze_bin_deg);
    return n;
}

std::size_t TargetingSpec::bin_of(const Sample& s) const {
    const std::size_t nb = axis_bins(bin_deg);
    std::size_t idx = axis_index(s.head.pitch, bin_deg) * nb + axis_index(s.head.yaw, bin_deg);
    if (joint_gaze) {
        const std::size_t ng = axis_bins(gaze_bin_deg);
        idx = (idx * ng + axis_index(s.gaze.pitch, gaze_bin_deg)) * ng + axis_index(s.gaze.yaw, gaze_bin_deg);
    }
    return idx;
}

std::vector<double> pose_histogram(const Dataset& ds, const TargetingSpec& spec) {
    spec.validate();
    std::vector<double> h(spec.bin_count(), 0.0);
    for (const auto& s : ds.samples) h[spec.bin_of(s)] += 1.0;
    if (!ds.empty())
        for (auto& v : h) v /= static_cast<double>(ds.size());
    return h;
}

double chi2_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidInput("chi2_distance: histogram sizes differ");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double s = p[i] + q[i];
        if (s > 0.0) d += (p[i] - q[i]) * (p[i] - q[i]) / s;
    }
    return 0.5 * d;
}

Dataset target_dataset(const Dataset& source, const Dataset& reference, const TargetingSpec& spec, std::uint64_t seed,
                       TargetingReport* report) {
    spec.validate();
    if (source.empty()) throw InvalidInput("targeting: source dataset is empty");
    if (reference.empty()) throw InvalidInput("targeting: reference dataset is empty");
    const auto src = pose_histogram(source, spec);
    const auto ref = pose_histogram(reference, spec);

    std::vector<double> ratio(src.size(), 0.0);
    double max_ratio = 0.0;
    for (std::size_t b = 0; b < src.size(); ++b) {
        if (src[b] > 0.0 && ref[b] > 0.0) {
            ratio[b] = ref[b] / src[b];
            max_ratio = std::max(max_ratio, ratio[b]);
        }
    }
    if (max_ratio <= 0.0) throw TargetingInfeasible("targeting: source and reference share no occupied bins");
    for (auto& r : ratio) r = spec.max_keep_ratio * r / max_ratio;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const double u = Philox::uniform(seed, streams::kTarget, static_cast<std::uint32_t>(i), 0);
        if (u < ratio[spec.bin_of(source.samples[i])]) keep.push_back(i);
    }
    if (report) {
        report->keep_probability = ratio;
        report->kept = keep.size();
        report->source = source.size();
    }
    Dataset out = source.subset(keep);
    return out;
}

}  // namespace gazenet
