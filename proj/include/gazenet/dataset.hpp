#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gazenet/geometry.hpp"
#include "gazenet/image.hpp"

namespace gazenet {

inline constexpr const char* kFormatVersion = "gazenet-1";

enum class EyeSide { Left, Right };

struct Sample {
    std::string id;
    int subject = 0;
    EyeSide side = EyeSide::Left;  // as captured, before any mirroring
    Angles head;
    Angles gaze;
    std::optional<int> cluster;  // 1-based
    std::string image_path;      // root-relative, forward slashes
    std::optional<double> illum;
    std::optional<Angles> eye_in_head;  // synthetic data only
    bool mirrored = false;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetManifest {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::string version = kFormatVersion;
    std::string generator_hash;  // hex digest of the producing config, if any
    std::optional<std::string> resized_from;  // "WxH" when an explicit resize was applied

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// In-memory dataset: samples[i] is paired with images[i].
struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
    std::vector<EyeImage> images;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    /// Checks the pairing, dims, unique ids and angle validity; throws InvalidInput.
    void validate() const;

    /// New dataset holding the given sample positions, in the given order.
    Dataset subset(const std::vector<std::size_t>& indices) const;

    /// Sorted distinct subject ids.
    std::vector<int> subjects() const;
};

}  // namespace gazenet
