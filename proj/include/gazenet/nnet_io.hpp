#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gazenet/nnet.hpp"

namespace gazenet {

inline constexpr const char* kModelFormatVersion = "gazenet-model-1";

/// Writes `manifest_path` (JSON: version, net config, tensor table with
/// name/shape/byte offset) and a sibling blob `<manifest stem>.bin` of
/// little-endian float32 values in table order.
void save_model(const BranchedNet<float>& net, const std::filesystem::path& manifest_path);

/// Throws FormatError on unknown version, blob size mismatch or a tensor
/// whose shape disagrees with the stored net config.
BranchedNet<float> load_model(const std::filesystem::path& manifest_path);

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

/// Raw tensors of a model file, without building a net from them.
std::vector<NamedTensor> read_model_tensors(const std::filesystem::path& manifest_path);

struct LoadReport {
    std::vector<std::string> transferred;
    std::vector<std::string> skipped;    // shape mismatch
    std::vector<std::string> unmatched;  // mapped name absent from the net
};

/// Copies donor tensors into `net` by (mapped) name when shapes agree.
/// name_map renames donor tensors; unmapped names are used as-is.
LoadReport partial_load(BranchedNet<float>& net, const std::filesystem::path& donor_manifest,
                        const std::map<std::string, std::string>& name_map = {});

}  // namespace gazenet
