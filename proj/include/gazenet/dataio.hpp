#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "gazenet/dataset.hpp"

namespace gazenet {

/// Writes root/manifest.json, root/index.jsonl and root/images/*. Samples are
/// written in id order; the returned dataset reflects that order.
Dataset write_dataset(const Dataset& ds, const std::filesystem::path& root);

/// Reads and eagerly validates a container.
Dataset read_dataset(const std::filesystem::path& root);

/// One JSONL index row for a sample (no trailing newline).
std::string sample_to_json_line(const Sample& s);
Sample sample_from_json_line(const std::string& line);

/// Column mapping for ingest_external. Keys of `columns` are the native
/// field names: id, subject, side, image, head_pitch, head_yaw, gaze_pitch,
/// gaze_yaw. Values are header names in the label table.
struct IngestSpec {
    std::string table = "labels.csv";
    char delimiter = ',';
    std::map<std::string, std::string> columns;
    bool degrees = false;       // table angles are degrees; converted to radians
    bool mirror_right = true;   // mirror R eyes into L-eye form
    std::optional<std::string> default_side;  // used when no side column is mapped

    static IngestSpec identity_columns();
};

/// Converts a directory of netpbm images plus a delimited label table into
/// a native dataset. A directory that already holds a native container is
/// read as-is.
Dataset ingest_external(const std::filesystem::path& dir, const IngestSpec& spec);

/// Explicit bilinear resize of every image; recorded in the manifest.
Dataset resize_dataset(const Dataset& ds, int width, int height);

}  // namespace gazenet
