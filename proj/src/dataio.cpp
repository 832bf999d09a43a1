#include "gazenet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gazenet/errors.hpp"
#include "gazenet/json_io.hpp"

namespace gazenet {

namespace fs = std::filesystem;
using nlohmann::json;

void Dataset::validate() const {
    if (samples.size() != images.size())
        throw InvalidInput("dataset: " + std::to_string(samples.size()) + " samples but " +
                           std::to_string(images.size()) + " images");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto& img = images[i];
        if (!ids.insert(s.id).second) throw InvalidInput("dataset: duplicate id " + s.id);
        if (!is_valid(s.head) || !is_valid(s.gaze)) throw InvalidInput("dataset: sample " + s.id + " has invalid angles");
        if (!img.valid() || img.width != manifest.width || img.height != manifest.height ||
            img.channels != manifest.channels)
            throw InvalidInput("dataset: sample " + s.id + " image does not match declared " +
                               std::to_string(manifest.width) + "x" + std::to_string(manifest.height) + "x" +
                               std::to_string(manifest.channels));
        if (s.cluster && *s.cluster < 1) throw InvalidInput("dataset: sample " + s.id + " has cluster id < 1");
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.manifest = manifest;
    out.samples.reserve(indices.size());
    out.images.reserve(indices.size());
    for (auto i : indices) {
        out.samples.push_back(samples.at(i));
        out.images.push_back(images.at(i));
    }
    return out;
}

std::vector<int> Dataset::subjects() const {
    std::set<int> s;
    for (const auto& smp : samples) s.insert(smp.subject);
    return {s.begin(), s.end()};
}

std::string sample_to_json_line(const Sample& s) { return json(s).dump(); }

Sample sample_from_json_line(const std::string& line) { return json::parse(line).get<Sample>(); }

Dataset write_dataset(const Dataset& ds, const fs::path& root) {
    ds.validate();
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ds.samples[a].id < ds.samples[b].id; });
    Dataset out = ds.subset(order);

    std::error_code ec;
    fs::create_directories(root / "images", ec);
    if (ec) throw IoError("cannot create " + (root / "images").string() + ": " + ec.message());
    const std::string ext = ds.manifest.channels == 1 ? ".pgm" : ".ppm";

    std::ofstream index(root / "index.jsonl", std::ios::binary);
    if (!index) throw IoError("cannot write " + (root / "index.jsonl").string());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& s = out.samples[i];
        const auto expected = fs::path(s.image_path).extension().string();
        if (s.image_path.empty() || expected != ext) s.image_path = "images/" + s.id + ext;
        if (s.image_path.find("..") != std::string::npos || fs::path(s.image_path).is_absolute())
            throw InvalidInput("dataset: image path of " + s.id + " must be root-relative");
        write_netpbm(root / s.image_path, out.images[i]);
        index << sample_to_json_line(s) << '\n';
    }
    if (!index) throw IoError("write failed: " + (root / "index.jsonl").string());

    json manifest = out.manifest;
    manifest["count"] = out.size();
    std::ofstream mf(root / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("write failed: " + (root / "manifest.json").string());
    return out;
}

Dataset read_dataset(const fs::path& root) {
    Dataset ds;
    {
        std::ifstream mf(root / "manifest.json");
        if (!mf) throw IoError("missing " + (root / "manifest.json").string());
        json m;
        try {
            m = json::parse(mf);
        } catch (const json::exception& e) {
            throw FormatError("manifest.json: " + std::string(e.what()));
        }
        ds.manifest = m.get<DatasetManifest>();
        if (ds.manifest.version != kFormatVersion)
            throw FormatError("manifest.json: unknown version '" + ds.manifest.version + "'");
    }
    std::ifstream index(root / "index.jsonl");
    if (!index) throw IoError("missing " + (root / "index.jsonl").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(index, line)) {
        ++lineno;
        if (line.empty()) continue;
        Sample s;
        try {
            s = sample_from_json_line(line);
        } catch (const std::exception& e) {
            throw FormatError("index.jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
        EyeImage img;
        try {
            img = read_netpbm(root / s.image_path);
        } catch (const Error& e) {
            throw FormatError("sample " + s.id + ": " + e.what());
        }
        ds.samples.push_back(std::move(s));
        ds.images.push_back(std::move(img));
    }
    ds.validate();
    return ds;
}

IngestSpec IngestSpec::identity_columns() {
    IngestSpec s;
    for (const char* k : {"id", "subject", "side", "image", "head_pitch", "head_yaw", "gaze_pitch", "gaze_yaw"})
        s.columns[k] = k;
    return s;
}

namespace {

std::vector<std::string> split_row(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, delim)) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t b = 0;
        while (b < cell.size() && cell[b] == ' ') ++b;
        out.push_back(cell.substr(b));
    }
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

}  // namespace

Dataset ingest_external(const fs::path& dir, const IngestSpec& spec) {
    if (fs::exists(dir / "index.jsonl") && fs::exists(dir / "manifest.json")) return read_dataset(dir);

    for (const char* req : {"image", "head_pitch", "head_yaw", "gaze_pitch", "gaze_yaw", "subject"})
        if (!spec.columns.count(req)) throw ConfigError(std::string("ingest: required field '") + req + "' is unmapped");
    if (!spec.columns.count("side") && !spec.default_side)
        throw ConfigError("ingest: map a 'side' column or set default_side");

    std::ifstream table(dir / spec.table);
    if (!table) throw IoError("ingest: cannot open " + (dir / spec.table).string());
    std::string line;
    if (!std::getline(table, line)) throw FormatError("ingest: label table is empty");
    const auto header = split_row(line, spec.delimiter);
    std::map<std::string, std::size_t> col;
    for (const auto& [field, name] : spec.columns) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("ingest: column '" + name + "' (for " + field + ") not in table");
        col[field] = static_cast<std::size_t>(it - header.begin());
    }

    Dataset ds;
    std::size_t lineno = 1;
    while (std::getline(table, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto row = split_row(line, spec.delimiter);
        auto cell = [&](const std::string& field) -> const std::string& {
            const auto c = col.at(field);
            if (c >= row.size()) throw FormatError("ingest: line " + std::to_string(lineno) + " is missing " + field);
            return row[c];
        };
        auto number = [&](const std::string& field) {
            const std::string& v = cell(field);
            double x;
            try {
                std::size_t used = 0;
                x = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw FormatError("ingest: line " + std::to_string(lineno) + ": bad number '" + v + "' for " + field);
            }
            if (!spec.degrees && std::abs(x) > kPi)
                throw InvalidInput("ingest: line " + std::to_string(lineno) + ": " + field + " = " + v +
                                   " exceeds pi; the table looks like degrees (set degrees mode)");
            return spec.degrees ? deg2rad(x) : x;
        };

        Sample s;
        s.subject = std::stoi(cell("subject"));
        const std::string side = col.count("side") ? cell("side") : *spec.default_side;
        if (side == "L" || side == "l" || side == "left")
            s.side = EyeSide::Left;
        else if (side == "R" || side == "r" || side == "right")
            s.side = EyeSide::Right;
        else
            throw FormatError("ingest: line " + std::to_string(lineno) + ": unknown eye side '" + side + "'");
        s.head = {number("head_pitch"), number("head_yaw")};
        s.gaze = {number("gaze_pitch"), number("gaze_yaw")};
        EyeImage img = read_netpbm(dir / cell("image"));
        if (s.side == EyeSide::Right && spec.mirror_right) {
            std::tie(img, s.head, s.gaze) = mirror_sample(img, s.head, s.gaze);
            s.mirrored = true;
        }
        if (col.count("id")) {
            s.id = cell("id");
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "x%07zu", ds.size());
            s.id = buf;
        }
        s.image_path = std::string("images/") + s.id + (img.channels == 1 ? ".pgm" : ".ppm");
        if (ds.empty()) {
            ds.manifest.width = img.width;
            ds.manifest.height = img.height;
            ds.manifest.channels = img.channels;
        }
        ds.samples.push_back(std::move(s));
        ds.images.push_back(std::move(img));
    }
    ds.validate();
    return ds;
}

Dataset resize_dataset(const Dataset& ds, int width, int height) {
    Dataset out = ds;
    if (ds.manifest.width == width && ds.manifest.height == height) return out;
    out.manifest.width = width;
    out.manifest.height = height;
    out.manifest.resized_from = std::to_string(ds.manifest.width) + "x" + std::to_string(ds.manifest.height);
    for (auto& img : out.images) img = resize_bilinear(img, width, height);
    return out;
}

}  // namespace gazenet
