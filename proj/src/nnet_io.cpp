#include "gazenet/nnet_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "gazenet/errors.hpp"
#include "gazenet/json_io.hpp"

namespace gazenet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "model blobs are written in native little-endian order");

namespace {

fs::path blob_path(const fs::path& manifest_path) {
    fs::path p = manifest_path;
    p.replace_extension(".bin");
    return p;
}

struct Manifest {
    NetConfig net;
    std::string blob;
    std::uint64_t blob_bytes = 0;
    std::vector<std::tuple<std::string, std::vector<int>, std::uint64_t>> table;  // name, shape, offset
};

Manifest read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open model manifest " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError("model manifest: " + std::string(e.what()));
    }
    try {
        const auto version = j.at("version").get<std::string>();
        if (version != kModelFormatVersion) throw FormatError("model manifest: unknown version '" + version + "'");
        Manifest m;
        m.net = j.at("net").get<NetConfig>();
        m.blob = j.at("blob").get<std::string>();
        m.blob_bytes = j.at("blob_bytes").get<std::uint64_t>();
        for (const auto& t : j.at("tensors"))
            m.table.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(),
                                 t.at("offset").get<std::uint64_t>());
        return m;
    } catch (const json::exception& e) {
        throw FormatError("model manifest: " + std::string(e.what()));
    }
}

std::vector<NamedTensor> read_tensors(const fs::path& manifest_path, const Manifest& m) {
    const fs::path bp = manifest_path.parent_path() / m.blob;
    std::ifstream f(bp, std::ios::binary);
    if (!f) throw IoError("cannot open model blob " + bp.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() != m.blob_bytes)
        throw FormatError("model blob has " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                          std::to_string(m.blob_bytes));
    std::vector<NamedTensor> out;
    std::uint64_t expected_offset = 0;
    for (const auto& [name, shape, offset] : m.table) {
        for (int d : shape)
            if (d < 1) throw FormatError("model manifest: tensor " + name + " has a non-positive dimension");
        Tensor<float> t(shape);
        const std::uint64_t nbytes = t.numel() * sizeof(float);
        if (offset != expected_offset || offset + nbytes > bytes.size())
            throw FormatError("model manifest: tensor " + name + " offset/size does not fit the blob");
        std::memcpy(t.data.data(), bytes.data() + offset, nbytes);
        expected_offset = offset + nbytes;
        out.push_back({name, std::move(t)});
    }
    if (expected_offset != bytes.size()) throw FormatError("model blob length does not match the tensor table");
    return out;
}

}  // namespace

void save_model(const BranchedNet<float>& net, const fs::path& manifest_path) {
    const auto& P = net.params();
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        tensors.push_back({{"name", P.name(i)}, {"shape", P.tensor(i).shape}, {"offset", offset}});
        offset += P.tensor(i).numel() * sizeof(float);
    }
    const fs::path bp = blob_path(manifest_path);
    json j = {{"version", kModelFormatVersion},
              {"net", net.config()},
              {"blob", bp.filename().string()},
              {"blob_bytes", offset},
              {"tensors", tensors}};
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    {
        std::ofstream f(bp, std::ios::binary);
        if (!f) throw IoError("cannot write " + bp.string());
        for (std::size_t i = 0; i < P.size(); ++i)
            f.write(reinterpret_cast<const char*>(P.tensor(i).data.data()),
                    static_cast<std::streamsize>(P.tensor(i).numel() * sizeof(float)));
        if (!f) throw IoError("write failed: " + bp.string());
    }
    std::ofstream f(manifest_path, std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("write failed: " + manifest_path.string());
}

std::vector<NamedTensor> read_model_tensors(const fs::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    return read_tensors(manifest_path, m);
}

BranchedNet<float> load_model(const fs::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    BranchedNet<float> net(m.net);
    auto tensors = read_tensors(manifest_path, m);
    if (tensors.size() != net.params().size())
        throw FormatError("model manifest lists " + std::to_string(tensors.size()) + " tensors, net config implies " +
                          std::to_string(net.params().size()));
    for (auto& nt : tensors) {
        auto* dst = net.params().find(nt.name);
        if (!dst) throw FormatError("model manifest: unexpected tensor " + nt.name);
        if (dst->shape != nt.tensor.shape) throw FormatError("model manifest: shape mismatch for tensor " + nt.name);
        dst->data = std::move(nt.tensor.data);
    }
    return net;
}

LoadReport partial_load(BranchedNet<float>& net, const fs::path& donor_manifest,
                        const std::map<std::string, std::string>& name_map) {
    LoadReport report;
    for (auto& nt : read_model_tensors(donor_manifest)) {
        auto it = name_map.find(nt.name);
        const std::string target = it == name_map.end() ? nt.name : it->second;
        auto* dst = net.params().find(target);
        if (!dst) {
            report.unmatched.push_back(nt.name);
        } else if (dst->shape != nt.tensor.shape) {
            report.skipped.push_back(nt.name);
        } else {
            dst->data = std::move(nt.tensor.data);
            report.transferred.push_back(nt.name);
        }
    }
    return report;
}

}  // namespace gazenet
