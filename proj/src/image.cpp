#include "gazenet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "gazenet/errors.hpp"

namespace gazenet {

EyeImage::EyeImage(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

EyeImage flip_horizontal(const EyeImage& img) {
    EyeImage out(img.width, img.height, img.channels);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch)
                out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
    return out;
}

double mean_intensity(const EyeImage& img) {
    if (img.data.empty()) return 0.0;
    double sum = 0.0;
    for (auto v : img.data) sum += v;
    return sum / static_cast<double>(img.data.size());
}

std::vector<std::uint8_t> encode_netpbm(const EyeImage& img) {
    if (!img.valid()) throw InvalidInput("encode_netpbm: malformed image");
    std::string header = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) +
                         " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
        tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
}

int parse_positive(const std::string& tok, const char* what) {
    try {
        std::size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("netpbm: bad ") + what + " '" + tok + "'");
    }
}

}  // namespace

EyeImage decode_netpbm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    const std::string magic = next_token(bytes, pos);
    int channels = 0;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw FormatError("netpbm: unsupported magic '" + magic + "'");
    const int w = parse_positive(next_token(bytes, pos), "width");
    const int h = parse_positive(next_token(bytes, pos), "height");
    const int maxval = parse_positive(next_token(bytes, pos), "maxval");
    if (maxval != 255) throw FormatError("netpbm: only maxval 255 is supported");
    // exactly one whitespace byte separates the header from the raster
    if (pos >= bytes.size()) throw FormatError("netpbm: missing raster");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - pos != need)
        throw FormatError("netpbm: raster has " + std::to_string(bytes.size() - pos) +
                          " bytes, expected " + std::to_string(need));
    EyeImage img(w, h, channels);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.data.begin());
    return img;
}

void write_netpbm(const std::filesystem::path& path, const EyeImage& img) {
    auto bytes = encode_netpbm(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

EyeImage read_netpbm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_netpbm(bytes);
}

EyeImage resize_bilinear(const EyeImage& img, int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidInput("resize: target dims must be positive");
    EyeImage out(width, height, img.channels);
    const double sx = static_cast<double>(img.width) / width;
    const double sy = static_cast<double>(img.height) / height;
    for (int r = 0; r < height; ++r) {
        double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = fy - y0;
        for (int c = 0; c < width; ++c) {
            double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = fx - x0;
            for (int ch = 0; ch < img.channels; ++ch) {
                double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch)) +
                           wy * ((1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch));
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

EyeImage to_gray(const EyeImage& img) {
    if (img.channels == 1) return img;
    EyeImage out(img.width, img.height, 1);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double y = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
            out.at(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(y, 0.0, 255.0)));
        }
    return out;
}

}  // namespace gazenet
