#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gazenet {

/// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
struct EyeImage {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    EyeImage() = default;
    EyeImage(int w, int h, int c, std::uint8_t fill = 0);

    std::uint8_t& at(int row, int col, int ch = 0) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::uint8_t at(int row, int col, int ch = 0) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::size_t size() const { return data.size(); }
    bool valid() const {
        return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
               data.size() == static_cast<std::size_t>(width) * height * channels;
    }

    friend bool operator==(const EyeImage&, const EyeImage&) = default;
};

/// Reverses the column order of every row.
EyeImage flip_horizontal(const EyeImage& img);

double mean_intensity(const EyeImage& img);

/// Binary netpbm: P5 for 1 channel, P6 for 3 channels, maxval 255.
std::vector<std::uint8_t> encode_netpbm(const EyeImage& img);
EyeImage decode_netpbm(std::span<const std::uint8_t> bytes);

void write_netpbm(const std::filesystem::path& path, const EyeImage& img);
EyeImage read_netpbm(const std::filesystem::path& path);

/// Bilinear resampling to a new size.
EyeImage resize_bilinear(const EyeImage& img, int width, int height);

/// Converts a 3-channel image to single-channel luma (BT.601).
EyeImage to_gray(const EyeImage& img);

}  // namespace gazenet
