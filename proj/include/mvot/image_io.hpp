#pragma once

// Frames are stored as binary PPM (P6): a text header followed by raw RGB
// bytes. Float tensors in [0,1] quantize to 8 bits on write.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/tensor.hpp"

namespace mvot {

inline void write_ppm(const std::string& path, const Tensor& frame) {
    if (frame.rank() != 3 || frame.extent(0) != 3) throw ArgumentError("write_ppm expects a 3xHxW tensor");
    const int h = frame.extent(1), w = frame.extent(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(frame.at(c, y, x), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("short write to '" + path + "'");
}

inline Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string magic;
    f >> magic;
    if (magic != "P6") throw FormatError("'" + path + "' is not a binary PPM");
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w < 1 || h < 1 || maxval != 255) throw FormatError("unsupported PPM header in '" + path + "'");
    f.get();  // single whitespace after the header
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw FormatError("truncated PPM payload in '" + path + "'");
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) =
                    static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
    return out;
}

}  // namespace mvot
