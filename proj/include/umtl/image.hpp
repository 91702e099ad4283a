#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "umtl/error.hpp"
#include "umtl/tensor.hpp"

namespace umtl {

// Minimal PPM/PGM support. Images are {3,H,W} (or {1,H,W}) tensors with
// values in [0,1]; files are 8-bit binary P6/P5.

inline Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), errc::io, "cannot open image: " + path);
    std::string magic;
    in >> magic;
    check(magic == "P6" || magic == "P5", errc::io, "unsupported image magic '" + magic + "' in " + path);
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comments
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string junk;
                std::getline(in, junk);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        int64_t value = 0;
        in >> value;
        check(!in.fail(), errc::io, "bad image header: " + path);
        return value;
    };
    const int64_t w = next_int();
    const int64_t h = next_int();
    const int64_t maxval = next_int();
    check(w > 0 && h > 0 && maxval > 0 && maxval < 65536, errc::io, "bad image dims: " + path);
    in.get();  // single whitespace after maxval
    const int channels = (magic == "P6") ? 3 : 1;
    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(static_cast<size_t>(w * h * channels * bytes_per));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(in.gcount() == static_cast<std::streamsize>(raw.size()), errc::io,
          "truncated image payload: " + path);

    Tensor img({3, h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int src_c = channels == 3 ? c : 0;
                const size_t base =
                    static_cast<size_t>(((y * w + x) * channels + src_c) * bytes_per);
                int64_t value = raw[base];
                if (bytes_per == 2) value = (value << 8) | raw[base + 1];
                img.at(c, y, x) = static_cast<double>(value) / static_cast<double>(maxval);
            }
        }
    }
    return img;
}

inline void write_ppm(const std::string& path, const Tensor& img) {
    check(img.ndim() == 3 && img.dim(0) == 3, errc::shape, "write_ppm expects {3,H,W}");
    const int64_t h = img.dim(1), w = img.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), errc::io, "cannot open image for writing: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(w * h * 3));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw[static_cast<size_t>((y * w + x) * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(out.good(), errc::io, "image write failed: " + path);
}

}  // namespace umtl
