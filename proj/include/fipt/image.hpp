// Copyright 2026 The fipt contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipt/math.hpp"
#include "fipt/tonemap.hpp"

namespace fipt {

// Linear-radiance RGB image, row-major scanlines, top-to-bottom in memory.
struct HdrImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // width * height * 3

    HdrImage() = default;
    HdrImage(int w, int h, const Vec3& fill = Vec3(0.f))
        : width(w), height(h), data(static_cast<size_t>(w) * h * 3) {
        for (int i = 0; i < w * h; ++i) set_index(i, fill);
    }

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }

    Vec3 at(int x, int y) const {
        size_t i = (static_cast<size_t>(y) * width + x) * 3;
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set(int x, int y, const Vec3& v) {
        size_t i = (static_cast<size_t>(y) * width + x) * 3;
        data[i] = v.x;
        data[i + 1] = v.y;
        data[i + 2] = v.z;
    }
    Vec3 at_index(size_t p) const {
        return {data[p * 3], data[p * 3 + 1], data[p * 3 + 2]};
    }
    void set_index(size_t p, const Vec3& v) {
        data[p * 3] = v.x;
        data[p * 3 + 1] = v.y;
        data[p * 3 + 2] = v.z;
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// 16-bit single channel label map.
struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<uint16_t> data;

    LabelImage() = default;
    LabelImage(int w, int h, uint16_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint16_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    void set(int x, int y, uint16_t v) { data[static_cast<size_t>(y) * width + x] = v; }
};

namespace detail {

inline std::string read_pnm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {  // comment to end of line
            while (in.get(c) && c != '\n') {}
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

inline bool host_is_little_endian() {
    uint16_t v = 1;
    uint8_t b;
    std::memcpy(&b, &v, 1);
    return b == 1;
}

}  // namespace detail

// PFM, "PF" color variant only, scale -1.0 (little endian). Scanlines are
// stored bottom-to-top in the file and flipped to top-to-bottom in memory.
inline HdrImage read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pfm: cannot open " + path);

    std::string magic = detail::read_pnm_token(in);
    if (magic != "PF")
        throw std::runtime_error("read_pfm: bad magic '" + magic + "' in " + path);
    std::string ws = detail::read_pnm_token(in);
    std::string hs = detail::read_pnm_token(in);
    std::string ss = detail::read_pnm_token(in);
    int w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        scale = std::stod(ss);
    } catch (const std::exception&) {
        throw std::runtime_error("read_pfm: malformed header in " + path);
    }
    if (w <= 0 || h <= 0)
        throw std::runtime_error("read_pfm: bad dimensions in " + path);
    if (!(scale < 0.0))
        throw std::runtime_error("read_pfm: big-endian PFM not supported: " + path);

    HdrImage img;
    img.width = w;
    img.height = h;
    img.data.resize(static_cast<size_t>(w) * h * 3);
    // file rows run bottom-to-top
    for (int y = h - 1; y >= 0; --y) {
        char* dst = reinterpret_cast<char*>(&img.data[static_cast<size_t>(y) * w * 3]);
        in.read(dst, static_cast<std::streamsize>(w) * 3 * sizeof(float));
        if (!in) throw std::runtime_error("read_pfm: truncated payload in " + path);
    }
    return img;
}

inline void write_pfm(const HdrImage& img, const std::string& path) {
    if (!detail::host_is_little_endian())
        throw std::runtime_error("write_pfm: big-endian hosts unsupported");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pfm: cannot open " + path);
    out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y) {
        const char* src =
            reinterpret_cast<const char*>(&img.data[static_cast<size_t>(y) * img.width * 3]);
        out.write(src, static_cast<std::streamsize>(img.width) * 3 * sizeof(float));
    }
    if (!out) throw std::runtime_error("write_pfm: write failed for " + path);
}

// Binary PGM, 16-bit (maxval 65535, big-endian samples per the format).
inline LabelImage read_pgm16(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm16: cannot open " + path);
    std::string magic = detail::read_pnm_token(in);
    if (magic != "P5") throw std::runtime_error("read_pgm16: bad magic in " + path);
    int w = std::stoi(detail::read_pnm_token(in));
    int h = std::stoi(detail::read_pnm_token(in));
    int maxval = std::stoi(detail::read_pnm_token(in));
    if (w <= 0 || h <= 0 || maxval != 65535)
        throw std::runtime_error("read_pgm16: expected 16-bit PGM: " + path);
    LabelImage img(w, h);
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("read_pgm16: truncated payload in " + path);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    return img;
}

inline void write_pgm16(const LabelImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm16: cannot open " + path);
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<uint8_t> raw(img.data.size() * 2);
    for (size_t i = 0; i < img.data.size(); ++i) {
        raw[2 * i] = static_cast<uint8_t>(img.data[i] >> 8);
        raw[2 * i + 1] = static_cast<uint8_t>(img.data[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write_pgm16: write failed for " + path);
}

namespace detail {

inline void png_write_chunk(std::ofstream& out, const char type[4],
                            const std::vector<uint8_t>& payload) {
    uint8_t len[4] = {static_cast<uint8_t>(payload.size() >> 24),
                      static_cast<uint8_t>(payload.size() >> 16),
                      static_cast<uint8_t>(payload.size() >> 8),
                      static_cast<uint8_t>(payload.size())};
    out.write(reinterpret_cast<const char*>(len), 4);
    out.write(type, 4);
    if (!payload.empty())
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty())
        crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    uint8_t crcb[4] = {static_cast<uint8_t>(crc >> 24), static_cast<uint8_t>(crc >> 16),
                       static_cast<uint8_t>(crc >> 8), static_cast<uint8_t>(crc)};
    out.write(reinterpret_cast<const char*>(crcb), 4);
}

}  // namespace detail

// 8-bit RGB PNG preview. `rgb8` is width*height*3 bytes, top-to-bottom.
inline void write_png_rgb8(const std::vector<uint8_t>& rgb8, int width, int height,
                           const std::string& path) {
    if (rgb8.size() != static_cast<size_t>(width) * height * 3)
        throw std::runtime_error("write_png_rgb8: size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_png_rgb8: cannot open " + path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr(13);
    auto put_u32 = [](uint8_t* p, uint32_t v) {
        p[0] = static_cast<uint8_t>(v >> 24);
        p[1] = static_cast<uint8_t>(v >> 16);
        p[2] = static_cast<uint8_t>(v >> 8);
        p[3] = static_cast<uint8_t>(v);
    };
    put_u32(&ihdr[0], static_cast<uint32_t>(width));
    put_u32(&ihdr[4], static_cast<uint32_t>(height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type RGB
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    detail::png_write_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline, then zlib deflate
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * 3));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        const uint8_t* row = &rgb8[static_cast<size_t>(y) * width * 3];
        raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png_rgb8: deflate failed");
    comp.resize(comp_size);
    detail::png_write_chunk(out, "IDAT", comp);
    detail::png_write_chunk(out, "IEND", {});
    if (!out) throw std::runtime_error("write_png_rgb8: write failed for " + path);
}

// Gamma 1/2.2 clamped preview of a linear HDR render.
inline void write_png_preview(const HdrImage& img, const std::string& path) {
    std::vector<uint8_t> rgb8(img.pixel_count() * 3);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        Vec3 c = gamma_encode(img.at_index(p));
        rgb8[p * 3 + 0] = static_cast<uint8_t>(clamp(c.x * 255.f + 0.5f, 0.f, 255.f));
        rgb8[p * 3 + 1] = static_cast<uint8_t>(clamp(c.y * 255.f + 0.5f, 0.f, 255.f));
        rgb8[p * 3 + 2] = static_cast<uint8_t>(clamp(c.z * 255.f + 0.5f, 0.f, 255.f));
    }
    write_png_rgb8(rgb8, img.width, img.height, path);
}

}  // namespace fipt
