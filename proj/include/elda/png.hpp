#pragma once

#include "elda/types.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

// Minimal 8-bit grayscale PNG writer (stored deflate blocks, no
// compression). Export-only convenience; PNG is never an input format.

namespace elda {

namespace detail {

inline std::uint32_t crc32_table(std::uint32_t i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    return c;
}

inline std::uint32_t crc32(const std::vector<std::uint8_t>& data) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc32_table(i);
        return t;
    }();
    std::uint32_t c = 0xffffffffu;
    for (std::uint8_t b : data) c = table[(c ^ b) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
    std::uint32_t a = 1, b = 0;
    for (std::uint8_t byte : data) {
        a = (a + byte) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

inline void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>((x >> 24) & 0xffu));
    v.push_back(static_cast<std::uint8_t>((x >> 16) & 0xffu));
    v.push_back(static_cast<std::uint8_t>((x >> 8) & 0xffu));
    v.push_back(static_cast<std::uint8_t>(x & 0xffu));
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[5],
                       const std::vector<std::uint8_t>& payload) {
    push_u32(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body;
    body.insert(body.end(), type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    push_u32(out, crc32(body));
}

} // namespace detail

inline void write_png_gray8(const std::filesystem::path& path,
                            const std::vector<std::uint8_t>& pixels, Index width, Index height) {
    if (static_cast<Index>(pixels.size()) != width * height)
        throw std::invalid_argument("png: pixel count does not match size");

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

    std::vector<std::uint8_t> ihdr;
    detail::push_u32(ihdr, static_cast<std::uint32_t>(width));
    detail::push_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0}); // 8-bit grayscale
    detail::push_chunk(out, "IHDR", ihdr);

    // raw scanlines with filter byte 0
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height * (width + 1)));
    for (Index r = 0; r < height; ++r) {
        raw.push_back(0);
        for (Index c = 0; c < width; ++c)
            raw.push_back(pixels[static_cast<std::size_t>(r * width + c)]);
    }

    // zlib stream with stored deflate blocks
    std::vector<std::uint8_t> idat = {0x78, 0x01};
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const std::size_t n = std::min<std::size_t>(65535, raw.size() - pos);
        const bool last = pos + n == raw.size();
        idat.push_back(last ? 1 : 0);
        idat.push_back(static_cast<std::uint8_t>(n & 0xffu));
        idat.push_back(static_cast<std::uint8_t>((n >> 8) & 0xffu));
        idat.push_back(static_cast<std::uint8_t>(~n & 0xffu));
        idat.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xffu));
        idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                    raw.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
    }
    detail::push_u32(idat, detail::adler32(raw));
    detail::push_chunk(out, "IDAT", idat);
    detail::push_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("png: cannot open " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

// Window-levelled 8-bit export: values at or below lo map to 0, at or
// above hi map to 255.
inline void write_png_windowed(const std::filesystem::path& path, const Image& im, Scalar lo,
                               Scalar hi) {
    if (hi <= lo) throw std::invalid_argument("png: window must have hi > lo");
    std::vector<std::uint8_t> px(static_cast<std::size_t>(im.size()));
    for (Index i = 0; i < im.size(); ++i) {
        const Scalar t = std::clamp((im.values[i] - lo) / (hi - lo), 0.0, 1.0);
        px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
    write_png_gray8(path, px, im.width, im.height);
}

// Hounsfield display window [hu_lo, hu_hi] for an attenuation image:
// HU = 1000 (mu - mu_water) / mu_water.
inline void write_png_hu(const std::filesystem::path& path, const Image& im, Scalar mu_water,
                         Scalar hu_lo, Scalar hu_hi) {
    const Scalar lo = mu_water * (1.0 + hu_lo / 1000.0);
    const Scalar hi = mu_water * (1.0 + hu_hi / 1000.0);
    write_png_windowed(path, im, lo, hi);
}

} // namespace elda
