#pragma once

#include "elda/types.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <variant>
#include <vector>

// Tensor files are a raw little-endian f64 payload (<name>.bin) plus a JSON
// sidecar (<name>.json) declaring kind, shape, dtype and units. Writes are
// deterministic: identical tensors produce identical bytes.

namespace elda {

using AnyTensor = std::variant<Image, Sinogram, FeatureMap>;

namespace detail {

inline std::filesystem::path payload_path(const std::filesystem::path& p) {
    std::filesystem::path q = p;
    if (q.extension() != ".bin") q += ".bin";
    return q;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
    std::filesystem::path q = payload_path(p);
    q.replace_extension(".json");
    return q;
}

inline void write_payload(const Vector& v, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("tensor io: cannot open " + path.string());
    std::vector<unsigned char> buf(static_cast<std::size_t>(v.size()) * 8);
    for (Index i = 0; i < v.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b)
            buf[static_cast<std::size_t>(i) * 8 + b] =
                static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("tensor io: write failed for " + path.string());
}

inline Vector read_payload(const std::filesystem::path& path, Index expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tensor io: cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (static_cast<Index>(buf.size()) != expected * 8)
        throw std::runtime_error("tensor io: payload length does not match declared shape in " +
                                 path.string());
    Vector v(expected);
    for (Index i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(buf[static_cast<std::size_t>(i) * 8 + b]) << (8 * b);
        v[i] = std::bit_cast<double>(bits);
    }
    if (!all_finite(v))
        throw std::runtime_error("tensor io: non-finite values in " + path.string());
    return v;
}

inline void write_sidecar(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("tensor io: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace detail

inline void write_tensor(const Image& im, const std::filesystem::path& path) {
    validate(im);
    nlohmann::json j;
    j["kind"] = "image";
    j["shape"] = {im.height, im.width};
    j["dtype"] = "f64le";
    j["pixel_size"] = im.pixel_size;
    detail::write_sidecar(j, detail::sidecar_path(path));
    detail::write_payload(im.values, detail::payload_path(path));
}

inline void write_tensor(const Sinogram& s, const std::filesystem::path& path) {
    validate(s);
    nlohmann::json j;
    j["kind"] = "sinogram";
    j["shape"] = {s.n_views, s.n_detectors};
    j["dtype"] = "f64le";
    detail::write_sidecar(j, detail::sidecar_path(path));
    detail::write_payload(s.values, detail::payload_path(path));
}

inline void write_tensor(const FeatureMap& f, const std::filesystem::path& path) {
    validate(f);
    nlohmann::json j;
    j["kind"] = "feature";
    j["shape"] = {f.channels(), f.locations()};
    j["dtype"] = "f64le";
    detail::write_sidecar(j, detail::sidecar_path(path));
    // column-major d x m is flattened location-major to keep a bijection
    // with the row-major convention used everywhere else
    Vector flat(f.channels() * f.locations());
    Index n = 0;
    for (Index i = 0; i < f.locations(); ++i)
        for (Index c = 0; c < f.channels(); ++c) flat[n++] = f.values(c, i);
    detail::write_payload(flat, detail::payload_path(path));
}

inline AnyTensor read_tensor(const std::filesystem::path& path) {
    const auto side = detail::sidecar_path(path);
    std::ifstream in(side);
    if (!in) throw std::runtime_error("tensor io: missing sidecar " + side.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("tensor io: corrupt sidecar " + side.string() + ": " + e.what());
    }
    if (!j.contains("kind") || !j.contains("shape") || !j.contains("dtype"))
        throw std::runtime_error("tensor io: sidecar missing required fields: " + side.string());
    if (j["dtype"] != "f64le")
        throw std::runtime_error("tensor io: unsupported dtype in " + side.string());
    const std::string kind = j["kind"];
    const auto shape = j["shape"].get<std::vector<Index>>();
    if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0)
        throw std::runtime_error("tensor io: bad shape in " + side.string());

    if (kind == "image") {
        Image im;
        im.height = shape[0];
        im.width = shape[1];
        im.pixel_size = j.value("pixel_size", 1.0);
        im.values = detail::read_payload(detail::payload_path(path), shape[0] * shape[1]);
        validate(im);
        return im;
    }
    if (kind == "sinogram") {
        Sinogram s;
        s.n_views = shape[0];
        s.n_detectors = shape[1];
        s.values = detail::read_payload(detail::payload_path(path), shape[0] * shape[1]);
        validate(s);
        return s;
    }
    if (kind == "feature") {
        const Vector flat = detail::read_payload(detail::payload_path(path), shape[0] * shape[1]);
        FeatureMap f(shape[0], shape[1]);
        Index n = 0;
        for (Index i = 0; i < shape[1]; ++i)
            for (Index c = 0; c < shape[0]; ++c) f.values(c, i) = flat[n++];
        validate(f);
        return f;
    }
    throw std::runtime_error("tensor io: unknown kind '" + kind + "' in " + side.string());
}

inline Image read_image(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* im = std::get_if<Image>(&t)) return *im;
    throw std::runtime_error("tensor io: " + path.string() + " is not an image");
}

inline Sinogram read_sinogram(const std::filesystem::path& path) {
    auto t = read_tensor(path);
    if (auto* s = std::get_if<Sinogram>(&t)) return *s;
    throw std::runtime_error("tensor io: " + path.string() + " is not a sinogram");
}

} // namespace elda
