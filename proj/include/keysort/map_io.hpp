#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "keysort/map_codec.hpp"

// MapStack containers.
//
// Binary layout, all integers and floats little-endian:
//   "KSMAPS\0\0"  magic (8 bytes)
//   u32 version (= 1), u32 width, u32 height, u32 channel count
//   per channel: u32 name length, name bytes
//   per channel: width*height f32 values, row-major
//
// Text layout (lossless, for debugging):
//   KSMAP-TEXT 1
//   <width> <height> <channels>
//   per channel: the name on its own line, then `height` lines of `width` values written
//   with the shortest round-trip float representation.

namespace keysort {

inline constexpr std::uint32_t kMapFormatVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw std::runtime_error("map file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline MapStack stack_from_channels(std::size_t width, std::size_t height,
                                    const std::vector<std::string>& names, std::vector<Grid> grids) {
    MapStack m;
    m.width = width;
    m.height = height;
    std::size_t i = 0;
    while (i < names.size() && names[i].rfind("prob/", 0) == 0) {
        m.prob_names.push_back(names[i].substr(5));
        m.prob.push_back(std::move(grids[i]));
        ++i;
    }
    static const std::array<const char*, 4> suffix{"/dx_ab", "/dy_ab", "/dx_ba", "/dy_ba"};
    while (i < names.size()) {
        if (i + 4 > names.size() || names[i].rfind("assoc/", 0) != 0)
            throw std::runtime_error("unexpected map channel: " + names[i]);
        const std::string& first = names[i];
        const std::string base = first.substr(6, first.size() - 6 - 6);
        for (std::size_t c = 0; c < 4; ++c)
            if (names[i + c] != "assoc/" + base + suffix[c])
                throw std::runtime_error("unexpected map channel: " + names[i + c]);
        m.assoc_names.push_back(base);
        m.assoc.push_back({std::move(grids[i]), std::move(grids[i + 1]), std::move(grids[i + 2]),
                           std::move(grids[i + 3])});
        i += 4;
    }
    return m;
}

}  // namespace detail

inline void write_map_binary(std::ostream& os, const MapStack& m) {
    os.write("KSMAPS\0\0", 8);
    detail::put_u32(os, kMapFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(m.width));
    detail::put_u32(os, static_cast<std::uint32_t>(m.height));
    const auto names = m.channel_names();
    detail::put_u32(os, static_cast<std::uint32_t>(names.size()));
    for (const auto& n : names) {
        detail::put_u32(os, static_cast<std::uint32_t>(n.size()));
        os.write(n.data(), static_cast<std::streamsize>(n.size()));
    }
    for (const Grid* g : m.channels())
        for (float v : g->values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw std::runtime_error("failed writing map file");
}

inline MapStack read_map_binary(std::istream& is) {
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), 8) || std::memcmp(magic.data(), "KSMAPS\0\0", 8) != 0)
        throw std::runtime_error("not a map file");
    const auto version = detail::get_u32(is);
    if (version != kMapFormatVersion) throw std::runtime_error("unsupported map version " + std::to_string(version));
    const std::size_t width = detail::get_u32(is);
    const std::size_t height = detail::get_u32(is);
    const std::size_t count = detail::get_u32(is);
    std::vector<std::string> names(count);
    for (auto& n : names) {
        const auto len = detail::get_u32(is);
        if (len > 4096) throw std::runtime_error("map channel name too long");
        n.resize(len);
        if (!is.read(n.data(), len)) throw std::runtime_error("map file truncated");
    }
    std::vector<Grid> grids;
    for (std::size_t c = 0; c < count; ++c) {
        Grid g(height, width);
        for (float& v : g.values()) v = std::bit_cast<float>(detail::get_u32(is));
        grids.push_back(std::move(g));
    }
    return detail::stack_from_channels(width, height, names, std::move(grids));
}

inline void write_map_text(std::ostream& os, const MapStack& m) {
    const auto names = m.channel_names();
    os << "KSMAP-TEXT " << kMapFormatVersion << '\n' << m.width << ' ' << m.height << ' ' << names.size() << '\n';
    const auto grids = m.channels();
    std::array<char, 64> buf{};
    for (std::size_t c = 0; c < names.size(); ++c) {
        os << names[c] << '\n';
        const Grid& g = *grids[c];
        for (std::size_t r = 0; r < g.height(); ++r) {
            for (std::size_t col = 0; col < g.width(); ++col) {
                const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), g(r, col));
                if (col) os << ' ';
                os.write(buf.data(), res.ptr - buf.data());
            }
            os << '\n';
        }
    }
    if (!os) throw std::runtime_error("failed writing map file");
}

inline MapStack read_map_text(std::istream& is) {
    std::string tag;
    std::uint32_t version = 0;
    if (!(is >> tag >> version) || tag != "KSMAP-TEXT") throw std::runtime_error("not a text map file");
    if (version != kMapFormatVersion) throw std::runtime_error("unsupported map version " + std::to_string(version));
    std::size_t width = 0, height = 0, count = 0;
    if (!(is >> width >> height >> count)) throw std::runtime_error("bad text map header");
    std::vector<std::string> names(count);
    std::vector<Grid> grids;
    for (std::size_t c = 0; c < count; ++c) {
        if (!(is >> names[c])) throw std::runtime_error("text map truncated");
        Grid g(height, width);
        std::string tok;
        for (float& v : g.values()) {
            if (!(is >> tok)) throw std::runtime_error("text map truncated");
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc{}) throw std::runtime_error("bad value in text map: " + tok);
        }
        grids.push_back(std::move(g));
    }
    return detail::stack_from_channels(width, height, names, std::move(grids));
}

}  // namespace keysort
