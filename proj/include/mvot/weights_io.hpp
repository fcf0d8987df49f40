#pragma once

// Weights file layout: magic "SMWT", format version u16, entry count u32.
// Per entry: name length u16 + UTF-8 name, rank u8, extents as u32 LE,
// payload as LE float32. A CRC32 of all payload bytes trails the file.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "mvot/errors.hpp"
#include "mvot/tensor.hpp"

namespace mvot {

using NamedTensors = std::map<std::string, Tensor>;

inline constexpr char kWeightsMagic[4] = {'S', 'M', 'W', 'T'};
inline constexpr std::uint16_t kWeightsVersion = 1;

inline std::uint32_t crc32_update(std::uint32_t crc, const unsigned char* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t pos = 0;

    bool need(std::size_t n) const { return pos + n <= len; }

    std::uint8_t u8(const std::string& what) {
        if (!need(1)) throw FormatError("weights file truncated reading " + what);
        return p[pos++];
    }
    std::uint16_t u16(const std::string& what) {
        if (!need(2)) throw FormatError("weights file truncated reading " + what);
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const std::string& what) {
        if (!need(4)) throw FormatError("weights file truncated reading " + what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

}  // namespace detail

inline void save_weights(const std::string& path, const NamedTensors& tensors) {
    for (const auto& [name, t] : tensors)
        if (!t.all_finite()) throw ArgumentError("refusing to save non-finite tensor '" + name + "'");

    std::string buf;
    buf.append(kWeightsMagic, 4);
    detail::put_u16(buf, kWeightsVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));

    std::uint32_t crc = 0;
    for (const auto& [name, t] : tensors) {
        detail::put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf.append(name);
        buf.push_back(static_cast<char>(t.rank()));
        for (int a = 0; a < t.rank(); ++a) detail::put_u32(buf, static_cast<std::uint32_t>(t.extent(a)));
        const std::size_t bytes = t.size() * sizeof(float);
        const std::size_t off = buf.size();
        buf.resize(off + bytes);
        std::memcpy(buf.data() + off, t.data(), bytes);  // little-endian host assumed
        crc = crc32_update(crc, reinterpret_cast<const unsigned char*>(buf.data() + off), bytes);
    }
    detail::put_u32(buf, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

inline NamedTensors load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    detail::Reader r{raw.data(), raw.size()};
    if (!r.need(4) || std::memcmp(raw.data(), kWeightsMagic, 4) != 0)
        throw FormatError("bad weights magic in '" + path + "'");
    r.pos = 4;
    const std::uint16_t version = r.u16("version");
    if (version != kWeightsVersion) throw FormatError("unsupported weights version " + std::to_string(version));
    const std::uint32_t count = r.u32("entry count");

    NamedTensors out;
    std::uint32_t crc = 0;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t name_len = r.u16("entry name length");
        if (!r.need(name_len)) throw FormatError("weights file truncated reading entry name");
        std::string name(reinterpret_cast<const char*>(raw.data() + r.pos), name_len);
        r.pos += name_len;

        const std::uint8_t rank = r.u8("rank of '" + name + "'");
        if (rank < 1 || rank > 4) throw FormatError("entry '" + name + "' has unsupported rank");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (int a = 0; a < rank; ++a) {
            const std::uint32_t ext = r.u32("extent of '" + name + "'");
            if (ext == 0) throw FormatError("entry '" + name + "' has zero extent");
            shape[static_cast<std::size_t>(a)] = static_cast<int>(ext);
            numel *= ext;
        }
        const std::size_t bytes = numel * sizeof(float);
        if (!r.need(bytes)) throw FormatError("weights file truncated reading payload of '" + name + "'");
        std::vector<float> data(numel);
        std::memcpy(data.data(), raw.data() + r.pos, bytes);
        crc = crc32_update(crc, raw.data() + r.pos, bytes);
        r.pos += bytes;
        out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }

    const std::uint32_t stored = r.u32("checksum");
    if (stored != crc) throw FormatError("weights checksum mismatch in '" + path + "'");
    return out;
}

}  // namespace mvot
