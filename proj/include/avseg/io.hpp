// io.hpp - bit-exact binary artifact formats.
//
//   PGM  : binary masks, P5 maxval 255; a pixel >= 128 reads as 1.
//   SASL : float maps; magic "SASL", uint32 LE height, uint32 LE width,
//          then height*width float32 LE values, row-major.
//   AVSM : model checkpoints; magic "AVSM", uint32 LE version and
//          dimension header, then float64 LE parameter blocks
//          (mask logits, class logits, w1, b1, w2, b2).
//
// All multi-byte values are little-endian regardless of host order.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avseg/avsc.hpp"
#include "avseg/mask.hpp"
#include "avseg/synth.hpp"

namespace avseg {

/// A rectangular grid of float values with no range constraint; the
/// on-disk form of localization maps, soft masks and gradient dumps.
struct FloatMap {
    MaskShape shape;
    std::vector<double> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_f64(std::string& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    put_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

class ByteReader {
public:
    ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    double f64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return std::bit_cast<double>(lo | (hi << 32));
    }

    void expect_magic(const char* magic) {
        need(4);
        if (std::memcmp(data_.data() + pos_, magic, 4) != 0)
            throw ValidationError(path_ + ": bad magic, expected \"" + magic + "\"");
        pos_ += 4;
    }

    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }

    void expect_end() const {
        if (pos_ != data_.size())
            throw ValidationError(path_ + ": trailing bytes after the declared payload");
    }

    const std::string& path() const { return path_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ValidationError(path_ + ": truncated file");
    }

    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw ValidationError("short write: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, const BinaryMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.shape.width) + " " +
                      std::to_string(mask.shape.height) + "\n255\n";
    out.reserve(out.size() + mask.pixels.size());
    for (std::uint8_t p : mask.pixels) out.push_back(static_cast<char>(p ? 255 : 0));
    detail::write_file(path, out);
}

inline BinaryMask read_pgm(const std::string& path) {
    const std::string data = detail::read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < data.size()) {
            if (std::isspace(static_cast<unsigned char>(data[pos]))) {
                ++pos;
            } else if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        if (pos >= data.size() || !std::isdigit(static_cast<unsigned char>(data[pos])))
            throw ValidationError(path + ": malformed PGM header");
        long v = 0;
        while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos])))
            v = v * 10 + (data[pos++] - '0');
        return v;
    };
    if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
        throw ValidationError(path + ": not a binary (P5) PGM file");
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w < 1 || h < 1) throw ValidationError(path + ": non-positive PGM dimensions");
    if (maxval != 255) throw ValidationError(path + ": PGM maxval must be 255");
    if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
        throw ValidationError(path + ": malformed PGM header");
    ++pos;  // single whitespace before the raster
    if (data.size() - pos != static_cast<std::size_t>(w * h))
        throw ValidationError(path + ": PGM payload size does not match dimensions");
    BinaryMask mask(MaskShape{static_cast<int>(h), static_cast<int>(w)});
    for (std::size_t i = 0; i < mask.pixels.size(); ++i)
        mask.pixels[i] = static_cast<std::uint8_t>(data[pos + i]) >= 128 ? 1 : 0;
    return mask;
}

// ---------------------------------------------------------------------------
// SASL
// ---------------------------------------------------------------------------

inline void write_sasl(const std::string& path, const MaskShape& shape,
                       const std::vector<double>& values) {
    require_valid(shape, "write_sasl");
    if (values.size() != static_cast<std::size_t>(shape.pixel_count()))
        throw ValidationError("write_sasl: value count does not match shape");
    std::string out = "SASL";
    detail::put_u32(out, static_cast<std::uint32_t>(shape.height));
    detail::put_u32(out, static_cast<std::uint32_t>(shape.width));
    for (double v : values) detail::put_f32(out, static_cast<float>(v));
    detail::write_file(path, out);
}

inline void write_sasl(const std::string& path, const LocalizationMap& map) {
    write_sasl(path, map.shape, map.values);
}

inline FloatMap read_sasl(const std::string& path) {
    detail::ByteReader r(detail::read_file(path), path);
    r.expect_magic("SASL");
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    if (h < 1 || w < 1 || h > 1u << 20 || w > 1u << 20)
        throw ValidationError(path + ": implausible SASL dimensions");
    FloatMap map;
    map.shape = MaskShape{static_cast<int>(h), static_cast<int>(w)};
    map.values.resize(static_cast<std::size_t>(h) * w);
    for (double& v : map.values) {
        v = r.f32();
        if (!std::isfinite(v)) throw ValidationError(path + ": non-finite value in SASL map");
    }
    r.expect_end();
    return map;
}

/// Reads a SASL map as a soft mask, enforcing the [0,1] range.
inline SoftMask read_sasl_soft_mask(const std::string& path) {
    FloatMap map = read_sasl(path);
    for (double v : map.values)
        if (v < 0.0 || v > 1.0)
            throw ValidationError(path + ": value " + std::to_string(v) +
                                  " outside [0,1]; not a soft mask");
    return SoftMask{map.shape, std::move(map.values)};
}

// ---------------------------------------------------------------------------
// AVSM checkpoints
// ---------------------------------------------------------------------------

inline void write_checkpoint(const std::string& path, const ToyModel& model) {
    model.head.validate();
    std::string out = "AVSM";
    detail::put_u32(out, 1);  // version
    detail::put_u32(out, static_cast<std::uint32_t>(model.queries));
    detail::put_u32(out, static_cast<std::uint32_t>(model.shape.height));
    detail::put_u32(out, static_cast<std::uint32_t>(model.shape.width));
    detail::put_u32(out, static_cast<std::uint32_t>(model.categories));
    detail::put_u32(out, static_cast<std::uint32_t>(model.head.input_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(model.head.hidden_dim));
    detail::put_u32(out, model.head.mode == AudioMode::Simplex ? 0u : 1u);
    for (double v : model.mask_logits) detail::put_f64(out, v);
    for (double v : model.class_logits) detail::put_f64(out, v);
    for (double v : model.head.w1) detail::put_f64(out, v);
    for (double v : model.head.b1) detail::put_f64(out, v);
    for (double v : model.head.w2) detail::put_f64(out, v);
    for (double v : model.head.b2) detail::put_f64(out, v);
    detail::write_file(path, out);
}

inline ToyModel read_checkpoint(const std::string& path) {
    detail::ByteReader r(detail::read_file(path), path);
    r.expect_magic("AVSM");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
    ToyModel m;
    m.queries = static_cast<int>(r.u32());
    m.shape.height = static_cast<int>(r.u32());
    m.shape.width = static_cast<int>(r.u32());
    m.categories = static_cast<int>(r.u32());
    m.head.input_dim = static_cast<int>(r.u32());
    m.head.hidden_dim = static_cast<int>(r.u32());
    const std::uint32_t mode = r.u32();
    if (mode > 1) throw ValidationError(path + ": bad audio mode flag");
    m.head.mode = mode == 0 ? AudioMode::Simplex : AudioMode::Independent;
    m.head.category_count = m.categories;
    if (m.queries < 1 || m.shape.height < 1 || m.shape.width < 1 || m.categories < 1 ||
        m.head.input_dim < 1 || m.head.hidden_dim < 1)
        throw ValidationError(path + ": non-positive dimension in checkpoint header");
    auto read_block = [&](std::vector<double>& dst, std::size_t n, const char* what) {
        dst.resize(n);
        for (double& v : dst) {
            v = r.f64();
            if (!std::isfinite(v))
                throw ValidationError(path + ": non-finite value in " + what + " block");
        }
    };
    read_block(m.mask_logits, static_cast<std::size_t>(m.queries) * m.shape.pixel_count(),
               "mask logit");
    read_block(m.class_logits, static_cast<std::size_t>(m.queries) * (m.categories + 1),
               "class logit");
    read_block(m.head.w1, static_cast<std::size_t>(m.head.hidden_dim) * m.head.input_dim, "w1");
    read_block(m.head.b1, static_cast<std::size_t>(m.head.hidden_dim), "b1");
    read_block(m.head.w2, static_cast<std::size_t>(m.categories) * m.head.hidden_dim, "w2");
    read_block(m.head.b2, static_cast<std::size_t>(m.categories), "b2");
    r.expect_end();
    return m;
}

}  // namespace avseg
