// mask.hpp - pixel-grid mask types and the set algebra used by every
// other component. Grids are row-major with the origin at the top-left.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace avseg {

/// Raised for any violated input contract (bad shapes, bad ranges,
/// malformed files). The CLI maps it to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct MaskShape {
    int height = 0;
    int width = 0;

    int pixel_count() const { return height * width; }
    bool operator==(const MaskShape& o) const { return height == o.height && width == o.width; }
    bool operator!=(const MaskShape& o) const { return !(*this == o); }

    std::string str() const { return std::to_string(height) + "x" + std::to_string(width); }
};

inline void require_valid(const MaskShape& s, const char* where) {
    if (s.height < 1 || s.width < 1)
        throw ValidationError(std::string(where) + ": mask shape must be at least 1x1, got " + s.str());
}

inline void require_same_shape(const MaskShape& a, const MaskShape& b, const char* where) {
    if (a != b)
        throw ValidationError(std::string(where) + ": shape mismatch (" + a.str() + " vs " + b.str() + ")");
}

/// Hard {0,1} mask.
struct BinaryMask {
    MaskShape shape;
    std::vector<std::uint8_t> pixels;  // 0 or 1, row-major

    BinaryMask() = default;
    explicit BinaryMask(MaskShape s, std::uint8_t fill = 0)
        : shape(s), pixels(static_cast<std::size_t>(s.pixel_count()), fill) {
        require_valid(s, "BinaryMask");
    }

    std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * shape.width + c]; }
    void set(int r, int c, std::uint8_t v) { pixels[static_cast<std::size_t>(r) * shape.width + c] = v; }

    bool operator==(const BinaryMask& o) const { return shape == o.shape && pixels == o.pixels; }
};

/// Relaxed mask with pixel values in [0,1]; the differentiable counterpart
/// of BinaryMask. Binarized only at pipeline boundaries.
struct SoftMask {
    MaskShape shape;
    std::vector<double> pixels;  // each in [0,1], row-major

    SoftMask() = default;
    explicit SoftMask(MaskShape s, double fill = 0.0)
        : shape(s), pixels(static_cast<std::size_t>(s.pixel_count()), fill) {
        require_valid(s, "SoftMask");
    }
    SoftMask(MaskShape s, std::vector<double> px) : shape(s), pixels(std::move(px)) {
        require_valid(s, "SoftMask");
        if (pixels.size() != static_cast<std::size_t>(s.pixel_count()))
            throw ValidationError("SoftMask: pixel count does not match shape " + s.str());
    }
};

/// Pre-sigmoid parameterization of a soft mask, used by the toy trainer.
struct MaskLogits {
    MaskShape shape;
    std::vector<double> values;  // finite reals, row-major

    MaskLogits() = default;
    explicit MaskLogits(MaskShape s, double fill = 0.0)
        : shape(s), values(static_cast<std::size_t>(s.pixel_count()), fill) {
        require_valid(s, "MaskLogits");
    }
};

inline long area(const BinaryMask& m) {
    long n = 0;
    for (std::uint8_t p : m.pixels) n += p;
    return n;
}

/// Probabilistic intersection: sum of a*b. Exact set cardinality on
/// binary-valued inputs.
inline double soft_intersection(const SoftMask& a, const SoftMask& b) {
    require_same_shape(a.shape, b.shape, "soft_intersection");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += a.pixels[i] * b.pixels[i];
    return s;
}

/// Probabilistic union: sum of a + b - a*b. Exact on binary-valued inputs.
inline double soft_union(const SoftMask& a, const SoftMask& b) {
    require_same_shape(a.shape, b.shape, "soft_union");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double x = a.pixels[i], y = b.pixels[i];
        s += x + y - x * y;
    }
    return s;
}

/// Intersection-over-union. Two empty masks compare as a perfect match
/// (1.0): an empty prediction on an empty ground truth is correct, which
/// the silent-frame protocol depends on.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_shape(a.shape, b.shape, "iou");
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        inter += (a.pixels[i] & b.pixels[i]);
        uni += (a.pixels[i] | b.pixels[i]);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline BinaryMask union_all(const std::vector<BinaryMask>& masks) {
    if (masks.empty()) throw ValidationError("union_all: empty mask list");
    BinaryMask out(masks.front().shape);
    for (const BinaryMask& m : masks) {
        require_same_shape(out.shape, m.shape, "union_all");
        for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] |= m.pixels[i];
    }
    return out;
}

/// Pixel becomes 1 iff its value is >= threshold (boundary inclusive).
inline BinaryMask binarize(const SoftMask& m, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("binarize: threshold must lie in (0,1), got " + std::to_string(threshold));
    BinaryMask out(m.shape);
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
        out.pixels[i] = m.pixels[i] >= threshold ? 1 : 0;
    return out;
}

inline SoftMask to_soft(const BinaryMask& m) {
    SoftMask out(m.shape);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) out.pixels[i] = m.pixels[i] ? 1.0 : 0.0;
    return out;
}

}  // namespace avseg
