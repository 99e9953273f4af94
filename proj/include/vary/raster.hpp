#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vary/common.hpp"

namespace vary {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

// H x W x 3 image with values in [0,1]. The universal image carrier; the
// rasterizer works in 8-bit color and stores v/255.
class ImageRaster {
public:
    ImageRaster() = default;
    ImageRaster(int height, int width, Rgb fill = {255, 255, 255});

    int height() const { return h_; }
    int width() const { return w_; }

    void set(int x, int y, Rgb c);
    Rgb get8(int x, int y) const;
    float* data() { return px_.data(); }
    const float* data() const { return px_.data(); }
    size_t numel() const { return px_.size(); }

    bool all_finite() const;
    bool operator==(const ImageRaster& o) const { return h_ == o.h_ && w_ == o.w_ && px_ == o.px_; }

    // separable Catmull-Rom resize to a square side x side image, clamped to [0,1]
    ImageRaster resized(int side) const;

private:
    int h_ = 0, w_ = 0;
    std::vector<float> px_;
};

// Integer-only drawing primitives. Every routine touches pixels in a fixed
// order, so renders are byte-reproducible.
namespace draw {

void fill_rect(ImageRaster& img, int x, int y, int w, int h, Rgb c);
void rect_outline(ImageRaster& img, int x, int y, int w, int h, Rgb c);
void line(ImageRaster& img, int x0, int y0, int x1, int y1, Rgb c);
void disk(ImageRaster& img, int cx, int cy, int r, Rgb c);
void circle(ImageRaster& img, int cx, int cy, int r, Rgb c);
// even-odd scanline fill; vertices in order (closed implicitly)
void polygon(ImageRaster& img, const std::vector<std::array<int, 2>>& pts, Rgb c);
// vertical gradient between two colors over [y0, y1)
void vgradient(ImageRaster& img, int y0, int y1, Rgb top, Rgb bottom);

// Ordered perimeter of the integer midpoint circle, sorted
// counter-clockwise starting at angle 0 (positive x axis). Used to cut pie
// slices without any trigonometry.
std::vector<std::array<int, 2>> circle_perimeter(int cx, int cy, int r);

}  // namespace draw

// 5x7 bitmap glyphs: a hand-drawn table for '\n'-free printable ASCII plus a
// procedurally generated, collision-checked set for the pinned CJK sample
// block. Each glyph is a 35-bit mask, row-major, bit 0 = top-left.
class GlyphAtlas {
public:
    static constexpr int kGlyphW = 5;
    static constexpr int kGlyphH = 7;
    static constexpr int kAdvanceX = 6;  // cell width in glyph units
    static constexpr int kAdvanceY = 9;  // line height in glyph units

    static const GlyphAtlas& instance();

    bool has(uint32_t cp) const { return bits_.count(cp) != 0; }
    uint64_t bits(uint32_t cp) const;                // throws InputError when missing
    int64_t find(uint64_t mask) const;               // codepoint or -1
    const std::vector<uint32_t>& codepoints() const { return order_; }

    // draw one glyph with its top-left corner at (x, y), scaled by an integer factor
    void draw_glyph(ImageRaster& img, uint32_t cp, int x, int y, int scale, Rgb ink) const;

private:
    GlyphAtlas();
    std::unordered_map<uint32_t, uint64_t> bits_;
    std::unordered_map<uint64_t, uint32_t> inverse_;
    std::vector<uint32_t> order_;
};

}  // namespace vary
