#include "vary/raster.hpp"

#include <algorithm>
#include <cmath>

#include "vary/rng.hpp"

namespace vary {

ImageRaster::ImageRaster(int height, int width, Rgb fill) : h_(height), w_(width) {
    px_.resize(static_cast<size_t>(height) * width * 3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) set(x, y, fill);
}

void ImageRaster::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    float* p = px_.data() + (static_cast<size_t>(y) * w_ + x) * 3;
    p[0] = static_cast<float>(c.r) / 255.0f;
    p[1] = static_cast<float>(c.g) / 255.0f;
    p[2] = static_cast<float>(c.b) / 255.0f;
}

Rgb ImageRaster::get8(int x, int y) const {
    const float* p = px_.data() + (static_cast<size_t>(y) * w_ + x) * 3;
    auto q = [](float v) {
        const int iv = static_cast<int>(std::lround(v * 255.0f));
        return static_cast<uint8_t>(std::clamp(iv, 0, 255));
    };
    return {q(p[0]), q(p[1]), q(p[2])};
}

bool ImageRaster::all_finite() const {
    for (float v : px_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

// Catmull-Rom kernel
inline double cubic_w(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

}  // namespace

ImageRaster ImageRaster::resized(int side) const {
    if (side <= 0) throw InputError("resize: side must be positive");
    if (side == h_ && side == w_) return *this;
    ImageRaster out(side, side);
    // horizontal pass into a temp buffer of height h_, width side
    std::vector<double> tmp(static_cast<size_t>(h_) * side * 3);
    const double sx = static_cast<double>(w_) / side;
    const double sy = static_cast<double>(h_) / side;
    for (int y = 0; y < h_; ++y) {
        for (int ox = 0; ox < side; ++ox) {
            const double cx = (ox + 0.5) * sx - 0.5;
            const int ix = static_cast<int>(std::floor(cx));
            double acc[3] = {0, 0, 0};
            double wsum = 0.0;
            for (int k = -1; k <= 2; ++k) {
                const int px = std::clamp(ix + k, 0, w_ - 1);
                const double w = cubic_w(cx - (ix + k));
                wsum += w;
                const float* p = px_.data() + (static_cast<size_t>(y) * w_ + px) * 3;
                for (int c = 0; c < 3; ++c) acc[c] += w * p[c];
            }
            double* t = tmp.data() + (static_cast<size_t>(y) * side + ox) * 3;
            for (int c = 0; c < 3; ++c) t[c] = acc[c] / wsum;
        }
    }
    for (int oy = 0; oy < side; ++oy) {
        const double cy = (oy + 0.5) * sy - 0.5;
        const int iy = static_cast<int>(std::floor(cy));
        for (int ox = 0; ox < side; ++ox) {
            double acc[3] = {0, 0, 0};
            double wsum = 0.0;
            for (int k = -1; k <= 2; ++k) {
                const int py = std::clamp(iy + k, 0, h_ - 1);
                const double w = cubic_w(cy - (iy + k));
                wsum += w;
                const double* t = tmp.data() + (static_cast<size_t>(py) * side + ox) * 3;
                for (int c = 0; c < 3; ++c) acc[c] += w * t[c];
            }
            float* o = out.px_.data() + (static_cast<size_t>(oy) * side + ox) * 3;
            for (int c = 0; c < 3; ++c)
                o[c] = static_cast<float>(std::clamp(acc[c] / wsum, 0.0, 1.0));
        }
    }
    return out;
}

namespace draw {

void fill_rect(ImageRaster& img, int x, int y, int w, int h, Rgb c) {
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) img.set(xx, yy, c);
}

void rect_outline(ImageRaster& img, int x, int y, int w, int h, Rgb c) {
    for (int xx = x; xx < x + w; ++xx) {
        img.set(xx, y, c);
        img.set(xx, y + h - 1, c);
    }
    for (int yy = y; yy < y + h; ++yy) {
        img.set(x, yy, c);
        img.set(x + w - 1, yy, c);
    }
}

void line(ImageRaster& img, int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int stepx = x0 < x1 ? 1 : -1, stepy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += stepx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += stepy;
        }
    }
}

void disk(ImageRaster& img, int cx, int cy, int r, Rgb c) {
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, c);
}

void circle(ImageRaster& img, int cx, int cy, int r, Rgb c) {
    int x = r, y = 0, err = 1 - r;
    while (x >= y) {
        img.set(cx + x, cy + y, c);
        img.set(cx + y, cy + x, c);
        img.set(cx - y, cy + x, c);
        img.set(cx - x, cy + y, c);
        img.set(cx - x, cy - y, c);
        img.set(cx - y, cy - x, c);
        img.set(cx + y, cy - x, c);
        img.set(cx + x, cy - y, c);
        ++y;
        if (err < 0)
            err += 2 * y + 1;
        else {
            --x;
            err += 2 * (y - x) + 1;
        }
    }
}

void polygon(ImageRaster& img, const std::vector<std::array<int, 2>>& pts, Rgb c) {
    if (pts.size() < 3) return;
    int ymin = pts[0][1], ymax = pts[0][1];
    for (const auto& p : pts) {
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    std::vector<int> xs;
    for (int y = ymin; y <= ymax; ++y) {
        xs.clear();
        const size_t n = pts.size();
        for (size_t i = 0; i < n; ++i) {
            const auto& a = pts[i];
            const auto& b = pts[(i + 1) % n];
            const int y0 = a[1], y1 = b[1];
            if (y0 == y1) continue;
            // half-open span [min, max) so shared vertices count once
            if ((y >= std::min(y0, y1)) && (y < std::max(y0, y1))) {
                const int64_t num = static_cast<int64_t>(y - y0) * (b[0] - a[0]);
                xs.push_back(a[0] + static_cast<int>(num / (y1 - y0)));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2)
            for (int x = xs[i]; x <= xs[i + 1]; ++x) img.set(x, y, c);
    }
}

void vgradient(ImageRaster& img, int y0, int y1, Rgb top, Rgb bottom) {
    const int span = std::max(1, y1 - y0 - 1);
    for (int y = y0; y < y1; ++y) {
        const int t = y - y0;
        Rgb c;
        c.r = static_cast<uint8_t>(top.r + (bottom.r - top.r) * t / span);
        c.g = static_cast<uint8_t>(top.g + (bottom.g - top.g) * t / span);
        c.b = static_cast<uint8_t>(top.b + (bottom.b - top.b) * t / span);
        for (int x = 0; x < img.width(); ++x) img.set(x, y, c);
    }
}

std::vector<std::array<int, 2>> circle_perimeter(int cx, int cy, int r) {
    std::vector<std::array<int, 2>> pts;
    int x = r, y = 0, err = 1 - r;
    while (x >= y) {
        const std::array<std::array<int, 2>, 8> oct = {{{x, y},
                                                        {y, x},
                                                        {-y, x},
                                                        {-x, y},
                                                        {-x, -y},
                                                        {-y, -x},
                                                        {y, -x},
                                                        {x, -y}}};
        for (const auto& p : oct) pts.push_back({p[0], p[1]});
        ++y;
        if (err < 0)
            err += 2 * y + 1;
        else {
            --x;
            err += 2 * (y - x) + 1;
        }
    }
    // deduplicate and sort counter-clockwise with an integer angle comparator
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    auto quadrant = [](const std::array<int, 2>& p) {
        // CCW order starting from the positive x axis (y grows "up" here;
        // screen flip is irrelevant for slice cutting)
        if (p[0] > 0 && p[1] >= 0) return 0;
        if (p[0] <= 0 && p[1] > 0) return 1;
        if (p[0] < 0 && p[1] <= 0) return 2;
        return 3;
    };
    std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) {
        const int qa = quadrant(a), qb = quadrant(b);
        if (qa != qb) return qa < qb;
        const int64_t cross = static_cast<int64_t>(a[0]) * b[1] - static_cast<int64_t>(a[1]) * b[0];
        if (cross != 0) return cross > 0;
        return a < b;
    });
    for (auto& p : pts) {
        p[0] += cx;
        p[1] += cy;
    }
    return pts;
}

}  // namespace draw

namespace {

// 35-char masks, 7 rows of 5, '#' = ink. Covers ASCII 0x20..0x7E.
struct GlyphDef {
    char ch;
    const char* rows;
};

const GlyphDef kAsciiFont[] = {
    {' ', "....." "....." "....." "....." "....." "....." "....."},
    {'!', "..#.." "..#.." "..#.." "..#.." "..#.." "....." "..#.."},
    {'"', ".#.#." ".#.#." "....." "....." "....." "....." "....."},
    {'#', ".#.#." ".#.#." "#####" ".#.#." "#####" ".#.#." ".#.#."},
    {'$', "..#.." ".####" "#...." ".###." "....#" "####." "..#.."},
    {'%', "##..#" "##..#" "...#." "..#.." ".#..." "#..##" "#..##"},
    {'&', ".##.." "#..#." "#.#.." ".#..." "#.#.#" "#..#." ".##.#"},
    {'\'', "..#.." "..#.." "....." "....." "....." "....." "....."},
    {'(', "...#." "..#.." ".#..." ".#..." ".#..." "..#.." "...#."},
    {')', ".#..." "..#.." "...#." "...#." "...#." "..#.." ".#..."},
    {'*', "....." "..#.." "#.#.#" ".###." "#.#.#" "..#.." "....."},
    {'+', "....." "..#.." "..#.." "#####" "..#.." "..#.." "....."},
    {',', "....." "....." "....." "....." ".##.." "..#.." ".#..."},
    {'-', "....." "....." "....." "#####" "....." "....." "....."},
    {'.', "....." "....." "....." "....." "....." ".##.." ".##.."},
    {'/', "....#" "...#." "..#.." "..#.." "..#.." ".#..." "#...."},
    {'0', ".###." "#...#" "#..##" "#.#.#" "##..#" "#...#" ".###."},
    {'1', "..#.." ".##.." "..#.." "..#.." "..#.." "..#.." ".###."},
    {'2', ".###." "#...#" "....#" "..##." ".#..." "#...." "#####"},
    {'3', ".###." "#...#" "....#" "..##." "....#" "#...#" ".###."},
    {'4', "...#." "..##." ".#.#." "#..#." "#####" "...#." "...#."},
    {'5', "#####" "#...." "####." "....#" "....#" "#...#" ".###."},
    {'6', ".###." "#...." "#...." "####." "#...#" "#...#" ".###."},
    {'7', "#####" "....#" "...#." "..#.." "..#.." ".#..." ".#..."},
    {'8', ".###." "#...#" "#...#" ".###." "#...#" "#...#" ".###."},
    {'9', ".###." "#...#" "#...#" ".####" "....#" "....#" ".###."},
    {':', "....." ".##.." ".##.." "....." ".##.." ".##.." "....."},
    {';', "....." ".##.." ".##.." "....." ".##.." "..#.." ".#..."},
    {'<', "...#." "..#.." ".#..." "#...." ".#..." "..#.." "...#."},
    {'=', "....." "....." "#####" "....." "#####" "....." "....."},
    {'>', ".#..." "..#.." "...#." "....#" "...#." "..#.." ".#..."},
    {'?', ".###." "#...#" "....#" "..##." "..#.." "....." "..#.."},
    {'@', ".###." "#...#" "#.###" "#.#.#" "#.##." "#...." ".###."},
    {'A', ".###." "#...#" "#...#" "#####" "#...#" "#...#" "#...#"},
    {'B', "####." "#...#" "#...#" "####." "#...#" "#...#" "####."},
    {'C', ".###." "#...#" "#...." "#...." "#...." "#...#" ".###."},
    {'D', "####." "#...#" "#...#" "#...#" "#...#" "#...#" "####."},
    {'E', "#####" "#...." "#...." "####." "#...." "#...." "#####"},
    {'F', "#####" "#...." "#...." "####." "#...." "#...." "#...."},
    {'G', ".###." "#...#" "#...." "#.###" "#...#" "#...#" ".###."},
    {'H', "#...#" "#...#" "#...#" "#####" "#...#" "#...#" "#...#"},
    {'I', ".###." "..#.." "..#.." "..#.." "..#.." "..#.." ".###."},
    {'J', "..###" "...#." "...#." "...#." "...#." "#..#." ".##.."},
    {'K', "#...#" "#..#." "#.#.." "##..." "#.#.." "#..#." "#...#"},
    {'L', "#...." "#...." "#...." "#...." "#...." "#...." "#####"},
    {'M', "#...#" "##.##" "#.#.#" "#.#.#" "#...#" "#...#" "#...#"},
    {'N', "#...#" "##..#" "#.#.#" "#..##" "#...#" "#...#" "#...#"},
    {'O', ".###." "#...#" "#...#" "#...#" "#...#" "#...#" ".###."},
    {'P', "####." "#...#" "#...#" "####." "#...." "#...." "#...."},
    {'Q', ".###." "#...#" "#...#" "#...#" "#.#.#" "#..#." ".##.#"},
    {'R', "####." "#...#" "#...#" "####." "#.#.." "#..#." "#...#"},
    {'S', ".####" "#...." "#...." ".###." "....#" "....#" "####."},
    {'T', "#####" "..#.." "..#.." "..#.." "..#.." "..#.." "..#.."},
    {'U', "#...#" "#...#" "#...#" "#...#" "#...#" "#...#" ".###."},
    {'V', "#...#" "#...#" "#...#" "#...#" "#...#" ".#.#." "..#.."},
    {'W', "#...#" "#...#" "#...#" "#.#.#" "#.#.#" "##.##" "#...#"},
    {'X', "#...#" "#...#" ".#.#." "..#.." ".#.#." "#...#" "#...#"},
    {'Y', "#...#" "#...#" ".#.#." "..#.." "..#.." "..#.." "..#.."},
    {'Z', "#####" "....#" "...#." "..#.." ".#..." "#...." "#####"},
    {'[', ".###." ".#..." ".#..." ".#..." ".#..." ".#..." ".###."},
    {'\\', "#...." ".#..." "..#.." "..#.." "..#.." "...#." "....#"},
    {']', ".###." "...#." "...#." "...#." "...#." "...#." ".###."},
    {'^', "..#.." ".#.#." "#...#" "....." "....." "....." "....."},
    {'_', "....." "....." "....." "....." "....." "....." "#####"},
    {'`', ".#..." "..#.." "....." "....." "....." "....." "....."},
    {'a', "....." "....." ".###." "....#" ".####" "#...#" ".####"},
    {'b', "#...." "#...." "####." "#...#" "#...#" "#...#" "####."},
    {'c', "....." "....." ".###." "#...." "#...." "#...#" ".###."},
    {'d', "....#" "....#" ".####" "#...#" "#...#" "#...#" ".####"},
    {'e', "....." "....." ".###." "#...#" "#####" "#...." ".###."},
    {'f', "..##." ".#..#" ".#..." "###.." ".#..." ".#..." ".#..."},
    {'g', "....." "....." ".####" "#...#" ".####" "....#" ".###."},
    {'h', "#...." "#...." "####." "#...#" "#...#" "#...#" "#...#"},
    {'i', "..#.." "....." ".##.." "..#.." "..#.." "..#.." ".###."},
    {'j', "...#." "....." "..##." "...#." "...#." "#..#." ".##.."},
    {'k', "#...." "#...." "#..#." "#.#.." "##..." "#.#.." "#..#."},
    {'l', ".##.." "..#.." "..#.." "..#.." "..#.." "..#.." ".###."},
    {'m', "....." "....." "##.#." "#.#.#" "#.#.#" "#.#.#" "#.#.#"},
    {'n', "....." "....." "####." "#...#" "#...#" "#...#" "#...#"},
    {'o', "....." "....." ".###." "#...#" "#...#" "#...#" ".###."},
    {'p', "....." "....." "####." "#...#" "####." "#...." "#...."},
    {'q', "....." "....." ".####" "#...#" ".####" "....#" "....#"},
    {'r', "....." "....." "#.##." "##..#" "#...." "#...." "#...."},
    {'s', "....." "....." ".####" "#...." ".###." "....#" "####."},
    {'t', ".#..." ".#..." "###.." ".#..." ".#..." ".#..#" "..##."},
    {'u', "....." "....." "#...#" "#...#" "#...#" "#..##" ".##.#"},
    {'v', "....." "....." "#...#" "#...#" "#...#" ".#.#." "..#.."},
    {'w', "....." "....." "#...#" "#...#" "#.#.#" "#.#.#" ".#.#."},
    {'x', "....." "....." "#...#" ".#.#." "..#.." ".#.#." "#...#"},
    {'y', "....." "....." "#...#" "#...#" ".####" "....#" ".###."},
    {'z', "....." "....." "#####" "...#." "..#.." ".#..." "#####"},
    {'{', "...##" "..#.." "..#.." ".#..." "..#.." "..#.." "...##"},
    {'|', "..#.." "..#.." "..#.." "..#.." "..#.." "..#.." "..#.."},
    {'}', "##..." "..#.." "..#.." "...#." "..#.." "..#.." "##..."},
    {'~', "....." "....." ".#..#" "#.#.#" "#..#." "....." "....."},
};

uint64_t mask_from_rows(const char* rows) {
    uint64_t m = 0;
    for (int i = 0; i < 35; ++i)
        if (rows[i] == '#') m |= (uint64_t(1) << i);
    return m;
}

}  // namespace

GlyphAtlas::GlyphAtlas() {
    for (const auto& def : kAsciiFont) {
        const uint32_t cp = static_cast<uint32_t>(def.ch);
        const uint64_t m = mask_from_rows(def.rows);
        if (inverse_.count(m)) throw ConfigError("glyph atlas collision in ASCII table");
        bits_[cp] = m;
        inverse_[m] = cp;
        order_.push_back(cp);
    }
    // procedural CJK sample glyphs: dense deterministic patterns, salted
    // until unique against everything already present
    for (uint32_t cp = 0x4E00; cp < 0x4E00 + 200; ++cp) {
        uint64_t salt = 0;
        uint64_t m = 0;
        while (true) {
            uint64_t st = (static_cast<uint64_t>(cp) << 16) ^ salt ^ 0x9e3779b97f4a7c15ull;
            uint64_t a = splitmix64(st);
            uint64_t b = splitmix64(st);
            m = (a ^ (b << 13)) & ((uint64_t(1) << 35) - 1);
            m |= (uint64_t(1) << 0) | (uint64_t(1) << 34);  // anchor corners: looks boxy, never empty
            if (!inverse_.count(m)) break;
            ++salt;
        }
        bits_[cp] = m;
        inverse_[m] = cp;
        order_.push_back(cp);
    }
}

const GlyphAtlas& GlyphAtlas::instance() {
    static GlyphAtlas atlas;
    return atlas;
}

uint64_t GlyphAtlas::bits(uint32_t cp) const {
    const auto it = bits_.find(cp);
    if (it == bits_.end())
        throw InputError("no glyph for codepoint U+" + std::to_string(cp));
    return it->second;
}

int64_t GlyphAtlas::find(uint64_t mask) const {
    const auto it = inverse_.find(mask);
    return it == inverse_.end() ? -1 : static_cast<int64_t>(it->second);
}

void GlyphAtlas::draw_glyph(ImageRaster& img, uint32_t cp, int x, int y, int scale,
                            Rgb ink) const {
    const uint64_t m = bits(cp);
    for (int gy = 0; gy < kGlyphH; ++gy)
        for (int gx = 0; gx < kGlyphW; ++gx)
            if (m & (uint64_t(1) << (gy * kGlyphW + gx)))
                draw::fill_rect(img, x + gx * scale, y + gy * scale, scale, scale, ink);
}

}  // namespace vary
