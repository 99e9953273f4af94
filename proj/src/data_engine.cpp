#include "vary/data_engine.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "vary/png_io.hpp"
#include "vary/rng.hpp"
#include "vary/tokenizer.hpp"

namespace fs = std::filesystem;

namespace vary {

const std::array<std::string, 5> kNatureCaptions = {
    "It's an image of nature", "Here's a nature picture", "It's a nature photo",
    "This is a natural image", "That's a shot from nature"};

namespace {

// ------------------------------------------------------------------ corpora

const char* kWords[] = {
    "the",     "of",      "and",    "to",      "in",      "a",       "is",      "that",
    "for",     "it",      "as",     "was",     "with",    "be",      "by",      "on",
    "not",     "he",      "this",   "are",     "or",      "his",     "from",    "at",
    "which",   "but",     "have",   "an",      "had",     "they",    "you",     "were",
    "their",   "one",     "all",    "we",      "can",     "her",     "has",     "there",
    "been",    "if",      "more",   "when",    "will",    "would",   "who",     "so",
    "no",      "she",     "other",  "its",     "may",     "these",   "what",    "them",
    "some",    "him",     "time",   "into",    "only",    "system",  "then",    "two",
    "out",     "any",     "do",     "first",   "my",      "now",     "such",    "like",
    "our",     "over",    "man",    "me",      "even",    "most",    "made",    "after",
    "also",    "did",     "many",   "before",  "must",    "through", "years",   "where",
    "much",    "way",     "well",   "down",    "should",  "because", "each",    "just",
    "those",   "people",  "how",    "too",     "little",  "state",   "good",    "very",
    "make",    "world",   "still",  "own",     "see",     "men",     "work",    "long",
    "get",     "here",    "between", "both",   "life",    "being",   "under",   "never",
    "day",     "same",    "another", "know",   "while",   "last",    "might",   "us",
    "great",   "old",     "year",   "off",     "come",    "since",   "against", "go",
    "came",    "right",   "used",   "take",    "three",   "model",   "data",    "value",
    "result",  "method",  "figure", "table",   "section", "page",    "line",    "point"};

// themed word lists for semantically correlated charts
struct Domain {
    const char* name;
    std::vector<const char*> words;
};
const std::vector<Domain> kDomains = {
    {"sales", {"revenue", "profit", "orders", "units", "growth", "margin", "quota", "sales",
               "pipeline", "deals", "clients", "regions"}},
    {"weather", {"rain", "snow", "wind", "sunny", "cloudy", "storm", "humidity", "pressure",
                 "frost", "heat", "drizzle", "fog"}},
    {"sports", {"goals", "points", "wins", "losses", "matches", "players", "assists", "saves",
                "fouls", "medals", "laps", "scores"}},
    {"energy", {"solar", "wind", "hydro", "coal", "gas", "nuclear", "output", "demand",
                "storage", "grid", "peak", "usage"}}};

std::string pick_word(Rng& rng) {
    return kWords[rng.below(sizeof(kWords) / sizeof(kWords[0]))];
}

std::string pick_domain_word(Rng& rng, const Domain& d) {
    return d.words[rng.below(d.words.size())];
}

std::string zh_word(Rng& rng, int len) {
    std::string out;
    for (int i = 0; i < len; ++i)
        out += encode_utf8(0x4E00 + static_cast<uint32_t>(rng.below(200)));
    return out;
}

// ---------------------------------------------------------------- page text

std::string sample_line(Rng& rng, const std::string& language, int max_cols) {
    std::string line;
    while (true) {
        const std::string w =
            language == "zh-sample" ? zh_word(rng, rng.range(1, 4)) : pick_word(rng);
        const size_t units = decode_utf8(w).size();
        const size_t line_units = decode_utf8(line).size();
        const size_t add = line.empty() ? units : units + 1;
        if (line_units + add > static_cast<size_t>(max_cols)) break;
        if (!line.empty()) line += ' ';
        line += w;
        if (rng.below(100) < 8) break;  // occasional short line
    }
    return line;
}

void draw_text_block(ImageRaster& img, const std::string& text, const PageLayout& layout) {
    const GlyphAtlas& atlas = GlyphAtlas::instance();
    const int advance = GlyphAtlas::kAdvanceX * layout.glyph_scale;
    const int line_h = GlyphAtlas::kAdvanceY * layout.glyph_scale;
    int col = 0, line = 0;
    for (uint32_t cp : decode_utf8(text)) {
        if (cp == '\n') {
            col = 0;
            ++line;
            continue;
        }
        const int x = layout.margin + col * advance;
        const int y = layout.margin + line * line_h;
        if (cp != ' ') atlas.draw_glyph(img, cp, x, y, layout.glyph_scale, {0, 0, 0});
        ++col;
    }
}

std::string clip_lines(const std::string& text, int max_lines, int max_cols) {
    // trim at the last full line; over-long lines are never produced by the
    // samplers, but clip defensively by dropping whole lines
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else
            cur += c;
    }
    lines.push_back(cur);
    std::string out;
    int kept = 0;
    for (const std::string& l : lines) {
        if (kept >= max_lines) break;
        if (decode_utf8(l).size() > static_cast<size_t>(max_cols)) break;
        if (kept) out += '\n';
        out += l;
        ++kept;
    }
    return out;
}

// ------------------------------------------------------------------- tables

std::string make_pipe_table(Rng& rng, int max_cols) {
    const int ncols = max_cols >= 22 ? rng.range(2, 3) : 2;
    const int nrows = rng.range(1, 3);
    auto render_row = [&](const std::vector<std::string>& row) {
        std::string s = "|";
        for (const auto& c : row) s += " " + c + " |";
        return s;
    };
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::string> lines;
        std::vector<std::string> header;
        for (int c = 0; c < ncols; ++c) header.push_back(pick_word(rng));
        lines.push_back(render_row(header));
        std::string sep = "|";
        for (int c = 0; c < ncols; ++c) sep += " --- |";
        lines.push_back(sep);
        for (int r = 0; r < nrows; ++r) {
            std::vector<std::string> row;
            for (int c = 0; c < ncols; ++c) row.push_back(pick_word(rng));
            lines.push_back(render_row(row));
        }
        bool fits = true;
        for (const auto& line : lines)
            if (line.size() > static_cast<size_t>(max_cols)) fits = false;
        if (!fits) continue;
        std::string out;
        for (size_t l = 0; l < lines.size(); ++l) {
            if (l) out += '\n';
            out += lines[l];
        }
        return out;
    }
    // narrow pages get a minimal two-column table
    return "| a | b |\n| --- | --- |\n| c | d |";
}

}  // namespace

// ------------------------------------------------------------ formula code

std::string generate_formula(uint64_t seed, int depth) {
    Rng rng(mix64(seed));
    std::string out;
    std::function<void(int)> emit_formula = [&](int d) {
        auto emit_int = [&] { out += std::to_string(rng.range(0, 99)); };
        auto emit_atom = [&](auto&& self_formula, int dd) {
            const int choice = dd > 0 ? rng.range(0, 2) : rng.range(0, 1);
            if (choice == 2) {
                out += '(';
                self_formula(dd - 1);
                out += ')';
            } else if (choice == 1) {
                emit_int();
            } else {
                out += static_cast<char>('a' + rng.range(0, 25));
                if (rng.below(2)) {
                    out += "_{";
                    emit_int();
                    out += '}';
                }
                if (rng.below(2)) {
                    out += "^{";
                    emit_int();
                    out += '}';
                }
            }
        };
        auto emit_term = [&](int dd) {
            emit_atom(emit_formula, dd);
            if (rng.below(3) == 0) {
                out += '/';
                emit_atom(emit_formula, dd);
            }
        };
        emit_term(d);
        const int more = rng.range(0, 2);
        const char ops[] = {'+', '-', '='};
        for (int i = 0; i < more; ++i) {
            out += ops[rng.below(3)];
            emit_term(d);
        }
    };
    emit_formula(depth);
    return out;
}

namespace {

struct FormulaParser {
    const std::string& s;
    size_t i = 0;

    bool at(char c) const { return i < s.size() && s[i] == c; }
    bool eat(char c) {
        if (!at(c)) return false;
        ++i;
        return true;
    }
    bool parse_int() {
        if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        return true;
    }
    bool parse_atom() {
        if (eat('(')) return parse_formula() && eat(')');
        if (i < s.size() && s[i] >= 'a' && s[i] <= 'z') {
            ++i;
            if (at('_')) {
                ++i;
                if (!eat('{') || !parse_int() || !eat('}')) return false;
            }
            if (at('^')) {
                ++i;
                if (!eat('{') || !parse_int() || !eat('}')) return false;
            }
            return true;
        }
        return parse_int();
    }
    bool parse_term() {
        if (!parse_atom()) return false;
        if (eat('/')) return parse_atom();
        return true;
    }
    bool parse_formula() {
        if (!parse_term()) return false;
        while (at('+') || at('-') || at('=')) {
            ++i;
            if (!parse_term()) return false;
        }
        return true;
    }
};

}  // namespace

bool parse_formula(const std::string& s) {
    FormulaParser p{s};
    return p.parse_formula() && p.i == s.size();
}

// -------------------------------------------------------------- page specs

PageSpec PageSpec::standard(uint64_t seed, int resolution, std::string language,
                            std::string content) {
    PageSpec spec;
    spec.seed = seed;
    spec.resolution = resolution;
    spec.language = std::move(language);
    spec.content = std::move(content);
    spec.layout.margin = 10;
    spec.layout.glyph_scale = resolution >= 384 ? 3 : resolution >= 128 ? 2 : 1;
    const int advance = GlyphAtlas::kAdvanceX * spec.layout.glyph_scale;
    const int line_h = GlyphAtlas::kAdvanceY * spec.layout.glyph_scale;
    spec.layout.max_cols = (resolution - 2 * spec.layout.margin) / advance;
    spec.layout.max_lines = (resolution - 2 * spec.layout.margin) / line_h;
    return spec;
}

uint64_t PageSpec::spec_hash() const {
    uint64_t h = fnv1a(language);
    h = fnv1a(content, h);
    uint64_t st = h ^ seed ^ (static_cast<uint64_t>(resolution) << 32) ^
                  static_cast<uint64_t>(layout.glyph_scale);
    return splitmix64(st);
}

uint64_t ChartSpec::spec_hash() const {
    uint64_t h = fnv1a(kind);
    uint64_t st = h ^ seed ^ (static_cast<uint64_t>(resolution) << 32) ^
                  (static_cast<uint64_t>(series) << 8) ^ (correlated ? 1u : 0u);
    return splitmix64(st);
}

void DatasetConfig::validate() const {
    if (documents < 0 || markdown < 0 || charts < 0 || negatives < 0 || captions < 0 ||
        instructions < 0)
        throw ConfigError("dataset config: counts must be non-negative");
    if (resolution < 64) throw ConfigError("dataset config: resolution must be at least 64");
    if (zh_fraction < 0.0 || zh_fraction > 1.0)
        throw ConfigError("dataset config: zh_fraction must be in [0,1]");
    if (val_fraction < 0.0 || val_fraction > 1.0)
        throw ConfigError("dataset config: val_fraction must be in [0,1]");
}

// --------------------------------------------------------------- documents

RenderedPage render_document_page(const PageSpec& spec) {
    Rng rng(mix64(spec.seed ^ 0xD0C5EEDull));
    const int target_lines = std::min(spec.layout.max_lines, rng.range(2, 6));
    std::string text;
    for (int l = 0; l < target_lines; ++l) {
        if (l) text += '\n';
        text += sample_line(rng, spec.language, spec.layout.max_cols);
    }
    text = clip_lines(text, spec.layout.max_lines, spec.layout.max_cols);
    ImageRaster img(spec.resolution, spec.resolution);
    draw_text_block(img, text, spec.layout);
    return {std::move(img), std::move(text)};
}

RenderedPage render_text_page(const PageSpec& spec, const std::string& text) {
    const std::string clipped = clip_lines(text, spec.layout.max_lines, spec.layout.max_cols);
    ImageRaster img(spec.resolution, spec.resolution);
    draw_text_block(img, clipped, spec.layout);
    return {std::move(img), clipped};
}

RenderedPage render_markdown_page(const PageSpec& spec) {
    Rng rng(mix64(spec.seed ^ 0x3A9Dull));
    std::vector<std::string> blocks;
    auto paragraph = [&] {
        std::string p;
        const int n = rng.range(1, 2);
        for (int l = 0; l < n; ++l) {
            if (l) p += '\n';
            p += sample_line(rng, "en", spec.layout.max_cols);
        }
        return p;
    };
    auto formula_line = [&] {
        std::string f = "$" + generate_formula(rng.next_u64(), 1) + "$";
        while (decode_utf8(f).size() > static_cast<size_t>(spec.layout.max_cols))
            f = "$" + generate_formula(rng.next_u64(), 0) + "$";
        return f;
    };
    if (spec.content == "table") {
        blocks.push_back(make_pipe_table(rng, spec.layout.max_cols));
    } else if (spec.content == "formula") {
        blocks.push_back(formula_line());
        if (rng.below(2)) blocks.push_back(formula_line());
    } else {  // mixed
        blocks.push_back(paragraph());
        if (rng.below(2))
            blocks.push_back(make_pipe_table(rng, spec.layout.max_cols));
        else
            blocks.push_back(formula_line());
    }
    std::string text;
    for (size_t b = 0; b < blocks.size(); ++b) {
        if (b) text += '\n';
        text += blocks[b];
    }
    text = clip_lines(text, spec.layout.max_lines, spec.layout.max_cols);
    ImageRaster img(spec.resolution, spec.resolution);
    draw_text_block(img, text, spec.layout);
    return {std::move(img), std::move(text)};
}

// ------------------------------------------------------------------ charts

std::string chart_dict_to_string(const ChartDict& d, const std::string& kind) {
    std::ostringstream os;
    os << "{'title': '" << d.title << "', 'x': [";
    for (size_t i = 0; i < d.labels.size(); ++i) {
        if (i) os << ", ";
        os << "'" << d.labels[i] << "'";
    }
    if (kind == "composite") {
        os << "], 'bar': [";
        for (size_t i = 0; i < d.values.size(); ++i) {
            if (i) os << ", ";
            os << d.values[i];
        }
        os << "], 'line': [";
        for (size_t i = 0; i < d.line_values.size(); ++i) {
            if (i) os << ", ";
            os << d.line_values[i];
        }
    } else {
        os << "], 'y': [";
        for (size_t i = 0; i < d.values.size(); ++i) {
            if (i) os << ", ";
            os << d.values[i];
        }
    }
    os << "]}";
    return os.str();
}

namespace {

struct DictParser {
    const std::string& s;
    size_t i = 0;

    void expect(const std::string& lit) {
        if (s.compare(i, lit.size(), lit) != 0)
            throw DataError("chart dict: expected '" + lit + "' at offset " + std::to_string(i));
        i += lit.size();
    }
    std::string quoted() {
        expect("'");
        const size_t end = s.find('\'', i);
        if (end == std::string::npos) throw DataError("chart dict: unterminated string");
        std::string out = s.substr(i, end - i);
        i = end + 1;
        return out;
    }
    long integer() {
        size_t j = i;
        if (j < s.size() && s[j] == '-') ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        if (j == i) throw DataError("chart dict: expected integer at offset " + std::to_string(i));
        const long v = std::stol(s.substr(i, j - i));
        i = j;
        return v;
    }
};

}  // namespace

ChartDict parse_chart_dict(const std::string& s) {
    ChartDict d;
    DictParser p{s};
    p.expect("{'title': ");
    d.title = p.quoted();
    p.expect(", 'x': [");
    if (p.s[p.i] != ']')
        while (true) {
            d.labels.push_back(p.quoted());
            if (p.s[p.i] == ',')
                p.expect(", ");
            else
                break;
        }
    p.expect("]");
    const bool composite = p.s.compare(p.i, 9, ", 'bar': ") == 0;
    auto parse_list = [&](std::vector<long>& out) {
        p.expect("[");
        if (p.s[p.i] != ']')
            while (true) {
                out.push_back(p.integer());
                if (p.s[p.i] == ',')
                    p.expect(", ");
                else
                    break;
            }
        p.expect("]");
    };
    if (composite) {
        p.expect(", 'bar': ");
        parse_list(d.values);
        p.expect(", 'line': ");
        parse_list(d.line_values);
    } else {
        p.expect(", 'y': ");
        parse_list(d.values);
    }
    p.expect("}");
    if (p.i != s.size()) throw DataError("chart dict: trailing characters");
    return d;
}

namespace {

const Rgb kPalette[] = {{66, 133, 244}, {219, 68, 55}, {244, 180, 0},
                        {15, 157, 88},  {171, 71, 188}, {255, 112, 67}};

void draw_small_text(ImageRaster& img, const std::string& text, int x, int y, Rgb ink) {
    const GlyphAtlas& atlas = GlyphAtlas::instance();
    int col = 0;
    for (uint32_t cp : decode_utf8(text)) {
        if (cp != ' ') atlas.draw_glyph(img, cp, x + col * GlyphAtlas::kAdvanceX, y, 1, ink);
        ++col;
    }
}

struct ChartData {
    ChartDict dict;
    std::string series_name;
};

ChartData sample_chart_data(const ChartSpec& spec, Rng& rng) {
    ChartData data;
    if (!spec.title.empty() || !spec.labels.empty() || !spec.values.empty()) {
        // explicit fields win; anything unset falls back to sampling
        data.dict.title = spec.title.empty() ? pick_word(rng) : spec.title;
        data.series_name = pick_word(rng);
        for (int i = 0; i < spec.series; ++i)
            data.dict.labels.push_back(i < static_cast<int>(spec.labels.size())
                                           ? spec.labels[static_cast<size_t>(i)]
                                           : pick_word(rng));
        for (int i = 0; i < spec.series; ++i)
            data.dict.values.push_back(i < static_cast<int>(spec.values.size())
                                           ? spec.values[static_cast<size_t>(i)]
                                           : rng.range(spec.value_min, spec.value_max));
        if (spec.kind == "composite")
            for (int i = 0; i < spec.series; ++i)
                data.dict.line_values.push_back(
                    i < static_cast<int>(spec.line_values.size())
                        ? spec.line_values[static_cast<size_t>(i)]
                        : rng.range(spec.value_min, spec.value_max));
        return data;
    }
    if (spec.correlated) {
        const Domain& dom = kDomains[rng.below(kDomains.size())];
        data.dict.title = pick_domain_word(rng, dom);
        data.series_name = pick_domain_word(rng, dom);
        for (int i = 0; i < spec.series; ++i) data.dict.labels.push_back(pick_domain_word(rng, dom));
    } else {
        data.dict.title = pick_word(rng);
        data.series_name = pick_word(rng);
        for (int i = 0; i < spec.series; ++i) data.dict.labels.push_back(pick_word(rng));
    }
    for (int i = 0; i < spec.series; ++i)
        data.dict.values.push_back(rng.range(spec.value_min, spec.value_max));
    if (spec.kind == "composite")
        for (int i = 0; i < spec.series; ++i)
            data.dict.line_values.push_back(rng.range(spec.value_min, spec.value_max));
    return data;
}

}  // namespace

RenderedPage render_chart(const ChartSpec& spec) {
    if (spec.series < 1) throw ConfigError("chart spec: series must be positive");
    if (spec.value_min > spec.value_max) throw ConfigError("chart spec: empty value range");
    Rng rng(mix64(spec.seed ^ 0xC4A27ull));
    ChartData data = sample_chart_data(spec, rng);
    if (spec.kind == "pie") {
        long total = 0;
        for (long v : data.dict.values) total += v;
        if (total <= 0 || (spec.values.empty() && spec.value_min <= 0))
            throw ConfigError("chart spec: pie charts need positive totals");
    }

    const int R = spec.resolution;
    const int style = static_cast<int>(spec.seed % 2);
    const Rgb bg = style == 0 ? Rgb{255, 255, 255} : Rgb{250, 247, 240};
    const Rgb axis = {40, 40, 40};
    ImageRaster img(R, R, bg);

    draw_small_text(img, data.dict.title, 12, 6, {0, 0, 0});

    const int left = 26, top = 22, bottom = R - 24, right = R - 10;
    const int plot_w = right - left, plot_h = bottom - top;
    long vmax = 1;
    for (long v : data.dict.values) vmax = std::max(vmax, v);
    for (long v : data.dict.line_values) vmax = std::max(vmax, v);

    auto y_of = [&](long v) {
        return bottom - static_cast<int>(v * static_cast<long>(plot_h) / vmax);
    };

    if (spec.kind == "pie") {
        const int cx = R / 2, cy = (top + bottom) / 2 + 4;
        const int radius = std::min(plot_w, plot_h) / 2 - 6;
        auto perim = draw::circle_perimeter(cx, cy, radius);
        const size_t P = perim.size();
        long total = 0;
        for (long v : data.dict.values) total += v;
        long cum = 0;
        auto cut = [&](long c) {
            const long idx = c * static_cast<long>(P) / total;
            return static_cast<size_t>(std::clamp<long>(idx, 0, static_cast<long>(P)));
        };
        for (size_t k = 0; k < data.dict.values.size(); ++k) {
            const size_t a = cut(cum);
            cum += data.dict.values[k];
            const size_t b = cut(cum);
            if (b <= a) continue;
            std::vector<std::array<int, 2>> poly = {{cx, cy}};
            for (size_t t = a; t < b; ++t) poly.push_back(perim[t]);
            poly.push_back(perim[b % P]);
            draw::polygon(img, poly, kPalette[k % 6]);
        }
        if (style == 1) draw::circle(img, cx, cy, radius, axis);
        // legend: label rows down the left edge
        for (size_t k = 0; k < data.dict.labels.size(); ++k) {
            const int ly = top + static_cast<int>(k) * 10;
            draw::fill_rect(img, 4, ly + 1, 5, 5, kPalette[k % 6]);
            draw_small_text(img, data.dict.labels[k], 11, ly, {0, 0, 0});
        }
    } else {
        if (style == 0) {
            for (int gy = 1; gy <= 3; ++gy)
                draw::line(img, left, top + gy * plot_h / 4, right, top + gy * plot_h / 4,
                           {210, 210, 210});
        } else {
            draw::rect_outline(img, left, top, plot_w + 1, plot_h + 1, {120, 120, 120});
        }
        draw::line(img, left, top, left, bottom, axis);
        draw::line(img, left, bottom, right, bottom, axis);
        const int n = spec.series;
        const int slot = plot_w / n;
        if (spec.kind == "bar" || spec.kind == "composite") {
            const int bar_w = std::max(3, slot / 2);
            for (int k = 0; k < n; ++k) {
                const int x0 = left + k * slot + (slot - bar_w) / 2;
                const int y0 = y_of(data.dict.values[static_cast<size_t>(k)]);
                const Rgb fill = style == 0 ? kPalette[static_cast<size_t>(k) % 6] : kPalette[0];
                draw::fill_rect(img, x0, y0, bar_w, bottom - y0, fill);
                if (style == 1) draw::rect_outline(img, x0, y0, bar_w, bottom - y0, axis);
            }
        }
        if (spec.kind == "line" || spec.kind == "composite") {
            const std::vector<long>& vals =
                spec.kind == "line" ? data.dict.values : data.dict.line_values;
            const Rgb lc = spec.kind == "composite" ? kPalette[1] : kPalette[3];
            int px = -1, py = -1;
            for (int k = 0; k < n; ++k) {
                const int x = left + k * slot + slot / 2;
                const int y = y_of(vals[static_cast<size_t>(k)]);
                if (px >= 0) draw::line(img, px, py, x, y, lc);
                draw::fill_rect(img, x - 1, y - 1, 3, 3, lc);
                px = x;
                py = y;
            }
        }
        // x labels and values under / above the plot
        for (int k = 0; k < n; ++k) {
            const int x = left + k * slot + 2;
            draw_small_text(img, data.dict.labels[static_cast<size_t>(k)], x, bottom + 4,
                            {0, 0, 0});
            draw_small_text(img, std::to_string(data.dict.values[static_cast<size_t>(k)]), x,
                            y_of(data.dict.values[static_cast<size_t>(k)]) - 8, {60, 60, 60});
        }
    }
    return {std::move(img), chart_dict_to_string(data.dict, spec.kind)};
}

// -------------------------------------------------------- negative / caption

namespace {

struct Scene {
    ImageRaster image;
    int hills = 0;
    std::string sky_word;
};

Scene procedural_scene(uint64_t seed, int resolution) {
    Rng rng(mix64(seed ^ 0x7A7E5ull));
    const int R = resolution;
    Scene scene;
    scene.image = ImageRaster(R, R);
    ImageRaster& img = scene.image;

    struct SkyChoice {
        Rgb top, bottom;
        const char* word;
    };
    const SkyChoice skies[] = {
        {{84, 134, 222}, {190, 220, 250}, "blue"},
        {{40, 160, 170}, {200, 240, 235}, "teal"},
        {{120, 90, 200}, {230, 210, 250}, "violet"},
        {{235, 160, 80}, {250, 230, 180}, "amber"},
    };
    const SkyChoice& sky = skies[rng.below(4)];
    scene.sky_word = sky.word;
    const int horizon = R * 2 / 3 + rng.range(-R / 10, R / 10);
    draw::vgradient(img, 0, horizon, sky.top, sky.bottom);
    draw::fill_rect(img, 0, horizon, R, R - horizon, {90, 140, 70});

    // sun
    const int sr = R / rng.range(9, 14);
    draw::disk(img, rng.range(sr, R - sr), rng.range(sr, horizon / 2), sr, {250, 220, 90});

    // hills: green disks straddling the horizon
    scene.hills = rng.range(1, 3);
    for (int hcount = 0; hcount < scene.hills; ++hcount) {
        const int hr = R / rng.range(3, 6);
        const uint8_t g = static_cast<uint8_t>(100 + rng.range(0, 60));
        draw::disk(img, rng.range(0, R), horizon + hr / 2, hr,
                   {static_cast<uint8_t>(40 + rng.range(0, 30)), g, 50});
    }

    // speckle noise
    const int dots = R * R / 48;
    for (int d = 0; d < dots; ++d) {
        const int x = static_cast<int>(rng.below(static_cast<uint64_t>(R)));
        const int y = static_cast<int>(rng.below(static_cast<uint64_t>(R)));
        const Rgb c = img.get8(x, y);
        const int delta = rng.range(-14, 14);
        auto adj = [&](uint8_t v) {
            return static_cast<uint8_t>(std::clamp(static_cast<int>(v) + delta, 0, 255));
        };
        img.set(x, y, {adj(c.r), adj(c.g), adj(c.b)});
    }
    return scene;
}

}  // namespace

RenderedPage sample_negative(uint64_t seed, int resolution) {
    Rng rng(mix64(seed ^ 0xBADF00Dull));
    Scene scene = procedural_scene(seed, resolution);
    const std::string caption = kNatureCaptions[rng.below(5)];
    return {std::move(scene.image), caption};
}

RenderedPage sample_caption_image(uint64_t seed, int resolution) {
    Scene scene = procedural_scene(seed ^ 0xCAFEull, resolution);
    const std::string caption = "A procedural outdoor scene with " +
                                std::to_string(scene.hills) + " hills under a " + scene.sky_word +
                                " sky";
    return {std::move(scene.image), caption};
}

// ------------------------------------------------------------- manifest IO

std::string SampleRecord::to_json_line() const {
    nlohmann::json j;
    j["id"] = id;
    j["image_path"] = image_path;
    j["task"] = task;
    j["prompt"] = prompt;
    j["target"] = target;
    j["meta"] = meta;
    return j.dump();
}

SampleRecord SampleRecord::from_json_line(const std::string& line) {
    SampleRecord rec;
    nlohmann::json j = nlohmann::json::parse(line);
    rec.id = j.at("id").get<std::string>();
    rec.image_path = j.at("image_path").get<std::string>();
    rec.task = j.at("task").get<std::string>();
    rec.prompt = j.at("prompt").get<std::string>();
    rec.target = j.at("target").get<std::string>();
    if (j.contains("meta"))
        rec.meta = j.at("meta").get<std::map<std::string, std::string>>();
    return rec;
}

namespace {

std::string split_of(const std::string& id, double val_fraction) {
    const uint64_t h = fnv1a(id);
    return (h % 1000) < static_cast<uint64_t>(val_fraction * 1000.0) ? "val" : "train";
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

std::map<std::string, int> build_manifest(const DatasetConfig& config, const std::string& out_dir) {
    config.validate();
    const fs::path out(out_dir);
    if (fs::exists(out / "manifest.jsonl"))
        throw DataError("refusing to overwrite existing manifest in " + out_dir);
    const fs::path tmp(out_dir + ".tmp-" + std::to_string(config.seed));
    std::error_code ec;
    fs::remove_all(tmp, ec);
    fs::create_directories(tmp / "images");

    std::vector<SampleRecord> records;
    std::map<std::string, int> counts;
    auto add = [&](const std::string& task, int index, const RenderedPage& page,
                   const std::string& prompt, std::map<std::string, std::string> meta) {
        SampleRecord rec;
        rec.id = task + "-" + zero_pad(index, 5);
        rec.image_path = "images/" + rec.id + ".png";
        rec.task = task;
        rec.prompt = prompt;
        rec.target = page.text;
        rec.meta = std::move(meta);
        rec.meta["split"] = split_of(rec.id, config.val_fraction);
        write_png((tmp / rec.image_path).string(), page.image);
        records.push_back(rec);
        ++counts[task];
    };
    auto sub_seed = [&](const char* tag, int i) {
        uint64_t st = config.seed ^ fnv1a(tag) ^ (static_cast<uint64_t>(i) * 0x9E3779B9ull);
        return splitmix64(st);
    };

    for (int i = 0; i < config.documents; ++i) {
        const bool zh = (static_cast<double>(i % 100) / 100.0) < config.zh_fraction;
        const PageSpec spec = PageSpec::standard(sub_seed("doc", i), config.resolution,
                                                 zh ? "zh-sample" : "en", "plain");
        add("ocr", i, render_document_page(spec), "",
            {{"spec_hash", std::to_string(spec.spec_hash())}, {"language", spec.language}});
    }
    for (int i = 0; i < config.markdown; ++i) {
        const char* contents[] = {"mixed", "table", "formula"};
        const PageSpec spec =
            PageSpec::standard(sub_seed("md", i), config.resolution, "en", contents[i % 3]);
        add("markdown", i, render_markdown_page(spec), "",
            {{"spec_hash", std::to_string(spec.spec_hash())}, {"content", spec.content}});
    }
    for (int i = 0; i < config.charts; ++i) {
        ChartSpec spec;
        spec.seed = sub_seed("chart", i);
        const char* kinds[] = {"bar", "line", "pie", "composite"};
        spec.kind = kinds[i % 4];
        Rng r(spec.seed);
        spec.series = 2 + static_cast<int>(r.below(3));
        spec.resolution = config.resolution;
        spec.correlated = (i % 2) == 1;
        add("chart", i, render_chart(spec), "",
            {{"spec_hash", std::to_string(spec.spec_hash())}, {"kind", spec.kind}});
    }
    for (int i = 0; i < config.negatives; ++i) {
        add("nature", i, sample_negative(sub_seed("neg", i), config.resolution), "", {});
    }
    for (int i = 0; i < config.captions; ++i) {
        add("caption", i, sample_caption_image(sub_seed("cap", i), config.resolution),
            kDescribePrompt, {});
    }
    for (int i = 0; i < config.instructions; ++i) {
        const int kind = i % 3;
        if (kind == 0) {
            const PageSpec spec =
                PageSpec::standard(sub_seed("inst-ocr", i), config.resolution, "en", "plain");
            add("instruction", i, render_document_page(spec), kOcrPrompt,
                {{"instruction", "ocr"}});
        } else if (kind == 1) {
            const PageSpec spec =
                PageSpec::standard(sub_seed("inst-md", i), config.resolution, "en",
                                   (i % 2) ? "table" : "mixed");
            add("instruction", i, render_markdown_page(spec), kMarkdownPrompt,
                {{"instruction", "markdown"}});
        } else {
            ChartSpec spec;
            spec.seed = sub_seed("inst-chart", i);
            spec.kind = "bar";
            Rng r(spec.seed);
            spec.series = 2 + static_cast<int>(r.below(2));
            spec.resolution = config.resolution;
            spec.correlated = true;
            RenderedPage page = render_chart(spec);
            const ChartDict dict = parse_chart_dict(page.text);
            const size_t qi = r.below(dict.labels.size());
            const std::string q = "What is the value of " + dict.labels[qi] + "?";
            page.text = std::to_string(dict.values[qi]);
            add("instruction", i, page, std::string(kVqaPromptPrefix) + q,
                {{"instruction", "chartqa"}});
        }
    }

    // manifest last, inside the temp dir, then one atomic rename
    {
        std::ofstream mf((tmp / "manifest.jsonl").string(), std::ios::trunc);
        if (!mf) throw DataError("cannot write manifest in " + tmp.string());
        for (const SampleRecord& rec : records) mf << rec.to_json_line() << "\n";
        if (!mf) throw DataError("short manifest write");
    }
    fs::create_directories(out.parent_path().empty() ? fs::path(".") : out.parent_path());
    try {
        fs::rename(tmp, out);
    } catch (const fs::filesystem_error& e) {
        throw DataError("cannot move dataset into place: " + std::string(e.what()));
    }
    return counts;
}

std::vector<SampleRecord> load_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<SampleRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            SampleRecord rec = SampleRecord::from_json_line(line);
            rec.image_path = (base / rec.image_path).string();
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace vary
