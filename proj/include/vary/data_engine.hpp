#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vary/raster.hpp"

namespace vary {

// Pinned prompt strings. Instruction data, stage-2 packing, and the
// evaluator all share these.
inline constexpr const char* kOcrPrompt = "Provide the OCR results of this image.";
inline constexpr const char* kMarkdownPrompt = "Convert the image to markdown format.";
inline constexpr const char* kVqaPromptPrefix =
    "Answer the following questions using a single word or phrase: ";
inline constexpr const char* kDescribePrompt = "Describe this image.";

// The five nature captions, sampled uniformly for negative pairs.
extern const std::array<std::string, 5> kNatureCaptions;

struct PageLayout {
    int margin = 10;
    int glyph_scale = 2;
    int max_cols = 0;   // characters per line
    int max_lines = 0;  // lines per page
};

struct PageSpec {
    uint64_t seed = 0;
    int resolution = 192;
    std::string language = "en";  // "en" | "zh-sample"
    std::string content = "plain";  // "plain" | "table" | "formula" | "mixed"
    PageLayout layout;

    // derives a layout that fits the resolution
    static PageSpec standard(uint64_t seed, int resolution, std::string language = "en",
                             std::string content = "plain");
    uint64_t spec_hash() const;
};

struct ChartSpec {
    uint64_t seed = 0;
    std::string kind = "bar";  // bar | line | pie | composite
    int series = 3;
    int value_min = 1;
    int value_max = 30;
    bool correlated = false;
    int resolution = 192;
    // explicit text/value fields; empty ones are sampled from the seed
    std::string title;
    std::vector<std::string> labels;
    std::vector<long> values;
    std::vector<long> line_values;

    uint64_t spec_hash() const;
};

struct RenderedPage {
    ImageRaster image;
    std::string text;  // ground truth, exactly the drawn glyphs
};

// Deterministic renderers; pure functions of their spec.
RenderedPage render_document_page(const PageSpec& spec);
RenderedPage render_markdown_page(const PageSpec& spec);
// renders caller-provided text under the spec's layout (clipped to fit)
RenderedPage render_text_page(const PageSpec& spec, const std::string& text);
RenderedPage render_chart(const ChartSpec& spec);
RenderedPage sample_negative(uint64_t seed, int resolution = 192);
RenderedPage sample_caption_image(uint64_t seed, int resolution = 192);

// Parsed canonical chart ground truth, used by tests and chart QA.
struct ChartDict {
    std::string title;
    std::vector<std::string> labels;
    std::vector<long> values;        // bar/line/pie
    std::vector<long> line_values;   // composite only
};
std::string chart_dict_to_string(const ChartDict& d, const std::string& kind);
ChartDict parse_chart_dict(const std::string& s);  // throws DataError on malformed input

// Linearized formula grammar:
//   formula := term (('+'|'-'|'=') term)*
//   term    := atom ('/' atom)?
//   atom    := var sub? sup? | '(' formula ')' | int
//   sub     := '_{' int '}'     sup := '^{' int '}'
std::string generate_formula(uint64_t seed, int depth = 2);
bool parse_formula(const std::string& s);  // full-string grammar check

struct SampleRecord {
    std::string id;
    std::string image_path;
    std::string task;  // ocr | markdown | chart | nature | caption | instruction
    std::string prompt;
    std::string target;
    std::map<std::string, std::string> meta;

    std::string to_json_line() const;
    static SampleRecord from_json_line(const std::string& line);
};

struct DatasetConfig {
    // defaults keep documents+markdown+charts : negatives at 4:1
    int documents = 48;
    int markdown = 16;
    int charts = 16;
    int negatives = 20;
    int captions = 8;
    int instructions = 16;
    int resolution = 192;
    double zh_fraction = 0.2;
    double val_fraction = 0.1;
    uint64_t seed = 0;

    void validate() const;
};

// Renders every sample and writes <out_dir>/images/*.png plus
// <out_dir>/manifest.jsonl via an atomic temp-dir rename. Returns per-task
// counts (they match the config exactly).
std::map<std::string, int> build_manifest(const DatasetConfig& config, const std::string& out_dir);

// Loads a manifest; image paths are resolved relative to the manifest file.
std::vector<SampleRecord> load_manifest(const std::string& manifest_path);

}  // namespace vary
