#include "vary/run_config.hpp"

#include <set>

#include "json.hpp"
#include "vary/tokenizer.hpp"

namespace vary {

using nlohmann::json;

namespace {
int standard_vocab_size() {
    static const int v = Tokenizer::standard().vocab_size();
    return v;
}
}  // namespace

void TrainSchedule::validate() const {
    if (batch_size <= 0) throw ConfigError("schedule: batch_size must be positive");
    if (epochs <= 0 && max_steps <= 0)
        throw ConfigError("schedule: either epochs or max_steps must be positive");
    if (peak_lr <= 0.0) throw ConfigError("schedule: peak_lr must be positive");
    if (on_bad_image != "abort" && on_bad_image != "skip")
        throw ConfigError("schedule: on_bad_image must be 'abort' or 'skip'");
}

void PhaseSchedule::validate() const {
    if (phase != "pretrain" && phase != "sft")
        throw ConfigError("phase must be 'pretrain' or 'sft', got '" + phase + "'");
    sched.validate();
}

void RunConfig::validate() const {
    encoder.validate();
    legacy.validate();
    decoder.validate();
    llm.validate();
    tiny_schedule.validate();
    base_pretrain.validate();
    base_sft.validate();
    dataset.validate();
    if (dim_half <= 0) throw ConfigError("dim_half must be positive");
    if (llm.dim != 2 * dim_half)
        throw ConfigError("llm dim (" + std::to_string(llm.dim) + ") must equal 2*dim_half (" +
                          std::to_string(2 * dim_half) + ")");
    if (encoder.token_count() != legacy.token_count())
        throw ConfigError("paired vocabularies must emit equal token counts: new " +
                          std::to_string(encoder.token_count()) + " vs legacy " +
                          std::to_string(legacy.token_count()));
}

RunConfig RunConfig::profile_toy() {
    RunConfig c;
    c.profile = "toy";
    c.encoder = {128, 16, 2, 64, {96, 128}, 128};          // 2x2 = 4 tokens of 128
    c.legacy = {64, 32, 2, 128};                           // 2x2 = 4 tokens of 128
    c.decoder = {standard_vocab_size(), 128, 2, 4, 256, 128};
    c.dim_half = 64;
    c.llm = {standard_vocab_size(), 128, 2, 4, 448, 0};
    c.tiny_schedule = {};
    c.tiny_schedule.batch_size = 8;
    c.tiny_schedule.epochs = 3;
    c.tiny_schedule.peak_lr = 1e-3;
    c.base_pretrain.phase = "pretrain";
    c.base_pretrain.sched = c.tiny_schedule;
    c.base_sft.phase = "sft";
    c.base_sft.sched = c.tiny_schedule;
    c.base_sft.sched.peak_lr = 5e-4;
    c.dataset = {};
    c.dataset.resolution = 128;
    return c;
}

RunConfig RunConfig::profile_paper_shape() {
    RunConfig c;
    c.profile = "paper-shape";
    // the 1024-px stride-16 encoder with the (512,1024) merging head and the
    // 224/14 legacy branch, fused to 256 tokens of 4096 channels; depths are
    // shallow so the profile stays runnable on a workstation
    c.encoder = {1024, 16, 1, 256, {512, 1024}, 1024};     // 16x16 = 256 tokens of 1024
    c.legacy = {224, 14, 1, 1024};                         // 16x16 = 256 tokens of 1024
    c.decoder = {standard_vocab_size(), 768, 2, 8, 4096, 2048};
    c.dim_half = 2048;
    c.llm = {standard_vocab_size(), 4096, 0, 32, 512, 0};
    c.tiny_schedule.batch_size = 512;
    c.tiny_schedule.epochs = 3;
    c.tiny_schedule.peak_lr = 5e-5;
    c.base_pretrain.phase = "pretrain";
    c.base_pretrain.sched.batch_size = 256;
    c.base_pretrain.sched.epochs = 1;
    c.base_pretrain.sched.peak_lr = 5e-5;
    c.base_sft.phase = "sft";
    c.base_sft.sched.batch_size = 256;
    c.base_sft.sched.epochs = 1;
    c.base_sft.sched.peak_lr = 1e-5;
    c.dataset.documents = 2000;
    c.dataset.markdown = 1000;
    c.dataset.charts = 1000;
    c.dataset.negatives = 500;
    c.dataset.captions = 500;
    c.dataset.instructions = 500;
    c.dataset.resolution = 1024;
    return c;
}

RunConfig RunConfig::from_profile(const std::string& name) {
    if (name == "toy") return profile_toy();
    if (name == "paper-shape") return profile_paper_shape();
    throw ConfigError("unknown profile '" + name + "' (expected 'toy' or 'paper-shape')");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + key + "' in " + where);
}

template <typename T>
void opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_encoder(const json& j, EncoderConfig& c) {
    reject_unknown(j, {"input_size", "patch_stride", "trunk_depth", "trunk_dim", "head_dims",
                       "out_dim", "pretrained"},
                   "encoder");
    opt(j, "input_size", c.input_size);
    opt(j, "patch_stride", c.patch_stride);
    opt(j, "trunk_depth", c.trunk_depth);
    opt(j, "trunk_dim", c.trunk_dim);
    if (j.contains("head_dims")) {
        const auto v = j.at("head_dims").get<std::vector<int>>();
        if (v.size() != 2) throw ConfigError("encoder.head_dims must have exactly two entries");
        c.head_dims = {v[0], v[1]};
    }
    opt(j, "out_dim", c.out_dim);
}

void parse_legacy(const json& j, LegacyConfig& c) {
    reject_unknown(j, {"input_size", "patch_size", "depth", "dim"}, "legacy");
    opt(j, "input_size", c.input_size);
    opt(j, "patch_size", c.patch_size);
    opt(j, "depth", c.depth);
    opt(j, "dim", c.dim);
}

void parse_decoder(const json& j, DecoderConfig& c, const std::string& where) {
    reject_unknown(j, {"dim", "depth", "heads", "max_positions", "init_positions"}, where);
    opt(j, "dim", c.dim);
    opt(j, "depth", c.depth);
    opt(j, "heads", c.heads);
    opt(j, "max_positions", c.max_positions);
    opt(j, "init_positions", c.init_positions);
}

void parse_schedule(const json& j, TrainSchedule& s, const std::string& where) {
    reject_unknown(j, {"batch_size", "epochs", "peak_lr", "beta1", "beta2", "weight_decay",
                       "clip_norm", "max_steps", "early_stop_loss", "on_bad_image", "log_every",
                       "seed"},
                   where);
    opt(j, "batch_size", s.batch_size);
    opt(j, "epochs", s.epochs);
    opt(j, "peak_lr", s.peak_lr);
    opt(j, "beta1", s.beta1);
    opt(j, "beta2", s.beta2);
    opt(j, "weight_decay", s.weight_decay);
    opt(j, "clip_norm", s.clip_norm);
    opt(j, "max_steps", s.max_steps);
    opt(j, "early_stop_loss", s.early_stop_loss);
    opt(j, "on_bad_image", s.on_bad_image);
    opt(j, "log_every", s.log_every);
    opt(j, "seed", s.seed);
}

void parse_dataset(const json& j, DatasetConfig& c) {
    reject_unknown(j, {"documents", "markdown", "charts", "negatives", "captions", "instructions",
                       "resolution", "zh_fraction", "val_fraction", "seed"},
                   "dataset");
    opt(j, "documents", c.documents);
    opt(j, "markdown", c.markdown);
    opt(j, "charts", c.charts);
    opt(j, "negatives", c.negatives);
    opt(j, "captions", c.captions);
    opt(j, "instructions", c.instructions);
    opt(j, "resolution", c.resolution);
    opt(j, "zh_fraction", c.zh_fraction);
    opt(j, "val_fraction", c.val_fraction);
    opt(j, "seed", c.seed);
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text, const RunConfig& base) {
    RunConfig c = base;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"profile", "seed", "out_dir", "encoder", "legacy", "decoder", "llm",
                    "dim_half", "tiny_schedule", "base_pretrain", "base_sft", "dataset",
                    "tokenizer"},
                   "top level");
    if (j.contains("tokenizer")) {
        // checkpoints serialize the tokenizer; models are built against the
        // standard vocabulary, so a mismatch is a configuration error
        const Tokenizer std_tok = Tokenizer::standard();
        const auto& jt = j.at("tokenizer");
        reject_unknown(jt, {"charset", "specials"}, "tokenizer");
        if (jt.contains("charset") &&
            jt.at("charset").get<std::vector<uint32_t>>() != std_tok.charset())
            throw ConfigError("checkpoint tokenizer charset differs from this build");
        if (jt.contains("specials") &&
            jt.at("specials").get<std::vector<std::string>>() != std_tok.specials())
            throw ConfigError("checkpoint tokenizer specials differ from this build");
    }
    if (j.contains("profile")) {
        const auto name = j.at("profile").get<std::string>();
        if (name != c.profile) c = from_profile(name);
    }
    opt(j, "seed", c.seed);
    opt(j, "out_dir", c.out_dir);
    if (j.contains("encoder")) {
        parse_encoder(j.at("encoder"), c.encoder);
        if (j.at("encoder").contains("pretrained"))
            c.encoder_pretrained = j.at("encoder").at("pretrained").get<std::string>();
    }
    if (j.contains("legacy")) parse_legacy(j.at("legacy"), c.legacy);
    if (j.contains("decoder")) parse_decoder(j.at("decoder"), c.decoder, "decoder");
    if (j.contains("llm")) parse_decoder(j.at("llm"), c.llm, "llm");
    opt(j, "dim_half", c.dim_half);
    if (j.contains("tiny_schedule")) parse_schedule(j.at("tiny_schedule"), c.tiny_schedule, "tiny_schedule");
    if (j.contains("base_pretrain"))
        parse_schedule(j.at("base_pretrain"), c.base_pretrain.sched, "base_pretrain");
    if (j.contains("base_sft")) parse_schedule(j.at("base_sft"), c.base_sft.sched, "base_sft");
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset);
    c.validate();
    return c;
}

std::string RunConfig::to_json_text() const {
    json j;
    j["profile"] = profile;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["encoder"] = {{"input_size", encoder.input_size},
                    {"patch_stride", encoder.patch_stride},
                    {"trunk_depth", encoder.trunk_depth},
                    {"trunk_dim", encoder.trunk_dim},
                    {"head_dims", std::vector<int>{encoder.head_dims[0], encoder.head_dims[1]}},
                    {"out_dim", encoder.out_dim}};
    if (!encoder_pretrained.empty()) j["encoder"]["pretrained"] = encoder_pretrained;
    j["legacy"] = {{"input_size", legacy.input_size},
                   {"patch_size", legacy.patch_size},
                   {"depth", legacy.depth},
                   {"dim", legacy.dim}};
    auto dec_json = [](const DecoderConfig& d) {
        return json{{"dim", d.dim},
                    {"depth", d.depth},
                    {"heads", d.heads},
                    {"max_positions", d.max_positions},
                    {"init_positions", d.init_positions}};
    };
    j["decoder"] = dec_json(decoder);
    j["llm"] = dec_json(llm);
    j["dim_half"] = dim_half;
    auto sched_json = [](const TrainSchedule& s) {
        return json{{"batch_size", s.batch_size},
                    {"epochs", s.epochs},
                    {"peak_lr", s.peak_lr},
                    {"beta1", s.beta1},
                    {"beta2", s.beta2},
                    {"weight_decay", s.weight_decay},
                    {"clip_norm", s.clip_norm},
                    {"max_steps", s.max_steps},
                    {"early_stop_loss", s.early_stop_loss},
                    {"on_bad_image", s.on_bad_image},
                    {"log_every", s.log_every},
                    {"seed", s.seed}};
    };
    j["tiny_schedule"] = sched_json(tiny_schedule);
    j["base_pretrain"] = sched_json(base_pretrain.sched);
    j["base_sft"] = sched_json(base_sft.sched);
    {
        const Tokenizer tok = Tokenizer::standard();
        j["tokenizer"] = {{"charset", tok.charset()}, {"specials", tok.specials()}};
    }
    j["dataset"] = {{"documents", dataset.documents},
                    {"markdown", dataset.markdown},
                    {"charts", dataset.charts},
                    {"negatives", dataset.negatives},
                    {"captions", dataset.captions},
                    {"instructions", dataset.instructions},
                    {"resolution", dataset.resolution},
                    {"zh_fraction", dataset.zh_fraction},
                    {"val_fraction", dataset.val_fraction},
                    {"seed", dataset.seed}};
    return j.dump(2);
}

}  // namespace vary
