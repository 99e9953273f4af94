#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vary/checkpoint.hpp"
#include "vary/data_engine.hpp"
#include "vary/legacy_vocab.hpp"
#include "vary/optim.hpp"
#include "vary/run_config.hpp"
#include "vary/text_decoder.hpp"
#include "vary/vision_vocab.hpp"

namespace vary {

enum class TemplateKind { vicuna_v1, mpt };

TemplateKind template_from_name(const std::string& name);  // "vicuna_v1" | "mpt"
const char* template_name(TemplateKind kind);

inline constexpr const char* kImagePlaceholder = "<image>";

// Render one conversation turn. With an assistant text the string is the full
// training sample; without one it ends right after the assistant role marker
// (inference mode). Byte-exact goldens for both templates live in the tests.
std::string render_conversation(TemplateKind kind, const std::string& user_text,
                                const std::optional<std::string>& assistant_text);

// Stage-2 assembly: both vocabularies frozen, per-vocabulary linear input
// embeddings, channel concat [new ; legacy] into the language model.
class VaryBaseModel {
public:
    VaryBaseModel(const EncoderConfig& enc_cfg, const LegacyConfig& legacy_cfg,
                  DecoderConfig llm_cfg, int dim_half, uint64_t seed, uint64_t legacy_seed = 0);

    // loads the stage-1 encoder weights into the new vocabulary, then freezes
    static VaryBaseModel build_from_tiny(const std::string& tiny_checkpoint_dir,
                                         const RunConfig& cfg, uint64_t legacy_seed);

    VisionEncoder& new_vocab() { return new_vocab_; }
    LegacyEncoder& legacy_vocab() { return legacy_; }
    Decoder& llm() { return llm_; }
    const Tokenizer& tokenizer() const { return tok_; }
    int dim_half() const { return dim_half_; }
    uint64_t seed() const { return seed_; }
    uint64_t legacy_seed() const { return legacy_seed_; }
    Parameter& embed_new_w() { return embed_new_w_; }
    Parameter& embed_new_b() { return embed_new_b_; }
    Parameter& embed_legacy_w() { return embed_legacy_w_; }
    Parameter& embed_legacy_b() { return embed_legacy_b_; }

    // raw per-branch tokens (pure in the frozen encoders; cacheable)
    std::pair<Tensor, Tensor> encode_branches(const ImageRaster& source) const;

    // embed + concat: [embed_new(new) ; embed_legacy(legacy)] per token
    VisionTokens fuse_tokens(const ImageRaster& source) const;
    Tensor fuse_from_branches(const Tensor& new_tokens, const Tensor& legacy_tokens) const;
    Graph::Id fuse_on(Graph& g, const Tensor& new_tokens, const Tensor& legacy_tokens);

    // conversation packing: template parts around the fused vision rows,
    // loss masked to the assistant span (response + closing token)
    PackedSequence pack_conversation(TemplateKind kind, const std::string& user_text,
                                     const std::string& assistant_text) const;

    std::string chat(const ImageRaster& image, const std::string& prompt,
                     TemplateKind kind) const;

    std::vector<Parameter*> parameters();
    std::vector<Parameter*> trainable_parameters();
    std::map<std::string, std::vector<Parameter*>> parameter_groups();

    void save(const std::string& dir, const RunConfig& cfg, const CheckpointMeta& meta);
    static VaryBaseModel load(const std::string& dir, RunConfig* cfg_out = nullptr,
                              CheckpointMeta* meta_out = nullptr);

    int eos_for(TemplateKind kind) const;

private:
    uint64_t seed_;
    uint64_t legacy_seed_;
    Tokenizer tok_;
    VisionEncoder new_vocab_;
    LegacyEncoder legacy_;
    Parameter embed_new_w_, embed_new_b_, embed_legacy_w_, embed_legacy_b_;
    Decoder llm_;
    int dim_half_;
};

// default user prompt when a pretrain manifest row has none
std::string default_prompt_for_task(const std::string& task);

double base_train_step(VaryBaseModel& model, AdamW& opt,
                       const std::vector<const SampleRecord*>& batch,
                       const std::function<std::pair<Tensor, Tensor>(const std::string&)>& branches,
                       TemplateKind kind, double lr, double clip_norm);

TrainResult train_vary_base(VaryBaseModel& model, const std::vector<SampleRecord>& records,
                            const PhaseSchedule& phase, const RunConfig& cfg,
                            TemplateKind kind, const std::string& out_dir);

}  // namespace vary
