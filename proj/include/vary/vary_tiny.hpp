#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vary/checkpoint.hpp"
#include "vary/data_engine.hpp"
#include "vary/optim.hpp"
#include "vary/run_config.hpp"
#include "vary/text_decoder.hpp"
#include "vary/vision_vocab.hpp"

namespace vary {

// Stage-1 assembly: new vocabulary network + channel-aligning linear + tiny
// decoder, all trainable, learning next-token prediction over
// <img> [vision tokens] </img> target </s>.
class VaryTinyModel {
public:
    VaryTinyModel(const EncoderConfig& enc_cfg, DecoderConfig dec_cfg, uint64_t seed);

    VisionEncoder& encoder() { return encoder_; }
    const VisionEncoder& encoder() const { return encoder_; }
    Decoder& decoder() { return decoder_; }
    const Tokenizer& tokenizer() const { return tok_; }
    Parameter& projector_w() { return proj_w_; }
    Parameter& projector_b() { return proj_b_; }
    uint64_t seed() const { return seed_; }

    // layout <img> + N vision positions + </img> + target + </s>; loss on
    // target and </s> only
    PackedSequence pack_target(const std::string& target) const;

    // project raw vision tokens to decoder width
    Tensor project(const VisionTokens& tokens) const;

    std::string predict_ocr(const ImageRaster& image) const;

    std::vector<Parameter*> parameters();
    std::map<std::string, std::vector<Parameter*>> parameter_groups();

    void save(const std::string& dir, const RunConfig& cfg, const CheckpointMeta& meta);
    static VaryTinyModel load(const std::string& dir, RunConfig* cfg_out = nullptr,
                              CheckpointMeta* meta_out = nullptr);

private:
    uint64_t seed_;
    Tokenizer tok_;
    VisionEncoder encoder_;
    Parameter proj_w_, proj_b_;
    Decoder decoder_;
};

// One optimizer step over a batch of records. Returns the mean per-token
// loss. Exposed for tests; train_vary_tiny drives it.
double tiny_train_step(VaryTinyModel& model, AdamW& opt,
                       const std::vector<const SampleRecord*>& batch,
                       const std::function<ImageRaster(const std::string&)>& load_image,
                       double lr, double clip_norm);

// Full stage-1 run: epochs over the manifest's train split, cosine schedule,
// loss log, final checkpoint (saved, then weights snapped to the stored f32).
TrainResult train_vary_tiny(VaryTinyModel& model, const std::vector<SampleRecord>& records,
                            const RunConfig& cfg, const std::string& out_dir);

}  // namespace vary
