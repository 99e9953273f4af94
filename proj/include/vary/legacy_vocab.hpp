#pragma once

#include <string>
#include <vector>

#include "vary/vision_vocab.hpp"

namespace vary {

struct LegacyConfig {
    int input_size = 224;
    int patch_size = 14;
    int depth = 2;
    int dim = 1024;

    int grid() const { return input_size / patch_size; }
    int token_count() const { return grid() * grid(); }  // no class token

    void validate() const;
};

// The frozen "old" vocabulary: a CLIP-style ViT stand-in. Same trunk as the
// new vocabulary plus a final linear projection; no conv head.
class LegacyEncoder {
public:
    LegacyEncoder(LegacyConfig cfg, uint64_t seed, std::string prefix = "legacy_vocab");

    const LegacyConfig& config() const { return cfg_; }

    VisionTokens encode(const ImageRaster& img) const;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    void set_trainable(bool trainable);
    bool frozen() const;

    Parameter& proj_w() { return proj_w_; }
    Parameter& proj_b() { return proj_b_; }

private:
    LegacyConfig cfg_;
    std::string prefix_;
    VitTrunk trunk_;
    Parameter proj_w_, proj_b_;
};

}  // namespace vary
