#include "vary/legacy_vocab.hpp"

#include <cmath>

namespace vary {

void LegacyConfig::validate() const {
    if (input_size <= 0 || patch_size <= 0 || depth < 0 || dim <= 0)
        throw ConfigError("legacy config: all sizes must be positive");
    if (input_size % patch_size != 0)
        throw ConfigError("legacy config: input_size not divisible by patch_size (" +
                          std::to_string(input_size) + " % " + std::to_string(patch_size) + ")");
}

LegacyEncoder::LegacyEncoder(LegacyConfig cfg, uint64_t seed, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
    trunk_.init(prefix_ + ".trunk", cfg_.input_size, cfg_.patch_size, cfg_.dim, cfg_.depth, seed);
    Rng rng(tensor_seed(seed, prefix_ + ".proj.w"));
    proj_w_ = {prefix_ + ".proj.w",
               Tensor::randn({cfg_.dim, cfg_.dim}, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.dim)))};
    proj_b_ = {prefix_ + ".proj.b", Tensor::zeros({cfg_.dim})};
    set_trainable(false);  // frozen by default
}

VisionTokens LegacyEncoder::encode(const ImageRaster& img) const {
    if (img.height() != cfg_.input_size || img.width() != cfg_.input_size)
        throw ShapeError("legacy encoder expects " + std::to_string(cfg_.input_size) + "x" +
                         std::to_string(cfg_.input_size) + " input, got " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
    if (!img.all_finite()) throw InputError("image contains non-finite pixels");
    Tensor feat = trunk_.forward(img);
    return {kern::linear(feat, proj_w_.value, proj_b_.value)};
}

std::vector<Parameter*> LegacyEncoder::parameters() {
    std::vector<Parameter*> out;
    trunk_.collect(out);
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
    return out;
}

std::vector<const Parameter*> LegacyEncoder::parameters() const {
    auto mut = const_cast<LegacyEncoder*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void LegacyEncoder::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) p->trainable = trainable;
}

bool LegacyEncoder::frozen() const {
    for (const Parameter* p : parameters())
        if (p->trainable) return false;
    return true;
}

}  // namespace vary
