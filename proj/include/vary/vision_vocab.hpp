#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vary/graph.hpp"
#include "vary/raster.hpp"
#include "vary/tensor.hpp"

namespace vary {

// Fixed-length continuous visual tokens: values is [count, dim].
struct VisionTokens {
    Tensor values;
    int count() const { return values.rows(); }
    int dim() const { return values.cols(); }
};

// Derive attention heads for encoders whose configs carry no heads field:
// the largest h in {8,4,2,1} dividing dim with a head dim of at least 16.
int derive_heads(int dim);

struct EncoderConfig {
    int input_size = 1024;        // square input, pixels
    int patch_stride = 16;        // patch embedding stride (= kernel)
    int trunk_depth = 2;
    int trunk_dim = 256;
    std::array<int, 2> head_dims = {512, 1024};  // channels after each conv
    int out_dim = 1024;

    int grid() const { return input_size / patch_stride; }          // trunk cells per side
    int trunk_tokens() const { return grid() * grid(); }
    int token_side() const { return grid() / 4; }                   // two stride-2 convs
    int token_count() const { return token_side() * token_side(); }

    void validate() const;  // throws ConfigError naming the violated invariant
};

// Transformer block parameters shared by the two encoder families and the
// text decoder.
struct BlockParams {
    Parameter ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;

    void init(const std::string& prefix, int dim, uint64_t seed);
    void collect(std::vector<Parameter*>& out);
};

// Pre-norm ViT trunk: patch embedding, learned positions, blocks, final norm.
struct VitTrunk {
    int patch = 0, dim = 0, depth = 0, heads = 0, grid = 0;
    Parameter patch_w, patch_b, pos;
    std::vector<BlockParams> blocks;
    Parameter final_g, final_b;

    void init(const std::string& prefix, int input_size, int patch_px, int d, int dp,
              uint64_t seed);
    void collect(std::vector<Parameter*>& out);

    Tensor forward(const ImageRaster& img) const;      // [tokens, dim]
    Graph::Id forward_on(Graph& g, const ImageRaster& img);
    Tensor patchify(const ImageRaster& img) const;     // [tokens, 3*patch^2]
};

// The new vision vocabulary: ViT trunk + two-conv token-merging head.
// Immutable after construction for inference; trainers mutate parameters
// through the optimizer only.
class VisionEncoder {
public:
    VisionEncoder(EncoderConfig cfg, uint64_t seed, std::string prefix = "new_vocab");

    const EncoderConfig& config() const { return cfg_; }

    VisionTokens encode(const ImageRaster& img) const;
    Graph::Id encode_on(Graph& g, const ImageRaster& img);

    // conv head alone: feature [H,W,C] -> tokens [(H/4)*(W/4), out_dim]
    VisionTokens conv_merge(const Tensor& feature) const;
    Graph::Id conv_merge_on(Graph& g, Graph::Id feature);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    size_t parameter_count() const;
    void set_trainable(bool trainable);

    // optional pretrained-weight hook; absent file -> DataError
    void load_weight_blob(const std::string& path);

    VitTrunk& trunk() { return trunk_; }
    Parameter& conv1_w() { return conv1_w_; }
    Parameter& conv2_w() { return conv2_w_; }

private:
    void check_image(const ImageRaster& img) const;

    EncoderConfig cfg_;
    std::string prefix_;
    VitTrunk trunk_;
    Parameter conv1_w_, conv1_b_, ln1_g_, ln1_b_;
    Parameter conv2_w_, conv2_b_, ln2_g_, ln2_b_;
};

}  // namespace vary
