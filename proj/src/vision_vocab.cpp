#include "vary/vision_vocab.hpp"

#include <cmath>

#include "vary/checkpoint.hpp"

namespace vary {

int derive_heads(int dim) {
    for (int h : {8, 4, 2}) {
        if (dim % h == 0 && dim / h >= 16) return h;
    }
    return 1;
}

void EncoderConfig::validate() const {
    if (input_size <= 0 || patch_stride <= 0 || trunk_depth < 0 || trunk_dim <= 0 ||
        head_dims[0] <= 0 || head_dims[1] <= 0 || out_dim <= 0)
        throw ConfigError("encoder config: all sizes must be positive");
    if (input_size % patch_stride != 0)
        throw ConfigError("encoder config: input_size not divisible by patch_stride (" +
                          std::to_string(input_size) + " % " + std::to_string(patch_stride) + ")");
    if (grid() % 4 != 0)
        throw ConfigError("encoder config: input_size/patch_stride must be divisible by 4, got " +
                          std::to_string(grid()));
    if (out_dim != head_dims[1])
        throw ConfigError("encoder config: out_dim must equal the second head dim (" +
                          std::to_string(out_dim) + " vs " + std::to_string(head_dims[1]) + ")");
}

namespace {

Tensor init_linear(const std::string& name, int fan_in, int fan_out, uint64_t seed) {
    Rng rng(tensor_seed(seed, name));
    return Tensor::randn({fan_in, fan_out}, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Tensor init_conv(const std::string& name, int co, int ci, uint64_t seed) {
    Rng rng(tensor_seed(seed, name));
    return Tensor::randn({co, ci, 3, 3}, rng, 1.0 / std::sqrt(static_cast<double>(ci * 9)));
}

Tensor init_embed(const std::string& name, int rows, int cols, uint64_t seed) {
    Rng rng(tensor_seed(seed, name));
    return Tensor::randn({rows, cols}, rng, 0.02);
}

}  // namespace

void BlockParams::init(const std::string& prefix, int dim, uint64_t seed) {
    ln1_g = {prefix + ".ln1.g", Tensor::full({dim}, 1.0)};
    ln1_b = {prefix + ".ln1.b", Tensor::zeros({dim})};
    wq = {prefix + ".wq", init_linear(prefix + ".wq", dim, dim, seed)};
    bq = {prefix + ".bq", Tensor::zeros({dim})};
    wk = {prefix + ".wk", init_linear(prefix + ".wk", dim, dim, seed)};
    bk = {prefix + ".bk", Tensor::zeros({dim})};
    wv = {prefix + ".wv", init_linear(prefix + ".wv", dim, dim, seed)};
    bv = {prefix + ".bv", Tensor::zeros({dim})};
    wo = {prefix + ".wo", init_linear(prefix + ".wo", dim, dim, seed)};
    bo = {prefix + ".bo", Tensor::zeros({dim})};
    ln2_g = {prefix + ".ln2.g", Tensor::full({dim}, 1.0)};
    ln2_b = {prefix + ".ln2.b", Tensor::zeros({dim})};
    mlp_w1 = {prefix + ".mlp.w1", init_linear(prefix + ".mlp.w1", dim, 4 * dim, seed)};
    mlp_b1 = {prefix + ".mlp.b1", Tensor::zeros({4 * dim})};
    mlp_w2 = {prefix + ".mlp.w2", init_linear(prefix + ".mlp.w2", 4 * dim, dim, seed)};
    mlp_b2 = {prefix + ".mlp.b2", Tensor::zeros({dim})};
}

void BlockParams::collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b,
                         &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2})
        out.push_back(p);
}

void VitTrunk::init(const std::string& prefix, int input_size, int patch_px, int d, int dp,
                    uint64_t seed) {
    patch = patch_px;
    dim = d;
    depth = dp;
    heads = derive_heads(d);
    grid = input_size / patch_px;
    const int patch_feat = 3 * patch_px * patch_px;
    patch_w = {prefix + ".patch.w", init_linear(prefix + ".patch.w", patch_feat, dim, seed)};
    patch_b = {prefix + ".patch.b", Tensor::zeros({dim})};
    pos = {prefix + ".pos", init_embed(prefix + ".pos", grid * grid, dim, seed)};
    blocks.resize(static_cast<size_t>(depth));
    for (int i = 0; i < depth; ++i)
        blocks[static_cast<size_t>(i)].init(prefix + ".b" + std::to_string(i), dim, seed);
    final_g = {prefix + ".final.g", Tensor::full({dim}, 1.0)};
    final_b = {prefix + ".final.b", Tensor::zeros({dim})};
}

void VitTrunk::collect(std::vector<Parameter*>& out) {
    out.push_back(&patch_w);
    out.push_back(&patch_b);
    out.push_back(&pos);
    for (auto& b : blocks) b.collect(out);
    out.push_back(&final_g);
    out.push_back(&final_b);
}

Tensor VitTrunk::patchify(const ImageRaster& img) const {
    const int side = grid * patch;
    const int feat = 3 * patch * patch;
    Tensor rows({grid * grid, feat});
    const float* px = img.data();
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            double* row = rows.data() + static_cast<size_t>(gy * grid + gx) * feat;
            int f = 0;
            for (int dy = 0; dy < patch; ++dy) {
                const int y = gy * patch + dy;
                for (int dx = 0; dx < patch; ++dx) {
                    const int x = gx * patch + dx;
                    const float* p = px + (static_cast<size_t>(y) * side + x) * 3;
                    row[f++] = p[0];
                    row[f++] = p[1];
                    row[f++] = p[2];
                }
            }
        }
    }
    return rows;
}

Tensor VitTrunk::forward(const ImageRaster& img) const {
    Tensor x = kern::linear(patchify(img), patch_w.value, patch_b.value);
    kern::add_inplace(x, pos.value);
    for (const auto& b : blocks) {
        Tensor h = kern::layernorm(x, b.ln1_g.value, b.ln1_b.value);
        Tensor a = kern::attention(h, b.wq.value, b.bq.value, b.wk.value, b.bk.value, b.wv.value,
                                   b.bv.value, b.wo.value, b.bo.value, heads, /*causal=*/false);
        kern::add_inplace(x, a);
        Tensor h2 = kern::layernorm(x, b.ln2_g.value, b.ln2_b.value);
        Tensor m = kern::linear(h2, b.mlp_w1.value, b.mlp_b1.value);
        m = kern::gelu(m);
        m = kern::linear(m, b.mlp_w2.value, b.mlp_b2.value);
        kern::add_inplace(x, m);
    }
    return kern::layernorm(x, final_g.value, final_b.value);
}

Graph::Id VitTrunk::forward_on(Graph& g, const ImageRaster& img) {
    Graph::Id x = g.add(g.linear(g.constant(patchify(img)), g.param(patch_w), g.param(patch_b)),
                        g.param(pos));
    for (auto& b : blocks) {
        Graph::Id h = g.layernorm(x, g.param(b.ln1_g), g.param(b.ln1_b));
        Graph::Id a = g.attention(h, g.param(b.wq), g.param(b.bq), g.param(b.wk), g.param(b.bk),
                                  g.param(b.wv), g.param(b.bv), g.param(b.wo), g.param(b.bo),
                                  heads, /*causal=*/false);
        x = g.add(x, a);
        Graph::Id h2 = g.layernorm(x, g.param(b.ln2_g), g.param(b.ln2_b));
        Graph::Id m = g.linear(h2, g.param(b.mlp_w1), g.param(b.mlp_b1));
        m = g.gelu(m);
        m = g.linear(m, g.param(b.mlp_w2), g.param(b.mlp_b2));
        x = g.add(x, m);
    }
    return g.layernorm(x, g.param(final_g), g.param(final_b));
}

VisionEncoder::VisionEncoder(EncoderConfig cfg, uint64_t seed, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
    trunk_.init(prefix_ + ".trunk", cfg_.input_size, cfg_.patch_stride, cfg_.trunk_dim,
                cfg_.trunk_depth, seed);
    const int c0 = cfg_.trunk_dim, c1 = cfg_.head_dims[0], c2 = cfg_.head_dims[1];
    conv1_w_ = {prefix_ + ".conv1.w", init_conv(prefix_ + ".conv1.w", c1, c0, seed)};
    conv1_b_ = {prefix_ + ".conv1.b", Tensor::zeros({c1})};
    ln1_g_ = {prefix_ + ".convln1.g", Tensor::full({c1}, 1.0)};
    ln1_b_ = {prefix_ + ".convln1.b", Tensor::zeros({c1})};
    conv2_w_ = {prefix_ + ".conv2.w", init_conv(prefix_ + ".conv2.w", c2, c1, seed)};
    conv2_b_ = {prefix_ + ".conv2.b", Tensor::zeros({c2})};
    ln2_g_ = {prefix_ + ".convln2.g", Tensor::full({c2}, 1.0)};
    ln2_b_ = {prefix_ + ".convln2.b", Tensor::zeros({c2})};
}

void VisionEncoder::check_image(const ImageRaster& img) const {
    if (img.height() != cfg_.input_size || img.width() != cfg_.input_size)
        throw ShapeError("encoder expects " + std::to_string(cfg_.input_size) + "x" +
                         std::to_string(cfg_.input_size) + " input, got " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
    if (!img.all_finite()) throw InputError("image contains non-finite pixels");
}

VisionTokens VisionEncoder::conv_merge(const Tensor& feature) const {
    const int side = feature.ndim() == 3 ? feature.dim(0) : -1;
    if (feature.ndim() != 3 || feature.dim(2) != cfg_.trunk_dim || side % 4 != 0 ||
        feature.dim(1) != side)
        throw ShapeError("conv_merge expects [S,S," + std::to_string(cfg_.trunk_dim) +
                         "] with S divisible by 4, got " + feature.shape_str());
    Tensor h = kern::conv3x3s2(feature, conv1_w_.value, conv1_b_.value);
    h = kern::layernorm(h, ln1_g_.value, ln1_b_.value);
    h = kern::gelu(h);
    h = kern::conv3x3s2(h, conv2_w_.value, conv2_b_.value);
    h = kern::layernorm(h, ln2_g_.value, ln2_b_.value);
    h = kern::gelu(h);
    // row-major flatten: token (y, x) -> index y*(S/4) + x
    const int tokens = (side / 4) * (side / 4);
    return {h.reshaped({tokens, cfg_.out_dim})};
}

Graph::Id VisionEncoder::conv_merge_on(Graph& g, Graph::Id feature) {
    Graph::Id h = g.conv3x3s2(feature, g.param(conv1_w_), g.param(conv1_b_));
    h = g.layernorm(h, g.param(ln1_g_), g.param(ln1_b_));
    h = g.gelu(h);
    h = g.conv3x3s2(h, g.param(conv2_w_), g.param(conv2_b_));
    h = g.layernorm(h, g.param(ln2_g_), g.param(ln2_b_));
    h = g.gelu(h);
    const int side = g.value(feature).dim(0);
    return g.reshape(h, {(side / 4) * (side / 4), cfg_.out_dim});
}

VisionTokens VisionEncoder::encode(const ImageRaster& img) const {
    check_image(img);
    Tensor feat = trunk_.forward(img);
    return conv_merge(feat.reshaped({cfg_.grid(), cfg_.grid(), cfg_.trunk_dim}));
}

Graph::Id VisionEncoder::encode_on(Graph& g, const ImageRaster& img) {
    check_image(img);
    Graph::Id feat = trunk_.forward_on(g, img);
    return conv_merge_on(g, g.reshape(feat, {cfg_.grid(), cfg_.grid(), cfg_.trunk_dim}));
}

std::vector<Parameter*> VisionEncoder::parameters() {
    std::vector<Parameter*> out;
    trunk_.collect(out);
    for (Parameter* p : {&conv1_w_, &conv1_b_, &ln1_g_, &ln1_b_, &conv2_w_, &conv2_b_, &ln2_g_,
                         &ln2_b_})
        out.push_back(p);
    return out;
}

std::vector<const Parameter*> VisionEncoder::parameters() const {
    auto mut = const_cast<VisionEncoder*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

size_t VisionEncoder::parameter_count() const {
    size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.numel();
    return n;
}

void VisionEncoder::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) p->trainable = trainable;
}

void VisionEncoder::load_weight_blob(const std::string& path) {
    load_params_from_blob(path, parameters());
}

}  // namespace vary
