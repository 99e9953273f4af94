#include "vary/text_decoder.hpp"

#include <algorithm>
#include <cmath>

namespace vary {

void DecoderConfig::validate() const {
    if (vocab_size <= 0 || dim <= 0 || depth < 0 || heads <= 0 || max_positions <= 0)
        throw ConfigError("decoder config: all sizes must be positive");
    if (dim % heads != 0)
        throw ConfigError("decoder config: dim (" + std::to_string(dim) +
                          ") not divisible by heads (" + std::to_string(heads) + ")");
    if (init_positions < 0 || init_positions > max_positions)
        throw ConfigError("decoder config: init_positions must be in [0, max_positions]");
    if (init_positions == 1)
        throw ConfigError("decoder config: init_positions must be at least 2");
}

void PackedSequence::validate() const {
    if (static_cast<int>(loss_mask.size()) != length())
        throw ShapeError("packed sequence: loss mask length != sequence length");
    const int pre = static_cast<int>(pre_ids.size());
    for (int t = 0; t < prefix_len; ++t)
        if (loss_mask[static_cast<size_t>(pre + t)])
            throw ShapeError("packed sequence: loss mask set on a prefix position");
    if (!loss_mask.empty() && loss_mask[0])
        throw ShapeError("packed sequence: position 0 cannot be a target");
}

std::vector<int> PackedSequence::position_ids_or_minus1() const {
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(length()));
    for (int id : pre_ids) ids.push_back(id);
    for (int t = 0; t < prefix_len; ++t) ids.push_back(-1);
    for (int id : post_ids) ids.push_back(id);
    return ids;
}

std::vector<int> PackedSequence::next_ids() const {
    validate();
    const std::vector<int> ids = position_ids_or_minus1();
    const int L = length();
    std::vector<int> next(static_cast<size_t>(L), -1);
    for (int t = 0; t + 1 < L; ++t) {
        if (loss_mask[static_cast<size_t>(t + 1)]) {
            const int target = ids[static_cast<size_t>(t + 1)];
            if (target < 0) throw ShapeError("packed sequence: masked position has no token id");
            next[static_cast<size_t>(t)] = target;
        }
    }
    return next;
}

Decoder::Decoder(DecoderConfig cfg, uint64_t seed, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
    {
        Rng rng(tensor_seed(seed, prefix_ + ".tok_embed"));
        tok_embed_ = {prefix_ + ".tok_embed", Tensor::randn({cfg_.vocab_size, cfg_.dim}, rng, 0.02)};
    }
    {
        const int p0 = cfg_.init_positions > 0 ? cfg_.init_positions : cfg_.max_positions;
        Rng rng(tensor_seed(seed, prefix_ + ".pos"));
        Tensor base = Tensor::randn({p0, cfg_.dim}, rng, 0.02);
        pos_ = {prefix_ + ".pos", interpolate_positions(base, cfg_.max_positions)};
    }
    blocks_.resize(static_cast<size_t>(cfg_.depth));
    for (int i = 0; i < cfg_.depth; ++i)
        blocks_[static_cast<size_t>(i)].init(prefix_ + ".b" + std::to_string(i), cfg_.dim, seed);
    final_g_ = {prefix_ + ".final.g", Tensor::full({cfg_.dim}, 1.0)};
    final_b_ = {prefix_ + ".final.b", Tensor::zeros({cfg_.dim})};
    {
        Rng rng(tensor_seed(seed, prefix_ + ".head.w"));
        head_w_ = {prefix_ + ".head.w", Tensor::randn({cfg_.dim, cfg_.vocab_size}, rng,
                                                      1.0 / std::sqrt(static_cast<double>(cfg_.dim)))};
    }
    head_b_ = {prefix_ + ".head.b", Tensor::zeros({cfg_.vocab_size})};
}

Tensor Decoder::interpolate_positions(const Tensor& table, int new_length) {
    if (new_length < 2) throw InputError("interpolate_positions: new_length must be >= 2");
    const int old_length = table.rows();
    if (old_length < 1) throw ShapeError("interpolate_positions: empty table");
    if (new_length == old_length) return table;
    const int dim = table.cols();
    Tensor out({new_length, dim});
    for (int i = 0; i < new_length; ++i) {
        // map endpoints to endpoints
        const double p = old_length == 1
                             ? 0.0
                             : static_cast<double>(i) * (old_length - 1) / (new_length - 1);
        const int lo = std::min(static_cast<int>(std::floor(p)), old_length - 1);
        const int hi = std::min(lo + 1, old_length - 1);
        const double frac = p - lo;
        for (int j = 0; j < dim; ++j)
            out.at2(i, j) = (1.0 - frac) * table.at2(lo, j) + frac * table.at2(hi, j);
    }
    return out;
}

Tensor Decoder::embed_sequence(const PackedSequence& packed, const Tensor& prefix_embeds) const {
    packed.validate();
    const int T = packed.length();
    if (T > cfg_.max_positions)
        throw ShapeError("sequence length " + std::to_string(T) + " exceeds max_positions " +
                         std::to_string(cfg_.max_positions));
    if (packed.prefix_len > 0 &&
        (prefix_embeds.rows() != packed.prefix_len || prefix_embeds.cols() != cfg_.dim))
        throw ShapeError("prefix embedding shape mismatch");
    Tensor x({T, cfg_.dim});
    int row = 0;
    auto copy_token = [&](int id) {
        if (id < 0 || id >= cfg_.vocab_size) throw ShapeError("token id out of range");
        for (int j = 0; j < cfg_.dim; ++j) x.at2(row, j) = tok_embed_.value.at2(id, j);
        ++row;
    };
    for (int id : packed.pre_ids) copy_token(id);
    for (int t = 0; t < packed.prefix_len; ++t) {
        for (int j = 0; j < cfg_.dim; ++j) x.at2(row, j) = prefix_embeds.at2(t, j);
        ++row;
    }
    for (int id : packed.post_ids) copy_token(id);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < cfg_.dim; ++j) x.at2(t, j) += pos_.value.at2(t, j);
    return x;
}

Tensor Decoder::forward(const PackedSequence& packed, const Tensor& prefix_embeds) const {
    Tensor x = embed_sequence(packed, prefix_embeds);
    for (const auto& b : blocks_) {
        Tensor h = kern::layernorm(x, b.ln1_g.value, b.ln1_b.value);
        Tensor a = kern::attention(h, b.wq.value, b.bq.value, b.wk.value, b.bk.value, b.wv.value,
                                   b.bv.value, b.wo.value, b.bo.value, cfg_.heads, /*causal=*/true);
        kern::add_inplace(x, a);
        Tensor h2 = kern::layernorm(x, b.ln2_g.value, b.ln2_b.value);
        Tensor m = kern::linear(h2, b.mlp_w1.value, b.mlp_b1.value);
        m = kern::gelu(m);
        m = kern::linear(m, b.mlp_w2.value, b.mlp_b2.value);
        kern::add_inplace(x, m);
    }
    Tensor y = kern::layernorm(x, final_g_.value, final_b_.value);
    return kern::linear(y, head_w_.value, head_b_.value);
}

Graph::Id Decoder::forward_on(Graph& g, const PackedSequence& packed, Graph::Id prefix_embeds) {
    packed.validate();
    const int T = packed.length();
    if (T > cfg_.max_positions)
        throw ShapeError("sequence length " + std::to_string(T) + " exceeds max_positions " +
                         std::to_string(cfg_.max_positions));
    std::vector<Graph::Id> parts;
    Graph::Id tok = g.param(tok_embed_);
    if (!packed.pre_ids.empty()) parts.push_back(g.embed_rows(tok, packed.pre_ids));
    if (packed.prefix_len > 0) {
        if (g.value(prefix_embeds).rows() != packed.prefix_len)
            throw ShapeError("prefix embedding rows != prefix_len");
        parts.push_back(prefix_embeds);
    }
    if (!packed.post_ids.empty()) parts.push_back(g.embed_rows(tok, packed.post_ids));
    Graph::Id x = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
    x = g.add(x, g.slice_rows(g.param(pos_), 0, T));
    for (auto& b : blocks_) {
        Graph::Id h = g.layernorm(x, g.param(b.ln1_g), g.param(b.ln1_b));
        Graph::Id a = g.attention(h, g.param(b.wq), g.param(b.bq), g.param(b.wk), g.param(b.bk),
                                  g.param(b.wv), g.param(b.bv), g.param(b.wo), g.param(b.bo),
                                  cfg_.heads, /*causal=*/true);
        x = g.add(x, a);
        Graph::Id h2 = g.layernorm(x, g.param(b.ln2_g), g.param(b.ln2_b));
        Graph::Id m = g.linear(h2, g.param(b.mlp_w1), g.param(b.mlp_b1));
        m = g.gelu(m);
        m = g.linear(m, g.param(b.mlp_w2), g.param(b.mlp_b2));
        x = g.add(x, m);
    }
    Graph::Id y = g.layernorm(x, g.param(final_g_), g.param(final_b_));
    return g.linear(y, g.param(head_w_), g.param(head_b_));
}

namespace {

// row * W + b with the same accumulation order as the batch matmul
std::vector<double> row_linear(const std::vector<double>& row, const Tensor& w, const Tensor& b) {
    const int k = w.rows(), n = w.cols();
    std::vector<double> out(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double a = row[static_cast<size_t>(p)];
        const double* wrow = w.data() + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += a * wrow[j];
    }
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += b[static_cast<size_t>(j)];
    return out;
}

std::vector<double> row_layernorm(const std::vector<double>& row, const Tensor& gamma,
                                  const Tensor& beta, double eps = 1e-5) {
    const int n = static_cast<int>(row.size());
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) {
        const double d = v - mean;
        var += d * d;
    }
    var /= n;
    const double rstd = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(row.size());
    for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(j)] = (row[static_cast<size_t>(j)] - mean) * rstd *
                                          gamma[static_cast<size_t>(j)] +
                                      beta[static_cast<size_t>(j)];
    return out;
}

struct LayerKv {
    Tensor k, v;  // [rows_so_far, dim]
    int rows = 0;

    void reserve(int cap, int dim) {
        k = Tensor({cap, dim});
        v = Tensor({cap, dim});
    }
    void append(const std::vector<double>& krow, const std::vector<double>& vrow) {
        const int dim = k.cols();
        for (int j = 0; j < dim; ++j) {
            k.at2(rows, j) = krow[static_cast<size_t>(j)];
            v.at2(rows, j) = vrow[static_cast<size_t>(j)];
        }
        ++rows;
    }
};

}  // namespace

GenerateResult Decoder::generate(const Tensor& prefix_embeds, const std::vector<int>& prompt_ids,
                                 int max_new, int eos_id) const {
    const int n_prefix = prefix_embeds.numel() ? prefix_embeds.rows() : 0;
    const int start_len = n_prefix + static_cast<int>(prompt_ids.size());
    if (start_len == 0) throw InputError("generate: nothing to condition on");
    if (start_len >= cfg_.max_positions)
        throw ShapeError("prompt does not fit the context (" + std::to_string(start_len) + " of " +
                         std::to_string(cfg_.max_positions) + " positions)");
    GenerateResult res;
    std::vector<LayerKv> kv(static_cast<size_t>(cfg_.depth));
    for (auto& l : kv) l.reserve(cfg_.max_positions, cfg_.dim);

    int position = 0;
    std::vector<double> logits_row;
    auto feed = [&](std::vector<double> x) {
        // one token through the stack; updates caches, returns final logits row
        for (int j = 0; j < cfg_.dim; ++j)
            x[static_cast<size_t>(j)] += pos_.value.at2(position, j);
        for (size_t li = 0; li < blocks_.size(); ++li) {
            const BlockParams& b = blocks_[li];
            const auto h = row_layernorm(x, b.ln1_g.value, b.ln1_b.value);
            const auto q = row_linear(h, b.wq.value, b.bq.value);
            const auto k = row_linear(h, b.wk.value, b.bk.value);
            const auto v = row_linear(h, b.wv.value, b.bv.value);
            kv[li].append(k, v);
            const auto att = kern::attention_row(q, kv[li].k.data(), kv[li].v.data(),
                                                 kv[li].rows, cfg_.dim, cfg_.heads);
            const auto proj = row_linear(att, b.wo.value, b.bo.value);
            for (int j = 0; j < cfg_.dim; ++j) x[static_cast<size_t>(j)] += proj[static_cast<size_t>(j)];
            const auto h2 = row_layernorm(x, b.ln2_g.value, b.ln2_b.value);
            auto m = row_linear(h2, b.mlp_w1.value, b.mlp_b1.value);
            for (auto& mv : m) mv = kern::gelu_scalar(mv);
            const auto m2 = row_linear(m, b.mlp_w2.value, b.mlp_b2.value);
            for (int j = 0; j < cfg_.dim; ++j) x[static_cast<size_t>(j)] += m2[static_cast<size_t>(j)];
        }
        const auto y = row_layernorm(x, final_g_.value, final_b_.value);
        logits_row = row_linear(y, head_w_.value, head_b_.value);
        ++position;
    };

    for (int t = 0; t < n_prefix; ++t) {
        std::vector<double> x(static_cast<size_t>(cfg_.dim));
        for (int j = 0; j < cfg_.dim; ++j) x[static_cast<size_t>(j)] = prefix_embeds.at2(t, j);
        feed(std::move(x));
    }
    for (int id : prompt_ids) {
        std::vector<double> x(static_cast<size_t>(cfg_.dim));
        for (int j = 0; j < cfg_.dim; ++j) x[static_cast<size_t>(j)] = tok_embed_.value.at2(id, j);
        feed(std::move(x));
    }

    for (int step = 0; step < max_new; ++step) {
        if (position >= cfg_.max_positions) {
            res.truncated = true;
            break;
        }
        // greedy argmax, lowest index on ties
        int best = 0;
        for (int j = 1; j < cfg_.vocab_size; ++j)
            if (logits_row[static_cast<size_t>(j)] > logits_row[static_cast<size_t>(best)]) best = j;
        if (best == eos_id) {
            res.hit_eos = true;
            break;
        }
        res.ids.push_back(best);
        std::vector<double> x(static_cast<size_t>(cfg_.dim));
        for (int j = 0; j < cfg_.dim; ++j) x[static_cast<size_t>(j)] = tok_embed_.value.at2(best, j);
        feed(std::move(x));
    }
    return res;
}

double Decoder::next_token_loss(const Tensor& logits, const PackedSequence& packed) const {
    return kern::masked_cross_entropy(logits, packed.next_ids(), nullptr);
}

Graph::Id Decoder::next_token_loss_on(Graph& g, Graph::Id logits,
                                      const PackedSequence& packed) const {
    return g.masked_ce(logits, packed.next_ids());
}

std::vector<Parameter*> Decoder::parameters() {
    std::vector<Parameter*> out{&tok_embed_, &pos_};
    for (auto& b : blocks_) b.collect(out);
    out.push_back(&final_g_);
    out.push_back(&final_b_);
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    return out;
}

void Decoder::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) p->trainable = trainable;
}

}  // namespace vary
