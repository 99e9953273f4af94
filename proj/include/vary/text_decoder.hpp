#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vary/graph.hpp"
#include "vary/tokenizer.hpp"
#include "vary/vision_vocab.hpp"

namespace vary {

struct DecoderConfig {
    int vocab_size = 0;
    int dim = 128;
    int depth = 2;
    int heads = 4;
    int max_positions = 512;
    // positional table is initialized at this length then linearly
    // interpolated up to max_positions; 0 means "same as max_positions"
    int init_positions = 0;

    void validate() const;
};

// One packed training/inference sample: token ids before and after an
// optional continuous prefix, plus a per-position loss mask over the full
// layout [pre_ids .. prefix rows .. post_ids]. loss_mask[t] is true when the
// token at position t is a target (scored against the logits at t-1); it is
// never true on prefix rows or anything before the response start.
struct PackedSequence {
    std::vector<int> pre_ids;
    int prefix_len = 0;
    std::vector<int> post_ids;
    std::vector<uint8_t> loss_mask;

    int length() const {
        return static_cast<int>(pre_ids.size()) + prefix_len + static_cast<int>(post_ids.size());
    }
    void validate() const;
    // target id for the token sitting at each position; -1 on prefix rows
    std::vector<int> position_ids_or_minus1() const;
    // next_ids[t] = id to score against logits row t (or -1), derived from loss_mask
    std::vector<int> next_ids() const;
};

struct GenerateResult {
    std::vector<int> ids;    // generated ids, eos excluded
    bool hit_eos = false;
    bool truncated = false;  // ran into the context limit
};

// Decoder-only causal transformer with learned positions and an untied
// output head.
class Decoder {
public:
    Decoder(DecoderConfig cfg, uint64_t seed, std::string prefix = "decoder");

    const DecoderConfig& config() const { return cfg_; }

    // linear interpolation along the position axis; endpoints preserved;
    // new_length == rows returns the input unchanged
    static Tensor interpolate_positions(const Tensor& table, int new_length);

    // training path: logits node [T, vocab]
    Graph::Id forward_on(Graph& g, const PackedSequence& packed, Graph::Id prefix_embeds);
    // inference path; prefix may be empty (pass {} with prefix_len 0)
    Tensor forward(const PackedSequence& packed, const Tensor& prefix_embeds) const;

    // greedy decoding with a KV cache; bit-identical to repeated full
    // forwards. prompt_ids follow the prefix; returned ids exclude both.
    GenerateResult generate(const Tensor& prefix_embeds, const std::vector<int>& prompt_ids,
                            int max_new, int eos_id) const;

    double next_token_loss(const Tensor& logits, const PackedSequence& packed) const;
    Graph::Id next_token_loss_on(Graph& g, Graph::Id logits, const PackedSequence& packed) const;

    std::vector<Parameter*> parameters();
    void set_trainable(bool trainable);

    Parameter& positions() { return pos_; }
    Parameter& token_embedding() { return tok_embed_; }
    const Parameter& positions() const { return pos_; }
    const Parameter& token_embedding() const { return tok_embed_; }

private:
    Tensor embed_sequence(const PackedSequence& packed, const Tensor& prefix_embeds) const;

    DecoderConfig cfg_;
    std::string prefix_;
    Parameter tok_embed_;  // [vocab, dim]
    Parameter pos_;        // [max_positions, dim]
    std::vector<BlockParams> blocks_;
    Parameter final_g_, final_b_;
    Parameter head_w_, head_b_;  // [dim, vocab]
};

}  // namespace vary
