#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "vary/text_decoder.hpp"

using namespace vary;

namespace {

DecoderConfig toy_decoder_config(int vocab, int dim = 32, int depth = 2, int heads = 2,
                                 int max_positions = 64) {
    DecoderConfig cfg;
    cfg.vocab_size = vocab;
    cfg.dim = dim;
    cfg.depth = depth;
    cfg.heads = heads;
    cfg.max_positions = max_positions;
    return cfg;
}

// straight-line reference forward: per position, per head, no batching
Tensor reference_forward(Decoder& dec, const PackedSequence& packed, const Tensor& prefix) {
    const DecoderConfig& cfg = dec.config();
    const int T = packed.length();
    const int D = cfg.dim;
    const int dh = D / cfg.heads;
    const Tensor& emb = dec.token_embedding().value;
    const Tensor& pos = dec.positions().value;

    std::vector<std::vector<double>> x(static_cast<size_t>(T), std::vector<double>(D));
    const std::vector<int> ids = packed.position_ids_or_minus1();
    const int pre = static_cast<int>(packed.pre_ids.size());
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < D; ++j) {
            const double base = ids[static_cast<size_t>(t)] >= 0
                                    ? emb.at2(ids[static_cast<size_t>(t)], j)
                                    : prefix.at2(t - pre, j);
            x[static_cast<size_t>(t)][static_cast<size_t>(j)] = base + pos.at2(t, j);
        }
    }
    auto ln = [&](const std::vector<double>& v, const Tensor& g, const Tensor& b) {
        const int n = static_cast<int>(v.size());
        double mean = 0.0;
        for (double u : v) mean += u;
        mean /= n;
        double var = 0.0;
        for (double u : v) var += (u - mean) * (u - mean);
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + 1e-5);
        std::vector<double> out(v.size());
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j)] =
                (v[static_cast<size_t>(j)] - mean) * rstd * g[static_cast<size_t>(j)] +
                b[static_cast<size_t>(j)];
        return out;
    };
    auto matvec = [&](const std::vector<double>& v, const Tensor& w, const Tensor& b) {
        const int n = w.cols();
        std::vector<double> out(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) {
            double acc = b[static_cast<size_t>(j)];
            for (int i = 0; i < w.rows(); ++i) acc += v[static_cast<size_t>(i)] * w.at2(i, j);
            out[static_cast<size_t>(j)] = acc;
        }
        return out;
    };

    // run blocks against an explicit copy of the whole sequence
    struct Rows {
        std::vector<std::vector<double>> q, k, v;
    };
    // parameters() is positional: tok_embed, pos, then 16 tensors per block
    std::vector<Parameter*> params = dec.parameters();
    const size_t per_block = 16;
    for (int layer = 0; layer < cfg.depth; ++layer) {
        const size_t base = 2 + static_cast<size_t>(layer) * per_block;
        const Tensor& ln1g = params[base + 0]->value;
        const Tensor& ln1b = params[base + 1]->value;
        const Tensor& wq = params[base + 2]->value;
        const Tensor& bq = params[base + 3]->value;
        const Tensor& wk = params[base + 4]->value;
        const Tensor& bk = params[base + 5]->value;
        const Tensor& wv = params[base + 6]->value;
        const Tensor& bv = params[base + 7]->value;
        const Tensor& wo = params[base + 8]->value;
        const Tensor& bo = params[base + 9]->value;
        const Tensor& ln2g = params[base + 10]->value;
        const Tensor& ln2b = params[base + 11]->value;
        const Tensor& w1 = params[base + 12]->value;
        const Tensor& b1 = params[base + 13]->value;
        const Tensor& w2 = params[base + 14]->value;
        const Tensor& b2 = params[base + 15]->value;

        Rows rows;
        for (int t = 0; t < T; ++t) {
            const auto h = ln(x[static_cast<size_t>(t)], ln1g, ln1b);
            rows.q.push_back(matvec(h, wq, bq));
            rows.k.push_back(matvec(h, wk, bk));
            rows.v.push_back(matvec(h, wv, bv));
        }
        for (int t = 0; t < T; ++t) {
            std::vector<double> att(static_cast<size_t>(D), 0.0);
            for (int head = 0; head < cfg.heads; ++head) {
                const int off = head * dh;
                std::vector<double> scores(static_cast<size_t>(t + 1));
                double mx = -1e300;
                for (int s = 0; s <= t; ++s) {
                    double acc = 0.0;
                    for (int i = 0; i < dh; ++i)
                        acc += rows.q[static_cast<size_t>(t)][static_cast<size_t>(off + i)] *
                               rows.k[static_cast<size_t>(s)][static_cast<size_t>(off + i)];
                    scores[static_cast<size_t>(s)] = acc / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, scores[static_cast<size_t>(s)]);
                }
                double sum = 0.0;
                for (int s = 0; s <= t; ++s) {
                    scores[static_cast<size_t>(s)] = std::exp(scores[static_cast<size_t>(s)] - mx);
                    sum += scores[static_cast<size_t>(s)];
                }
                for (int s = 0; s <= t; ++s) {
                    const double p = scores[static_cast<size_t>(s)] / sum;
                    for (int i = 0; i < dh; ++i)
                        att[static_cast<size_t>(off + i)] +=
                            p * rows.v[static_cast<size_t>(s)][static_cast<size_t>(off + i)];
                }
            }
            const auto proj = matvec(att, wo, bo);
            for (int j = 0; j < D; ++j) x[static_cast<size_t>(t)][static_cast<size_t>(j)] += proj[static_cast<size_t>(j)];
        }
        for (int t = 0; t < T; ++t) {
            const auto h2 = ln(x[static_cast<size_t>(t)], ln2g, ln2b);
            auto m = matvec(h2, w1, b1);
            for (auto& v2 : m) {
                const double c = 0.7978845608028653558798921198687;
                v2 = 0.5 * v2 * (1.0 + std::tanh(c * (v2 + 0.044715 * v2 * v2 * v2)));
            }
            const auto m2 = matvec(m, w2, b2);
            for (int j = 0; j < D; ++j) x[static_cast<size_t>(t)][static_cast<size_t>(j)] += m2[static_cast<size_t>(j)];
        }
    }
    const size_t fin = 2 + static_cast<size_t>(cfg.depth) * per_block;
    const Tensor& fg = params[fin + 0]->value;
    const Tensor& fb = params[fin + 1]->value;
    const Tensor& hw = params[fin + 2]->value;
    const Tensor& hb = params[fin + 3]->value;
    Tensor logits({T, cfg.vocab_size});
    for (int t = 0; t < T; ++t) {
        const auto y = ln(x[static_cast<size_t>(t)], fg, fb);
        const auto row = matvec(y, hw, hb);
        for (int j = 0; j < cfg.vocab_size; ++j) logits.at2(t, j) = row[static_cast<size_t>(j)];
    }
    return logits;
}

PackedSequence text_only_sequence(const Tokenizer& tok, const std::string& text) {
    PackedSequence p;
    p.post_ids = tok.tokenize(text);
    p.post_ids.push_back(tok.eos_id());
    p.loss_mask.assign(static_cast<size_t>(p.length()), 1);
    p.loss_mask[0] = 0;
    return p;
}

}  // namespace

TEST_CASE("tokenizer: specials map to single ids and round trip") {
    const Tokenizer tok = Tokenizer::standard();
    const auto eos = tok.tokenize("</s>");
    REQUIRE(eos.size() == 1);
    CHECK(tok.detokenize(eos) == "</s>");
    CHECK(eos[0] == tok.eos_id());
    for (const char* sp : {"<img>", "</img>", "<|im_start|>", "<|im_end|>"}) {
        const auto ids = tok.tokenize(sp);
        REQUIRE(ids.size() == 1);
        CHECK(tok.is_special(ids[0]));
        CHECK(tok.detokenize(ids) == sp);
    }
    CHECK(tok.tokenize("").empty());
    CHECK(tok.detokenize({}) == "");
    // mixed: special tokens embedded in text
    const auto mixed = tok.tokenize("<img>ab</img>");
    REQUIRE(mixed.size() == 4);
    CHECK(tok.detokenize(mixed) == "<img>ab</img>");
}

TEST_CASE("tokenizer: random round trip matches a per-character oracle") {
    const Tokenizer tok = Tokenizer::standard();
    Rng rng(7);
    const auto& charset = tok.charset();
    for (int rep = 0; rep < 50; ++rep) {
        std::string s;
        for (int i = 0; i < 64; ++i)
            s += encode_utf8(charset[rng.below(charset.size())]);
        const auto ids = tok.tokenize(s);
        CHECK(tok.detokenize(ids) == s);
        // oracle: no specials appear, so ids are one per codepoint in order
        const auto cps = decode_utf8(s);
        bool has_special_collision = false;
        for (int id : ids) has_special_collision = has_special_collision || tok.is_special(id);
        if (!has_special_collision) {
            REQUIRE(ids.size() == cps.size());
            for (size_t i = 0; i < cps.size(); ++i)
                CHECK(tok.detokenize({ids[i]}) == encode_utf8(cps[i]));
        }
    }
}

TEST_CASE("tokenizer: characters outside the charset raise a named error") {
    const Tokenizer tok = Tokenizer::standard();
    try {
        tok.tokenize("ok\xC3\xA9");  // e-acute, not in charset
        FAIL("expected InputError");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("U+00E9") != std::string::npos);
    }
}

TEST_CASE("interpolate_positions: identity, midpoint, oracle, errors") {
    Rng rng(11);
    const Tensor t8 = Tensor::randn({8, 4}, rng);
    const Tensor same = Decoder::interpolate_positions(t8, 8);
    CHECK(same.max_abs_diff(t8) == 0.0);

    const Tensor t2 = Tensor::from({2, 1}, {0.0, 10.0});
    const Tensor t3 = Decoder::interpolate_positions(t2, 3);
    CHECK(t3.at2(0, 0) == 0.0);
    CHECK(t3.at2(1, 0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(t3.at2(2, 0) == 10.0);

    const Tensor t5 = Tensor::randn({5, 3}, rng);
    const Tensor t13 = Decoder::interpolate_positions(t5, 13);
    CHECK(t13.at2(0, 0) == t5.at2(0, 0));
    CHECK(t13.at2(12, 2) == t5.at2(4, 2));
    // independent piecewise-linear oracle
    for (int i = 0; i < 13; ++i) {
        const double p = i * 4.0 / 12.0;
        const int lo = std::min(static_cast<int>(std::floor(p)), 4);
        const int hi = std::min(lo + 1, 4);
        const double frac = p - lo;
        for (int j = 0; j < 3; ++j) {
            const double want = (1 - frac) * t5.at2(lo, j) + frac * t5.at2(hi, j);
            CHECK(t13.at2(i, j) == doctest::Approx(want).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(Decoder::interpolate_positions(t5, 1), InputError);
    CHECK_THROWS_AS(Decoder::interpolate_positions(t5, 0), InputError);
}

TEST_CASE("decoder init uses interpolated positions when init_positions is set") {
    const Tokenizer tok = Tokenizer::standard();
    DecoderConfig cfg = toy_decoder_config(tok.vocab_size(), 16, 1, 2, 32);
    cfg.init_positions = 16;
    Decoder dec(cfg, 3);
    CHECK(dec.positions().value.rows() == 32);
    // endpoints of the interpolated table equal the base table endpoints
    DecoderConfig base_cfg = cfg;
    base_cfg.init_positions = 0;
    base_cfg.max_positions = 16;
    Decoder base(base_cfg, 3);
    for (int j = 0; j < 16; ++j) {
        CHECK(dec.positions().value.at2(0, j) == base.positions().value.at2(0, j));
        CHECK(dec.positions().value.at2(31, j) == base.positions().value.at2(15, j));
    }
}

TEST_CASE("causality: perturbing a later token leaves earlier logits bit-identical") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 17);
    PackedSequence a = text_only_sequence(tok, "hello world");
    const Tensor la = dec.forward(a, {});
    PackedSequence b = a;
    const int flip = 7;
    b.post_ids[static_cast<size_t>(flip)] = tok.tokenize("Z")[0];
    const Tensor lb = dec.forward(b, {});
    for (int t = 0; t < flip; ++t)
        for (int j = 0; j < dec.config().vocab_size; ++j)
            CHECK(la.at2(t, j) == lb.at2(t, j));
    // and the flipped position does change
    double diff = 0.0;
    for (int j = 0; j < dec.config().vocab_size; ++j)
        diff += std::fabs(la.at2(flip, j) - lb.at2(flip, j));
    CHECK(diff > 0.0);
}

TEST_CASE("prefix-only input: finite logits at every position") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 19);
    Rng rng(5);
    PackedSequence p;
    p.prefix_len = 6;
    p.loss_mask.assign(6, 0);
    const Tensor prefix = Tensor::randn({6, 32}, rng);
    const Tensor logits = dec.forward(p, prefix);
    REQUIRE(logits.rows() == 6);
    CHECK(logits.all_finite());
}

TEST_CASE("batched forward matches a straight-line reference forward") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 23);
    Rng rng(9);
    PackedSequence p;
    p.pre_ids = tok.tokenize("<img>");
    p.prefix_len = 4;
    p.post_ids = tok.tokenize("</img>abc</s>");
    p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
    const Tensor prefix = Tensor::randn({4, 32}, rng);
    const Tensor got = dec.forward(p, prefix);
    const Tensor want = reference_forward(dec, p, prefix);
    CHECK(got.max_abs_diff(want) < 1e-5);
}

TEST_CASE("graph forward equals inference forward bit for bit") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 29);
    Rng rng(13);
    PackedSequence p = text_only_sequence(tok, "graph vs infer");
    Graph g;
    Graph::Id logits = dec.forward_on(g, p, -1);
    const Tensor infer = dec.forward(p, {});
    CHECK(g.value(logits).max_abs_diff(infer) == 0.0);
}

TEST_CASE("next_token_loss masks prefix and prompt positions exactly") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 31);
    Rng rng(15);
    PackedSequence p;
    p.pre_ids = tok.tokenize("<img>");
    p.prefix_len = 3;
    p.post_ids = tok.tokenize("</img>ab</s>");
    p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
    // response = "ab</s>" -> positions 5,6,7 (after <img>, 3 vision rows, </img>)
    for (int t = 5; t < p.length(); ++t) p.loss_mask[static_cast<size_t>(t)] = 1;
    const Tensor prefix = Tensor::randn({3, 32}, rng);

    Graph g;
    Graph::Id prefix_id = g.constant(prefix);
    Graph::Id logits = dec.forward_on(g, p, prefix_id);
    Graph::Id loss = dec.next_token_loss_on(g, logits, p);
    g.backward(loss);
    const Tensor& dlogits = g.grad(logits);
    // positions scoring a target: 4 (predicts 5), 5 (predicts 6), 6 (predicts 7)
    for (int t = 0; t < p.length(); ++t) {
        double row = 0.0;
        for (int j = 0; j < dec.config().vocab_size; ++j) row += std::fabs(dlogits.at2(t, j));
        if (t >= 4 && t <= 6)
            CHECK(row > 0.0);
        else
            CHECK(row == 0.0);
    }
    // loss value matches the inference-path computation
    const double loss_infer = dec.next_token_loss(dec.forward(p, prefix), p);
    CHECK(g.value(loss)[0] == doctest::Approx(loss_infer).epsilon(1e-12));
}

TEST_CASE("all-false mask raises a loss error") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 37);
    PackedSequence p;
    p.post_ids = tok.tokenize("abc");
    p.loss_mask.assign(3, 0);
    CHECK_THROWS_AS(dec.next_token_loss(dec.forward(p, {}), p), TrainError);
}

TEST_CASE("generate: rigged eos stops immediately; zero budget returns nothing") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 41);
    // rig the head bias so eos always wins
    Decoder rigged(toy_decoder_config(tok.vocab_size()), 41);
    std::vector<Parameter*> params = rigged.parameters();
    Parameter* head_b = params.back();
    for (size_t i = 0; i < head_b->value.numel(); ++i) head_b->value[i] = 0.0;
    head_b->value[static_cast<size_t>(tok.eos_id())] = 1000.0;
    const GenerateResult stopped = rigged.generate({}, tok.tokenize("go"), 10, tok.eos_id());
    CHECK(stopped.ids.empty());
    CHECK(stopped.hit_eos);

    const GenerateResult zero = dec.generate({}, tok.tokenize("go"), 0, tok.eos_id());
    CHECK(zero.ids.empty());
    CHECK_FALSE(zero.hit_eos);
}

TEST_CASE("kv-cache generation equals repeated full forwards bit for bit") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size(), 32, 2, 2, 96), 43);
    Rng rng(21);
    const Tensor prefix = Tensor::randn({5, 32}, rng);
    const std::vector<int> prompt = tok.tokenize("ab");
    const GenerateResult fast = dec.generate(prefix, prompt, 12, tok.eos_id());

    // naive loop: rebuild the full sequence and run the batch forward each step
    std::vector<int> out;
    bool hit_eos = false;
    for (int step = 0; step < 12; ++step) {
        PackedSequence p;
        p.prefix_len = 5;
        p.post_ids = prompt;
        p.post_ids.insert(p.post_ids.end(), out.begin(), out.end());
        p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
        const Tensor logits = dec.forward(p, prefix);
        const int last = logits.rows() - 1;
        int best = 0;
        for (int j = 1; j < dec.config().vocab_size; ++j)
            if (logits.at2(last, j) > logits.at2(last, best)) best = j;
        if (best == tok.eos_id()) {
            hit_eos = true;
            break;
        }
        out.push_back(best);
    }
    CHECK(fast.ids == out);
    CHECK(fast.hit_eos == hit_eos);
}

TEST_CASE("generation is deterministic across repeated calls") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size()), 47);
    Rng rng(23);
    const Tensor prefix = Tensor::randn({4, 32}, rng);
    const GenerateResult a = dec.generate(prefix, {}, 8, tok.eos_id());
    const GenerateResult b = dec.generate(prefix, {}, 8, tok.eos_id());
    CHECK(a.ids == b.ids);
}

TEST_CASE("context overflow mid-generation sets the truncation flag") {
    const Tokenizer tok = Tokenizer::standard();
    DecoderConfig cfg = toy_decoder_config(tok.vocab_size(), 16, 1, 2, 8);
    Decoder dec(cfg, 53);
    Rng rng(29);
    const Tensor prefix = Tensor::randn({5, 16}, rng);
    // budget asks for more tokens than the context can hold
    const GenerateResult res = dec.generate(prefix, {}, 100, -1 /*never match eos*/);
    CHECK(res.truncated);
    CHECK(static_cast<int>(res.ids.size()) == 3);
}

TEST_CASE("decoder parameter gradients match finite differences") {
    const Tokenizer tok = Tokenizer::standard();
    Decoder dec(toy_decoder_config(tok.vocab_size(), 16, 2, 2, 24), 59);
    Rng rng(31);
    PackedSequence p;
    p.pre_ids = tok.tokenize("<img>");
    p.prefix_len = 2;
    p.post_ids = tok.tokenize("</img>ab</s>");
    p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
    for (int t = 4; t < p.length(); ++t) p.loss_mask[static_cast<size_t>(t)] = 1;
    const Tensor prefix = Tensor::randn({2, 16}, rng);

    auto loss_fn = [&] {
        Graph g;
        return g.value(dec.next_token_loss_on(g, dec.forward_on(g, p, g.constant(prefix)), p))[0];
    };
    auto backward_fn = [&] {
        Graph g;
        g.backward(dec.next_token_loss_on(g, dec.forward_on(g, p, g.constant(prefix)), p));
    };
    const double err = testutil::gradcheck(dec.parameters(), loss_fn, backward_fn, 24);
    CHECK(err < 1e-4);
}
