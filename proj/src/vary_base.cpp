#include "vary/vary_base.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "vary/png_io.hpp"

namespace vary {

TemplateKind template_from_name(const std::string& name) {
    if (name == "vicuna_v1") return TemplateKind::vicuna_v1;
    if (name == "mpt") return TemplateKind::mpt;
    throw InputError("unknown conversation template '" + name + "' (expected vicuna_v1 or mpt)");
}

const char* template_name(TemplateKind kind) {
    return kind == TemplateKind::vicuna_v1 ? "vicuna_v1" : "mpt";
}

std::string render_conversation(TemplateKind kind, const std::string& user_text,
                                const std::optional<std::string>& assistant_text) {
    if (kind == TemplateKind::vicuna_v1) {
        std::string s = "USER: <img><image></img> " + user_text + " ASSISTANT: ";
        if (assistant_text) s += *assistant_text + "</s>";
        return s;
    }
    std::string s = "<|im_start|>user: <img><image></img> " + user_text +
                    "<|im_end|> <|im_start|>assistant: ";
    if (assistant_text) s += *assistant_text + "<|im_end|>";
    return s;
}

VaryBaseModel::VaryBaseModel(const EncoderConfig& enc_cfg, const LegacyConfig& legacy_cfg,
                             DecoderConfig llm_cfg, int dim_half, uint64_t seed,
                             uint64_t legacy_seed)
    : seed_(seed),
      legacy_seed_(legacy_seed ? legacy_seed : mix64(seed ^ 0x1E6AC7ull)),
      tok_(Tokenizer::standard()),
      new_vocab_(enc_cfg, seed, "new_vocab"),
      legacy_(legacy_cfg, legacy_seed ? legacy_seed : mix64(seed ^ 0x1E6AC7ull), "legacy_vocab"),
      llm_((llm_cfg.vocab_size = tok_.vocab_size(), llm_cfg), seed, "llm"),
      dim_half_(dim_half) {
    if (enc_cfg.token_count() != legacy_cfg.token_count())
        throw ConfigError("vocabulary token counts differ: new " +
                          std::to_string(enc_cfg.token_count()) + " vs legacy " +
                          std::to_string(legacy_cfg.token_count()));
    if (llm_cfg.dim != 2 * dim_half)
        throw ConfigError("llm dim must equal 2*dim_half");
    {
        Rng rng(tensor_seed(seed, "embed_new.w"));
        embed_new_w_ = {"embed_new.w",
                        Tensor::randn({enc_cfg.out_dim, dim_half}, rng,
                                      1.0 / std::sqrt(static_cast<double>(enc_cfg.out_dim)))};
        embed_new_b_ = {"embed_new.b", Tensor::zeros({dim_half})};
    }
    {
        Rng rng(tensor_seed(seed, "embed_legacy.w"));
        embed_legacy_w_ = {"embed_legacy.w",
                           Tensor::randn({legacy_cfg.dim, dim_half}, rng,
                                         1.0 / std::sqrt(static_cast<double>(legacy_cfg.dim)))};
        embed_legacy_b_ = {"embed_legacy.b", Tensor::zeros({dim_half})};
    }
    new_vocab_.set_trainable(false);
    legacy_.set_trainable(false);
}

VaryBaseModel VaryBaseModel::build_from_tiny(const std::string& tiny_checkpoint_dir,
                                             const RunConfig& cfg, uint64_t legacy_seed) {
    if (!file_exists(tiny_checkpoint_dir + "/meta"))
        throw DataError("stage-1 checkpoint not found at " + tiny_checkpoint_dir);
    const CheckpointMeta tiny_meta = CheckpointMeta::load(tiny_checkpoint_dir + "/meta");
    if (tiny_meta.kind != "vary_tiny")
        throw DataError("expected a vary_tiny checkpoint at " + tiny_checkpoint_dir + ", found '" +
                        tiny_meta.kind + "'");
    const RunConfig tiny_cfg = RunConfig::from_json_text(
        read_text_file(tiny_checkpoint_dir + "/config.json"), RunConfig::profile_toy());
    const EncoderConfig& a = tiny_cfg.encoder;
    const EncoderConfig& b = cfg.encoder;
    if (a.input_size != b.input_size || a.patch_stride != b.patch_stride ||
        a.trunk_depth != b.trunk_depth || a.trunk_dim != b.trunk_dim ||
        a.head_dims != b.head_dims || a.out_dim != b.out_dim)
        throw ConfigError("stage-1 encoder config does not match the stage-2 new vocabulary");
    VaryBaseModel model(cfg.encoder, cfg.legacy, cfg.llm, cfg.dim_half, cfg.seed, legacy_seed);
    load_params_from_blob(tiny_checkpoint_dir + "/encoder.weights",
                          model.new_vocab_.parameters());
    model.new_vocab_.set_trainable(false);
    return model;
}

std::pair<Tensor, Tensor> VaryBaseModel::encode_branches(const ImageRaster& source) const {
    const int new_side = new_vocab_.config().input_size;
    const int legacy_side = legacy_.config().input_size;
    const ImageRaster for_new = (source.height() == new_side && source.width() == new_side)
                                    ? source
                                    : source.resized(new_side);
    const ImageRaster for_legacy =
        (source.height() == legacy_side && source.width() == legacy_side)
            ? source
            : source.resized(legacy_side);
    return {new_vocab_.encode(for_new).values, legacy_.encode(for_legacy).values};
}

Tensor VaryBaseModel::fuse_from_branches(const Tensor& new_tokens,
                                         const Tensor& legacy_tokens) const {
    if (new_tokens.rows() != legacy_tokens.rows())
        throw ShapeError("fuse: token count mismatch between vocabularies");
    Tensor a = kern::linear(new_tokens, embed_new_w_.value, embed_new_b_.value);
    Tensor b = kern::linear(legacy_tokens, embed_legacy_w_.value, embed_legacy_b_.value);
    Tensor fused({a.rows(), 2 * dim_half_});
    for (int t = 0; t < a.rows(); ++t) {
        for (int j = 0; j < dim_half_; ++j) {
            fused.at2(t, j) = a.at2(t, j);
            fused.at2(t, dim_half_ + j) = b.at2(t, j);
        }
    }
    return fused;
}

VisionTokens VaryBaseModel::fuse_tokens(const ImageRaster& source) const {
    const auto [new_t, legacy_t] = encode_branches(source);
    return {fuse_from_branches(new_t, legacy_t)};
}

Graph::Id VaryBaseModel::fuse_on(Graph& g, const Tensor& new_tokens,
                                 const Tensor& legacy_tokens) {
    Graph::Id a = g.linear(g.constant(new_tokens), g.param(embed_new_w_), g.param(embed_new_b_));
    Graph::Id b =
        g.linear(g.constant(legacy_tokens), g.param(embed_legacy_w_), g.param(embed_legacy_b_));
    return g.concat_cols(a, b);
}

PackedSequence VaryBaseModel::pack_conversation(TemplateKind kind, const std::string& user_text,
                                                const std::string& assistant_text) const {
    const std::string full = render_conversation(kind, user_text, assistant_text);
    const size_t at = full.find(kImagePlaceholder);
    if (at == std::string::npos) throw ShapeError("template lost the image placeholder");
    const std::string left = full.substr(0, at);
    const std::string rest = full.substr(at + std::string(kImagePlaceholder).size());
    const std::string infer = render_conversation(kind, user_text, std::nullopt);
    const std::string mid = rest.substr(0, rest.size() - (full.size() - infer.size()));
    const std::string resp = rest.substr(mid.size());

    PackedSequence p;
    p.pre_ids = tok_.tokenize(left);
    p.prefix_len = new_vocab_.config().token_count();
    const std::vector<int> mid_ids = tok_.tokenize(mid);
    const std::vector<int> resp_ids = tok_.tokenize(resp);
    p.post_ids = mid_ids;
    p.post_ids.insert(p.post_ids.end(), resp_ids.begin(), resp_ids.end());
    p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
    const int resp_start = static_cast<int>(p.pre_ids.size()) + p.prefix_len +
                           static_cast<int>(mid_ids.size());
    for (int t = resp_start; t < p.length(); ++t) p.loss_mask[static_cast<size_t>(t)] = 1;
    p.validate();
    return p;
}

int VaryBaseModel::eos_for(TemplateKind kind) const {
    return kind == TemplateKind::vicuna_v1 ? tok_.eos_id()
                                           : tok_.id_of_special(Tokenizer::kImEnd);
}

std::string VaryBaseModel::chat(const ImageRaster& image, const std::string& prompt,
                                TemplateKind kind) const {
    const Tensor fused = fuse_tokens(image).values;
    const std::string infer = render_conversation(kind, prompt, std::nullopt);
    const size_t at = infer.find(kImagePlaceholder);
    const std::string left = infer.substr(0, at);
    const std::string mid = infer.substr(at + std::string(kImagePlaceholder).size());
    const std::vector<int> left_ids = tok_.tokenize(left);
    const std::vector<int> mid_ids = tok_.tokenize(mid);

    const int dim = llm_.config().dim;
    Tensor prefix({static_cast<int>(left_ids.size()) + fused.rows(), dim});
    const Tensor& emb = llm_.token_embedding().value;
    int row = 0;
    for (int id : left_ids) {
        for (int j = 0; j < dim; ++j) prefix.at2(row, j) = emb.at2(id, j);
        ++row;
    }
    for (int t = 0; t < fused.rows(); ++t, ++row)
        for (int j = 0; j < dim; ++j) prefix.at2(row, j) = fused.at2(t, j);
    const int budget = llm_.config().max_positions - prefix.rows() -
                       static_cast<int>(mid_ids.size()) - 1;
    const GenerateResult res = llm_.generate(prefix, mid_ids, budget, eos_for(kind));
    return tok_.detokenize(res.ids);
}

std::vector<Parameter*> VaryBaseModel::parameters() {
    std::vector<Parameter*> out = new_vocab_.parameters();
    for (Parameter* p : legacy_.parameters()) out.push_back(p);
    for (Parameter* p : {&embed_new_w_, &embed_new_b_, &embed_legacy_w_, &embed_legacy_b_})
        out.push_back(p);
    for (Parameter* p : llm_.parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter*> VaryBaseModel::trainable_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters())
        if (p->trainable) out.push_back(p);
    return out;
}

std::map<std::string, std::vector<Parameter*>> VaryBaseModel::parameter_groups() {
    return {{"new_vocab", new_vocab_.parameters()},
            {"legacy_vocab", legacy_.parameters()},
            {"embed_new", {&embed_new_w_, &embed_new_b_}},
            {"embed_legacy", {&embed_legacy_w_, &embed_legacy_b_}},
            {"llm", llm_.parameters()}};
}

void VaryBaseModel::save(const std::string& dir, const RunConfig& cfg,
                         const CheckpointMeta& meta) {
    ensure_dir(dir);
    write_text_file(dir + "/config.json", cfg.to_json_text());
    save_params_to_blob(dir + "/new_vocab.weights", new_vocab_.parameters());
    save_params_to_blob(dir + "/legacy_vocab.weights", legacy_.parameters());
    save_params_to_blob(dir + "/embed_new.weights", {&embed_new_w_, &embed_new_b_});
    save_params_to_blob(dir + "/embed_legacy.weights", {&embed_legacy_w_, &embed_legacy_b_});
    save_params_to_blob(dir + "/llm.weights", llm_.parameters());
    CheckpointMeta m = meta;
    m.kind = "vary_base";
    m.seed = seed_;
    m.extra["legacy_seed"] = std::to_string(legacy_seed_);
    m.save(dir + "/meta");
}

VaryBaseModel VaryBaseModel::load(const std::string& dir, RunConfig* cfg_out,
                                  CheckpointMeta* meta_out) {
    if (!file_exists(dir + "/meta"))
        throw DataError("not a checkpoint directory (missing meta): " + dir);
    const CheckpointMeta meta = CheckpointMeta::load(dir + "/meta");
    if (meta.kind != "vary_base")
        throw DataError("checkpoint at " + dir + " has kind '" + meta.kind +
                        "', expected vary_base");
    const RunConfig cfg = RunConfig::from_json_text(read_text_file(dir + "/config.json"),
                                                    RunConfig::profile_toy());
    uint64_t legacy_seed = 0;
    if (const auto it = meta.extra.find("legacy_seed"); it != meta.extra.end())
        legacy_seed = std::stoull(it->second);
    VaryBaseModel model(cfg.encoder, cfg.legacy, cfg.llm, cfg.dim_half, meta.seed, legacy_seed);
    load_params_from_blob(dir + "/new_vocab.weights", model.new_vocab_.parameters());
    load_params_from_blob(dir + "/legacy_vocab.weights", model.legacy_.parameters());
    load_params_from_blob(dir + "/embed_new.weights", {&model.embed_new_w_, &model.embed_new_b_});
    load_params_from_blob(dir + "/embed_legacy.weights",
                          {&model.embed_legacy_w_, &model.embed_legacy_b_});
    load_params_from_blob(dir + "/llm.weights", model.llm_.parameters());
    if (cfg_out) *cfg_out = cfg;
    if (meta_out) *meta_out = meta;
    return model;
}

std::string default_prompt_for_task(const std::string& task) {
    if (task == "ocr") return kOcrPrompt;
    if (task == "markdown") return kMarkdownPrompt;
    return kDescribePrompt;  // chart, nature, caption
}

double base_train_step(VaryBaseModel& model, AdamW& opt,
                       const std::vector<const SampleRecord*>& batch,
                       const std::function<std::pair<Tensor, Tensor>(const std::string&)>& branches,
                       TemplateKind kind, double lr, double clip_norm) {
    if (batch.empty()) throw TrainError("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double mean_loss = 0.0;
    for (const SampleRecord* rec : batch) {
        const auto [new_t, legacy_t] = branches(rec->image_path);
        const std::string prompt =
            rec->prompt.empty() ? default_prompt_for_task(rec->task) : rec->prompt;
        Graph g;
        Graph::Id fused = model.fuse_on(g, new_t, legacy_t);
        const PackedSequence packed = model.pack_conversation(kind, prompt, rec->target);
        Graph::Id logits = model.llm().forward_on(g, packed, fused);
        Graph::Id loss = model.llm().next_token_loss_on(g, logits, packed);
        const double loss_value = g.value(loss)[0];
        if (!std::isfinite(loss_value))
            throw TrainError("non-finite loss on sample id " + rec->id);
        mean_loss += loss_value * inv_b;
        g.backward(g.scale(loss, inv_b));
    }
    opt.clip_global_norm(clip_norm);
    opt.step(lr);
    opt.zero_grad();
    return mean_loss;
}

TrainResult train_vary_base(VaryBaseModel& model, const std::vector<SampleRecord>& records,
                            const PhaseSchedule& phase, const RunConfig& cfg,
                            TemplateKind kind, const std::string& out_dir) {
    phase.validate();
    const TrainSchedule& sched = phase.sched;
    if (records.empty()) throw DataError("training manifest is empty");

    // phase selects its task family
    std::vector<const SampleRecord*> rows;
    for (const SampleRecord& r : records) {
        const auto split = r.meta.find("split");
        if (split != r.meta.end() && split->second != "train") continue;
        const bool instruction = r.task == "instruction";
        if ((phase.phase == "sft") != instruction) continue;
        if (!file_exists(r.image_path)) {
            if (sched.on_bad_image == "skip") {
                std::cerr << "skipping sample with unreadable image: " << r.id << "\n";
                continue;
            }
            throw DataError("unreadable image for sample " + r.id + ": " + r.image_path);
        }
        rows.push_back(&r);
    }
    if (rows.empty())
        throw DataError("no readable rows for phase '" + phase.phase + "' in manifest");

    // frozen encoders are pure: cache per-image branch tokens across steps
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> cache;
    auto branches = [&](const std::string& path) -> std::pair<Tensor, Tensor> {
        auto it = cache.find(path);
        if (it == cache.end()) it = cache.emplace(path, model.encode_branches(read_png(path))).first;
        return it->second;
    };

    AdamW opt(model.trainable_parameters(),
              {sched.peak_lr, sched.beta1, sched.beta2, 1e-8, sched.weight_decay});
    const long steps_per_epoch =
        static_cast<long>((rows.size() + static_cast<size_t>(sched.batch_size) - 1) /
                          static_cast<size_t>(sched.batch_size));
    long total_steps = sched.max_steps > 0 ? sched.max_steps
                                           : steps_per_epoch * static_cast<long>(sched.epochs);
    ensure_dir(out_dir);
    std::ofstream log(out_dir + "/loss.log", std::ios::trunc);
    log << "# step lr loss\n";

    TrainResult result;
    Rng order_rng(mix64(sched.seed ^ cfg.seed ^ 0xBA5Eull));
    std::vector<size_t> order(rows.size());
    std::iota(order.begin(), order.end(), size_t{0});
    long step = 0;
    bool stop = false;
    while (!stop && step < total_steps) {
        double epoch_loss = 0.0;
        long epoch_batches = 0;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(order_rng.below(i))]);
        for (size_t b = 0; b < order.size() && !stop && step < total_steps;
             b += static_cast<size_t>(sched.batch_size)) {
            std::vector<const SampleRecord*> batch;
            for (size_t k = b; k < std::min(order.size(), b + static_cast<size_t>(sched.batch_size)); ++k)
                batch.push_back(rows[order[k]]);
            const double lr = cosine_lr(sched.peak_lr, step, total_steps);
            const double loss = base_train_step(model, opt, batch, branches, kind, lr, sched.clip_norm);
            log << step << " " << lr << " " << loss << "\n";
            if (sched.log_every > 0 && step % sched.log_every == 0)
                std::cout << "step " << step << " lr " << lr << " loss " << loss << std::endl;
            result.loss_history.push_back(loss);
            result.final_loss = loss;
            epoch_loss += loss;
            ++epoch_batches;
            ++step;
        }
        // early stop on the epoch mean: robust to small-batch noise
        if (sched.early_stop_loss > 0.0 && epoch_batches > 0 &&
            epoch_loss / static_cast<double>(epoch_batches) < sched.early_stop_loss)
            stop = true;
    }
    result.steps = step;

    CheckpointMeta meta;
    meta.phase = phase.phase;
    meta.step = step;
    meta.extra["peak_lr"] = std::to_string(sched.peak_lr);
    meta.extra["lr_schedule"] = "cosine";
    meta.extra["batch_size"] = std::to_string(sched.batch_size);
    meta.extra["template"] = template_name(kind);
    const size_t tail = std::min<size_t>(result.loss_history.size(), 20);
    meta.loss_tail.assign(result.loss_history.end() - static_cast<long>(tail),
                          result.loss_history.end());
    model.save(out_dir, cfg, meta);
    result.checkpoint_dir = out_dir;
    return result;
}

}  // namespace vary
