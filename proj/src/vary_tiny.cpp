#include "vary/vary_tiny.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <unordered_map>

#include "vary/png_io.hpp"

namespace vary {

VaryTinyModel::VaryTinyModel(const EncoderConfig& enc_cfg, DecoderConfig dec_cfg, uint64_t seed)
    : seed_(seed),
      tok_(Tokenizer::standard()),
      encoder_(enc_cfg, seed, "new_vocab"),
      decoder_((dec_cfg.vocab_size = tok_.vocab_size(), dec_cfg), seed, "decoder") {
    const int in_dim = enc_cfg.out_dim;
    const int out_dim = dec_cfg.dim;
    Rng rng(tensor_seed(seed, "projector.w"));
    proj_w_ = {"projector.w",
               Tensor::randn({in_dim, out_dim}, rng, 1.0 / std::sqrt(static_cast<double>(in_dim)))};
    proj_b_ = {"projector.b", Tensor::zeros({out_dim})};
}

PackedSequence VaryTinyModel::pack_target(const std::string& target) const {
    PackedSequence p;
    p.pre_ids = {tok_.id_of_special(Tokenizer::kImgOpen)};
    p.prefix_len = encoder_.config().token_count();
    p.post_ids = {tok_.id_of_special(Tokenizer::kImgClose)};
    const std::vector<int> text_ids = tok_.tokenize(target);
    p.post_ids.insert(p.post_ids.end(), text_ids.begin(), text_ids.end());
    p.post_ids.push_back(tok_.eos_id());
    p.loss_mask.assign(static_cast<size_t>(p.length()), 0);
    // loss covers the target text and the closing </s>, nothing else
    const int resp_start = 1 + p.prefix_len + 1;
    for (int t = resp_start; t < p.length(); ++t) p.loss_mask[static_cast<size_t>(t)] = 1;
    p.validate();
    return p;
}

Tensor VaryTinyModel::project(const VisionTokens& tokens) const {
    return kern::linear(tokens.values, proj_w_.value, proj_b_.value);
}

std::string VaryTinyModel::predict_ocr(const ImageRaster& image) const {
    const int side = encoder_.config().input_size;
    const ImageRaster sized =
        (image.height() == side && image.width() == side) ? image : image.resized(side);
    const VisionTokens tokens = encoder_.encode(sized);
    const Tensor prefix_raw = project(tokens);
    // the packed layout puts <img> before and </img> after the vision rows
    PackedSequence probe;
    probe.pre_ids = {tok_.id_of_special(Tokenizer::kImgOpen)};
    probe.prefix_len = tokens.count();
    probe.post_ids = {tok_.id_of_special(Tokenizer::kImgClose)};
    // generate() consumes a flat prefix: <img> embedding, vision rows, </img> embedding
    const int dim = decoder_.config().dim;
    Tensor prefix({probe.length(), dim});
    const Tensor& emb = decoder_.token_embedding().value;
    for (int j = 0; j < dim; ++j) prefix.at2(0, j) = emb.at2(probe.pre_ids[0], j);
    for (int t = 0; t < tokens.count(); ++t)
        for (int j = 0; j < dim; ++j) prefix.at2(1 + t, j) = prefix_raw.at2(t, j);
    for (int j = 0; j < dim; ++j)
        prefix.at2(1 + tokens.count(), j) = emb.at2(probe.post_ids[0], j);
    const int budget = decoder_.config().max_positions - prefix.rows() - 1;
    const GenerateResult res = decoder_.generate(prefix, {}, budget, tok_.eos_id());
    return tok_.detokenize(res.ids);
}

std::vector<Parameter*> VaryTinyModel::parameters() {
    std::vector<Parameter*> out = encoder_.parameters();
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
    for (Parameter* p : decoder_.parameters()) out.push_back(p);
    return out;
}

std::map<std::string, std::vector<Parameter*>> VaryTinyModel::parameter_groups() {
    return {{"encoder", encoder_.parameters()},
            {"projector", {&proj_w_, &proj_b_}},
            {"decoder", decoder_.parameters()}};
}

void VaryTinyModel::save(const std::string& dir, const RunConfig& cfg,
                         const CheckpointMeta& meta) {
    ensure_dir(dir);
    write_text_file(dir + "/config.json", cfg.to_json_text());
    save_params_to_blob(dir + "/encoder.weights", encoder_.parameters());
    save_params_to_blob(dir + "/projector.weights", {&proj_w_, &proj_b_});
    save_params_to_blob(dir + "/decoder.weights", decoder_.parameters());
    CheckpointMeta m = meta;
    m.kind = "vary_tiny";
    m.seed = seed_;
    m.save(dir + "/meta");
}

VaryTinyModel VaryTinyModel::load(const std::string& dir, RunConfig* cfg_out,
                                  CheckpointMeta* meta_out) {
    if (!file_exists(dir + "/meta"))
        throw DataError("not a checkpoint directory (missing meta): " + dir);
    const CheckpointMeta meta = CheckpointMeta::load(dir + "/meta");
    if (meta.kind != "vary_tiny")
        throw DataError("checkpoint at " + dir + " has kind '" + meta.kind +
                        "', expected vary_tiny");
    const RunConfig cfg = RunConfig::from_json_text(read_text_file(dir + "/config.json"),
                                                    RunConfig::profile_toy());
    VaryTinyModel model(cfg.encoder, cfg.decoder, meta.seed);
    load_params_from_blob(dir + "/encoder.weights", model.encoder_.parameters());
    load_params_from_blob(dir + "/projector.weights", {&model.proj_w_, &model.proj_b_});
    load_params_from_blob(dir + "/decoder.weights", model.decoder_.parameters());
    if (cfg_out) *cfg_out = cfg;
    if (meta_out) *meta_out = meta;
    return model;
}

double tiny_train_step(VaryTinyModel& model, AdamW& opt,
                       const std::vector<const SampleRecord*>& batch,
                       const std::function<ImageRaster(const std::string&)>& load_image,
                       double lr, double clip_norm) {
    if (batch.empty()) throw TrainError("empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double mean_loss = 0.0;
    for (const SampleRecord* rec : batch) {
        const ImageRaster img = load_image(rec->image_path);
        Graph g;
        Graph::Id tokens = model.encoder().encode_on(g, img);
        Graph::Id prefix = g.linear(tokens, g.param(model.projector_w()), g.param(model.projector_b()));
        const PackedSequence packed = model.pack_target(rec->target);
        Graph::Id logits = model.decoder().forward_on(g, packed, prefix);
        Graph::Id loss = model.decoder().next_token_loss_on(g, logits, packed);
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

namespace {

std::vector<const SampleRecord*> training_rows(const std::vector<SampleRecord>& records,
                                               const std::string& on_bad_image,
                                               std::vector<std::string>* skipped) {
    std::vector<const SampleRecord*> rows;
    for (const SampleRecord& r : records) {
        const auto split = r.meta.find("split");
        if (split != r.meta.end() && split->second != "train") continue;
        if (!file_exists(r.image_path)) {
            if (on_bad_image == "skip") {
                if (skipped) skipped->push_back(r.id);
                continue;
            }
            throw DataError("unreadable image for sample " + r.id + ": " + r.image_path);
        }
        rows.push_back(&r);
    }
    return rows;
}

}  // namespace

TrainResult train_vary_tiny(VaryTinyModel& model, const std::vector<SampleRecord>& records,
                            const RunConfig& cfg, const std::string& out_dir) {
    const TrainSchedule& sched = cfg.tiny_schedule;
    sched.validate();
    if (records.empty()) throw DataError("training manifest is empty");
    std::vector<std::string> skipped;
    std::vector<const SampleRecord*> rows = training_rows(records, sched.on_bad_image, &skipped);
    for (const std::string& id : skipped)
        std::cerr << "skipping sample with unreadable image: " << id << "\n";
    if (rows.empty()) throw DataError("no readable training rows in manifest");

    // decoded-image cache; datasets at toy scale fit comfortably
    std::unordered_map<std::string, ImageRaster> cache;
    auto load_image = [&](const std::string& path) -> ImageRaster {
        auto it = cache.find(path);
        if (it == cache.end()) it = cache.emplace(path, read_png(path)).first;
        const ImageRaster& img = it->second;
        const int side = model.encoder().config().input_size;
        if (img.height() != side || img.width() != side)
            throw DataError("image " + path + " is " + std::to_string(img.height()) + "x" +
                            std::to_string(img.width()) + " but the encoder expects " +
                            std::to_string(side));
        return img;
    };

    AdamW opt(model.parameters(),
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
    Rng order_rng(mix64(sched.seed ^ cfg.seed ^ 0x5EEDull));
    std::vector<size_t> order(rows.size());
    std::iota(order.begin(), order.end(), size_t{0});
    long step = 0;
    bool stop = false;
    while (!stop && step < total_steps) {
        double epoch_loss = 0.0;
        long epoch_batches = 0;
        // deterministic shuffle per epoch
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(order_rng.below(i))]);
        for (size_t b = 0; b < order.size() && !stop && step < total_steps;
             b += static_cast<size_t>(sched.batch_size)) {
            std::vector<const SampleRecord*> batch;
            for (size_t k = b; k < std::min(order.size(), b + static_cast<size_t>(sched.batch_size)); ++k)
                batch.push_back(rows[order[k]]);
            const double lr = cosine_lr(sched.peak_lr, step, total_steps);
            const double loss = tiny_train_step(model, opt, batch, load_image, lr, sched.clip_norm);
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
    meta.phase = "";
    meta.step = step;
    meta.extra["peak_lr"] = std::to_string(sched.peak_lr);
    meta.extra["lr_schedule"] = "cosine";
    meta.extra["batch_size"] = std::to_string(sched.batch_size);
    meta.extra["epochs"] = std::to_string(sched.epochs);
    meta.extra["optimizer"] = "adamw";
    const size_t tail = std::min<size_t>(result.loss_history.size(), 20);
    meta.loss_tail.assign(result.loss_history.end() - static_cast<long>(tail),
                          result.loss_history.end());
    model.save(out_dir, cfg, meta);
    result.checkpoint_dir = out_dir;
    return result;
}

}  // namespace vary
