// vary: two-stage vision-vocabulary pipeline CLI.
//
// Subcommands: datagen, train-tiny, train-base, infer, eval, inspect.
// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vary/checkpoint.hpp"
#include "vary/data_engine.hpp"
#include "vary/metrics.hpp"
#include "vary/png_io.hpp"
#include "vary/run_config.hpp"
#include "vary/vary_base.hpp"
#include "vary/vary_tiny.hpp"

namespace {

using namespace vary;

struct CommonOpts {
    std::string config_path;
    std::string profile = "toy";
    std::optional<uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (overrides the profile)");
    cmd->add_option("--profile", opts.profile, "config profile: toy | paper-shape")
        ->default_val("toy");
    cmd->add_option("--seed", opts.seed, "global seed override");
    cmd->add_option("--out", opts.out_dir, "output directory");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = RunConfig::from_profile(opts.profile);
    if (!opts.config_path.empty())
        cfg = RunConfig::from_json_text(read_text_file(opts.config_path), cfg);
    if (opts.seed) cfg.seed = *opts.seed;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    cfg.validate();
    return cfg;
}

int cmd_datagen(const CommonOpts& opts) {
    RunConfig cfg = resolve_config(opts);
    DatasetConfig ds = cfg.dataset;
    if (ds.seed == 0) ds.seed = cfg.seed;
    const std::string out = cfg.out_dir.empty() ? "dataset" : cfg.out_dir;
    const auto counts = build_manifest(ds, out);
    std::cout << "dataset written to " << out << "\n";
    for (const auto& [task, n] : counts) std::cout << "  " << task << ": " << n << "\n";
    return 0;
}

int cmd_train_tiny(const CommonOpts& opts, const std::string& manifest) {
    RunConfig cfg = resolve_config(opts);
    const auto records = load_manifest(manifest);
    VaryTinyModel model(cfg.encoder, cfg.decoder, cfg.seed);
    if (!cfg.encoder_pretrained.empty()) {
        model.encoder().load_weight_blob(cfg.encoder_pretrained);
        std::cout << "loaded pretrained encoder weights from " << cfg.encoder_pretrained << "\n";
    }
    const std::string out = cfg.out_dir.empty() ? "runs/tiny" : cfg.out_dir;
    const TrainResult result = train_vary_tiny(model, records, cfg, out);
    std::cout << "trained " << result.steps << " steps, final loss " << result.final_loss
              << "\ncheckpoint: " << result.checkpoint_dir << "\n";
    return 0;
}

int cmd_train_base(const CommonOpts& opts, const std::string& manifest,
                   const std::string& tiny_ckpt, const std::string& base_ckpt,
                   const std::string& phase_name, const std::string& template_name_str) {
    RunConfig cfg = resolve_config(opts);
    const auto records = load_manifest(manifest);
    const TemplateKind kind = template_from_name(template_name_str);
    PhaseSchedule phase = phase_name == "sft" ? cfg.base_sft : cfg.base_pretrain;
    phase.phase = phase_name;
    const std::string out = cfg.out_dir.empty() ? "runs/base-" + phase_name : cfg.out_dir;
    if (!base_ckpt.empty()) {
        RunConfig saved_cfg;
        VaryBaseModel model = VaryBaseModel::load(base_ckpt, &saved_cfg);
        const TrainResult result = train_vary_base(model, records, phase, saved_cfg, kind, out);
        std::cout << "trained " << result.steps << " steps, final loss " << result.final_loss
                  << "\ncheckpoint: " << result.checkpoint_dir << "\n";
        return 0;
    }
    if (tiny_ckpt.empty())
        throw ConfigError("train-base needs --tiny-checkpoint (or --base-checkpoint to continue)");
    VaryBaseModel model = VaryBaseModel::build_from_tiny(tiny_ckpt, cfg, /*legacy_seed=*/0);
    const TrainResult result = train_vary_base(model, records, phase, cfg, kind, out);
    std::cout << "trained " << result.steps << " steps, final loss " << result.final_loss
              << "\ncheckpoint: " << result.checkpoint_dir << "\n";
    return 0;
}

std::string checkpoint_kind(const std::string& dir) {
    return CheckpointMeta::load(dir + "/meta").kind;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path, const std::string& prompt,
              const std::string& template_name_str) {
    const ImageRaster image = read_png(image_path);
    const std::string kind = checkpoint_kind(ckpt);
    if (kind == "vary_tiny") {
        VaryTinyModel model = VaryTinyModel::load(ckpt);
        std::cout << model.predict_ocr(image) << "\n";
        return 0;
    }
    VaryBaseModel model = VaryBaseModel::load(ckpt);
    const std::string user = prompt.empty() ? kOcrPrompt : prompt;
    std::cout << model.chat(image, user, template_from_name(template_name_str)) << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& split,
             const std::string& template_name_str, const std::string& out_dir) {
    const auto records = load_manifest(manifest);
    const std::string kind = checkpoint_kind(ckpt);
    std::vector<EvalRow> rows;
    auto want = [&](const SampleRecord& r) {
        if (split == "all") return true;
        const auto it = r.meta.find("split");
        return it != r.meta.end() && it->second == split;
    };
    if (kind == "vary_tiny") {
        VaryTinyModel model = VaryTinyModel::load(ckpt);
        for (const SampleRecord& r : records) {
            if (!want(r)) continue;
            const std::string pred = model.predict_ocr(read_png(r.image_path));
            rows.push_back(score_row(r.id, r.task, pred, r.target));
        }
    } else {
        VaryBaseModel model = VaryBaseModel::load(ckpt);
        const TemplateKind kindt = template_from_name(template_name_str);
        for (const SampleRecord& r : records) {
            if (!want(r)) continue;
            const std::string prompt =
                r.prompt.empty() ? default_prompt_for_task(r.task) : r.prompt;
            const std::string pred = model.chat(read_png(r.image_path), prompt, kindt);
            rows.push_back(score_row(r.id, r.task, pred, r.target));
        }
    }
    if (rows.empty()) throw DataError("no rows matched split '" + split + "'");
    const EvalReport report = aggregate(std::move(rows));
    std::cout << report.to_text();
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(out_dir + "/eval_report.json", report.to_json());
        write_text_file(out_dir + "/eval_report.txt", report.to_text());
        std::cout << "report written to " << out_dir << "\n";
    }
    return 0;
}

int cmd_inspect(const std::string& ckpt) {
    const CheckpointMeta meta = CheckpointMeta::load(ckpt + "/meta");
    std::cout << "kind: " << meta.kind << "\n";
    if (!meta.phase.empty()) std::cout << "phase: " << meta.phase << "\n";
    std::cout << "step: " << meta.step << "\nseed: " << meta.seed << "\n";
    for (const auto& [k, v] : meta.extra) std::cout << k << ": " << v << "\n";

    auto describe = [](const std::string& group, std::vector<Parameter*> params) {
        size_t count = 0;
        bool frozen = !params.empty();
        for (const Parameter* p : params) {
            count += p->value.numel();
            if (p->trainable) frozen = false;
        }
        std::cout << "  " << group << ": " << params.size() << " tensors, " << count
                  << " parameters" << (frozen ? " [frozen]" : "") << "\n";
        return count;
    };
    if (meta.kind == "vary_tiny") {
        RunConfig cfg;
        VaryTinyModel model = VaryTinyModel::load(ckpt, &cfg);
        std::cout << "vision tokens: " << cfg.encoder.token_count() << " x "
                  << cfg.encoder.out_dim << "\n";
        std::cout << "packed sample length: 1 + " << cfg.encoder.token_count()
                  << " + 1 + len(text) + 1\n";
        size_t total = 0;
        for (auto& [name, group] : model.parameter_groups()) total += describe(name, group);
        std::cout << "total parameters: " << total << "\n";
    } else if (meta.kind == "vary_base") {
        RunConfig cfg;
        VaryBaseModel model = VaryBaseModel::load(ckpt, &cfg);
        std::cout << "vision tokens per vocabulary: " << cfg.encoder.token_count() << "\n";
        std::cout << "new vocabulary: " << cfg.encoder.token_count() << " x "
                  << cfg.encoder.out_dim << "\n";
        std::cout << "legacy vocabulary: " << cfg.legacy.token_count() << " x " << cfg.legacy.dim
                  << "\n";
        std::cout << "fused tokens: " << cfg.encoder.token_count() << " x " << 2 * cfg.dim_half
                  << "\n";
        size_t total = 0;
        for (auto& [name, group] : model.parameter_groups()) total += describe(name, group);
        std::cout << "total parameters: " << total << "\n";
    } else {
        throw DataError("unknown checkpoint kind: " + meta.kind);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vary: two-stage vision vocabulary pipeline"};
    app.require_subcommand(1);

    CommonOpts datagen_opts, tiny_opts, base_opts;
    std::string manifest, tiny_ckpt, base_ckpt, phase = "pretrain", tmpl = "vicuna_v1";
    std::string ckpt, image_path, prompt, split = "all", eval_out;

    CLI::App* datagen = app.add_subcommand("datagen", "render synthetic datasets");
    add_common(datagen, datagen_opts);

    CLI::App* train_tiny = app.add_subcommand("train-tiny", "stage-1 vocabulary generation");
    add_common(train_tiny, tiny_opts);
    train_tiny->add_option("--data", manifest, "manifest.jsonl path")->required();

    CLI::App* train_base = app.add_subcommand("train-base", "stage-2 vocabulary fusion");
    add_common(train_base, base_opts);
    train_base->add_option("--data", manifest, "manifest.jsonl path")->required();
    train_base->add_option("--tiny-checkpoint", tiny_ckpt, "stage-1 checkpoint directory");
    train_base->add_option("--base-checkpoint", base_ckpt,
                           "existing stage-2 checkpoint to continue from");
    train_base->add_option("--phase", phase, "pretrain | sft")->default_val("pretrain");
    train_base->add_option("--template", tmpl, "vicuna_v1 | mpt")->default_val("vicuna_v1");

    CLI::App* infer = app.add_subcommand("infer", "run one image through a checkpoint");
    infer->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    infer->add_option("--image", image_path, "input PNG")->required();
    infer->add_option("--prompt", prompt, "user prompt (vary-base only)");
    infer->add_option("--template", tmpl, "vicuna_v1 | mpt")->default_val("vicuna_v1");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
    eval->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    eval->add_option("--data", manifest, "manifest.jsonl path")->required();
    eval->add_option("--split", split, "train | val | all")->default_val("all");
    eval->add_option("--template", tmpl, "vicuna_v1 | mpt")->default_val("vicuna_v1");
    eval->add_option("--out", eval_out, "directory for eval_report.{json,txt}");

    CLI::App* inspect = app.add_subcommand("inspect", "describe a checkpoint");
    inspect->add_option("--checkpoint", ckpt, "checkpoint directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (datagen->parsed()) return cmd_datagen(datagen_opts);
        if (train_tiny->parsed()) return cmd_train_tiny(tiny_opts, manifest);
        if (train_base->parsed())
            return cmd_train_base(base_opts, manifest, tiny_ckpt, base_ckpt, phase, tmpl);
        if (infer->parsed()) return cmd_infer(ckpt, image_path, prompt, tmpl);
        if (eval->parsed()) return cmd_eval(ckpt, manifest, split, tmpl, eval_out);
        if (inspect->parsed()) return cmd_inspect(ckpt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const TrainError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
