#pragma once

#include <string>

#include "vary/data_engine.hpp"
#include "vary/legacy_vocab.hpp"
#include "vary/text_decoder.hpp"
#include "vary/vision_vocab.hpp"

namespace vary {

// Training knobs shared by the stage-1 trainer and both stage-2 phases.
struct TrainSchedule {
    int batch_size = 8;
    int epochs = 3;
    double peak_lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    long max_steps = 0;          // 0 = epochs decide
    double early_stop_loss = 0.0;  // 0 = off; stop once mean step loss drops below
    std::string on_bad_image = "abort";  // "abort" | "skip"
    int log_every = 10;
    uint64_t seed = 0;

    void validate() const;
};

struct PhaseSchedule {
    std::string phase = "pretrain";  // "pretrain" | "sft"
    TrainSchedule sched;

    void validate() const;
};

struct TrainResult {
    long steps = 0;
    double final_loss = 0.0;
    std::vector<double> loss_history;
    std::string checkpoint_dir;
};

// Everything one run needs. Profiles fill in defaults; a JSON config file can
// override any subset of keys (unknown keys are rejected).
struct RunConfig {
    std::string profile = "toy";
    uint64_t seed = 1234;
    std::string out_dir = "runs/out";

    EncoderConfig encoder;
    std::string encoder_pretrained;  // optional weight-blob path loaded into the new vocabulary
    LegacyConfig legacy;
    DecoderConfig decoder;   // stage-1 tiny decoder
    DecoderConfig llm;       // stage-2 language model
    int dim_half = 64;       // per-vocabulary embedding width; llm dim = 2*dim_half

    TrainSchedule tiny_schedule;
    PhaseSchedule base_pretrain;
    PhaseSchedule base_sft;
    DatasetConfig dataset;

    void validate() const;

    static RunConfig profile_toy();
    static RunConfig profile_paper_shape();
    static RunConfig from_profile(const std::string& name);

    // parse JSON text over profile defaults; throws ConfigError on unknown
    // keys or invariant violations
    static RunConfig from_json_text(const std::string& text, const RunConfig& base);
    std::string to_json_text() const;
};

}  // namespace vary
