#pragma once

#include <map>
#include <string>
#include <vector>

#include "vary/graph.hpp"

namespace vary {

// Weight blob: "VARYWB01" magic, then a flat list of
// (name, shape, little-endian float32 data) entries.
//
// Saving also snaps the in-memory doubles to the stored float32 values so a
// save/load round trip reproduces inference outputs bit-exactly.
void save_params_to_blob(const std::string& path, const std::vector<Parameter*>& params);
void load_params_from_blob(const std::string& path, std::vector<Parameter*> params);

struct CheckpointMeta {
    std::string kind;   // "vary_tiny" | "vary_base"
    std::string phase;  // "", "pretrain", "sft"
    long step = 0;
    uint64_t seed = 0;
    std::vector<double> loss_tail;
    std::map<std::string, std::string> extra;  // schedule summary etc.

    void save(const std::string& path) const;
    static CheckpointMeta load(const std::string& path);
};

// Directory helpers shared by the model-level save/load functions.
void ensure_dir(const std::string& dir);
bool file_exists(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vary
