#pragma once

#include "tlv/alignment.hpp"
#include "tlv/encoders.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace tlv {

struct DataConfig {
    std::filesystem::path path;
    std::filesystem::path grasp_path;
    std::string probe_split = "train";
    std::string eval_split = "test";
};

// Everything a run needs. On disk this is TOML with flat [data], [model]
// and [train] tables; unknown keys are rejected.
struct RunConfig {
    DataConfig data;
    EncoderConfig model;
    LoRAConfig lora;
    TrainConfig train;

    void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);

} // namespace tlv
