#pragma once

#include <json.hpp>
#include <string>

#include "ssattn/model.hpp"
#include "ssattn/raingen.hpp"

namespace ssattn::config {

using Json = nlohmann::ordered_json;

// Missing keys keep their defaults; unknown keys are a ConfigError.
Json to_json(const model::ModelConfig& cfg);
model::ModelConfig model_from_json(const Json& j);

Json to_json(const model::TrainConfig& cfg);
model::TrainConfig train_from_json(const Json& j);

Json to_json(const raingen::GenConfig& cfg);
raingen::GenConfig gen_from_json(const Json& j);

// Ablation switch names: no-ud, no-rs, lr-no-ud, lr-no-rs.
void apply_ablation(attention::Ablation& a, const std::string& name);
std::string ablation_name(const attention::Ablation& a);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace ssattn::config
