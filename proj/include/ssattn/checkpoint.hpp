#pragma once

#include <string>

#include "ssattn/model.hpp"

namespace ssattn::checkpoint {

inline constexpr char kMagic[8] = {'S', 'S', 'A', 'T', 'T', 'N', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

// Layout (little-endian) is described in docs/checkpoint_format.md.
void save(const std::string& path, const model::Model& model);
model::Model load(const std::string& path);

}  // namespace ssattn::checkpoint
