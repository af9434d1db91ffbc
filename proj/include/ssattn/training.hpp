#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssattn/metrics.hpp"
#include "ssattn/model.hpp"
#include "ssattn/rng.hpp"

namespace ssattn::training {

struct Sample {
  std::string name;  // "<index>" as in the file names
  Tensor rain;
  Tensor clean;
};

// Loads every <index>_rain.png / <index>_clean.png pair of a directory, in
// name order. A dataset root holding exactly one mode directory also works.
std::vector<Sample> load_pairs(const std::string& dir);

// Random crop, horizontal flip and quarter-turn rotation, applied identically
// to both images. `crop` larger than the image keeps the full extent.
std::pair<Tensor, Tensor> augment_pair(const Tensor& rain, const Tensor& clean, std::size_t crop, bool augment,
                                       Rng& rng);

struct TrainOptions {
  std::uint64_t seed = 0;
  std::string out_dir;  // CSV log and checkpoints; empty disables file output
  std::function<void(std::size_t step, const model::StepStats&)> progress;
};

struct TrainResult {
  std::vector<model::StepStats> log;
};

// Writes <out>/train_log.csv and <out>/checkpoint.bin (every
// checkpoint_every steps and at the end). On a non-finite loss writes
// <out>/diagnostics.txt and rethrows.
TrainResult train(const model::Model& model, const std::vector<Sample>& data, const model::TrainConfig& tcfg,
                  const TrainOptions& opts);

metrics::MetricReport evaluate(const model::Model& model, const std::vector<Sample>& data);

}  // namespace ssattn::training
