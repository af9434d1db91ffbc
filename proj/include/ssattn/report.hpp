#pragma once

#include <string>

#include "ssattn/config.hpp"
#include "ssattn/metrics.hpp"

namespace ssattn::report {

// {"count", "mean": {...}, "images": [{...}]}; see validate() for the schema.
config::Json to_json(const metrics::MetricReport& r);

// Throws ConfigError naming the first violation: missing or mistyped keys,
// count mismatch, ssim outside [-1,1], psnr above the cap, or means that do
// not match the per-image values.
void validate(const config::Json& j);

metrics::MetricReport from_json(const config::Json& j);

// name,psnr_db,ssim,baseline_psnr_db,baseline_ssim
void write_csv(const std::string& path, const metrics::MetricReport& r);

}  // namespace ssattn::report
