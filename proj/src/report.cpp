#include "ssattn/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ssattn/errors.hpp"

namespace ssattn::report {

namespace {

constexpr const char* kScoreKeys[] = {"psnr_db", "ssim", "baseline_psnr_db", "baseline_ssim"};

double number(const config::Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(where + "." + key + ": not finite");
  return d;
}

void check_score(const config::Json& obj, const std::string& where) {
  for (const char* k : kScoreKeys) {
    const double v = number(obj, k, where);
    const bool is_ssim = std::string(k).find("ssim") != std::string::npos;
    if (is_ssim && (v < -1.0 || v > 1.0)) throw ConfigError(where + "." + k + ": outside [-1, 1]");
    if (!is_ssim && v > 100.0) throw ConfigError(where + "." + k + ": above the 100 dB cap");
  }
}

}  // namespace

config::Json to_json(const metrics::MetricReport& r) {
  config::Json images = config::Json::array();
  for (const auto& s : r.images) {
    images.push_back({{"name", s.name},
                      {"psnr_db", s.psnr_db},
                      {"ssim", s.ssim},
                      {"baseline_psnr_db", s.baseline_psnr_db},
                      {"baseline_ssim", s.baseline_ssim}});
  }
  return config::Json{{"count", r.images.size()},
                      {"mean",
                       {{"psnr_db", r.mean_psnr_db},
                        {"ssim", r.mean_ssim},
                        {"baseline_psnr_db", r.mean_baseline_psnr_db},
                        {"baseline_ssim", r.mean_baseline_ssim},
                        {"delta_psnr_db", r.mean_psnr_db - r.mean_baseline_psnr_db}}},
                      {"images", images}};
}

void validate(const config::Json& j) {
  if (!j.is_object()) throw ConfigError("report: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "count" && k != "mean" && k != "images") throw ConfigError("report: unknown key '" + k + "'");
  }
  if (!j.contains("count") || !j.at("count").is_number_unsigned()) {
    throw ConfigError("report.count: expected a non-negative integer");
  }
  if (!j.contains("images") || !j.at("images").is_array()) throw ConfigError("report.images: expected an array");
  const auto& images = j.at("images");
  if (images.size() != j.at("count").get<std::size_t>()) throw ConfigError("report.count: does not match images");
  if (!j.contains("mean")) throw ConfigError("report: missing 'mean'");
  const auto& mean = j.at("mean");
  check_score(mean, "report.mean");
  const double delta = number(mean, "delta_psnr_db", "report.mean");

  double sums[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "report.images[" + std::to_string(i) + "]";
    const auto& im = images[i];
    if (!im.is_object() || !im.contains("name") || !im.at("name").is_string()) {
      throw ConfigError(where + ".name: expected a string");
    }
    check_score(im, where);
    for (int k = 0; k < 4; ++k) sums[k] += im.at(kScoreKeys[k]).get<double>();
  }
  if (!images.empty()) {
    const double n = static_cast<double>(images.size());
    for (int k = 0; k < 4; ++k) {
      const double m = mean.at(kScoreKeys[k]).get<double>();
      if (std::abs(m - sums[k] / n) > 1e-9 * std::max(1.0, std::abs(m))) {
        throw ConfigError(std::string("report.mean.") + kScoreKeys[k] + ": does not match the per-image values");
      }
    }
  }
  const double expect = mean.at("psnr_db").get<double>() - mean.at("baseline_psnr_db").get<double>();
  if (std::abs(delta - expect) > 1e-9) throw ConfigError("report.mean.delta_psnr_db: inconsistent");
}

metrics::MetricReport from_json(const config::Json& j) {
  validate(j);
  metrics::MetricReport r;
  for (const auto& im : j.at("images")) {
    r.images.push_back({im.at("name").get<std::string>(), im.at("psnr_db").get<double>(), im.at("ssim").get<double>(),
                        im.at("baseline_psnr_db").get<double>(), im.at("baseline_ssim").get<double>()});
  }
  const auto& m = j.at("mean");
  r.mean_psnr_db = m.at("psnr_db").get<double>();
  r.mean_ssim = m.at("ssim").get<double>();
  r.mean_baseline_psnr_db = m.at("baseline_psnr_db").get<double>();
  r.mean_baseline_ssim = m.at("baseline_ssim").get<double>();
  return r;
}

void write_csv(const std::string& path, const metrics::MetricReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "name,psnr_db,ssim,baseline_psnr_db,baseline_ssim\n";
  char buf[160];
  for (const auto& s : r.images) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g,%.10g\n", s.psnr_db, s.ssim, s.baseline_psnr_db, s.baseline_ssim);
    out << s.name << buf;
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ssattn::report
