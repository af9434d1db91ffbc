#include "ssattn/config.hpp"

#include <fstream>
#include <set>

#include "ssattn/errors.hpp"

namespace ssattn::config {

namespace {

// Reads keys out of an object, remembering which ones were consumed.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void range(const char* key, raingen::Range& r) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(where_ + "." + key + ": expected [lo, hi]");
    }
    r = {v[0].get<double>(), v[1].get<double>()};
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json range_json(const raingen::Range& r) { return Json::array({r.lo, r.hi}); }

}  // namespace

void apply_ablation(attention::Ablation& a, const std::string& name) {
  if (name == "none") {
    a = {};
  } else if (name == "no-ud") {
    a.ssa_no_ud = true;
  } else if (name == "no-rs") {
    a.ssa_no_rs = true;
  } else if (name == "lr-no-ud") {
    a.lr_no_ud = true;
  } else if (name == "lr-no-rs") {
    a.lr_no_rs = true;
  } else {
    throw ConfigError("unknown ablation '" + name + "' (expected no-ud|no-rs|lr-no-ud|lr-no-rs|none)");
  }
}

std::string ablation_name(const attention::Ablation& a) {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += n;
  };
  add(a.ssa_no_ud, "no-ud");
  add(a.ssa_no_rs, "no-rs");
  add(a.lr_no_ud, "lr-no-ud");
  add(a.lr_no_rs, "lr-no-rs");
  return out.empty() ? "none" : out;
}

Json to_json(const model::ModelConfig& c) {
  Json abl = Json::array();
  if (c.ablation.any()) {
    std::string names = ablation_name(c.ablation);
    std::size_t start = 0;
    while (start <= names.size()) {
      const auto end = names.find(',', start);
      abl.push_back(names.substr(start, end == std::string::npos ? std::string::npos : end - start));
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  return Json{{"levels", c.levels},
              {"channels", c.channels},
              {"irm_blocks", c.irm_blocks},
              {"heads", c.heads},
              {"latent_blocks", c.latent_blocks},
              {"latent_heads", c.latent_heads},
              {"window_side", c.window_side},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"alpha", c.alpha},
              {"k", c.k_fraction},
              {"attn", attention::to_string(c.global_kind)},
              {"ablate", abl}};
}

model::ModelConfig model_from_json(const Json& j) {
  model::ModelConfig c;
  Reader r(j, "model");
  r.get("levels", c.levels);
  r.get("channels", c.channels);
  r.get("irm_blocks", c.irm_blocks);
  r.get("heads", c.heads);
  r.get("latent_blocks", c.latent_blocks);
  r.get("latent_heads", c.latent_heads);
  r.get("window_side", c.window_side);
  r.get("beta", c.beta);
  r.get("gamma", c.gamma);
  r.get("alpha", c.alpha);
  r.get("k", c.k_fraction);
  std::string attn = attention::to_string(c.global_kind);
  r.get("attn", attn);
  c.global_kind = attention::parse_global_kind(attn);
  std::vector<std::string> abl;
  r.get("ablate", abl);
  for (const auto& a : abl) apply_ablation(c.ablation, a);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const model::TrainConfig& c) {
  return Json{{"base_lr", c.base_lr},       {"peak_lr", c.peak_lr},
              {"beta1", c.beta1},           {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},     {"cycle_period", c.cycle_period},
              {"crop", c.crop},             {"batch_size", c.batch_size},
              {"steps", c.steps},           {"augment", c.augment},
              {"lambda_psnr", c.lambda_psnr}, {"lambda_edge", c.lambda_edge},
              {"lambda_udl", c.lambda_udl}, {"checkpoint_every", c.checkpoint_every}};
}

model::TrainConfig train_from_json(const Json& j) {
  model::TrainConfig c;
  Reader r(j, "train");
  r.get("base_lr", c.base_lr);
  r.get("peak_lr", c.peak_lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("cycle_period", c.cycle_period);
  r.get("crop", c.crop);
  r.get("batch_size", c.batch_size);
  r.get("steps", c.steps);
  r.get("augment", c.augment);
  r.get("lambda_psnr", c.lambda_psnr);
  r.get("lambda_edge", c.lambda_edge);
  r.get("lambda_udl", c.lambda_udl);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const raingen::GenConfig& c) {
  return Json{{"mode", raingen::to_string(c.mode)},
              {"height", c.height},
              {"width", c.width},
              {"shape_count", range_json(c.shape_count)},
              {"noise_amplitude", c.noise_amplitude},
              {"streak_count", range_json(c.streak_count)},
              {"angle_deg", range_json(c.angle_deg)},
              {"angle_jitter_deg", c.angle_jitter_deg},
              {"streak_length", range_json(c.streak_length)},
              {"streak_width", c.streak_width},
              {"streak_intensity", range_json(c.streak_intensity)},
              {"streak_blur", c.streak_blur},
              {"drop_count", range_json(c.drop_count)},
              {"drop_radius", range_json(c.drop_radius)},
              {"drop_blur", c.drop_blur},
              {"eta", range_json(c.eta)},
              {"seed", c.seed}};
}

raingen::GenConfig gen_from_json(const Json& j) {
  raingen::GenConfig c;
  Reader r(j, "gen");
  std::string mode = raingen::to_string(c.mode);
  r.get("mode", mode);
  c.mode = raingen::parse_mode(mode);
  r.get("height", c.height);
  r.get("width", c.width);
  r.range("shape_count", c.shape_count);
  r.get("noise_amplitude", c.noise_amplitude);
  r.range("streak_count", c.streak_count);
  r.range("angle_deg", c.angle_deg);
  r.get("angle_jitter_deg", c.angle_jitter_deg);
  r.range("streak_length", c.streak_length);
  r.get("streak_width", c.streak_width);
  r.range("streak_intensity", c.streak_intensity);
  r.get("streak_blur", c.streak_blur);
  r.range("drop_count", c.drop_count);
  r.range("drop_radius", c.drop_radius);
  r.get("drop_blur", c.drop_blur);
  r.range("eta", c.eta);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ssattn::config
