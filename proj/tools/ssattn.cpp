#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ssattn/checkpoint.hpp"
#include "ssattn/config.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/gradcheck.hpp"
#include "ssattn/image_io.hpp"
#include "ssattn/metrics.hpp"
#include "ssattn/raingen.hpp"
#include "ssattn/report.hpp"
#include "ssattn/training.hpp"
#include "ssattn/visualize.hpp"

namespace fs = std::filesystem;
using namespace ssattn;
using config::Json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Values given on the command line; unset ones leave the config alone.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;  // key.path=value
  std::vector<std::pair<std::string, Json>> flags;

  template <typename T>
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    auto* opt = app->add_option(name, *holder, help);
    pending_.push_back([this, opt, holder, key] {
      if (opt->count() > 0) flags.emplace_back(key, Json(*holder));
    });
  }

  void collect() {
    for (auto& p : pending_) p();
  }

 private:
  std::vector<std::function<void()>> pending_;
};

void set_path(Json& root, const std::string& path, Json value) {
  Json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("bad override key '" + path + "'");
    if (!node->is_object() || !node->contains(key)) throw ConfigError("unknown config key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

Json parse_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return Json(text);
  }
}

// defaults <- config file <- flags. Sections (objects) merge key by key;
// unknown top-level keys are rejected.
Json resolve(const std::string& command, Json defaults, const Overrides& ov) {
  bool seed_in_file = false;
  if (!ov.config_path.empty()) {
    const Json file = config::read_json_file(ov.config_path);
    if (!file.is_object()) throw ConfigError(ov.config_path + ": expected a JSON object");
    for (const auto& [k, v] : file.items()) {
      if (k == "command") {
        if (v != command) throw ConfigError(ov.config_path + ": config is for '" + v.dump() + "', not '" + command + "'");
        continue;
      }
      if (!defaults.contains(k)) throw ConfigError(ov.config_path + ": unknown key '" + k + "'");
      if (k == "seed") seed_in_file = true;
      if (defaults[k].is_object() && v.is_object()) {
        for (const auto& [sk, sv] : v.items()) defaults[k][sk] = sv;
      } else {
        defaults[k] = v;
      }
    }
  }
  for (const auto& [key, value] : ov.flags) set_path(defaults, key, value);
  for (const auto& s : ov.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_path(defaults, s.substr(0, eq), parse_value(s.substr(eq + 1)));
  }
  if (!ov.out.empty()) defaults["out"] = ov.out;

  if (ov.seed) {
    defaults["seed"] = *ov.seed;
  } else if (!seed_in_file) {
    std::uint64_t seed = 0;
    if (const char* env = std::getenv("SSATTN_SEED"); env && *env) {
      char* end = nullptr;
      seed = std::strtoull(env, &end, 10);
      if (*end != '\0') throw ConfigError(std::string("SSATTN_SEED is not an integer: ") + env);
    }
    defaults["seed"] = seed;
  }
  if (!defaults["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
  Json out{{"command", command}};
  for (auto& [k, v] : defaults.items()) out[k] = v;
  return out;
}

std::string require_string(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw ConfigError(std::string("'") + key + "' is required");
  }
  return j.at(key).get<std::string>();
}

void prepare_out(const std::string& out, const Json& resolved) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out);
  config::write_json_file((fs::path(out) / "resolved_config.json").string(), resolved);
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(Json r) {
  auto gen = config::gen_from_json(r.at("gen"));
  gen.seed = r.at("seed").get<std::uint64_t>();
  r["gen"] = config::to_json(gen);
  const auto count = r.at("count").get<std::size_t>();
  const std::string out = require_string(r, "out");
  prepare_out(out, r);

  const fs::path dir = fs::path(out) / raingen::to_string(gen.mode);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());

  const int digits = std::max<int>(4, static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size()));
  Json samples = Json::array();
  for (std::size_t i = 0; i < count; ++i) {
    auto scene = raingen::generate(gen, i);
    std::string name = std::to_string(i);
    name.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(name.size()))), '0');
    io::write_png((dir / (name + "_clean.png")).string(), scene.background);
    io::write_png((dir / (name + "_rain.png")).string(), scene.degraded);
    const auto& m = scene.drop_mask.data();
    const auto& s = scene.streaks.data();
    double mask_pixels = 0.0, streak = 0.0;
    for (double v : m) mask_pixels += v;
    for (double v : s) streak += v;
    std::vector<double> clamped(scene.degraded.data().begin(), scene.degraded.data().end());
    for (auto& v : clamped) v = std::clamp(v, 0.0, 1.0);
    const double p = metrics::psnr(Tensor(scene.degraded.shape(), clamped), scene.background);
    samples.push_back({{"name", name},
                       {"index", i},
                       {"seed", gen.seed},
                       {"stream", i},
                       {"eta", scene.eta},
                       {"mask_pixels", static_cast<std::uint64_t>(mask_pixels)},
                       {"streak_mean", streak / static_cast<double>(s.size())},
                       {"psnr_db", p}});
  }
  Json manifest{{"mode", raingen::to_string(gen.mode)}, {"count", count}, {"gen", r["gen"]}, {"samples", samples}};
  config::write_json_file((dir / "manifest.json").string(), manifest);
  std::printf("wrote %zu pairs to %s\n", count, dir.string().c_str());
  return 0;
}

// ------------------------------------------------------------------- train

struct SweepSpec {
  std::string param;
  std::vector<double> values;
};

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  SweepSpec s;
  if (eq == std::string::npos) throw ConfigError("--sweep expects param=lo:hi:n, got '" + text + "'");
  s.param = text.substr(0, eq);
  if (s.param != "beta" && s.param != "gamma" && s.param != "alpha" && s.param != "k") {
    throw ConfigError("--sweep parameter must be beta|gamma|alpha|k, got '" + s.param + "'");
  }
  double lo = 0, hi = 0;
  int n = 0;
  char tail = 0;
  if (std::sscanf(text.c_str() + eq + 1, "%lf:%lf:%d%c", &lo, &hi, &n, &tail) != 3 || n < 1) {
    throw ConfigError("--sweep expects param=lo:hi:n with n >= 1, got '" + text + "'");
  }
  for (int i = 0; i < n; ++i) s.values.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return s;
}

void write_report(const std::string& out, const metrics::MetricReport& rep) {
  const Json j = report::to_json(rep);
  report::validate(j);
  config::write_json_file((fs::path(out) / "report.json").string(), j);
  report::write_csv((fs::path(out) / "per_image.csv").string(), rep);
}

void print_report(const metrics::MetricReport& rep) {
  std::printf("psnr %.3f dB (input %.3f dB, delta %+.3f)  ssim %.4f (input %.4f)\n", rep.mean_psnr_db,
              rep.mean_baseline_psnr_db, rep.mean_psnr_db - rep.mean_baseline_psnr_db, rep.mean_ssim,
              rep.mean_baseline_ssim);
}

std::optional<metrics::MetricReport> train_one(const Json& r, const std::vector<training::Sample>& data,
                                               const std::vector<training::Sample>& test) {
  const auto mcfg = config::model_from_json(r.at("model"));
  const auto tcfg = config::train_from_json(r.at("train"));
  const auto seed = r.at("seed").get<std::uint64_t>();
  const std::string out = r.at("out").get<std::string>();

  model::Model net(mcfg, seed);
  training::TrainOptions opts;
  opts.seed = seed;
  opts.out_dir = out;
  const std::size_t every = std::max<std::size_t>(1, tcfg.steps / 20);
  const auto t0 = std::chrono::steady_clock::now();
  opts.progress = [&](std::size_t step, const model::StepStats& s) {
    if (step % every != 0 && step + 1 != tcfg.steps) return;
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("step %zu/%zu  loss %.4f  psnr %.3f  edge %.4f  udl %.4f  lr %.3g  %.0fs\n", step + 1, tcfg.steps,
                s.total, s.psnr, s.edge, s.udl, s.lr, dt);
    std::fflush(stdout);
  };
  training::train(net, data, tcfg, opts);
  if (test.empty()) return std::nullopt;
  auto rep = training::evaluate(net, test);
  write_report(out, rep);
  print_report(rep);
  return rep;
}

int cmd_train(Json r) {
  r["model"] = config::to_json(config::model_from_json(r.at("model")));
  r["train"] = config::to_json(config::train_from_json(r.at("train")));
  const std::string out = require_string(r, "out");
  const std::string data_dir = require_string(r, "data");
  const std::string test_dir = r.at("test").get<std::string>();
  const std::string sweep = r.at("sweep").get<std::string>();
  std::optional<SweepSpec> spec;
  if (!sweep.empty()) spec = parse_sweep(sweep);
  prepare_out(out, r);

  const auto data = training::load_pairs(data_dir);
  const auto test = test_dir.empty() ? std::vector<training::Sample>{} : training::load_pairs(test_dir);
  if (!spec) {
    train_one(r, data, test);
    return 0;
  }

  std::ofstream csv(fs::path(out) / "sweep.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write sweep.csv in " + out);
  csv << "param,value,mean_psnr_db,mean_ssim,delta_psnr_db\n";
  for (double v : spec->values) {
    Json sub = r;
    sub["sweep"] = "";
    sub["model"][spec->param] = v;
    const std::string dir = (fs::path(out) / (spec->param + "=" + fmt("%g", v))).string();
    sub["out"] = dir;
    sub["model"] = config::to_json(config::model_from_json(sub["model"]));
    prepare_out(dir, sub);
    std::printf("-- %s = %g\n", spec->param.c_str(), v);
    const auto rep = train_one(sub, data, test);
    csv << spec->param << "," << fmt("%.10g", v);
    if (rep) {
      csv << "," << fmt("%.10g", rep->mean_psnr_db) << "," << fmt("%.10g", rep->mean_ssim) << ","
          << fmt("%.10g", rep->mean_psnr_db - rep->mean_baseline_psnr_db);
    } else {
      csv << ",,,";
    }
    csv << "\n";
  }
  return 0;
}

// -------------------------------------------------------------------- eval

int cmd_eval(const Json& r) {
  const std::string out = require_string(r, "out");
  const std::string ckpt = require_string(r, "checkpoint");
  const std::string data_dir = require_string(r, "data");
  if (!fs::is_regular_file(ckpt)) throw IoError("checkpoint not found: " + ckpt);
  prepare_out(out, r);
  const auto net = checkpoint::load(ckpt);
  const auto rep = training::evaluate(net, training::load_pairs(data_dir));
  write_report(out, rep);
  print_report(rep);
  return 0;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(const Json& r, bool inject_fault) {
  auto cases = default_gradcheck_suite();
  if (inject_fault) cases.push_back(faulty_gradcheck_case());
  const std::string op = r.at("op").get<std::string>();
  if (!op.empty() && std::none_of(cases.begin(), cases.end(), [&](const auto& c) { return c.name == op; })) {
    std::string names;
    for (const auto& c : cases) names += (names.empty() ? "" : " ") + c.name;
    throw ConfigError("unknown op '" + op + "'; available: " + names);
  }
  const auto seeds = r.at("seeds").get<unsigned>();
  const double tol = r.at("tolerance").get<double>();
  if (seeds == 0) throw ConfigError("seeds must be at least 1");
  const std::string out = r.at("out").get<std::string>();
  if (!out.empty()) prepare_out(out, r);

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_gradcheck_suite(cases, op, seeds, tol);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = true;
  std::printf("%-20s %14s  %s\n", "op", "max_rel_error", "result");
  std::string csv = "op,max_rel_error,passed\n";
  for (const auto& row : rows) {
    std::printf("%-20s %14.3e  %s\n", row.name.c_str(), row.max_rel_error, row.passed ? "pass" : "FAIL");
    csv += row.name + "," + fmt("%.6e", row.max_rel_error) + "," + (row.passed ? "1" : "0") + "\n";
    ok = ok && row.passed;
  }
  std::printf("%zu ops, %u seeds, tolerance %.1e, %.2fs: %s\n", rows.size(), seeds, tol, dt, ok ? "ok" : "FAILED");
  if (!out.empty()) {
    std::ofstream f(fs::path(out) / "gradcheck.csv", std::ios::binary);
    f << csv;
    if (!f) throw IoError("cannot write gradcheck.csv in " + out);
  }
  return ok ? 0 : 1;
}

// --------------------------------------------------------------- visualize

int cmd_visualize(const Json& r) {
  const std::string out = require_string(r, "out");
  const std::string ckpt = require_string(r, "checkpoint");
  const std::string input_path = require_string(r, "input");
  if (!fs::is_regular_file(ckpt)) throw IoError("checkpoint not found: " + ckpt);
  const auto level = r.at("level").get<std::size_t>();
  const auto block = r.at("block").get<std::size_t>();
  const auto window = r.at("window").get<std::size_t>();
  const auto factor = r.at("factor").get<std::size_t>();
  if (factor < 1 || factor > 16) throw ConfigError("factor must be in [1, 16]");

  const auto net = checkpoint::load(ckpt);
  if (level >= net.config().levels) {
    throw ConfigError("level " + std::to_string(level) + " out of range: model has " +
                      std::to_string(net.config().levels) + " levels");
  }
  const auto input = io::read_png(input_path);
  std::vector<model::StageTrace> trace;
  const auto result = net.forward(input, &trace);
  const auto stage = std::find_if(trace.begin(), trace.end(), [&](const auto& s) { return s.level == level; });
  const auto ov = visualize::sampling_overlay(input, *stage, block, window, net.config().window_side, factor);
  prepare_out(out, r);

  const fs::path dir(out);
  io::write_png((dir / "sampling.png").string(), ov.image);
  Json heads = Json::array();
  for (const auto& pts : ov.points) {
    Json h = Json::array();
    for (const auto& p : pts) h.push_back({p[0], p[1]});
    heads.push_back(h);
  }
  config::write_json_file((dir / "sampling.json").string(),
                          {{"level", ov.level},
                           {"block", block},
                           {"window", ov.window},
                           {"window_box", {ov.x0, ov.y0, ov.x1, ov.y1}},
                           {"heads", heads}});
  for (const auto& s : trace) {
    if (s.log_sigma.empty()) continue;
    io::write_png((dir / ("sigma_level" + std::to_string(s.level) + ".png")).string(),
                  visualize::sigma_heatmap(s.log_sigma.back()));
  }
  std::vector<double> img(result.final.data().begin(), result.final.data().end());
  for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  io::write_png((dir / "derained.png").string(), Tensor(result.final.shape(), std::move(img)));
  std::printf("wrote visualizations to %s\n", out.c_str());
  return 0;
}

void add_common(CLI::App* app, Overrides& ov) {
  app->add_option("--config", ov.config_path, "JSON config; flags override it")->check(CLI::ExistingFile);
  app->add_option_function<std::uint64_t>("--seed", [&ov](const std::uint64_t& s) { ov.seed = s; },
                                          "Seed (default: config, then SSATTN_SEED, then 0)");
  app->add_option("--out", ov.out, "Output directory");
  app->add_option("--set", ov.sets, "Override any config key: section.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssattn: uncertainty-driven sparse attention deraining at toy scale"};
  app.require_subcommand(1);

  Overrides gen_ov, train_ov, eval_ov, gc_ov, vis_ov;

  auto* gen = app.add_subcommand("gen-data", "Generate paired clean/rainy PNGs and a manifest");
  add_common(gen, gen_ov);
  gen_ov.flag<std::string>(gen, "--mode", "gen.mode", "rs | rd | rds");
  gen_ov.flag<std::size_t>(gen, "--count", "count", "Number of pairs");
  gen_ov.flag<std::size_t>(gen, "--height", "gen.height", "Image height");
  gen_ov.flag<std::size_t>(gen, "--width", "gen.width", "Image width");
  std::optional<std::size_t> size;
  gen->add_option_function<std::size_t>("--size", [&size](const std::size_t& s) { size = s; }, "Square image side");

  auto* train = app.add_subcommand("train", "Train a model; writes train_log.csv and checkpoint.bin");
  add_common(train, train_ov);
  train_ov.flag<std::string>(train, "--data", "data", "Training set directory");
  train_ov.flag<std::string>(train, "--test", "test", "Optional test set, evaluated after training");
  train_ov.flag<std::size_t>(train, "--steps", "train.steps", "Optimizer steps");
  train_ov.flag<std::size_t>(train, "--batch-size", "train.batch_size", "Crops per step");
  train_ov.flag<std::size_t>(train, "--crop", "train.crop", "Crop side");
  train_ov.flag<double>(train, "--lr", "train.base_lr", "Base learning rate");
  train_ov.flag<double>(train, "--peak-lr", "train.peak_lr", "Peak learning rate of the cycle");
  train_ov.flag<std::size_t>(train, "--checkpoint-every", "train.checkpoint_every", "Checkpoint interval");
  train_ov.flag<std::vector<std::string>>(train, "--ablate", "model.ablate", "no-ud | no-rs | lr-no-ud | lr-no-rs");
  train_ov.flag<std::string>(train, "--attn", "model.attn", "Global attention: ssa | wsa | csa | sa");
  train_ov.flag<double>(train, "--beta", "model.beta", "Constraint value for uncertain channels");
  train_ov.flag<double>(train, "--gamma", "model.gamma", "Uncertainty quantile");
  train_ov.flag<double>(train, "--alpha", "model.alpha", "Modulation strength");
  train_ov.flag<double>(train, "--k", "model.k", "Top-k fraction");
  train_ov.flag<std::string>(train, "--sweep", "sweep", "Grid over beta|gamma|alpha|k, e.g. beta=0.2:1.0:5");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a test set (Y-channel PSNR/SSIM)");
  add_common(eval, eval_ov);
  eval_ov.flag<std::string>(eval, "--checkpoint", "checkpoint", "checkpoint.bin");
  eval_ov.flag<std::string>(eval, "--data", "data", "Test set directory");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  add_common(gc, gc_ov);
  gc_ov.flag<std::string>(gc, "--op", "op", "Check only this op");
  gc_ov.flag<unsigned>(gc, "--seeds", "seeds", "Random instances per op");
  gc_ov.flag<double>(gc, "--tolerance", "tolerance", "Max relative error");
  bool inject_fault = false;
  gc->add_flag("--inject-fault", inject_fault)->group("");

  auto* vis = app.add_subcommand("visualize", "Sampling overlay, uncertainty heatmaps and derained output");
  add_common(vis, vis_ov);
  vis_ov.flag<std::string>(vis, "--checkpoint", "checkpoint", "checkpoint.bin");
  vis_ov.flag<std::string>(vis, "--input", "input", "Input PNG");
  vis_ov.flag<std::size_t>(vis, "--level", "level", "Decoder level to overlay (0 = full resolution)");
  vis_ov.flag<std::size_t>(vis, "--block", "block", "Block index within the stage (must be SSA)");
  vis_ov.flag<std::size_t>(vis, "--window", "window", "Window index, row-major");
  vis_ov.flag<std::size_t>(vis, "--factor", "factor", "Upscaling of the overlay image");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      gen_ov.collect();
      if (size) {
        gen_ov.flags.emplace_back("gen.height", *size);
        gen_ov.flags.emplace_back("gen.width", *size);
      }
      Json d{{"seed", 0}, {"out", ""}, {"count", 100}, {"gen", config::to_json(raingen::GenConfig{})}};
      return cmd_gen_data(resolve("gen-data", d, gen_ov));
    }
    if (train->parsed()) {
      train_ov.collect();
      Json d{{"seed", 0},
             {"out", ""},
             {"data", ""},
             {"test", ""},
             {"sweep", ""},
             {"model", config::to_json(model::ModelConfig{})},
             {"train", config::to_json(model::TrainConfig{})}};
      return cmd_train(resolve("train", d, train_ov));
    }
    if (eval->parsed()) {
      eval_ov.collect();
      Json d{{"seed", 0}, {"out", ""}, {"checkpoint", ""}, {"data", ""}};
      return cmd_eval(resolve("eval", d, eval_ov));
    }
    if (gc->parsed()) {
      gc_ov.collect();
      Json d{{"seed", 0}, {"out", ""}, {"op", ""}, {"seeds", 10}, {"tolerance", 1e-4}};
      return cmd_gradcheck(resolve("gradcheck", d, gc_ov), inject_fault);
    }
    if (vis->parsed()) {
      vis_ov.collect();
      Json d{{"seed", 0}, {"out", ""},   {"checkpoint", ""}, {"input", ""},
             {"level", 0}, {"block", 0}, {"window", 0},      {"factor", 4}};
      return cmd_visualize(resolve("visualize", d, vis_ov));
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 5;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  return 0;
}
