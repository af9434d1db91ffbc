#include "ssattn/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "ssattn/checkpoint.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/image_io.hpp"
#include "ssattn/ops.hpp"

namespace ssattn::training {

namespace fs = std::filesystem;

std::vector<Sample> load_pairs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir);
  auto scan = [](const fs::path& d) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(d)) {
      const std::string f = e.path().filename().string();
      const std::string suffix = "_rain.png";
      if (f.size() > suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0) {
        names.push_back(f.substr(0, f.size() - suffix.size()));
      }
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  fs::path root(dir);
  auto names = scan(root);
  if (names.empty()) {
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) subdirs.push_back(e.path());
    }
    if (subdirs.size() == 1) {
      root = subdirs.front();
      names = scan(root);
    }
  }
  if (names.empty()) throw IoError("no *_rain.png images in " + dir);
  std::vector<Sample> out;
  for (const auto& n : names) {
    auto rain = io::read_png((root / (n + "_rain.png")).string());
    auto clean = io::read_png((root / (n + "_clean.png")).string());
    if (rain.shape() != clean.shape()) throw IoError("size mismatch between rain and clean image " + n);
    out.push_back({n, std::move(rain), std::move(clean)});
  }
  return out;
}

std::pair<Tensor, Tensor> augment_pair(const Tensor& rain, const Tensor& clean, std::size_t crop_size, bool augment,
                                       Rng& rng) {
  const std::size_t h = rain.dim(1), w = rain.dim(2);
  const std::size_t ch = std::min(crop_size, h), cw = std::min(crop_size, w);
  const auto y0 = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(h - ch)));
  const auto x0 = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(w - cw)));
  Tensor r = (ch == h && cw == w) ? rain : crop(rain, y0, x0, ch, cw);
  Tensor c = (ch == h && cw == w) ? clean : crop(clean, y0, x0, ch, cw);
  if (augment) {
    if (rng.uniform() < 0.5) {
      r = flip_horizontal(r);
      c = flip_horizontal(c);
    }
    const int turns = static_cast<int>(rng.integer(0, 3));
    if (turns != 0) {
      r = rot90(r, turns);
      c = rot90(c, turns);
    }
  }
  return {r, c};
}

namespace {

void write_diagnostics(const std::string& out_dir, std::size_t step, const std::string& what) {
  if (out_dir.empty()) return;
  std::ofstream d(fs::path(out_dir) / "diagnostics.txt");
  d << "step " << step << ": " << what << "\n";
}

}  // namespace

TrainResult train(const model::Model& model, const std::vector<Sample>& data, const model::TrainConfig& tcfg,
                  const TrainOptions& opts) {
  tcfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  const bool files = !opts.out_dir.empty();
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> csv(nullptr, &std::fclose);
  if (files) {
    fs::create_directories(opts.out_dir);
    csv.reset(std::fopen((fs::path(opts.out_dir) / "train_log.csv").string().c_str(), "wb"));
    if (!csv) throw IoError("cannot write training log in " + opts.out_dir);
    std::fprintf(csv.get(), "step,lr,total_loss,psnr_term,edge_term,udl_term\n");
  }
  const std::string ckpt = files ? (fs::path(opts.out_dir) / "checkpoint.bin").string() : "";
  model::Adam opt(model.parameters(), tcfg.beta1, tcfg.beta2, tcfg.adam_eps);
  Rng rng(opts.seed, 0x7261696eULL);
  TrainResult result;
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    model::Batch batch;
    for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
      const auto& s = data[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(data.size()) - 1))];
      auto [r, c] = augment_pair(s.rain, s.clean, tcfg.crop, tcfg.augment, rng);
      batch.inputs.push_back(r);
      batch.targets.push_back(c);
    }
    model::StepStats stats;
    try {
      stats = model::train_step(model, batch, opt, tcfg, step);
    } catch (const DomainError& e) {
      write_diagnostics(opts.out_dir, step, e.what());
      throw;
    }
    result.log.push_back(stats);
    if (csv) {
      std::fprintf(csv.get(), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", step, stats.lr, stats.total, stats.psnr,
                   stats.edge, stats.udl);
    }
    if (opts.progress) opts.progress(step, stats);
    if (files && tcfg.checkpoint_every > 0 && (step + 1) % tcfg.checkpoint_every == 0) checkpoint::save(ckpt, model);
  }
  if (files) checkpoint::save(ckpt, model);
  return result;
}

metrics::MetricReport evaluate(const model::Model& model, const std::vector<Sample>& data) {
  metrics::MetricReport report;
  for (const auto& s : data) {
    const auto restored = model::restore(model, s.rain);
    report.images.push_back(metrics::score_image(s.name, restored, s.rain, s.clean));
  }
  report.finalize();
  return report;
}

}  // namespace ssattn::training
