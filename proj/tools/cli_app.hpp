#pragma once

// photon-scale command-line front end. `run` is the whole program; main()
// only forwards argv. Exit codes: 0 success, 1 usage/validation error,
// 2 data or runtime error. Reports go to `out` as JSON, diagnostics to `err`.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "photon_scale/photon_scale.hpp"

namespace photon_scale::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Usage-level failure detected after parsing (bad combination of values).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SensorFlags {
  double tau_eta = 1e-3;
  double eta = 1.0;
  double dark_rate = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> flux_scale;

  [[nodiscard]] SensorConfig config() const {
    SensorConfig cfg{tau_eta / eta, eta, dark_rate, seed};
    cfg.validate();
    return cfg;
  }
  [[nodiscard]] double scale() const {
    const double s = flux_scale.value_or(default_flux_scale(config()));
    if (!(s > 0.0)) throw DomainError("--flux-scale must be > 0");
    return s;
  }
  [[nodiscard]] json to_json() const {
    const auto cfg = config();
    return {{"tau_eta", tau_eta}, {"eta", eta},     {"tau", cfg.tau},
            {"dark_rate", dark_rate}, {"seed", seed}, {"flux_scale", scale()}};
  }
};

inline void add_sensor_flags(CLI::App* sub, SensorFlags& f) {
  sub->add_option("--tau-eta", f.tau_eta, "Exposure x quantum efficiency per binary frame")->capture_default_str();
  sub->add_option("--eta", f.eta, "Quantum efficiency (tau = tau-eta / eta)")->capture_default_str();
  sub->add_option("--dark-rate", f.dark_rate, "Dark count rate, counts/second")->capture_default_str();
  sub->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  sub->add_option("--flux-scale", f.flux_scale,
                  "Flux (photons/s) of a full-brightness pixel; default 0.255 / tau-eta");
}

struct SpecFlags {
  std::uint32_t k = 1, l = 256, levels = 5;
  [[nodiscard]] ScaleSpaceSpec spec() const {
    ScaleSpaceSpec s{k, l, levels};
    s.validate();
    return s;
  }
  [[nodiscard]] json to_json() const { return {{"k", k}, {"l", l}, {"levels", levels}}; }
};

inline void add_spec_flags(CLI::App* sub, SpecFlags& f) {
  sub->add_option("--k", f.k, "Lowest level frame count")->capture_default_str();
  sub->add_option("--l", f.l, "Highest level frame count")->capture_default_str();
  sub->add_option("--levels", f.levels, "Number of levels")->capture_default_str();
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::optional<std::string> closest(const std::string& word, const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_d = 4;
  for (const auto& c : candidates) {
    const auto d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create output directory " + dir.string() + ": " + ec.message());
}

inline void require_file(const fs::path& p, const char* flag) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(flag) + ": no such file: " + p.string());
}

inline json level_histogram(const NSumImage& img) {
  std::map<std::uint32_t, std::size_t> hist;
  for (auto c : img.counts.pixels()) ++hist[c];
  json h = json::array();
  for (const auto& [count, pixels] : hist) h.push_back({count, pixels});
  return h;
}

inline std::vector<double> depth_values(const fs::path& p) {
  const auto img = read_pnm(p);
  if (img.channels != 1) throw LoadError(p.string() + ": depth map must be single-channel");
  return {img.samples.begin(), img.samples.end()};
}

inline std::optional<TrainMode> parse_mode(const std::string& s) {
  if (s == "photon-net") return TrainMode::photon_net;
  if (s == "vanilla-low") return TrainMode::vanilla_lowest_level;
  if (s == "vanilla-all") return TrainMode::vanilla_all_levels;
  return std::nullopt;
}

inline std::size_t level_index_for(const SceneDataset& ds, std::optional<std::uint32_t> level) {
  if (!level) return 0;
  const auto it = std::find(ds.schedule.begin(), ds.schedule.end(), *level);
  if (it == ds.schedule.end()) throw UsageError("--level " + std::to_string(*level) + " is not in the dataset schedule");
  return static_cast<std::size_t>(it - ds.schedule.begin());
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-photon camera simulation and photon-scale-space toolkit", "photon-scale"};
  app.set_config("--config", "", "TOML/INI file of flag values; explicit flags take precedence");
  app.require_subcommand(1);
  app.fallthrough(false);

  // simulate
  SensorFlags sim_sensor;
  std::string sim_input, sim_out;
  std::uint32_t sim_frames = 1;
  auto* simulate = app.add_subcommand("simulate", "Clean image -> binary frame file (frames.pssb)");
  simulate->add_option("--input", sim_input, "Clean 8/16-bit PGM or PPM (colour is converted to luminance)")->required();
  simulate->add_option("--frames", sim_frames, "Number of binary frames")->capture_default_str();
  simulate->add_option("--out", sim_out, "Output directory")->required();
  add_sensor_flags(simulate, sim_sensor);

  // build-pss
  SensorFlags pss_sensor;
  SpecFlags pss_spec;
  std::string pss_input, pss_out, pss_color = "per-channel";
  auto* build_pss = app.add_subcommand("build-pss", "Clean image -> photon scale space (S<n>.pgm per level)");
  build_pss->add_option("--input", pss_input, "Clean 8/16-bit PGM or PPM")->required();
  build_pss->add_option("--out", pss_out, "Output directory")->required();
  build_pss->add_option("--color", pss_color, "per-channel | luminance")->capture_default_str();
  add_spec_flags(build_pss, pss_spec);
  add_sensor_flags(build_pss, pss_sensor);

  // build-dataset
  SensorFlags ds_sensor;
  SpecFlags ds_spec;
  std::string ds_corpus, ds_labels, ds_out, ds_color = "per-channel";
  auto* build_ds = app.add_subcommand("build-dataset", "Corpus directory + labels file -> dataset with manifest.json");
  build_ds->add_option("--corpus", ds_corpus, "Directory of clean images")->required();
  build_ds->add_option("--labels", ds_labels, "Labels file (default: <corpus>/labels.txt)");
  build_ds->add_option("--out", ds_out, "Output directory")->required();
  build_ds->add_option("--color", ds_color, "per-channel | luminance")->capture_default_str();
  add_spec_flags(build_ds, ds_spec);
  add_sensor_flags(build_ds, ds_sensor);

  // hotpixel calibrate | apply
  auto* hotpixel = app.add_subcommand("hotpixel", "Hot-pixel calibration from dark frames and correction");
  hotpixel->require_subcommand(1);
  std::string hp_dark, hp_out, hp_input, hp_mask, hp_apply_out;
  double hp_threshold = kDefaultHotPixelThreshold;
  auto* calibrate = hotpixel->add_subcommand("calibrate", "Dark frame file -> hot-pixel mask (hotpixels.pgm)");
  calibrate->add_option("--dark", hp_dark, "PSSB file of frames captured with the scene dark")->required();
  calibrate->add_option("--threshold", hp_threshold, "Detection rate above which a pixel is hot")->capture_default_str();
  calibrate->add_option("--out", hp_out, "Output directory")->required();
  auto* apply = hotpixel->add_subcommand("apply", "Correct an N-sum PGM with a hot-pixel mask");
  apply->add_option("--input", hp_input, "16-bit N-sum PGM")->required();
  apply->add_option("--mask", hp_mask, "Mask PGM from `hotpixel calibrate`")->required();
  apply->add_option("--out", hp_apply_out, "Output directory")->required();

  // train
  TrainConfig train_cfg;
  std::string train_manifest, train_out, train_mode = "photon-net";
  auto* train_cmd = app.add_subcommand("train", "Train the toy classifier on a dataset");
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest.json")->required();
  train_cmd->add_option("--out", train_out, "Output directory (checkpoint.psnt, metrics.csv)")->required();
  train_cmd->add_option("--mode", train_mode, "photon-net | vanilla-low | vanilla-all")->capture_default_str();
  train_cmd->add_option("--lambda", train_cfg.lambda, "Feature-consistency weight")->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-groups", train_cfg.batch_groups, "Scenes per minibatch")->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.base_lr, "Base learning rate (cosine decay)")->capture_default_str();
  train_cmd->add_option("--momentum", train_cfg.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed, "Seed for initialisation and shuffling")->capture_default_str();

  // eval
  std::string eval_checkpoint, eval_manifest;
  std::optional<std::uint32_t> eval_level;
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on one level of a dataset");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint.psnt from `train`")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest.json")->required();
  eval_cmd->add_option("--level", eval_level, "Frame count N of the level to evaluate (default: lowest)");

  // stats
  std::string stats_input;
  std::optional<std::uint32_t> stats_n;
  SensorFlags stats_sensor;
  auto* stats = app.add_subcommand("stats", "PPP and count histogram of an N-sum PGM");
  stats->add_option("--input", stats_input, "16-bit N-sum PGM")->required();
  stats->add_option("--n", stats_n, "Frame count of the image (enables bounds check and MLE summary)");
  add_sensor_flags(stats, stats_sensor);

  // depth-metrics
  std::string depth_truth, depth_pred;
  auto* depth = app.add_subcommand("depth-metrics", "rel, rms, log10 and delta thresholds of two depth PGMs");
  depth->add_option("--truth", depth_truth, "Ground-truth depth PGM (positive values)")->required();
  depth->add_option("--pred", depth_pred, "Predicted depth PGM (positive values)")->required();

  // synth
  std::string synth_kind = "shapes", synth_out;
  std::size_t synth_count = 100, synth_size = 32;
  std::uint64_t synth_seed = 0;
  double synth_mean = 110.0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic clean-image corpus with labels.txt");
  synth->add_option("--kind", synth_kind, "shapes | texture")->capture_default_str();
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str();
  synth->add_option("--size", synth_size, "Image width and height")->capture_default_str();
  synth->add_option("--mean", synth_mean, "Target 8-bit mean for --kind texture")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::vector<std::string> subcommand_names;
  std::vector<std::string> option_names;
  for (auto* sub : app.get_subcommands({})) {
    subcommand_names.push_back(sub->get_name());
    auto collect = [&](CLI::App* a) {
      for (const auto* opt : a->get_options())
        for (const auto& ln : opt->get_lnames()) option_names.push_back("--" + ln);
    };
    collect(sub);
    for (auto* nested : sub->get_subcommands({})) collect(nested);
  }

  if (!args.empty() && args.front().rfind("-", 0) != 0 &&
      std::find(subcommand_names.begin(), subcommand_names.end(), args.front()) == subcommand_names.end()) {
    err << "error: unknown subcommand '" << args.front() << "'";
    if (auto s = closest(args.front(), subcommand_names)) err << "; did you mean '" << *s << "'?";
    err << "\nrun with --help for the list of subcommands\n";
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& a : args) {
      if (a.rfind("--", 0) != 0) continue;
      const auto name = a.substr(0, a.find('='));
      if (std::find(option_names.begin(), option_names.end(), name) != option_names.end()) continue;
      if (auto s = closest(name, option_names)) err << "unknown flag '" << name << "'; did you mean '" << *s << "'?\n";
    }
    return kExitUsage;
  }

  auto report = [&](const std::string& command, json config, json result) {
    json j;
    j["command"] = command;
    j["config"] = std::move(config);
    j["result"] = std::move(result);
    out << j.dump(2) << "\n";
  };

  // Phase 1 validates everything and returns a deferred action; phase 2 runs it.
  // Errors thrown in phase 1 are usage errors and leave nothing on disk.
  std::function<void()> action;
  try {
    if (simulate->parsed()) {
      const auto cfg = sim_sensor.config();
      const auto scale = sim_sensor.scale();
      if (sim_frames < 1) throw UsageError("--frames must be >= 1");
      require_file(sim_input, "--input");
      action = [&, cfg, scale] {
        const auto flux = flux_from_image(load_clean_image(sim_input), scale);
        std::vector<BinaryFrame> frames;
        frames.reserve(sim_frames);
        for (std::uint32_t i = 0; i < sim_frames; ++i) frames.push_back(sample_binary_frame(flux, cfg, i));
        prepare_out_dir(sim_out);
        write_frames(frames, fs::path(sim_out) / "frames.pssb");
        const auto sum = accumulate(frames);
        report("simulate",
               {{"input", sim_input}, {"frames", sim_frames}, {"out", sim_out}, {"sensor", sim_sensor.to_json()}},
               {{"file", (fs::path(sim_out) / "frames.pssb").string()},
                {"width", flux.width()},
                {"height", flux.height()},
                {"ppp_per_frame", ppp(sum) / sum.n}});
      };
    } else if (build_pss->parsed()) {
      const auto cfg = pss_sensor.config();
      const auto spec = pss_spec.spec();
      const auto scale = pss_sensor.scale();
      if (pss_color != "per-channel" && pss_color != "luminance") throw UsageError("--color must be per-channel or luminance");
      require_file(pss_input, "--input");
      action = [&, cfg, spec, scale] {
        const auto img = load_clean_image(pss_input);
        const auto levels = simulate_scene(img, spec, cfg, 0, scale,
                                           pss_color == "luminance" ? ColorMode::luminance : ColorMode::per_channel,
                                           default_thread_count());
        prepare_out_dir(pss_out);
        const auto schedule = level_schedule(spec);
        json lv = json::array();
        for (std::size_t i = 0; i < levels.size(); ++i) {
          const auto file = fs::path(pss_out) / ("S" + std::to_string(schedule[i]) + ".pgm");
          write_pnm(level_to_pnm(levels[i]), file);
          lv.push_back({{"n", schedule[i]}, {"path", file.string()}, {"ppp", level_ppp(levels[i])}});
        }
        report("build-pss",
               {{"input", pss_input}, {"out", pss_out}, {"color", pss_color}, {"spec", pss_spec.to_json()},
                {"sensor", pss_sensor.to_json()}},
               {{"schedule", schedule}, {"levels", lv}});
      };
    } else if (build_ds->parsed()) {
      const auto cfg = ds_sensor.config();
      const auto spec = ds_spec.spec();
      const auto scale = ds_sensor.scale();
      if (ds_color != "per-channel" && ds_color != "luminance") throw UsageError("--color must be per-channel or luminance");
      const fs::path labels = ds_labels.empty() ? fs::path(ds_corpus) / "labels.txt" : fs::path(ds_labels);
      if (!fs::is_directory(ds_corpus)) throw UsageError("--corpus: not a directory: " + ds_corpus);
      require_file(labels, "--labels");
      action = [&, cfg, spec, scale, labels] {
        const auto corpus = read_corpus(ds_corpus, labels);
        BuildOptions opts;
        opts.flux_scale = scale;
        opts.color = ds_color == "luminance" ? ColorMode::luminance : ColorMode::per_channel;
        const auto result = build_dataset(corpus, spec, cfg, ds_out, opts);
        json errors = json::array();
        for (const auto& e : result.errors) {
          err << "error: scene " << e.scene_id << ": " << e.message << "\n";
          errors.push_back({{"scene_id", e.scene_id}, {"message", e.message}});
        }
        std::vector<double> mean_ppp(level_schedule(spec).size(), 0.0);
        for (const auto& e : result.manifest.entries)
          for (std::size_t i = 0; i < e.levels.size(); ++i) mean_ppp[i] += e.levels[i].ppp;
        for (auto& v : mean_ppp) v /= std::max<std::size_t>(1, result.manifest.entries.size());
        report("build-dataset",
               {{"corpus", ds_corpus}, {"labels", labels.string()}, {"out", ds_out}, {"color", ds_color},
                {"spec", ds_spec.to_json()}, {"sensor", ds_sensor.to_json()}},
               {{"manifest", (fs::path(ds_out) / "manifest.json").string()},
                {"scenes", result.manifest.entries.size()},
                {"schedule", level_schedule(spec)},
                {"dataset_ppp", mean_ppp},
                {"errors", errors}});
        if (!result.errors.empty()) throw LoadError(std::to_string(result.errors.size()) + " corpus entries failed");
      };
    } else if (calibrate->parsed()) {
      if (!(hp_threshold >= 0.0 && hp_threshold <= 1.0)) throw UsageError("--threshold must be in [0, 1]");
      require_file(hp_dark, "--dark");
      action = [&] {
        const auto frames = read_frames(hp_dark);
        const auto mask = hot_pixel_mask(frames, hp_threshold);
        PnmImage pgm{mask.hot.width(), mask.hot.height(), 1, 255, {}};
        for (auto v : mask.hot.pixels()) pgm.samples.push_back(v ? 255 : 0);
        prepare_out_dir(hp_out);
        write_pnm(pgm, fs::path(hp_out) / "hotpixels.pgm");
        report("hotpixel calibrate", {{"dark", hp_dark}, {"threshold", hp_threshold}, {"out", hp_out}},
               {{"mask", (fs::path(hp_out) / "hotpixels.pgm").string()},
                {"frames", frames.size()},
                {"hot_pixels", mask.count()}});
      };
    } else if (apply->parsed()) {
      require_file(hp_input, "--input");
      require_file(hp_mask, "--mask");
      action = [&] {
        const auto pnm = read_pnm(hp_input);
        NSumImage img{65535, Plane<std::uint32_t>(pnm.width, pnm.height)};
        for (std::size_t i = 0; i < pnm.samples.size(); ++i) img.counts[i] = pnm.samples[i];
        const auto mpgm = read_pnm(hp_mask);
        if (mpgm.channels != 1) throw LoadError("mask must be a single-channel PGM");
        HotPixelMask mask{Plane<std::uint8_t>(mpgm.width, mpgm.height)};
        for (std::size_t i = 0; i < mpgm.samples.size(); ++i) mask.hot[i] = mpgm.samples[i] != 0;
        const auto fixed = correct_hot_pixels(img, mask);
        prepare_out_dir(hp_apply_out);
        const auto file = fs::path(hp_apply_out) / (fs::path(hp_input).stem().string() + "_corrected.pgm");
        PnmImage outimg = pnm;
        for (std::size_t i = 0; i < outimg.samples.size(); ++i)
          outimg.samples[i] = static_cast<std::uint16_t>(fixed.image.counts[i]);
        write_pnm(outimg, file);
        json un = json::array();
        for (const auto& [x, y] : fixed.uncorrected) {
          err << "warning: hot pixel (" << x << ", " << y << ") has no cold neighbours; left unchanged\n";
          un.push_back({x, y});
        }
        report("hotpixel apply", {{"input", hp_input}, {"mask", hp_mask}, {"out", hp_apply_out}},
               {{"output", file.string()}, {"hot_pixels", mask.count()}, {"uncorrected", un}});
      };
    } else if (train_cmd->parsed()) {
      train_cfg.validate();
      const auto mode = parse_mode(train_mode);
      if (!mode) throw UsageError("--mode must be photon-net, vanilla-low or vanilla-all");
      require_file(train_manifest, "--manifest");
      action = [&, mode] {
        const auto ds = load_scene_dataset(read_manifest(train_manifest));
        if (ds.scenes.empty()) throw LoadError("dataset has no scenes");
        prepare_out_dir(train_out);
        const auto log_path = fs::path(train_out) / "metrics.csv";
        {
          std::ofstream log(log_path, std::ios::trunc);
          log << metrics_log_header();
        }
        const auto result = train(ds, train_cfg, *mode, std::nullopt, [&](const EpochLog& row) {
          std::ofstream log(log_path, std::ios::app);
          log << metrics_log_row(row);
        });
        save_checkpoint(result.net, fs::path(train_out) / "checkpoint.psnt");
        json epochs = json::array();
        for (const auto& r : result.log)
          epochs.push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"ce", r.ce}, {"feature_mse", r.feature_mse},
                            {"accuracy", r.accuracy}});
        report("train",
               {{"manifest", train_manifest}, {"out", train_out}, {"mode", train_mode}, {"lambda", train_cfg.lambda},
                {"epochs", train_cfg.epochs}, {"batch_groups", train_cfg.batch_groups}, {"lr", train_cfg.base_lr},
                {"momentum", train_cfg.momentum}, {"seed", train_cfg.seed}},
               {{"checkpoint", (fs::path(train_out) / "checkpoint.psnt").string()},
                {"metrics", log_path.string()},
                {"parameters", result.net.params.size()},
                {"epochs", epochs}});
      };
    } else if (eval_cmd->parsed()) {
      require_file(eval_checkpoint, "--checkpoint");
      require_file(eval_manifest, "--manifest");
      action = [&] {
        const auto net = load_checkpoint(eval_checkpoint);
        const auto ds = load_scene_dataset(read_manifest(eval_manifest));
        const auto li = level_index_for(ds, eval_level);
        const double acc = evaluate(net, ds, li);
        report("eval", {{"checkpoint", eval_checkpoint}, {"manifest", eval_manifest}, {"level", ds.schedule[li]}},
               {{"top1", acc}, {"scenes", ds.scenes.size()}});
      };
    } else if (stats->parsed()) {
      require_file(stats_input, "--input");
      if (stats_n && *stats_n < 1) throw UsageError("--n must be >= 1");
      const auto cfg = stats_sensor.config();
      action = [&, cfg] {
        const auto img = read_nsum(stats_input, stats_n.value_or(65535));
        json result{{"width", img.width()}, {"height", img.height()}, {"ppp", ppp(img)},
                    {"histogram", level_histogram(img)}};
        if (stats_n) {
          const auto est = mle_flux(img, cfg);
          double mean = 0.0;
          for (double v : est.flux.pixels()) mean += v;
          result["mean_mle_flux"] = mean / static_cast<double>(est.flux.size());
          result["saturated_pixels"] = est.saturated_count;
        }
        report("stats",
               {{"input", stats_input}, {"n", stats_n ? json(*stats_n) : json(nullptr)},
                {"sensor", stats_sensor.to_json()}},
               result);
      };
    } else if (depth->parsed()) {
      require_file(depth_truth, "--truth");
      require_file(depth_pred, "--pred");
      action = [&] {
        const auto m = depth_metrics(depth_values(depth_truth), depth_values(depth_pred));
        report("depth-metrics", {{"truth", depth_truth}, {"pred", depth_pred}},
               {{"rel", m.rel}, {"rms", m.rms}, {"log10", m.log10}, {"delta1", m.delta1}, {"delta2", m.delta2},
                {"delta3", m.delta3}});
      };
    } else if (synth->parsed()) {
      if (synth_kind != "shapes" && synth_kind != "texture") throw UsageError("--kind must be shapes or texture");
      if (synth_count < 1 || synth_size < 4) throw UsageError("--count must be >= 1 and --size >= 4");
      if (!(synth_mean >= 0.0 && synth_mean <= 255.0)) throw UsageError("--mean must be in [0, 255]");
      action = [&] {
        std::vector<CorpusEntry> corpus;
        if (synth_kind == "shapes") {
          corpus = synthetic::shapes_corpus(synth_count, synth_size, synth_seed);
        } else {
          std::mt19937_64 rng(synth_seed);
          for (std::size_t i = 0; i < synth_count; ++i)
            corpus.push_back({"texture_" + std::to_string(i), "texture", {},
                              synthetic::textured_image(synth_size, synth_size, synth_mean, rng)});
        }
        synthetic::write_corpus(corpus, synth_out);
        report("synth",
               {{"kind", synth_kind}, {"count", synth_count}, {"size", synth_size}, {"mean", synth_mean},
                {"seed", synth_seed}, {"out", synth_out}},
               {{"labels", (fs::path(synth_out) / "labels.txt").string()}});
      };
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (action) action();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace photon_scale::cli
