#pragma once

#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cocolor/checkpoint.hpp"
#include "cocolor/common.hpp"
#include "cocolor/config.hpp"
#include "cocolor/data.hpp"
#include "cocolor/digest.hpp"
#include "cocolor/metrics.hpp"
#include "cocolor/png_io.hpp"
#include "cocolor/train.hpp"
#include "json.hpp"

// Command-line front end: dataset synthesis, training, inference over the six
// paths, evaluation, and checkpoint inspection. `run` is the whole program so
// tests can drive it in-process.
namespace cocolor {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitConfig = 3,
  kExitData = 4,
  kExitCheckpoint = 5,
  kExitNumeric = 6,
  kExitShape = 7,
  kExitInternal = 8,
};

namespace detail {

inline std::string resolve_path(const std::string& workdir, const std::string& p) {
  if (workdir.empty() || p.empty() || p == "-") return p;
  return (std::filesystem::path(workdir) / p).string();  // absolute p wins
}

inline std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm g{};
  gmtime_r(&t, &g);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &g);
  return buf;
}

inline TrainConfig read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  return parse_config(is);
}

inline void make_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

inline std::int64_t param_count(const Params& p) {
  std::int64_t n = 0;
  for (const auto& [name, t] : p.entries) n += t.numel();
  return n;
}

inline int fail(std::ostream& err, const char* category, int code, const std::string& what) {
  err << "error: " << category << ": " << what << "\n";
  return code;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"CoColor cooperative colorization toolkit", "cocolor"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes:\n"
      "  0  success\n"
      "  1  usage error\n"
      "  2  file I/O failure\n"
      "  3  invalid configuration or flag value\n"
      "  4  dataset or input rejection\n"
      "  5  checkpoint format or integrity failure\n"
      "  6  non-finite numeric abort\n"
      "  7  tensor shape violation\n"
      "  8  unexpected internal error");

  std::string workdir;
  app.add_option("--workdir", workdir, "Directory all relative paths are resolved against");

  // synth-data
  std::uint64_t sd_seed = 1;
  std::size_t sd_paired = 8, sd_gray = 8;
  int sd_size = 32;
  std::string sd_out;
  CLI::App* synth = app.add_subcommand("synth-data", "Write a synthetic spectral dataset");
  synth->fallthrough();
  synth->add_option("--seed", sd_seed, "Generator seed");
  synth->add_option("--n-paired", sd_paired, "Number of NIR/RGB pairs");
  synth->add_option("--n-gray", sd_gray, "Number of gray-only RGB images");
  synth->add_option("--size", sd_size, "Square image size in pixels");
  synth->add_option("--out", sd_out, "Dataset root directory")->required();

  // train
  std::string tr_config, tr_data, tr_out = ".";
  std::vector<std::string> tr_sets;
  std::uint64_t tr_seed = 0;
  std::string tr_ablation;
  CLI::App* train = app.add_subcommand("train", "Run the training schedule from a config");
  train->fallthrough();
  CLI::Option* tr_config_opt = train->add_option(
      "--config", tr_config, "Config file (default: $COCOLOR_CONFIG if set)");
  train->add_option("--data", tr_data, "Dataset root directory")->required();
  train->add_option("--out", tr_out, "Directory for checkpoints, logs, and metadata");
  train->add_option("--set", tr_sets, "Override a config entry as key=value (repeatable)");
  CLI::Option* tr_seed_opt = train->add_option("--seed", tr_seed, "Override the config seed");
  CLI::Option* tr_abl_opt =
      train->add_option("--ablation", tr_ablation, "Override the config ablation mode");

  // infer
  std::string in_ckpt, in_path, in_dir, in_out;
  CLI::App* infer = app.add_subcommand("infer", "Colorize or translate a directory of images");
  infer->fallthrough();
  infer->add_option("--ckpt", in_ckpt, "Checkpoint file")->required();
  infer->add_option("--path", in_path, "Inference path: N2C|N2G|N2G2C|G2C|G2N|G2N2C")
      ->required();
  infer->add_option("--in", in_dir, "Directory of single-channel PNG inputs")->required();
  infer->add_option("--out", in_out, "Output directory")->required();

  // eval
  std::string ev_ckpt, ev_path, ev_data, ev_out = "-";
  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint against ground truth");
  eval->fallthrough();
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  eval->add_option("--path", ev_path, "Inference path: N2C|N2G|N2G2C|G2C|G2N|G2N2C")
      ->required();
  eval->add_option("--data", ev_data, "Dataset root with paired ground truth")->required();
  eval->add_option("--out", ev_out, "Report file, or - for stdout");

  // inspect
  std::string is_ckpt;
  CLI::App* inspect = app.add_subcommand("inspect", "Print checkpoint metadata as JSON");
  inspect->fallthrough();
  inspect->add_option("--ckpt", is_ckpt, "Checkpoint file")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return detail::fail(err, "usage", kExitUsage, e.what());
  }

  namespace fs = std::filesystem;
  auto rp = [&workdir](const std::string& p) { return detail::resolve_path(workdir, p); };

  try {
    if (app.got_subcommand(synth)) {
      Rng rng(sd_seed);
      auto [paired, gray] = synth_dataset(rng, sd_paired, sd_gray, sd_size);
      save_dataset(rp(sd_out), paired, gray);
      out << "wrote " << paired.size() << " paired and " << gray.size()
          << " gray-only images under " << rp(sd_out) << "\n";
    } else if (app.got_subcommand(train)) {
      TrainConfig cfg;
      std::string config_path = tr_config;
      if (!*tr_config_opt) {
        const char* env = std::getenv("COCOLOR_CONFIG");
        if (env && *env) config_path = env;
      }
      if (!config_path.empty()) cfg = detail::read_config_file(rp(config_path));
      for (const std::string& kv : tr_sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
          throw ConfigError("--set expects key=value, got: " + kv);
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (*tr_seed_opt) cfg.seed = tr_seed;
      if (*tr_abl_opt) cfg.ablation = parse_ablation(tr_ablation);
      cfg.validate();

      Dataset ds = load_dataset(rp(tr_data));
      const std::string out_dir = rp(tr_out);
      detail::make_output_dir(out_dir);
      std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string());
      if (!log) throw IoError("cannot open training log under " + out_dir);

      TrainHooks hooks;
      hooks.log = &log;
      hooks.on_phase_end = [&out_dir](const Checkpoint& c) {
        save_checkpoint(c, (fs::path(out_dir) / ("phase" + std::to_string(c.phase) + ".ckpt"))
                               .string());
      };
      Checkpoint final_ckpt = train_full(ds, cfg, hooks);
      const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
      save_checkpoint(final_ckpt, final_path);

      // Timestamps live only here, so every other artifact is reproducible.
      nlohmann::ordered_json meta;
      meta["completed_utc"] = detail::now_iso8601();
      meta["verb"] = "train";
      meta["dataset"] = rp(tr_data);
      meta["ablation"] = ablation_name(cfg.ablation);
      meta["config_digest"] = hex_digest(config_digest(cfg));
      meta["model_digest"] = hex_digest(final_ckpt.bundle.digest());
      meta["config"] = serialize_config(cfg);
      std::ofstream ms((fs::path(out_dir) / "run_meta.json").string());
      if (!ms) throw IoError("cannot write run metadata under " + out_dir);
      ms << meta.dump(2) << "\n";

      out << "training complete; final checkpoint " << final_path << " (model digest "
          << hex_digest(final_ckpt.bundle.digest()) << ")\n";
    } else if (app.got_subcommand(infer)) {
      Checkpoint ck = load_checkpoint(rp(in_ckpt));
      Path p = parse_path(in_path);
      std::vector<std::string> stems = detail::png_stems(rp(in_dir));
      if (stems.empty()) throw DataError("no .png inputs in " + rp(in_dir));
      detail::make_output_dir(rp(in_out));
      PathForward fwd = path_forward(ck.bundle, p);
      for (const std::string& stem : stems) {
        ImageTensor img = load_png((fs::path(rp(in_dir)) / (stem + ".png")).string());
        require_data(img.channels() == 1,
                     "infer input must be single-channel: " + stem + ".png");
        PairedSample s;
        s.nir = img;
        s.gray = img;
        s.id = stem;
        ImageTensor y = fwd(s);
        save_png((fs::path(rp(in_out)) / (stem + "_" + path_name(p) + ".png")).string(), y);
      }
      out << "wrote " << stems.size() << " " << path_name(p) << " outputs to " << rp(in_out)
          << "\n";
    } else if (app.got_subcommand(eval)) {
      Checkpoint ck = load_checkpoint(rp(ev_ckpt));
      Path p = parse_path(ev_path);
      Dataset ds = load_dataset(rp(ev_data));
      MetricsReport rep = evaluate(ck.bundle, ds, p, rp(ev_data));
      if (ev_out == "-") {
        write_report(out, rep);
      } else {
        std::ofstream os(rp(ev_out));
        if (!os) throw IoError("cannot open report file: " + rp(ev_out));
        write_report(os, rep);
        out << path_name(p) << " over " << rep.per_image.size()
            << " images: mean psnr " << rep.mean_psnr << " dB, mean ssim " << rep.mean_ssim;
        if (rep.has_ae) out << ", mean angular error " << rep.mean_ae << " deg";
        out << "\n";
      }
    } else if (app.got_subcommand(inspect)) {
      Checkpoint ck = load_checkpoint(rp(is_ckpt));
      nlohmann::ordered_json j;
      j["phase"] = ck.phase;
      j["epoch"] = ck.epoch;
      j["config_digest"] = hex_digest(ck.config_digest);
      j["model_digest"] = hex_digest(ck.bundle.digest());
      j["image_size"] = ck.bundle.image_size();
      j["base_channels"] = ck.bundle.base_channels();
      nlohmann::ordered_json nets;
      for (int i = 0; i < ModelBundle::kNetCount; ++i) {
        nlohmann::ordered_json n;
        n["params"] = detail::param_count(ck.bundle.net(i));
        n["adam_steps"] = ck.opt[i].t;
        nets[ModelBundle::net_name(i)] = n;
      }
      j["nets"] = nets;
      out << j.dump(2) << "\n";
    }
    return kExitOk;
  } catch (const IoError& e) {
    return detail::fail(err, "io", kExitIo, e.what());
  } catch (const ConfigError& e) {
    return detail::fail(err, "config", kExitConfig, e.what());
  } catch (const DataError& e) {
    return detail::fail(err, "data", kExitData, e.what());
  } catch (const CheckpointError& e) {
    return detail::fail(err, "checkpoint", kExitCheckpoint, e.what());
  } catch (const NumericError& e) {
    return detail::fail(err, "numeric", kExitNumeric, e.what());
  } catch (const ShapeError& e) {
    return detail::fail(err, "shape", kExitShape, e.what());
  } catch (const std::exception& e) {
    return detail::fail(err, "internal", kExitInternal, e.what());
  }
}

}  // namespace cocolor
