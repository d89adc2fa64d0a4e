#pragma once

#include <cstdint>
#include <istream>
#include <sstream>
#include <string>

#include "cocolor/common.hpp"
#include "cocolor/data.hpp"
#include "cocolor/digest.hpp"
#include "cocolor/losses.hpp"
#include "cocolor/nets.hpp"

// Flat key=value run configuration with CLI-style overrides.
namespace cocolor {

enum class Ablation { full, no_blt, from_scratch, n2c_standalone, n2c_partial, g2c_standalone };

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_blt: return "no_blt";
    case Ablation::from_scratch: return "from_scratch";
    case Ablation::n2c_standalone: return "n2c_standalone";
    case Ablation::n2c_partial: return "n2c_partial";
    case Ablation::g2c_standalone: return "g2c_standalone";
  }
  throw ConfigError("unreachable ablation");
}

inline Ablation parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::full, Ablation::no_blt, Ablation::from_scratch,
                     Ablation::n2c_standalone, Ablation::n2c_partial, Ablation::g2c_standalone})
    if (s == ablation_name(a)) return a;
  throw ConfigError("unknown ablation mode: " + s);
}

struct TrainConfig {
  int image_size = 256;
  int base_channels = 64;
  int batch_size = 10;
  double lr_phase1 = 1e-4;
  double lr_phase2 = 1e-4;
  double lr_phase3 = 1e-5;
  int epochs_phase1 = 400;
  int epochs_phase2 = 250;
  int epochs_phase3 = 100;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::full;
  LossWeights weights;
  AugmentConfig augment;

  void validate() const {
    if (lr_phase1 <= 0 || lr_phase2 <= 0 || lr_phase3 <= 0)
      throw ConfigError("learning rates must be positive");
    if (epochs_phase1 < 0 || epochs_phase2 < 0 || epochs_phase3 < 0)
      throw ConfigError("epoch counts must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (base_channels < 1) throw ConfigError("base_channels must be at least 1");
    GeneratorSpec s;
    s.image_size = image_size;
    try {
      weights.validate();
      augment.validate();
      s.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

inline std::int64_t parse_int(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + v);
  }
  if (used != v.size()) throw ConfigError("bad integer for " + key + ": " + v);
  return out;
}

inline double parse_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + v);
  }
  if (used != v.size()) throw ConfigError("bad number for " + key + ": " + v);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Applies one key=value assignment; unknown keys are errors.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "image_size") cfg.image_size = static_cast<int>(parse_int(value, key));
  else if (key == "base_channels") cfg.base_channels = static_cast<int>(parse_int(value, key));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(value, key));
  else if (key == "lr_phase1") cfg.lr_phase1 = parse_double(value, key);
  else if (key == "lr_phase2") cfg.lr_phase2 = parse_double(value, key);
  else if (key == "lr_phase3") cfg.lr_phase3 = parse_double(value, key);
  else if (key == "epochs_phase1") cfg.epochs_phase1 = static_cast<int>(parse_int(value, key));
  else if (key == "epochs_phase2") cfg.epochs_phase2 = static_cast<int>(parse_int(value, key));
  else if (key == "epochs_phase3") cfg.epochs_phase3 = static_cast<int>(parse_int(value, key));
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "ablation") cfg.ablation = parse_ablation(value);
  else if (key == "lambda1") cfg.weights.lambda1 = parse_double(value, key);
  else if (key == "lambda2") cfg.weights.lambda2 = parse_double(value, key);
  else if (key == "lambda3") cfg.weights.lambda3 = parse_double(value, key);
  else if (key == "lambda4") cfg.weights.lambda4 = parse_double(value, key);
  else if (key == "lambda_p") cfg.weights.lambda_p = parse_double(value, key);
  else if (key == "lambda_c") cfg.weights.lambda_c = parse_double(value, key);
  else if (key == "augment_scale") cfg.augment.enable_scale = parse_bool(value, key);
  else if (key == "augment_mirror") cfg.augment.enable_mirror = parse_bool(value, key);
  else if (key == "augment_crop") cfg.augment.enable_crop = parse_bool(value, key);
  else if (key == "augment_contrast") cfg.augment.enable_contrast = parse_bool(value, key);
  else if (key == "augment_scale_lo") cfg.augment.scale_lo = parse_double(value, key);
  else if (key == "augment_scale_hi") cfg.augment.scale_hi = parse_double(value, key);
  else if (key == "augment_crop_size") cfg.augment.crop_size = static_cast<int>(parse_int(value, key));
  else if (key == "augment_contrast_lo") cfg.augment.contrast_lo = parse_double(value, key);
  else if (key == "augment_contrast_hi") cfg.augment.contrast_hi = parse_double(value, key);
  else throw ConfigError("unknown config key: " + key);
}

// `key = value` lines; '#' starts a comment; blank lines ignored.
inline TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + line);
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has no key");
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

inline TrainConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Canonical serialization; also the digest input, so field order is fixed.
inline std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "image_size = " << cfg.image_size << "\n"
     << "base_channels = " << cfg.base_channels << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "lr_phase1 = " << cfg.lr_phase1 << "\n"
     << "lr_phase2 = " << cfg.lr_phase2 << "\n"
     << "lr_phase3 = " << cfg.lr_phase3 << "\n"
     << "epochs_phase1 = " << cfg.epochs_phase1 << "\n"
     << "epochs_phase2 = " << cfg.epochs_phase2 << "\n"
     << "epochs_phase3 = " << cfg.epochs_phase3 << "\n"
     << "seed = " << cfg.seed << "\n"
     << "ablation = " << ablation_name(cfg.ablation) << "\n"
     << "lambda1 = " << cfg.weights.lambda1 << "\n"
     << "lambda2 = " << cfg.weights.lambda2 << "\n"
     << "lambda3 = " << cfg.weights.lambda3 << "\n"
     << "lambda4 = " << cfg.weights.lambda4 << "\n"
     << "lambda_p = " << cfg.weights.lambda_p << "\n"
     << "lambda_c = " << cfg.weights.lambda_c << "\n"
     << "augment_scale = " << (cfg.augment.enable_scale ? "true" : "false") << "\n"
     << "augment_mirror = " << (cfg.augment.enable_mirror ? "true" : "false") << "\n"
     << "augment_crop = " << (cfg.augment.enable_crop ? "true" : "false") << "\n"
     << "augment_contrast = " << (cfg.augment.enable_contrast ? "true" : "false") << "\n"
     << "augment_scale_lo = " << cfg.augment.scale_lo << "\n"
     << "augment_scale_hi = " << cfg.augment.scale_hi << "\n"
     << "augment_crop_size = " << cfg.augment.crop_size << "\n"
     << "augment_contrast_lo = " << cfg.augment.contrast_lo << "\n"
     << "augment_contrast_hi = " << cfg.augment.contrast_hi << "\n";
  return os.str();
}

inline std::uint64_t config_digest(const TrainConfig& cfg) {
  std::string s = serialize_config(cfg);
  return fnv1a64(s.data(), s.size());
}

}  // namespace cocolor
