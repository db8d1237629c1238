#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "datagen.hpp"
#include "detector/trainer.hpp"
#include "eval/report.hpp"

namespace shaftpose {

// Everything a command needs besides file paths. Serialised as a flat JSON object whose keys
// are listed in docs/config.md; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int count = 100;  // gen-data image count
  DataGenConfig data;
  TrainConfig train;
  double match_threshold = 0.5;
  std::int64_t checkpoint_every = 1000;
  EvalOptions eval;

  void validate() const;
};

// Named starting points: "repro" (the desk experiment, also the default) and "smoke".
RunConfig preset_config(const std::string& name);

// Flat key/value view. Values are JSON texts.
std::map<std::string, std::string> config_to_flat(const RunConfig& config);
std::string config_to_json(const RunConfig& config);

// Applies a JSON object of flat keys on top of `base`. Throws Error(kConfig) on unknown keys or
// mistyped values, naming the key.
RunConfig apply_config_json(const RunConfig& base, const std::string& json_text);
// Applies one override given as key and value text; the value is parsed as JSON, falling back
// to a plain string.
RunConfig apply_override(const RunConfig& base, const std::string& key, const std::string& value);

RunConfig load_config_file(const RunConfig& base, const std::filesystem::path& path);

}  // namespace shaftpose
