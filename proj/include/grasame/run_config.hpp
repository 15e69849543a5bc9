#pragma once

#include <filesystem>
#include <string>

#include "grasame/evalgen.hpp"
#include "grasame/model.hpp"
#include "grasame/training.hpp"
#include "json.hpp"

namespace grasame {

struct DataConfig {
  std::string train;  // JSON-lines dataset
  std::string valid;  // optional; model selection uses it when set
  std::string prompt = LinearizeOptions{}.prompt;
  std::size_t min_count = 1;
};

// Everything a run needs. model.seed follows train.seed and
// model.vocab_size is filled from the vocabulary at run time.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  DataConfig data;
  std::string output_dir = "run";
};

// Every field appears, so the output documents all defaults.
nlohmann::ordered_json to_json(const RunConfig& config);

// Overlays `json` onto `base`. Unknown keys and ill-typed values throw
// ConfigError naming the offending key.
RunConfig merge_config(const RunConfig& base, const nlohmann::json& json);

RunConfig load_config(const std::filesystem::path& path);

const char* freeze_mode_name(FreezeMode mode);
FreezeMode parse_freeze_mode(const std::string& name);
const char* decode_mode_name(DecodeMode mode);
DecodeMode parse_decode_mode(const std::string& name);

}  // namespace grasame
