#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include <json.hpp>

#include "dnaadv/quantize.hpp"
#include "dnaadv/trainable.hpp"

namespace dnaadv {

inline constexpr int kCheckpointFormatVersion = 1;

/// Textual checkpoint: a JSON document with header fields format_version,
/// model_kind, tokenizer and dims, then params (float) or tensors (int8).
/// `provenance` is free-form (defense method, parameters, seed).
void save_model(const TrainableModel& model, const std::filesystem::path& path,
                const nlohmann::json& provenance = nlohmann::json::object());
void save_quantized(const QuantizedModel& model, const std::filesystem::path& path,
                    const nlohmann::json& provenance = nlohmann::json::object());

struct LoadedModel {
  std::unique_ptr<TrainableModel> model;        // float checkpoints
  std::unique_ptr<QuantizedModel> quantized;    // int8 checkpoints
  nlohmann::json provenance;

  const ProbOracle& oracle() const;
};

/// Throws IoError, ParseError (malformed document) or UnsupportedFormat.
LoadedModel load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<TrainableModel> load_model(const std::filesystem::path& path);

}  // namespace dnaadv
