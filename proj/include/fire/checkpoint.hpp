#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "fire/model.hpp"
#include "fire/text.hpp"
#include "fire/trainer.hpp"

namespace fire {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// File layout: 8-byte magic, u32 format version, u64 header length, JSON
/// header (tensor manifest, configuration, vocabulary), then every tensor as
/// little-endian float64 at its manifest offset.
struct CheckpointContents {
  ModelConfig model;
  TrainConfig train;
  PaddingLimits limits;
  Vocab vocab;
  FireParams params;
  Adam optimizer;

  std::uint64_t fingerprint() const { return vocab.fingerprint(); }
};

void save_checkpoint(std::ostream& out, const FireParams& params, const Adam* optimizer, const ModelConfig& model,
                     const TrainConfig& train, const PaddingLimits& limits, const Vocab& vocab);
void save_checkpoint(const std::string& path, const FireParams& params, const Adam* optimizer,
                     const ModelConfig& model, const TrainConfig& train, const PaddingLimits& limits,
                     const Vocab& vocab);

CheckpointContents load_checkpoint(std::istream& in);
CheckpointContents load_checkpoint(const std::string& path);

/// Throws FingerprintMismatchError when `fingerprint` differs from the
/// checkpoint's vocabulary.
void check_fingerprint(const CheckpointContents& checkpoint, std::uint64_t fingerprint);

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const PaddingLimits& limits);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
PaddingLimits limits_from_json(const nlohmann::json& j);

}  // namespace fire
