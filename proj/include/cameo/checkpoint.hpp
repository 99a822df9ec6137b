#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cameo/core.hpp"
#include "cameo/model.hpp"

namespace cameo {

inline constexpr int kCheckpointSchemaVersion = 1;

struct LoadedCheckpoint {
  Model model;
  std::uint32_t vocab_hash = 0;
  nlohmann::json metadata;  // free-form, e.g. the training config
};

// Binary layout: 8-byte magic, u32 header length, JSON header (config, vocab
// hash, tensor table, payload crc32), then float32 little-endian parameters.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Vocabulary& vocab,
                     const nlohmann::json& metadata = nlohmann::json::object());

// Throws CheckpointFormatError on a damaged file and CheckpointMismatch when
// `expected_vocab` is given and does not match.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary* expected_vocab = nullptr);

}  // namespace cameo
