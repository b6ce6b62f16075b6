#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "embnmt/model.hpp"
#include "embnmt/trainer.hpp"
#include "embnmt/vocab.hpp"

namespace embnmt {

// On-disk layout:
//
//   EMBNMT-CHECKPOINT 1
//   <key> <value>                      metadata, one per line
//   tensor <name> <rows> <cols> <offset>   offset counted in doubles
//   source_vocab <n>                   followed by n words, one per line
//   target_vocab <n>
//   end
//   <little-endian IEEE-754 doubles>
//
// Adam moments are stored as tensors named adam.m.<param> and adam.v.<param>.
struct Checkpoint {
  ModelParams params;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  CheckpointMeta meta;
  StrategyKind strategy = StrategyKind::kEntOnly;
  TrainConfig config;
  AdamState adam;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct ManifestEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
};

// Tensor manifest without reading the payload.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace embnmt
