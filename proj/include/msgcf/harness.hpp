#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "msgcf/adam.hpp"
#include "msgcf/episodes.hpp"
#include "msgcf/model.hpp"

namespace msgcf::harness {

struct DatasetSource {
  std::string manifest;  // path to a manifest JSON; empty when synthetic
  std::optional<episodes::SyntheticSpec> synthetic;
};

struct Seeds {
  std::uint64_t data = 1;     // class split
  std::uint64_t init = 2;     // parameter initialization
  std::uint64_t episode = 3;  // episode sampling
};

struct TrainConfig {
  model::ModelConfig model;  // encoder.side is derived from the window length
  std::size_t k_shot = 5;
  std::size_t q_query = 1;
  std::size_t episodes_per_epoch = 300;
  std::size_t epochs = 1;
  std::size_t eval_episodes = 200;
  double train_fraction = 0.8;
  AdamConfig optimizer;
  Seeds seeds;
  // Wall-clock timing makes metrics files differ between runs; when false
  // the `ms` column is written as 0.
  bool record_wall_clock = false;
  DatasetSource dataset;

  std::size_t total_episodes() const { return episodes_per_epoch * epochs; }
  void validate() const;
};

TrainConfig default_config();
nlohmann::json to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& doc);
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const episodes::SyntheticSpec& spec);
episodes::SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

/// Loads or generates the dataset and fixes `config.model.encoder.side`.
episodes::SignalDataset resolve_dataset(TrainConfig& config);

/// splitmix64-style derivation of independent per-episode seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

struct MetricsRecord {
  std::size_t episode = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  double ms = 0.0;
};

std::string metrics_csv(const std::vector<MetricsRecord>& rows);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  model::MsgcfParams params;
  TrainConfig config;
  AdamState optimizer;
  std::uint64_t episodes_seen = 0;
  std::uint32_t version = kCheckpointVersion;
};

/// Binary layout (all integers and doubles little-endian):
///   "MSGCF" | u32 version | u64 n + n bytes of compact config JSON |
///   u64 episodes_seen | u64 adam step | u64 tensor count |
///   per tensor: u32 rank, u64 extents[rank], f64 values |
///   per tensor: f64 Adam first moments | per tensor: f64 Adam second moments
/// Tensors follow model::for_each_tensor order.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the raw parameter bytes.
std::uint64_t parameter_hash(const model::MsgcfParams& params);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRecord> metrics;  // train rows, then the final test rows
  double test_accuracy = 0.0;
};

/// Episodic training with clipped Adam. Writes `metrics.csv`,
/// `metrics.meta.json` and `checkpoint.msgcf` into `out_dir` when given.
TrainResult train(const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct EvalResult {
  double mean_accuracy = 0.0;
  double half_width = 0.0;  // 1.96 * sqrt(p (1 - p) / episodes)
  double mean_loss = 0.0;
  std::vector<MetricsRecord> rows;
};

EvalResult evaluate(const model::MsgcfParams& params, const episodes::SignalDataset& dataset,
                    std::span<const std::size_t> class_ids, std::size_t k_shot, std::size_t q_query,
                    std::size_t episode_count, std::uint64_t seed, bool zero_support_labels = false,
                    bool record_wall_clock = false);

/// Reloads the checkpoint's dataset and evaluates on its test split.
EvalResult evaluate(const Checkpoint& checkpoint, std::size_t episode_count, std::uint64_t seed);

struct AblationRow {
  std::string name;
  bool local = false;
  bool global = false;
  std::size_t layers = 0;
  double accuracy = 0.0;
};

/// Local-only depth sweep (2..5), plain 3-layer GNN and full 3-layer MSGCF,
/// all with the config's seeds.
std::vector<AblationRow> ablate(const TrainConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace msgcf::harness
