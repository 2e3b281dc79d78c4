#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msgcf/autodiff.hpp"
#include "msgcf/tensor.hpp"

namespace msgcf::episodes {

struct SignalClass {
  std::size_t id = 0;
  std::string label;
  std::vector<std::vector<double>> windows;
};

/// Class ids are contiguous from 0 and `classes[i].id == i`.
struct SignalDataset {
  std::vector<SignalClass> classes;
  std::size_t window_length = 0;
  double sample_rate_hz = 0.0;
  // The last `held_out_classes` classes never enter the train/test draw and
  // always belong to the test side.
  std::size_t held_out_classes = 0;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_windows() const;
  /// Throws ContractError when any invariant is broken.
  void validate() const;
};

/// Reads a JSON manifest and the per-class CSV files it references
/// (paths relative to the manifest).
SignalDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes `manifest.json` plus one `class_<id>.csv` per class into `dir`.
void write_dataset(const SignalDataset& dataset, const std::filesystem::path& dir);

/// Parameters of the synthetic vibration generator. Each class mixes a few
/// sinusoids with a periodic decaying impulse train; windows differ by
/// random phases, impulse offset and additive Gaussian noise.
struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t windows_per_class = 20;
  std::size_t window_length = 4096;
  double sample_rate_hz = 64000.0;
  double noise_sigma = 0.5;
  std::size_t sinusoids_per_class = 3;
  // Extra classes generated after `num_classes`, reserved for testing.
  std::size_t held_out_classes = 3;
  std::uint64_t seed = 7;
};

SignalDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct ClassSplit {
  std::vector<std::size_t> train_class_ids;
  std::vector<std::size_t> test_class_ids;
  std::uint64_t seed = 0;
};

/// Of the C splittable classes, floor(C * fraction) go to training (clamped
/// so each side keeps at least one); membership is a seeded uniform draw
/// without replacement. Held-out classes are appended to the test side.
ClassSplit split_classes(const SignalDataset& dataset, double train_fraction, std::uint64_t seed);

struct EpisodeItem {
  std::size_t class_id = 0;
  std::size_t window_index = 0;
  std::size_t label = 0;  // position of the class in the draw, 0..N-1

  friend bool operator==(const EpisodeItem&, const EpisodeItem&) = default;
};

struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_query = 0;
  std::vector<EpisodeItem> support;  // grouped by label, K each
  std::vector<EpisodeItem> query;    // grouped by label, Q each
  std::vector<std::size_t> class_map;  // episode label -> dataset class id
  std::uint64_t seed = 0;

  std::size_t num_nodes() const { return support.size() + query.size(); }
  /// Query labels in node order.
  std::vector<std::size_t> query_labels() const;
};

Episode sample_episode(const SignalDataset& dataset, std::span<const std::size_t> class_ids, std::size_t n_way,
                       std::size_t k_shot, std::size_t q_query, std::uint64_t seed);

/// Items in embedding order: support first, then query.
std::vector<EpisodeItem> episode_items(const Episode& episode);

/// Row-major reshape to [1 x side x side], standardized to zero mean and
/// unit variance (constant windows map to zeros).
Tensor window_to_image(std::span<const double> window, std::size_t side);

struct EpisodeFeatures {
  Tensor x_input;  // [(N*Q + N*K) x (f_e + N)], query rows first
  std::size_t query_begin = 0, query_end = 0;
  std::size_t support_begin = 0, support_end = 0;
  std::vector<std::size_t> query_labels;
};

/// For each graph node (query nodes first), the embedding row it takes,
/// where embeddings are ordered as `episode_items`.
std::vector<std::size_t> node_order(const Episode& episode);

/// [(N*Q + N*K) x N]: zeros on query rows, one-hot labels on support rows.
Tensor label_block(const Episode& episode);

/// `embeddings` rows follow `episode_items` order.
EpisodeFeatures assemble_node_features(const Tensor& embeddings, const Episode& episode);

/// Differentiable assembly used during training; returns X0.
ad::Var assemble_node_features(ad::Var embeddings, const Episode& episode);

}  // namespace msgcf::episodes
