#include <cmath>
#include <fstream>

#include "msgcf/harness.hpp"

namespace msgcf::harness {

using nlohmann::json;

void TrainConfig::validate() const {
  model::local_layer_shapes(model);
  if (model.encoder.channels.empty()) throw ConfigError("config: encoder needs at least one block");
  if (k_shot == 0 || q_query == 0) throw ConfigError("config: k_shot and q_query must be positive");
  if (episodes_per_epoch == 0 || epochs == 0) throw ConfigError("config: need at least one training episode");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("config: train_fraction must lie in (0, 1)");
  if (!(optimizer.learning_rate > 0.0) || !(optimizer.epsilon > 0.0) || optimizer.beta1 < 0.0 ||
      optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0) {
    throw ConfigError("config: invalid optimizer hyperparameters");
  }
  if (dataset.manifest.empty() == !dataset.synthetic.has_value()) {
    throw ConfigError("config: dataset needs exactly one of 'manifest' or 'synthetic'");
  }
}

json to_json(const episodes::SyntheticSpec& s) {
  return {{"num_classes", s.num_classes},
          {"windows_per_class", s.windows_per_class},
          {"window_length", s.window_length},
          {"sample_rate_hz", s.sample_rate_hz},
          {"noise_sigma", s.noise_sigma},
          {"sinusoids_per_class", s.sinusoids_per_class},
          {"held_out_classes", s.held_out_classes},
          {"seed", s.seed}};
}

episodes::SyntheticSpec synthetic_spec_from_json(const json& doc) {
  episodes::SyntheticSpec s;
  try {
    s.num_classes = doc.value("num_classes", s.num_classes);
    s.windows_per_class = doc.value("windows_per_class", s.windows_per_class);
    s.window_length = doc.value("window_length", s.window_length);
    s.sample_rate_hz = doc.value("sample_rate_hz", s.sample_rate_hz);
    s.noise_sigma = doc.value("noise_sigma", s.noise_sigma);
    s.sinusoids_per_class = doc.value("sinusoids_per_class", s.sinusoids_per_class);
    s.held_out_classes = doc.value("held_out_classes", s.held_out_classes);
    s.seed = doc.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

TrainConfig default_config() {
  TrainConfig c;
  c.dataset.synthetic = episodes::SyntheticSpec{};
  return c;
}

json to_json(const TrainConfig& c) {
  json dataset;
  if (c.dataset.synthetic) {
    dataset["synthetic"] = to_json(*c.dataset.synthetic);
  } else {
    dataset["manifest"] = c.dataset.manifest;
  }
  return {
      {"n_way", c.model.n_way},
      {"k_shot", c.k_shot},
      {"q_query", c.q_query},
      {"layers", c.model.layers},
      {"hidden_width", c.model.hidden_width},
      {"splice", c.model.splice},
      {"use_global", c.model.use_global},
      {"combine_mode", model::to_string(c.model.combine)},
      {"encoder",
       {{"channels", c.model.encoder.channels},
        {"kernel", c.model.encoder.kernel},
        {"embedding_dim", c.model.encoder.embedding_dim},
        {"image_side", c.model.encoder.side}}},
      {"episodes_per_epoch", c.episodes_per_epoch},
      {"epochs", c.epochs},
      {"eval_episodes", c.eval_episodes},
      {"train_fraction", c.train_fraction},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"clip_norm", c.optimizer.clip_norm}}},
      {"seeds", {{"data", c.seeds.data}, {"init", c.seeds.init}, {"episode", c.seeds.episode}}},
      {"record_wall_clock", c.record_wall_clock},
      {"dataset", dataset},
  };
}

TrainConfig config_from_json(const json& doc) {
  TrainConfig c;
  try {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    c.model.n_way = doc.value("n_way", c.model.n_way);
    c.k_shot = doc.value("k_shot", c.k_shot);
    c.q_query = doc.value("q_query", c.q_query);
    c.model.layers = doc.value("layers", c.model.layers);
    c.model.hidden_width = doc.value("hidden_width", c.model.hidden_width);
    c.model.splice = doc.value("splice", c.model.splice);
    c.model.use_global = doc.value("use_global", c.model.use_global);
    c.model.combine = model::parse_combine_mode(doc.value("combine_mode", model::to_string(c.model.combine)));
    if (doc.contains("encoder")) {
      const json& e = doc.at("encoder");
      c.model.encoder.channels = e.value("channels", c.model.encoder.channels);
      c.model.encoder.kernel = e.value("kernel", c.model.encoder.kernel);
      c.model.encoder.embedding_dim = e.value("embedding_dim", c.model.encoder.embedding_dim);
      c.model.encoder.side = e.value("image_side", c.model.encoder.side);
    }
    c.episodes_per_epoch = doc.value("episodes_per_epoch", c.episodes_per_epoch);
    c.epochs = doc.value("epochs", c.epochs);
    c.eval_episodes = doc.value("eval_episodes", c.eval_episodes);
    c.train_fraction = doc.value("train_fraction", c.train_fraction);
    if (doc.contains("optimizer")) {
      const json& o = doc.at("optimizer");
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
      c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
    }
    if (doc.contains("seeds")) {
      const json& s = doc.at("seeds");
      c.seeds.data = s.value("data", c.seeds.data);
      c.seeds.init = s.value("init", c.seeds.init);
      c.seeds.episode = s.value("episode", c.seeds.episode);
    }
    c.record_wall_clock = doc.value("record_wall_clock", c.record_wall_clock);
    if (doc.contains("dataset")) {
      const json& d = doc.at("dataset");
      if (d.contains("manifest")) c.dataset.manifest = d.at("manifest").get<std::string>();
      if (d.contains("synthetic")) c.dataset.synthetic = synthetic_spec_from_json(d.at("synthetic"));
    } else {
      c.dataset.synthetic = episodes::SyntheticSpec{};
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  TrainConfig c = config_from_json(doc);
  // Manifest paths are relative to the config file.
  if (!c.dataset.manifest.empty() && std::filesystem::path(c.dataset.manifest).is_relative()) {
    c.dataset.manifest = (path.parent_path() / c.dataset.manifest).lexically_normal().string();
  }
  return c;
}

episodes::SignalDataset resolve_dataset(TrainConfig& config) {
  episodes::SignalDataset ds = config.dataset.synthetic
                                   ? episodes::generate_synthetic(*config.dataset.synthetic, config.dataset.synthetic->seed)
                                   : episodes::load_dataset(config.dataset.manifest);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(ds.window_length))));
  if (side * side != ds.window_length) {
    throw ConfigError("window length " + std::to_string(ds.window_length) + " is not a perfect square");
  }
  config.model.encoder.side = side;
  encoder::block_sides(config.model.encoder);
  return ds;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1) + 0xbf58476d1ce4e5b9ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace msgcf::harness
