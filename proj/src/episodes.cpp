#include "msgcf/episodes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace msgcf::episodes {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t SignalDataset::num_windows() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.windows.size();
  return n;
}

void SignalDataset::validate() const {
  if (window_length == 0) throw ContractError("dataset: window_length must be positive");
  if (held_out_classes >= classes.size() && !classes.empty()) {
    throw ContractError("dataset: held-out classes leave nothing to split");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].id != i) throw ContractError("dataset: class ids must be contiguous from 0");
    for (const auto& w : classes[i].windows) {
      if (w.size() != window_length) {
        throw ContractError("dataset: class " + std::to_string(i) + " has a window of length " +
                            std::to_string(w.size()));
      }
    }
  }
}

namespace {

std::vector<std::vector<double>> read_windows(const fs::path& file, std::size_t window_length) {
  std::ifstream in(file);
  if (!in) throw DataError(DataErrorKind::missing_file, "cannot open class file " + file.string());
  std::vector<std::vector<double>> windows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(window_length);
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      std::size_t b = pos, e = end;
      while (b < e && line[b] == ' ') ++b;
      while (e > b && line[e - 1] == ' ') --e;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, v);
      if (b == e || ec != std::errc() || ptr != line.data() + e || !std::isfinite(v)) {
        throw DataError(DataErrorKind::non_numeric, file.string() + ":" + std::to_string(line_no) +
                                                        ": non-numeric cell '" + line.substr(b, e - b) + "'");
      }
      row.push_back(v);
      pos = end + 1;
    }
    if (row.size() != window_length) {
      throw DataError(DataErrorKind::ragged_row, file.string() + ":" + std::to_string(line_no) + ": expected " +
                                                     std::to_string(window_length) + " values, found " +
                                                     std::to_string(row.size()));
    }
    windows.push_back(std::move(row));
  }
  return windows;
}

}  // namespace

SignalDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError(DataErrorKind::missing_file, "cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(DataErrorKind::malformed_manifest, manifest_path.string() + ": " + e.what());
  }
  SignalDataset ds;
  std::vector<std::pair<std::size_t, SignalClass>> pending;
  try {
    ds.window_length = doc.at("window_length").get<std::size_t>();
    ds.sample_rate_hz = doc.value("sample_rate_hz", 0.0);
    ds.held_out_classes = doc.value("held_out_classes", std::size_t{0});
    for (const auto& entry : doc.at("classes")) {
      SignalClass c;
      c.id = entry.at("id").get<std::size_t>();
      c.label = entry.value("label", std::string{});
      const fs::path file = manifest_path.parent_path() / entry.at("file").get<std::string>();
      for (const auto& [id, other] : pending) {
        if (id == c.id) {
          throw DataError(DataErrorKind::duplicate_class,
                          manifest_path.string() + ": duplicate class id " + std::to_string(c.id));
        }
      }
      c.windows = read_windows(file, ds.window_length);
      pending.emplace_back(c.id, std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError(DataErrorKind::malformed_manifest, manifest_path.string() + ": " + e.what());
  }
  if (ds.window_length == 0) {
    throw DataError(DataErrorKind::malformed_manifest, manifest_path.string() + ": window_length must be positive");
  }
  std::sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (pending[i].first != i) {
      throw DataError(DataErrorKind::malformed_manifest,
                      manifest_path.string() + ": class ids must be contiguous from 0, missing " + std::to_string(i));
    }
    ds.classes.push_back(std::move(pending[i].second));
  }
  if (ds.held_out_classes >= ds.classes.size()) {
    throw DataError(DataErrorKind::malformed_manifest,
                    manifest_path.string() + ": held_out_classes must be smaller than the class count");
  }
  return ds;
}

void write_dataset(const SignalDataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["window_length"] = dataset.window_length;
  manifest["sample_rate_hz"] = dataset.sample_rate_hz;
  if (dataset.held_out_classes) manifest["held_out_classes"] = dataset.held_out_classes;
  manifest["classes"] = json::array();
  char buf[32];
  for (const auto& c : dataset.classes) {
    const std::string name = "class_" + std::to_string(c.id) + ".csv";
    std::ofstream out(dir / name);
    if (!out) throw DataError(DataErrorKind::missing_file, "cannot write " + (dir / name).string());
    for (const auto& w : c.windows) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", w[i]);
        if (i) out << ',';
        out << buf;
      }
      out << '\n';
    }
    manifest["classes"].push_back({{"id", c.id}, {"label", c.label}, {"file", name}});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

SignalDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_classes == 0 || spec.windows_per_class == 0 || spec.window_length == 0 ||
      spec.sinusoids_per_class == 0 || !(spec.sample_rate_hz > 0.0) || !(spec.noise_sigma >= 0.0)) {
    throw ContractError("synthetic spec: dimensions must be positive and noise non-negative");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SignalDataset ds;
  ds.window_length = spec.window_length;
  ds.sample_rate_hz = spec.sample_rate_hz;
  ds.held_out_classes = spec.held_out_classes;
  const std::size_t len = spec.window_length;
  const std::size_t max_period = std::max<std::size_t>(8, std::min<std::size_t>(256, len / 4));

  // Classes behave like one machine under different faults: tones are
  // harmonics of a class shaft rate, and a fault adds a decaying impulse
  // train. Shaft rate and fault period each take one log-spaced stratum per
  // class (jittered inside it), so classes are distinct yet lie on a
  // shared low-dimensional family.
  const std::size_t total = spec.num_classes + spec.held_out_classes;
  auto strata = [&] {
    std::vector<std::size_t> p(total);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
  };
  auto log_stratum = [&](std::size_t s, double lo, double hi) {
    const double u = (static_cast<double>(s) + 0.2 + 0.6 * unit(rng)) / static_cast<double>(total);
    return lo * std::pow(hi / lo, u);
  };
  const std::vector<std::size_t> shaft_strata = strata();
  const std::vector<std::size_t> period_strata = strata();

  for (std::size_t c = 0; c < total; ++c) {
    // Normalized frequencies in cycles per sample.
    const double shaft = log_stratum(shaft_strata[c], 0.004, 0.04);
    std::vector<double> freq(spec.sinusoids_per_class), amp(spec.sinusoids_per_class);
    for (std::size_t j = 0; j < spec.sinusoids_per_class; ++j) {
      freq[j] = shaft * static_cast<double>(j + 1);
      amp[j] = 0.5 + unit(rng);
    }
    const auto period = static_cast<std::size_t>(
        std::lround(log_stratum(period_strata[c], 8.0, static_cast<double>(max_period))));
    const double impulse_amp = 1.0 + 2.0 * unit(rng);
    const double decay = 2.0 + 8.0 * unit(rng);

    SignalClass sc;
    sc.id = c;
    char label[96];
    std::snprintf(label, sizeof label, "synthetic-%zu (f0=%.1f Hz, period=%zu)", c, freq[0] * spec.sample_rate_hz,
                  period);
    sc.label = label;
    for (std::size_t w = 0; w < spec.windows_per_class; ++w) {
      std::vector<double> phase(spec.sinusoids_per_class);
      for (double& p : phase) p = two_pi * unit(rng);
      const std::size_t offset = static_cast<std::size_t>(unit(rng) * static_cast<double>(period));
      std::vector<double> x(len, 0.0);
      for (std::size_t t = 0; t < len; ++t) {
        double v = 0.0;
        for (std::size_t j = 0; j < spec.sinusoids_per_class; ++j)
          v += amp[j] * std::sin(two_pi * freq[j] * static_cast<double>(t) + phase[j]);
        // Time since the most recent impulse.
        const std::size_t since = (t + period - offset % period) % period;
        v += impulse_amp * std::exp(-static_cast<double>(since) / decay);
        x[t] = v;
      }
      for (double& v : x) v += spec.noise_sigma * gauss(rng);
      sc.windows.push_back(std::move(x));
    }
    ds.classes.push_back(std::move(sc));
  }
  return ds;
}

ClassSplit split_classes(const SignalDataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split_classes: train fraction must lie strictly between 0 and 1");
  }
  if (dataset.held_out_classes > dataset.num_classes()) {
    throw ContractError("split_classes: more held-out classes than classes");
  }
  const std::size_t c = dataset.num_classes() - dataset.held_out_classes;
  if (c < 2) throw ContractError("split_classes: need at least two splittable classes");
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(c) * train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, c - 1);
  std::vector<std::size_t> ids(c);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ClassSplit split;
  split.seed = seed;
  split.train_class_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_class_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(split.train_class_ids.begin(), split.train_class_ids.end());
  for (std::size_t h = c; h < dataset.num_classes(); ++h) split.test_class_ids.push_back(h);
  std::sort(split.test_class_ids.begin(), split.test_class_ids.end());
  return split;
}

std::vector<std::size_t> Episode::query_labels() const {
  std::vector<std::size_t> labels;
  labels.reserve(query.size());
  for (const auto& q : query) labels.push_back(q.label);
  return labels;
}

Episode sample_episode(const SignalDataset& dataset, std::span<const std::size_t> class_ids, std::size_t n_way,
                       std::size_t k_shot, std::size_t q_query, std::uint64_t seed) {
  if (n_way == 0 || k_shot == 0 || q_query == 0) throw ContractError("sample_episode: N, K, Q must be positive");
  if (class_ids.size() < n_way) {
    throw CapacityError("sample_episode: " + std::to_string(n_way) + "-way episode needs " + std::to_string(n_way) +
                        " classes but the split side has " + std::to_string(class_ids.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool(class_ids.begin(), class_ids.end());
  std::shuffle(pool.begin(), pool.end(), rng);

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_query = q_query;
  ep.seed = seed;
  ep.class_map.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_way));
  for (std::size_t label = 0; label < n_way; ++label) {
    const std::size_t cid = ep.class_map[label];
    if (cid >= dataset.num_classes()) throw IndexError("sample_episode: unknown class id " + std::to_string(cid));
    const std::size_t have = dataset.classes[cid].windows.size();
    if (have < k_shot + q_query) {
      throw CapacityError("sample_episode: class " + std::to_string(cid) + " has " + std::to_string(have) +
                          " windows, episode needs " + std::to_string(k_shot + q_query) + " (short by " +
                          std::to_string(k_shot + q_query - have) + ")");
    }
    std::vector<std::size_t> idx(have);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < k_shot; ++i) ep.support.push_back({cid, idx[i], label});
    for (std::size_t i = 0; i < q_query; ++i) ep.query.push_back({cid, idx[k_shot + i], label});
  }
  return ep;
}

std::vector<EpisodeItem> episode_items(const Episode& episode) {
  std::vector<EpisodeItem> items = episode.support;
  items.insert(items.end(), episode.query.begin(), episode.query.end());
  return items;
}

Tensor window_to_image(std::span<const double> window, std::size_t side) {
  if (window.size() != side * side || side == 0) {
    throw DimensionError("window_to_image: window of " + std::to_string(window.size()) + " samples cannot fill a " +
                         std::to_string(side) + "x" + std::to_string(side) + " image");
  }
  const double n = static_cast<double>(window.size());
  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : window) var += (v - mean) * (v - mean);
  var /= n;
  Tensor img(Shape{1, side, side});
  if (std::all_of(window.begin(), window.end(), [&](double v) { return v == window[0]; })) return img;
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (std::size_t i = 0; i < window.size(); ++i) img[i] = (window[i] - mean) * inv;
  return img;
}

std::vector<std::size_t> node_order(const Episode& episode) {
  const std::size_t ns = episode.support.size(), nq = episode.query.size();
  std::vector<std::size_t> order;
  order.reserve(ns + nq);
  for (std::size_t i = 0; i < nq; ++i) order.push_back(ns + i);
  for (std::size_t i = 0; i < ns; ++i) order.push_back(i);
  return order;
}

Tensor label_block(const Episode& episode) {
  const std::size_t nq = episode.query.size();
  Tensor block(Shape{episode.num_nodes(), episode.n_way});
  for (std::size_t i = 0; i < episode.support.size(); ++i) block(nq + i, episode.support[i].label) = 1.0;
  return block;
}

EpisodeFeatures assemble_node_features(const Tensor& embeddings, const Episode& episode) {
  require_rank(embeddings, 2, "assemble_node_features");
  if (embeddings.dim(0) != episode.num_nodes()) {
    throw DimensionError("assemble_node_features: " + std::to_string(embeddings.dim(0)) + " embeddings for " +
                         std::to_string(episode.num_nodes()) + " episode items");
  }
  const std::size_t fe = embeddings.dim(1), n = episode.n_way, fm = fe + n;
  const std::vector<std::size_t> order = node_order(episode);
  const Tensor labels = label_block(episode);
  EpisodeFeatures out;
  out.x_input = Tensor(Shape{order.size(), fm});
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::copy_n(embeddings.raw() + order[r] * fe, fe, out.x_input.raw() + r * fm);
    std::copy_n(labels.raw() + r * n, n, out.x_input.raw() + r * fm + fe);
  }
  out.query_begin = 0;
  out.query_end = episode.query.size();
  out.support_begin = out.query_end;
  out.support_end = order.size();
  out.query_labels = episode.query_labels();
  return out;
}

ad::Var assemble_node_features(ad::Var embeddings, const Episode& episode) {
  if (embeddings.value().rank() != 2 || embeddings.value().dim(0) != episode.num_nodes()) {
    throw DimensionError("assemble_node_features: embeddings " + to_string(embeddings.shape()) + " for " +
                         std::to_string(episode.num_nodes()) + " episode items");
  }
  const std::vector<std::size_t> order = node_order(episode);
  ad::Var ordered = ad::gather_rows(embeddings, order);
  return ad::concat_cols(ordered, embeddings.tape().constant(label_block(episode)));
}

}  // namespace msgcf::episodes
