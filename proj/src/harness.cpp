#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msgcf/harness.hpp"

namespace msgcf::harness {

namespace {

constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kEvalStream = 1;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::missing_file, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(DataErrorKind::missing_file, "failed writing " + path.string());
}

std::string parameter_norms(const model::MsgcfParams& params) {
  std::ostringstream os;
  std::size_t i = 0;
  for (const Tensor* t : params.tensors()) {
    os << "  tensor " << i++ << " " << to_string(t->shape()) << " norm " << frobenius_norm(*t) << "\n";
  }
  return os.str();
}

void require_capacity(std::span<const std::size_t> ids, std::size_t n_way, const char* side) {
  if (ids.size() < n_way) {
    throw CapacityError(std::string(side) + " split has " + std::to_string(ids.size()) + " classes but " +
                        std::to_string(n_way) + "-way episodes need " + std::to_string(n_way));
  }
}

struct EpisodeScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

EpisodeScore score_episode(const model::MsgcfParams& params, const episodes::SignalDataset& dataset,
                           const episodes::Episode& episode, bool zero_support_labels) {
  ad::Tape tape;
  const model::MsgcfVars vars = model::bind(tape, params, false);
  const model::ForwardTrace trace = model::run_episode(params.config, vars, dataset, episode, zero_support_labels);
  const std::vector<std::size_t> labels = episode.query_labels();
  const model::Prediction pred = model::predict(trace.logits.value());
  const double loss = model::episode_loss(trace.logits, labels).value().item();
  return {loss, model::accuracy(pred, labels)};
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::string out = "episode,split,loss,accuracy,ms\n";
  for (const MetricsRecord& r : rows) {
    out += std::to_string(r.episode) + "," + r.split + "," + format_double(r.loss) + "," + format_double(r.accuracy) +
           "," + format_double(r.ms) + "\n";
  }
  return out;
}

EvalResult evaluate(const model::MsgcfParams& params, const episodes::SignalDataset& dataset,
                    std::span<const std::size_t> class_ids, std::size_t k_shot, std::size_t q_query,
                    std::size_t episode_count, std::uint64_t seed, bool zero_support_labels, bool record_wall_clock) {
  require_capacity(class_ids, params.config.n_way, "test");
  EvalResult result;
  double acc_sum = 0.0;
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < episode_count; ++i) {
    const auto start = Clock::now();
    const episodes::Episode ep = episodes::sample_episode(dataset, class_ids, params.config.n_way, k_shot, q_query,
                                                          derive_seed(seed, kEvalStream, i));
    const EpisodeScore s = score_episode(params, dataset, ep, zero_support_labels);
    if (!std::isfinite(s.loss)) throw NumericError("evaluation episode " + std::to_string(i) + ": non-finite loss");
    acc_sum += s.accuracy;
    loss_sum += s.loss;
    result.rows.push_back({i, "test", s.loss, s.accuracy, record_wall_clock ? elapsed_ms(start) : 0.0});
  }
  if (episode_count > 0) {
    const double n = static_cast<double>(episode_count);
    result.mean_accuracy = acc_sum / n;
    result.mean_loss = loss_sum / n;
    const double p = result.mean_accuracy;
    result.half_width = 1.96 * std::sqrt(p * (1.0 - p) / n);
  }
  return result;
}

EvalResult evaluate(const Checkpoint& checkpoint, std::size_t episode_count, std::uint64_t seed) {
  TrainConfig config = checkpoint.config;
  const episodes::SignalDataset dataset = resolve_dataset(config);
  if (config.model.encoder.side != checkpoint.params.config.encoder.side) {
    throw ConfigError("checkpoint image side does not match its dataset window length");
  }
  const episodes::ClassSplit split = episodes::split_classes(dataset, config.train_fraction, config.seeds.data);
  return evaluate(checkpoint.params, dataset, split.test_class_ids, config.k_shot, config.q_query, episode_count, seed,
                  false, config.record_wall_clock);
}

TrainResult train(const TrainConfig& input, const std::optional<std::filesystem::path>& out_dir) {
  input.validate();
  TrainConfig config = input;
  const episodes::SignalDataset dataset = resolve_dataset(config);
  const episodes::ClassSplit split = episodes::split_classes(dataset, config.train_fraction, config.seeds.data);
  require_capacity(split.train_class_ids, config.model.n_way, "train");
  require_capacity(split.test_class_ids, config.model.n_way, "test");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.params = model::init_msgcf(config.model, config.seeds.init);
  std::vector<Tensor*> tensors = ck.params.tensors();
  ck.optimizer = make_adam_state(std::vector<const Tensor*>(tensors.begin(), tensors.end()));

  const std::size_t total = config.total_episodes();
  for (std::size_t i = 0; i < total; ++i) {
    const auto start = Clock::now();
    episodes::Episode ep;
    try {
      ep = episodes::sample_episode(dataset, split.train_class_ids, config.model.n_way, config.k_shot, config.q_query,
                                    derive_seed(config.seeds.episode, kTrainStream, i));
    } catch (const CapacityError& e) {
      throw CapacityError("training episode " + std::to_string(i) + ": " + e.what());
    }
    ad::Tape tape;
    const model::MsgcfVars vars = model::bind(tape, ck.params, true);
    const model::ForwardTrace trace = model::run_episode(config.model, vars, dataset, ep);
    const std::vector<std::size_t> labels = ep.query_labels();
    const ad::Var loss = model::episode_loss(trace.logits, labels);
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("training episode " + std::to_string(i) + ": non-finite loss\nparameter norms:\n" +
                         parameter_norms(ck.params));
    }
    const double acc = model::accuracy(model::predict(trace.logits.value()), labels);
    ad::GradientMap grads_by_id = ad::backward(tape, loss);
    std::vector<Tensor> grads;
    grads.reserve(tensors.size());
    for (ad::NodeId id : model::parameter_ids(vars)) grads.push_back(std::move(grads_by_id.at(id)));
    const double norm = adam_step(tensors, grads, ck.optimizer, config.optimizer);
    if (!std::isfinite(norm)) {
      throw NumericError("training episode " + std::to_string(i) + ": non-finite gradient\nparameter norms:\n" +
                         parameter_norms(ck.params));
    }
    ++ck.episodes_seen;
    result.metrics.push_back({i, "train", loss_value, acc, config.record_wall_clock ? elapsed_ms(start) : 0.0});
  }

  EvalResult eval = evaluate(ck.params, dataset, split.test_class_ids, config.k_shot, config.q_query,
                             config.eval_episodes, config.seeds.episode, false, config.record_wall_clock);
  for (const MetricsRecord& r : eval.rows) result.metrics.push_back(r);
  result.test_accuracy = eval.mean_accuracy;

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "metrics.csv", metrics_csv(result.metrics));
    nlohmann::json meta = {{"config", to_json(config)},
                           {"parameter_count", ck.params.parameter_count()},
                           {"train_classes", split.train_class_ids},
                           {"test_classes", split.test_class_ids},
                           {"test_accuracy", eval.mean_accuracy},
                           {"test_half_width", eval.half_width},
                           {"test_loss", eval.mean_loss}};
    write_text(*out_dir / "metrics.meta.json", meta.dump(2) + "\n");
    save_checkpoint(ck, *out_dir / "checkpoint.msgcf");
  }
  return result;
}

std::vector<AblationRow> ablate(const TrainConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  struct Variant {
    std::string name;
    bool global;
    bool splice;
    std::size_t layers;
  };
  const std::vector<Variant> variants = {
      {"GNN", false, false, 3},   {"local-2", false, true, 2}, {"local-3", false, true, 3},
      {"local-4", false, true, 4}, {"local-5", false, true, 5}, {"MSGCF", true, true, 3},
  };
  std::vector<AblationRow> rows;
  nlohmann::json runs = nlohmann::json::array();
  for (const Variant& v : variants) {
    TrainConfig c = config;
    c.model.use_global = v.global;
    c.model.splice = v.splice;
    c.model.layers = v.layers;
    const TrainResult r = train(c);
    rows.push_back({v.name, v.splice, v.global, v.layers, r.test_accuracy});
    runs.push_back({{"name", v.name}, {"splice", v.splice}, {"test_accuracy", r.test_accuracy}});
  }
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "ablation.csv", ablation_csv(rows));
    write_text(*out_dir / "ablation.meta.json",
               nlohmann::json{{"config", to_json(config)}, {"runs", runs}}.dump(2) + "\n");
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "name,local,global,layers,accuracy\n";
  for (const AblationRow& r : rows) {
    out += r.name + "," + (r.local ? "yes" : "no") + "," + (r.global ? "yes" : "no") + "," + std::to_string(r.layers) +
           "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

}  // namespace msgcf::harness
