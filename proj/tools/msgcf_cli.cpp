#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "msgcf/error.hpp"
#include "msgcf/filter_demo.hpp"
#include "msgcf/harness.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

using msgcf::harness::TrainConfig;

TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? msgcf::harness::default_config() : msgcf::harness::load_config(path);
}

int run_train(const std::string& config_path, const std::string& out) {
  const TrainConfig config = config_or_default(config_path);
  const auto result = msgcf::harness::train(config, std::filesystem::path(out));
  std::printf("trained %zu episodes; test accuracy %.4f over %zu episodes\n", config.total_episodes(),
              result.test_accuracy, config.eval_episodes);
  std::printf("wrote %s\n", (std::filesystem::path(out) / "checkpoint.msgcf").string().c_str());
  return kOk;
}

int run_eval(const std::string& checkpoint_path, std::size_t episodes, std::uint64_t seed) {
  const auto checkpoint = msgcf::harness::load_checkpoint(checkpoint_path);
  const auto r = msgcf::harness::evaluate(checkpoint, episodes, seed);
  std::printf("accuracy %.4f +/- %.4f (95%%, %zu episodes), mean loss %.4f\n", r.mean_accuracy, r.half_width,
              episodes, r.mean_loss);
  return kOk;
}

int run_ablate(const std::string& config_path, const std::string& out) {
  const auto rows = msgcf::harness::ablate(config_or_default(config_path), std::filesystem::path(out));
  std::cout << msgcf::harness::ablation_csv(rows);
  return kOk;
}

int run_filter_demo(const std::string& graph, const std::string& response, std::uint64_t seed,
                    const std::string& out) {
  const std::string csv = msgcf::harness::filter_demo_csv(msgcf::harness::filter_demo(graph, response, seed));
  if (out.empty() || out == "-") {
    std::cout << csv;
    return kOk;
  }
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file || !(file << csv)) throw msgcf::DataError(msgcf::DataErrorKind::missing_file, "cannot write " + out);
  return kOk;
}

int run_gen_synthetic(const std::string& spec_path, const std::string& out) {
  msgcf::episodes::SyntheticSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw msgcf::ConfigError("cannot open spec file " + spec_path);
    try {
      spec = msgcf::harness::synthetic_spec_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw msgcf::ConfigError(spec_path + ": " + e.what());
    }
  }
  const auto ds = msgcf::episodes::generate_synthetic(spec, spec.seed);
  msgcf::episodes::write_dataset(ds, out);
  std::printf("wrote %zu classes x %zu windows to %s\n", ds.num_classes(), spec.windows_per_class, out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale graph convolution for few-shot vibration signal classification"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the default configuration as JSON and exit");

  std::string config_path, out_dir, checkpoint_path, graph_spec, response, spec_path;
  std::size_t episodes = 200;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "Episodic training; writes metrics and a checkpoint");
  train->add_option("--config", config_path, "JSON configuration (defaults when omitted)")->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on fresh test episodes");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Number of test episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Episode sampling seed");

  auto* ablate = app.add_subcommand("ablate", "Layer-count and channel ablation sweep");
  ablate->add_option("--config", config_path, "JSON configuration (defaults when omitted)")->check(CLI::ExistingFile);
  ablate->add_option("--out", out_dir, "Output directory")->required();

  auto* demo = app.add_subcommand("filter-demo", "Spectral filtering of a random signal on a small graph");
  demo->add_option("--graph", graph_spec, "path-<n>, cycle-<n>, complete-<n> or random-er(<n>,<p>)")->required();
  demo->add_option("--response", response, "identity, low-pass-<k>, renormalized-<k> or chebyshev(<t0>,...)")
      ->required();
  demo->add_option("--seed", seed, "Signal (and random graph) seed");
  demo->add_option("--out", out_dir, "CSV output file ('-' for stdout)");

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic vibration dataset");
  gen->add_option("--spec", spec_path, "JSON generator spec (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (print_config) {
      std::cout << msgcf::harness::to_json(msgcf::harness::default_config()).dump(2) << "\n";
      return kOk;
    }
    if (*train) return run_train(config_path, out_dir);
    if (*eval) return run_eval(checkpoint_path, episodes, seed);
    if (*ablate) return run_ablate(config_path, out_dir);
    if (*demo) return run_filter_demo(graph_spec, response, seed, out_dir);
    if (*gen) return run_gen_synthetic(spec_path, out_dir);
    std::cerr << app.help();
    return kUsage;
  } catch (const msgcf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const msgcf::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const msgcf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const msgcf::CapacityError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const msgcf::ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
