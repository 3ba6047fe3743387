#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtgr/commands.hpp"
#include "mtgr/log.hpp"

namespace {

using Command = nlohmann::json (*)(const mtgr::RunConfig&);

struct Subcommand {
  const char* name;
  const char* help;
  Command run;
};

const Subcommand kCommands[] = {
    {"gen-data", "Generate the synthetic dataset and manifest into data.dir", mtgr::cmd_gen_data},
    {"train", "Train a model; writes run.dir/metrics.jsonl and run.dir/checkpoint", mtgr::cmd_train},
    {"eval", "Evaluate a checkpoint on the test split; writes an AUC/GAUC report", mtgr::cmd_eval},
    {"grad-check", "Finite-difference gradient check of every module", mtgr::cmd_grad_check},
    {"inspect-mask", "Write the attention mask of a fixture or sample as a text grid", mtgr::cmd_inspect_mask},
    {"bench-flops", "Per-sample forward FLOPs of the model presets", mtgr::cmd_bench_flops},
    {"dedup-stats", "Two-stage embedding dedup reductions over one epoch", mtgr::cmd_dedup_stats},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtgr: generative ranking with dynamic-mask HSTU encoders"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("-c,--config", config_path, "Config file (key = value, [section] prefixes)");
  app.add_flag("--print-config", print_config, "Print the resolved config snapshot to stderr");

  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("overrides", overrides, "key=value overrides applied after the config file");
    sub->add_option("-c,--config", config_path, "Config file");
    subs.emplace_back(sub, c.run);
  }
  auto* keys = app.add_subcommand("keys", "List every config key");
  subs.emplace_back(keys, nullptr);

  CLI11_PARSE(app, argc, argv);

  if (keys->parsed()) {
    for (const auto& [k, help] : mtgr::config_keys()) std::cout << k << "  " << help << '\n';
    return 0;
  }

  mtgr::RunConfig cfg;
  try {
    mtgr::ConfigFile file = config_path.empty() ? mtgr::ConfigFile{} : mtgr::ConfigFile::load(config_path);
    for (const auto& o : overrides) file.add_override(o);
    cfg = mtgr::build_run_config(file);
  } catch (const mtgr::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (print_config) std::cerr << mtgr::snapshot(cfg);

  for (const auto& [sub, run] : subs) {
    if (!sub->parsed() || run == nullptr) continue;
    try {
      const auto summary = run(cfg);
      std::cout << summary.dump() << std::endl;
      return summary.value("ok", false) ? 0 : 1;
    } catch (const mtgr::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      mtgr::log::error(std::string(sub->get_name()) + " failed: " + e.what());
      std::cout << nlohmann::json{{"command", sub->get_name()}, {"ok", false}, {"error", e.what()}}.dump() << std::endl;
      return 1;
    }
  }
  return 1;
}
