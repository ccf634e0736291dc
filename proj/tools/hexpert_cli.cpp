// hexpert: run, validate and sweep experiment configs.
//
// Exit status: 0 ok, 1 invalid config or arguments, 2 runtime failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hexpert/config.hpp"
#include "hexpert/runner.hpp"

namespace {

using hexpert::config::Config;
using hexpert::config::ConfigError;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

std::filesystem::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HEXPERT_OUT"); env && *env) return env;
  return "runs";
}

Config load(const std::string& path, std::optional<long> seed, const std::vector<std::string>& overrides) {
  Config cfg = Config::load(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  if (seed) cfg.set("seed", std::to_string(*seed));
  cfg.validate();
  return cfg;
}

void print_metrics(const hexpert::runner::RunSummary& s) {
  std::cout << s.dir.string() << '\n';
  for (const auto& [k, v] : s.metrics) std::cout << "  " << k << " = " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Information-constrained hierarchical expert experiments"};
  app.set_version_flag("--version", std::string(HEXPERT_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<long> seed;
  std::vector<std::string> overrides;

  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("config", config_path, "Config file")->required();
  run_cmd->add_option("--seed", seed, "Master seed (overrides the file)");
  run_cmd->add_option("--out", out_dir, "Output root (default: $HEXPERT_OUT, then ./runs)");
  run_cmd->add_option("--override", overrides, "key=value, applied after the file")->allow_extra_args(false);

  auto* validate_cmd = app.add_subcommand("validate", "Check a config without running it");
  validate_cmd->add_option("config", config_path, "Config file")->required();
  validate_cmd->add_option("--override", overrides, "key=value, applied after the file")->allow_extra_args(false);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run sweep.param over sweep.values for every sweep.seeds entry");
  sweep_cmd->add_option("config", config_path, "Config file")->required();
  sweep_cmd->add_option("--out", out_dir, "Output root (default: $HEXPERT_OUT, then ./runs)");
  sweep_cmd->add_option("--override", overrides, "key=value, applied after the file")->allow_extra_args(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  Config cfg;
  try {
    cfg = load(config_path, run_cmd->parsed() ? seed : std::nullopt, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config " << config_path << ": " << e.what() << '\n';
    return kInvalid;
  }

  if (validate_cmd->parsed()) {
    const auto defaults = cfg.defaulted();
    std::cout << config_path << ": valid " << hexpert::config::to_string(cfg.kind()) << " config, " << defaults.size()
              << " defaults applied\n";
    for (const auto& key : defaults) std::cout << "  " << key << " = " << cfg.effective().at(key) << '\n';
    return kOk;
  }

  try {
    const auto root = output_root(out_dir);
    if (run_cmd->parsed()) {
      print_metrics(hexpert::runner::run(cfg, root));
    } else {
      for (const auto& s : hexpert::runner::sweep(cfg, root)) print_metrics(s);
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config " << config_path << ": " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
