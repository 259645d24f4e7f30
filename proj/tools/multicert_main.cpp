#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "multicert/pipeline.hpp"

namespace {

namespace mcio = multicert::io;
namespace mcp = multicert::pipeline;

struct CliArgs {
  std::string config_path;
  std::string votes_path;
  std::string out_dir = "out";
  std::string mode;
  std::string engine;
  std::string direction;
  std::string attack;
  std::string sweep_alpha;
  std::string sweep_n;
  long r_max = -1;
  long long seed = -1;
  int jobs = 0;
};

int default_jobs() {
  if (const char* env = std::getenv("MULTICERT_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

void add_common(CLI::App* cmd, CliArgs& args, bool wants_votes) {
  cmd->add_option("--config", args.config_path, "run configuration JSON")
      ->required();
  if (wants_votes)
    cmd->add_option("--votes", args.votes_path, "vote counts JSONL")
        ->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--mode", args.mode, "exact|fast (overrides config)");
  cmd->add_option("--engine", args.engine,
                  "multicert|ablation (overrides config)");
  cmd->add_option("--direction", args.direction,
                  "attack ray as num/den or number (overrides config)");
  cmd->add_option("--r-max", args.r_max, "largest budget along the ray");
  cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
  cmd->add_option("--jobs", args.jobs, "worker threads");
  cmd->add_option("--attack", args.attack,
                  "modification|addition|deletion for every modality");
  cmd->add_option("--sweep-alpha", args.sweep_alpha,
                  "comma-separated alpha values for an extra sweep");
  cmd->add_option("--sweep-n", args.sweep_n,
                  "comma-separated vote counts (simulate only)");
}

mcio::RunConfig effective_config(const CliArgs& args) {
  mcio::RunConfig cfg = mcio::load_config(args.config_path);
  if (!args.mode.empty())
    cfg.mode = multicert::eval_mode_from_string(args.mode);
  if (!args.engine.empty()) cfg.engine = mcio::engine_from_string(args.engine);
  if (!args.direction.empty())
    cfg.direction = mcio::parse_direction(mcio::json(args.direction));
  if (args.r_max >= 0) cfg.r_max = args.r_max;
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.attack.empty()) {
    const auto attack = multicert::attack_from_string(args.attack);
    for (auto& m : cfg.modalities) m.attack = attack;
  }
  cfg.validate();
  return cfg;
}

mcp::RunOptions effective_options(const CliArgs& args) {
  mcp::RunOptions options;
  options.jobs = args.jobs >= 1 ? args.jobs : default_jobs();
  if (!args.sweep_alpha.empty())
    options.sweep_alpha = mcio::parse_double_list(args.sweep_alpha);
  if (!args.sweep_n.empty())
    options.sweep_n = mcio::parse_long_list(args.sweep_n);
  return options;
}

std::ifstream open_votes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw multicert::DataError("cannot open votes file: " + path);
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"certified robustness for subsampled multi-modal ensembles"};
  app.require_subcommand(1);

  CliArgs args;
  auto* certify = app.add_subcommand(
      "certify", "per-sample certification at one attack budget");
  add_common(certify, args, true);
  auto* radius = app.add_subcommand(
      "radius", "certified radius sweep along the attack ray");
  add_common(radius, args, true);
  auto* segment = app.add_subcommand(
      "segment", "per-element certification and certified metrics");
  add_common(segment, args, true);
  auto* baseline = app.add_subcommand(
      "baseline", "pooled-ablation engine on the configured task");
  add_common(baseline, args, true);
  auto* simulate = app.add_subcommand(
      "simulate", "generate synthetic votes, then certify them");
  add_common(simulate, args, false);
  auto* oracle = app.add_subcommand(
      "oracle", "brute-force cross-check on a small geometry");
  add_common(oracle, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  try {
    const auto cfg = effective_config(args);
    const auto options = effective_options(args);
    if (certify->parsed()) {
      auto votes = open_votes(args.votes_path);
      mcp::run_certify(cfg, votes, args.out_dir, options);
    } else if (radius->parsed()) {
      auto votes = open_votes(args.votes_path);
      mcp::run_radius(cfg, votes, args.out_dir, options);
    } else if (segment->parsed()) {
      auto votes = open_votes(args.votes_path);
      mcp::run_segment(cfg, votes, args.out_dir, options);
    } else if (baseline->parsed()) {
      auto votes = open_votes(args.votes_path);
      mcp::run_baseline(cfg, votes, args.out_dir, options);
    } else if (simulate->parsed()) {
      mcp::run_simulate(cfg, args.out_dir, options);
    } else if (oracle->parsed()) {
      if (!mcp::run_oracle(cfg, args.out_dir, options)) {
        std::cerr << "oracle: enumeration disagrees with the engine\n";
        return 1;
      }
    }
  } catch (const multicert::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const multicert::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const multicert::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
