#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "degaa/degaa.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitMissingPrerequisite = 3;
constexpr int kExitNumericFailure = 4;

struct CliOptions {
  std::string config_path;
  std::string out_dir = "runs/default";
  std::int64_t seed = -1;  // -1: keep config seed
  std::size_t seeds = 1;
  std::string stages = "gen,embed,warmup,adapt,eval";
  std::string study = "all";
};

degaa::RunConfig load_config(const CliOptions& opts) {
  degaa::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = degaa::parse_config(opts.config_path);
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  cfg.validate();
  return cfg;
}

std::set<degaa::Stage> parse_stages(const std::string& list) {
  std::set<degaa::Stage> stages;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) stages.insert(degaa::stage_from_name(item));
  }
  if (stages.empty()) throw degaa::ConfigError("empty stage list");
  return stages;
}

void run_stages(const CliOptions& opts, const std::set<degaa::Stage>& stages) {
  const degaa::RunConfig cfg = load_config(opts);
  degaa::run_seeds(cfg, stages, opts.seeds, opts.out_dir);
  if (stages.count(degaa::Stage::eval) && opts.seeds == 1) {
    const degaa::Metrics m = degaa::load_metrics(degaa::paths::metrics(opts.out_dir));
    std::cout << "os=" << degaa::format_double(m.os) << " os_star=" << degaa::format_double(m.os_star)
              << " unknown_recall=" << degaa::format_double(m.unknown_recall) << '\n';
  }
}

void run_ablations(const CliOptions& opts) {
  const degaa::RunConfig cfg = load_config(opts);
  std::vector<degaa::AblationKind> studies;
  if (opts.study == "all") {
    studies = {degaa::AblationKind::embedding, degaa::AblationKind::combine, degaa::AblationKind::aggregation,
               degaa::AblationKind::lof_dim, degaa::AblationKind::label_curve};
  } else {
    studies = {degaa::ablation_from_name(opts.study)};
  }
  for (const degaa::AblationKind kind : studies) {
    degaa::run_ablation(cfg, kind, opts.out_dir);
    std::cout << "wrote " << degaa::ablation_report_path(opts.out_dir, kind).string() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEGAA: open-set multi-source multi-target domain adaptation on synthetic benchmarks"};
  app.require_subcommand(1);

  CliOptions opts;
  const auto add_common = [&opts](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override the config seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic dataset bundle");
  CLI::App* embed = app.add_subcommand("embed", "train domain embeddings and write the embedding table");
  CLI::App* warmup = app.add_subcommand("warmup", "supervised source warm-up and centroid computation");
  CLI::App* adapt = app.add_subcommand("adapt", "pseudo-labelling and adaptation training");
  CLI::App* eval = app.add_subcommand("eval", "open-set evaluation of the adapted model");
  CLI::App* all = app.add_subcommand("all", "run the full pipeline");
  CLI::App* ablate = app.add_subcommand("ablate", "run ablation studies");
  for (CLI::App* cmd : {gen, embed, warmup, adapt, eval, all, ablate}) add_common(cmd);
  all->add_option("--stages", opts.stages, "comma-separated stage subset");
  all->add_option("--seeds", opts.seeds, "run this many consecutive seeds and average the metrics");
  eval->add_option("--seeds", opts.seeds, "evaluate this many consecutive seeds");
  ablate->add_option("--study", opts.study, "embedding | combine | aggregation | lof_dim | label_curve | all");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) run_stages(opts, {degaa::Stage::gen});
    if (embed->parsed()) run_stages(opts, {degaa::Stage::embed});
    if (warmup->parsed()) run_stages(opts, {degaa::Stage::warmup});
    if (adapt->parsed()) run_stages(opts, {degaa::Stage::adapt});
    if (eval->parsed()) run_stages(opts, {degaa::Stage::eval});
    if (all->parsed()) run_stages(opts, parse_stages(opts.stages));
    if (ablate->parsed()) run_ablations(opts);
  } catch (const degaa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const degaa::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const degaa::StageError& e) {
    std::cerr << "stage error: " << e.what() << '\n';
    return kExitMissingPrerequisite;
  } catch (const degaa::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
