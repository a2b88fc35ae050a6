#pragma once

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "degaa/adaptation.hpp"
#include "degaa/backbone.hpp"
#include "degaa/config.hpp"
#include "degaa/dataset.hpp"
#include "degaa/domain_embedding.hpp"
#include "degaa/graph_attention.hpp"
#include "degaa/lof.hpp"
#include "degaa/log.hpp"
#include "degaa/serialize.hpp"

namespace degaa {

enum class Stage { gen, embed, warmup, adapt, eval };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::gen: return "gen";
    case Stage::embed: return "embed";
    case Stage::warmup: return "warmup";
    case Stage::adapt: return "adapt";
    case Stage::eval: return "eval";
  }
  return "?";
}

inline Stage stage_from_name(const std::string& name) {
  for (const Stage s : {Stage::gen, Stage::embed, Stage::warmup, Stage::adapt, Stage::eval})
    if (name == stage_name(s)) return s;
  throw ConfigError("unknown stage '" + name + "' (expected gen, embed, warmup, adapt or eval)");
}

namespace paths {
inline std::filesystem::path bundle(const std::filesystem::path& out) { return out / "bundle.txt"; }
inline std::filesystem::path embedding(const std::filesystem::path& out) { return out / "embedding.json"; }
inline std::filesystem::path embed_log(const std::filesystem::path& out) { return out / "embed_log.csv"; }
inline std::filesystem::path warmup(const std::filesystem::path& out) { return out / "warmup.json"; }
inline std::filesystem::path warmup_log(const std::filesystem::path& out) { return out / "warmup_log.csv"; }
inline std::filesystem::path adapted(const std::filesystem::path& out) { return out / "adapted.json"; }
inline std::filesystem::path adapt_log(const std::filesystem::path& out) { return out / "adapt_log.csv"; }
inline std::filesystem::path adapt_refresh(const std::filesystem::path& out) { return out / "adapt_refresh.csv"; }
inline std::filesystem::path metrics(const std::filesystem::path& out) { return out / "metrics.json"; }
}  // namespace paths

inline void require_artifact(const std::filesystem::path& file, const char* producer) {
  if (!std::filesystem::exists(file))
    throw StageError("missing " + file.string() + "; run the '" + producer + "' stage first");
}

inline GaaOptions gaa_options(const RunConfig& cfg) {
  GaaOptions opts;
  opts.aggregation = cfg.gaa.aggregation;
  opts.scaled_attention = cfg.gaa.scaled_attention;
  opts.strict_intra = cfg.gaa.strict_intra;
  return opts;
}

inline std::uint64_t lof_projection_seed(const RunConfig& cfg) {
  return Rng(cfg.seed).fork("lof_projection").next_u64();
}

inline void run_stage_gen(const RunConfig& cfg, const std::filesystem::path& out) {
  log_info("gen: generating bundle (seed " + std::to_string(cfg.seed) + ")");
  const DatasetBundle bundle =
      generate_bundle(cfg.data.n_source, cfg.data.m_target, cfg.data.shared_classes, cfg.data.private_classes,
                      cfg.data.per_class, cfg.data.in_dim, cfg.resolved_domain_specs(), cfg.seed,
                      cfg.data.shared_radius, cfg.data.private_radius);
  save_bundle(paths::bundle(out), bundle, config_hash(cfg));
}

inline void run_stage_embed(const RunConfig& cfg, const std::filesystem::path& out) {
  require_artifact(paths::bundle(out), "gen");
  const DatasetBundle bundle = load_bundle(paths::bundle(out));
  const std::string hash = config_hash(cfg);
  EmbedTrainLog log;
  DomainEmbeddingTable table;
  if (cfg.ablation.use_domain_embedding) {
    log_info("embed: training domain embedding (" + std::to_string(cfg.embedding.episode.episodes) + " episodes)");
    Rng rng = Rng(cfg.seed).fork("embed");
    EmbeddingNet net = make_embedding_net(cfg.data.in_dim, cfg.embedding.hidden, cfg.embedding.d_e_dim, rng);
    net = train_embedding(bundle, std::move(net), cfg.embedding.episode, cfg.embedding.sgd, rng, &log);
    table = build_embedding_table(bundle, net);
  } else {
    log_info("embed: domain embedding disabled, writing zero table");
    table = zero_embedding_table(bundle, cfg.embedding.d_e_dim);
  }
  save_embedding_table(paths::embedding(out), table, cfg.embedding.d_e_dim, hash, cfg.seed);
  save_loss_log(paths::embed_log(out), log.loss, log.lr, hash, cfg.seed);
}

inline void run_stage_warmup(const RunConfig& cfg, const std::filesystem::path& out) {
  require_artifact(paths::bundle(out), "gen");
  require_artifact(paths::embedding(out), "embed");
  const DatasetBundle bundle = load_bundle(paths::bundle(out));
  int d_e_dim = 0;
  const DomainEmbeddingTable table = load_embedding_table(paths::embedding(out), &d_e_dim);
  if (d_e_dim != cfg.embedding.d_e_dim)
    throw ConfigError("warmup: embedding table dimension " + std::to_string(d_e_dim) + " does not match config " +
                      std::to_string(cfg.embedding.d_e_dim));
  log_info("warmup: supervised source training (" + std::to_string(cfg.backbone.warmup_steps) + " steps)");
  Rng rng = Rng(cfg.seed).fork("warmup");
  Backbone net = Backbone::make(cfg.data.in_dim, cfg.embedding.d_e_dim, cfg.backbone.combine_mode,
                                cfg.backbone.hidden, cfg.backbone.feat_dim, cfg.data.shared_classes, rng);
  WarmupLog log;
  warmup_train(bundle, table, net, cfg.backbone.sgd, cfg.backbone.warmup_steps, cfg.backbone.batch, rng, &log);
  const Centroids centroids = compute_centroids(bundle, table, net);
  const std::string hash = config_hash(cfg);
  save_warmup_checkpoint(paths::warmup(out), net, centroids, hash, cfg.seed);
  save_loss_log(paths::warmup_log(out), log.loss, log.lr, hash, cfg.seed);
}

inline void save_refresh_log(const std::filesystem::path& path, const AdaptResult& result, std::size_t refresh_period,
                             const std::string& hash, std::uint64_t seed) {
  std::ostringstream csv;
  csv << csv_comment(hash, seed) << "refresh,iter,pseudo_acc,unknown_recall\n";
  for (std::size_t r = 0; r < result.refresh_pseudo_acc.size(); ++r)
    csv << r << ',' << (r * refresh_period + 1) << ',' << format_double(result.refresh_pseudo_acc[r]) << ','
        << format_double(result.refresh_unknown_recall[r]) << '\n';
  atomic_write(path, csv.str());
}

inline void run_stage_adapt(const RunConfig& cfg, const std::filesystem::path& out) {
  require_artifact(paths::bundle(out), "gen");
  require_artifact(paths::embedding(out), "embed");
  require_artifact(paths::warmup(out), "warmup");
  const DatasetBundle bundle = load_bundle(paths::bundle(out));
  const DomainEmbeddingTable table = load_embedding_table(paths::embedding(out));
  WarmupCheckpoint warm = load_warmup_checkpoint(paths::warmup(out));
  log_info("adapt: " + std::to_string(cfg.adapt.outer_iters) + " x " + std::to_string(cfg.adapt.refresh_period) +
           " episodes");
  Rng init_rng = Rng(cfg.seed).fork("gaa_init");
  GaaNetwork gaa = GaaNetwork::make(static_cast<std::size_t>(cfg.backbone.feat_dim), cfg.gaa.heads, cfg.gaa.layers,
                                    static_cast<std::size_t>(cfg.data.shared_classes), init_rng);
  Rng rng = Rng(cfg.seed).fork("adapt");
  const AdaptResult result = run_adaptation(bundle, table, warm.backbone, warm.centroids, gaa, cfg.adapt,
                                            cfg.adapt_sgd, cfg.lof, lof_projection_seed(cfg), rng, gaa_options(cfg));
  const std::string hash = config_hash(cfg);
  save_adapted_checkpoint(paths::adapted(out), warm.backbone, gaa, result.centroids, hash, cfg.seed);
  save_adapt_log(paths::adapt_log(out), result.log, hash, cfg.seed);
  save_refresh_log(paths::adapt_refresh(out), result, cfg.adapt.refresh_period, hash, cfg.seed);
}

// Pseudo-label accuracy series as written by the adapt stage.
inline std::vector<double> load_refresh_pseudo_acc(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("refresh,", 0) == 0) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != 4) throw ParseError("refresh log: bad row '" + line + "'");
    out.push_back(parse_double(cells[2]));
  }
  return out;
}

inline Metrics run_stage_eval(const RunConfig& cfg, const std::filesystem::path& out) {
  require_artifact(paths::bundle(out), "gen");
  require_artifact(paths::embedding(out), "embed");
  require_artifact(paths::adapted(out), "adapt");
  const DatasetBundle bundle = load_bundle(paths::bundle(out));
  const DomainEmbeddingTable table = load_embedding_table(paths::embedding(out));
  const AdaptedCheckpoint ckpt = load_adapted_checkpoint(paths::adapted(out));
  log_info("eval: scoring " + std::to_string(bundle.role_indices(Role::target).size()) + " target samples");
  EvalOptions opts;
  opts.source_nodes_centroids = cfg.eval.source_nodes_centroids;
  opts.source_sample_count = cfg.eval.source_sample_count;
  opts.lof_projection_seed = lof_projection_seed(cfg);
  Rng rng = Rng(cfg.seed).fork("eval");
  Metrics metrics = evaluate(bundle, ckpt.backbone, ckpt.gaa, table, cfg.lof, gaa_options(cfg), opts, &rng);
  if (std::filesystem::exists(paths::adapt_refresh(out))) {
    const std::vector<double> series = load_refresh_pseudo_acc(paths::adapt_refresh(out));
    if (!series.empty()) metrics.pseudo_label_accuracy = series.back();
  }
  save_metrics(paths::metrics(out), metrics, cfg, config_hash(cfg));
  return metrics;
}

// Runs the requested stages in pipeline order. Prerequisites are read from
// disk, so completed stages can be reused across invocations.
inline void run_pipeline(const RunConfig& cfg, const std::set<Stage>& stages, const std::filesystem::path& out) {
  cfg.validate();
  std::filesystem::create_directories(out);
  if (stages.count(Stage::gen)) run_stage_gen(cfg, out);
  if (stages.count(Stage::embed)) run_stage_embed(cfg, out);
  if (stages.count(Stage::warmup)) run_stage_warmup(cfg, out);
  if (stages.count(Stage::adapt)) run_stage_adapt(cfg, out);
  if (stages.count(Stage::eval)) run_stage_eval(cfg, out);
}

inline const std::set<Stage>& all_stages() {
  static const std::set<Stage> stages{Stage::gen, Stage::embed, Stage::warmup, Stage::adapt, Stage::eval};
  return stages;
}

// ---------------------------------------------------------------------------
// Ablation studies. Every variant runs the full pipeline with the shared
// seed; only the ablated switch differs.

enum class AblationKind { embedding, combine, aggregation, lof_dim, label_curve };

inline const char* ablation_name(AblationKind k) {
  switch (k) {
    case AblationKind::embedding: return "embedding";
    case AblationKind::combine: return "combine";
    case AblationKind::aggregation: return "aggregation";
    case AblationKind::lof_dim: return "lof_dim";
    case AblationKind::label_curve: return "label_curve";
  }
  return "?";
}

inline AblationKind ablation_from_name(const std::string& name) {
  for (const AblationKind k : {AblationKind::embedding, AblationKind::combine, AblationKind::aggregation,
                               AblationKind::lof_dim, AblationKind::label_curve})
    if (name == ablation_name(k)) return k;
  throw ConfigError("unknown ablation '" + name +
                    "' (expected embedding, combine, aggregation, lof_dim or label_curve)");
}

inline std::filesystem::path ablation_report_path(const std::filesystem::path& out, AblationKind kind) {
  return out / (std::string("ablation_") + ablation_name(kind) + ".csv");
}

inline Metrics run_variant(const RunConfig& cfg, const std::filesystem::path& dir) {
  run_pipeline(cfg, all_stages(), dir);
  return load_metrics(paths::metrics(dir));
}

inline void run_ablation(const RunConfig& cfg, AblationKind kind, const std::filesystem::path& out) {
  cfg.validate();
  std::filesystem::create_directories(out);
  const std::filesystem::path base = out / (std::string("ablation_") + ablation_name(kind));
  std::ostringstream csv;
  csv << csv_comment(config_hash(cfg), cfg.seed);

  const auto metrics_row = [](const std::string& variant, const RunConfig& variant_cfg, const Metrics& m) {
    std::ostringstream row;
    row << variant << ',' << variant_cfg.seed << ',' << format_double(m.os) << ',' << format_double(m.os_star) << ','
        << format_double(m.unknown_recall) << '\n';
    return row.str();
  };

  switch (kind) {
    case AblationKind::embedding: {
      csv << "variant,seed,os,os_star,unknown_recall\n";
      for (const bool enabled : {true, false}) {
        RunConfig sub = cfg;
        sub.ablation.use_domain_embedding = enabled;
        const std::string variant = enabled ? "domain_embedding_on" : "domain_embedding_off";
        log_info("ablation embedding: " + variant);
        csv << metrics_row(variant, sub, run_variant(sub, base / variant));
      }
      break;
    }
    case AblationKind::combine: {
      csv << "variant,seed,os,os_star,unknown_recall\n";
      for (const CombineMode mode : {CombineMode::concat, CombineMode::elementwise_mul}) {
        RunConfig sub = cfg;
        sub.backbone.combine_mode = mode;
        sub.embedding.d_e_dim = cfg.data.in_dim;  // elementwise_mul needs matching dims; match the pair
        const std::string variant = combine_mode_name(mode);
        log_info("ablation combine: " + variant);
        csv << metrics_row(variant, sub, run_variant(sub, base / variant));
      }
      break;
    }
    case AblationKind::aggregation: {
      csv << "variant,seed,os,os_star,unknown_recall\n";
      for (const Aggregation agg : {Aggregation::attention, Aggregation::affinity}) {
        RunConfig sub = cfg;
        sub.gaa.aggregation = agg;
        const std::string variant = agg == Aggregation::attention ? "attention" : "affinity";
        log_info("ablation aggregation: " + variant);
        csv << metrics_row(variant, sub, run_variant(sub, base / variant));
      }
      break;
    }
    case AblationKind::lof_dim: {
      csv << "lof_dim,seed,os,os_star,unknown_recall\n";
      for (const std::size_t dim : cfg.ablation.lof_dims) {
        RunConfig sub = cfg;
        sub.lof.projection_dim = dim;
        log_info("ablation lof_dim: " + std::to_string(dim));
        const Metrics m = run_variant(sub, base / ("dim_" + std::to_string(dim)));
        csv << dim << ',' << sub.seed << ',' << format_double(m.os) << ',' << format_double(m.os_star) << ','
            << format_double(m.unknown_recall) << '\n';
      }
      break;
    }
    case AblationKind::label_curve: {
      csv << "refresh,iter,pseudo_acc\n";
      log_info("ablation label_curve");
      const std::filesystem::path dir = base / "run";
      run_pipeline(cfg, all_stages(), dir);
      std::istringstream in(read_file(paths::adapt_refresh(dir)));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("refresh,", 0) == 0) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        csv << cells[0] << ',' << cells[1] << ',' << cells[2] << '\n';
      }
      break;
    }
  }
  atomic_write(ablation_report_path(out, kind), csv.str());
}

// ---------------------------------------------------------------------------
// Multi-seed runs: seed_<s>/ subdirectories plus an aggregate report.

inline void run_seeds(const RunConfig& cfg, const std::set<Stage>& stages, std::size_t n_seeds,
                      const std::filesystem::path& out) {
  if (n_seeds == 0) throw ConfigError("run_seeds: need at least one seed");
  std::filesystem::create_directories(out);
  std::vector<Metrics> per_seed;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    RunConfig sub = cfg;
    sub.seed = cfg.seed + i;
    seeds.push_back(sub.seed);
    const std::filesystem::path dir = n_seeds == 1 ? out : out / ("seed_" + std::to_string(sub.seed));
    run_pipeline(sub, stages, dir);
    if (stages.count(Stage::eval)) per_seed.push_back(load_metrics(paths::metrics(dir)));
  }
  if (per_seed.empty() || n_seeds == 1) return;
  json doc{{"config_hash", config_hash(cfg)}, {"seeds", seeds}};
  double os = 0.0, os_star = 0.0, unknown = 0.0;
  json rows = json::array();
  for (std::size_t i = 0; i < per_seed.size(); ++i) {
    rows.push_back(json{{"seed", seeds[i]},
                        {"os", per_seed[i].os},
                        {"os_star", per_seed[i].os_star},
                        {"unknown_recall", per_seed[i].unknown_recall}});
    os += per_seed[i].os;
    os_star += per_seed[i].os_star;
    unknown += per_seed[i].unknown_recall;
  }
  const double n = static_cast<double>(per_seed.size());
  doc["per_seed"] = rows;
  doc["mean"] = json{{"os", os / n}, {"os_star", os_star / n}, {"unknown_recall", unknown / n}};
  atomic_write(out / "metrics_mean.json", doc.dump(2) + "\n");
}

}  // namespace degaa
