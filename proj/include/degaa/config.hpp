#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "degaa/adaptation.hpp"
#include "degaa/backbone.hpp"
#include "degaa/dataset.hpp"
#include "degaa/domain_embedding.hpp"
#include "degaa/graph_attention.hpp"
#include "degaa/lof.hpp"
#include "degaa/optim.hpp"

namespace degaa {

struct DataConfig {
  int n_source = 2;
  int m_target = 2;
  int shared_classes = 6;
  int private_classes = 3;
  int per_class = 50;
  int in_dim = 16;
  double shared_radius = 10.0;
  double private_radius = 20.0;
  std::vector<DomainSpec> domain_specs;  // empty: benchmark defaults are built at gen time

  void validate() const {
    if (n_source < 1 || m_target < 1) throw ConfigError("data: n_source and m_target must be >= 1");
    if (shared_classes < 2) throw ConfigError("data: shared_classes must be >= 2");
    if (private_classes < 0) throw ConfigError("data: private_classes must be >= 0");
    if (per_class < 1) throw ConfigError("data: per_class must be >= 1");
    if (in_dim < 2) throw ConfigError("data: in_dim must be >= 2");
    if (!domain_specs.empty() && domain_specs.size() != static_cast<std::size_t>(n_source + m_target))
      throw ConfigError("data: domain_specs must list one spec per domain");
    for (const DomainSpec& s : domain_specs) s.validate();
  }
};

// Benchmark shift pattern: sources mildly rotated, targets rotated further,
// translated off-plane and slightly rescaled, all with the same noise level.
inline std::vector<DomainSpec> default_domain_specs(int n_source, int m_target, int in_dim) {
  std::vector<DomainSpec> specs;
  for (int d = 0; d < n_source; ++d) {
    DomainSpec s;
    s.rotation = 0.12 * d;
    s.scale = 1.0;
    s.noise_sigma = 0.8;
    s.translation.assign(static_cast<std::size_t>(in_dim), 0.0);
    if (in_dim > 2) s.translation[2] = 0.8 * d;
    specs.push_back(std::move(s));
  }
  for (int j = 0; j < m_target; ++j) {
    DomainSpec s;
    s.rotation = 0.5 + 0.18 * j;
    s.scale = 1.08 + 0.04 * j;
    s.noise_sigma = 0.8;
    s.translation.assign(static_cast<std::size_t>(in_dim), 0.0);
    if (in_dim > 2) s.translation[2] = 2.5;
    if (in_dim > 3) s.translation[3] = (j % 2 == 0) ? 1.5 : -1.5;
    specs.push_back(std::move(s));
  }
  return specs;
}

struct EmbeddingConfig {
  int d_e_dim = 32;
  std::vector<std::size_t> hidden = {64};
  EpisodeConfig episode;
  SgdConfig sgd{0.05, 0.005, 1, 0.9};

  void validate() const {
    if (d_e_dim < 1) throw ConfigError("embedding: d_e_dim must be >= 1");
    episode.validate();
  }
};

struct BackboneConfig {
  int feat_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  CombineMode combine_mode = CombineMode::concat;
  std::size_t warmup_steps = 500;
  std::size_t batch = 64;
  SgdConfig sgd{0.05, 0.005, 1, 0.9};

  void validate() const {
    if (feat_dim < 1) throw ConfigError("backbone: feat_dim must be >= 1");
    if (batch < 1) throw ConfigError("backbone: batch must be >= 1");
  }
};

struct GaaConfig {
  std::size_t layers = 3;
  std::size_t heads = 2;
  bool scaled_attention = false;
  bool strict_intra = false;
  Aggregation aggregation = Aggregation::attention;

  void validate() const {
    if (layers < 1) throw ConfigError("gaa: layers must be >= 1");
    if (heads < 1) throw ConfigError("gaa: heads must be >= 1");
  }
};

struct EvalConfig {
  bool source_nodes_centroids = true;
  std::size_t source_sample_count = 32;
};

struct AblationConfig {
  bool use_domain_embedding = true;
  std::vector<std::size_t> lof_dims = {8, 16, 32, 64};
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  EmbeddingConfig embedding;
  BackboneConfig backbone;
  LofConfig lof;
  GaaConfig gaa;
  AdaptConfig adapt;
  SgdConfig adapt_sgd{0.02, 0.002, 1, 0.9};

  EvalConfig eval;
  AblationConfig ablation;

  void validate() const {
    data.validate();
    embedding.validate();
    backbone.validate();
    lof.validate();
    gaa.validate();
    adapt.validate();
    if (backbone.combine_mode == CombineMode::elementwise_mul && embedding.d_e_dim != data.in_dim)
      throw ConfigError("backbone: elementwise_mul requires embedding.d_e_dim == data.in_dim");
    if (static_cast<std::size_t>(backbone.feat_dim) % gaa.heads != 0)
      throw ConfigError("gaa: backbone.feat_dim must be divisible by gaa.heads");
    if (gaa.layers >= 2 && (adapt.source_batch == 0 || adapt.target_batch == 0))
      throw ConfigError("adapt: cross layers need non-empty source and target batches");
    const double lr_pairs[3][2] = {{embedding.sgd.lr_max, embedding.sgd.lr_min},
                                   {backbone.sgd.lr_max, backbone.sgd.lr_min},
                                   {adapt_sgd.lr_max, adapt_sgd.lr_min}};
    for (const auto& p : lr_pairs)
      if (!(p[1] > 0.0) || !(p[1] <= p[0])) throw ConfigError("sgd: requires 0 < lr_min <= lr_max");
  }

  std::vector<DomainSpec> resolved_domain_specs() const {
    return data.domain_specs.empty() ? default_domain_specs(data.n_source, data.m_target, data.in_dim)
                                     : data.domain_specs;
  }
};

}  // namespace degaa
