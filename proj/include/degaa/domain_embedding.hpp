#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "degaa/dataset.hpp"
#include "degaa/mlp.hpp"
#include "degaa/optim.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

// Embedding network G: in_dim -> d_e_dim, trained episodically on domain
// membership alone; labels are never touched.
struct EmbeddingNet {
  Mlp mlp;

  std::size_t out_dim() const { return mlp.out_dim(); }
};

inline EmbeddingNet make_embedding_net(int in_dim, const std::vector<std::size_t>& hidden, int d_e_dim, Rng& rng) {
  std::vector<std::size_t> dims;
  dims.push_back(static_cast<std::size_t>(in_dim));
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(static_cast<std::size_t>(d_e_dim));
  return EmbeddingNet{Mlp::he_init(dims, rng)};
}

struct EpisodeConfig {
  int domains_per_episode = 4;  // N_t
  int support_points = 10;      // N_s
  int query_points = 10;        // N_q
  int episodes = 400;           // N

  void validate() const {
    if (domains_per_episode < 2) throw ConfigError("episode: domains_per_episode must be >= 2");
    if (support_points < 1 || query_points < 1) throw ConfigError("episode: support and query counts must be >= 1");
    if (episodes < 0) throw ConfigError("episode: episodes must be non-negative");
  }
};

struct Episode {
  struct PerDomain {
    int domain_id = 0;
    std::vector<std::size_t> support;  // indices into bundle.samples
    std::vector<std::size_t> query;
  };
  std::vector<PerDomain> domains;
};

// Mean embedding of a point set: (1/N) sum G(x). Accumulated exactly, so the
// result is invariant under permutation and duplication of the set.
inline std::vector<double> kme(const std::vector<std::vector<double>>& points, const EmbeddingNet& net) {
  if (points.empty()) throw ContractError("kme: empty point set");
  const std::size_t d = net.out_dim();
  std::vector<ExactSum> acc(d);
  for (const auto& x : points) {
    const Tensor e = net.mlp.apply_values(Tensor::row(x));
    for (std::size_t j = 0; j < d; ++j) acc[j].add(e(0, j));
  }
  std::vector<double> mean(d);
  for (std::size_t j = 0; j < d; ++j) mean[j] = acc[j].value() / static_cast<double>(points.size());
  return mean;
}

inline std::vector<double> kme_of_domain(const DatasetBundle& bundle, int domain, const EmbeddingNet& net) {
  std::vector<std::vector<double>> points;
  for (const std::size_t i : bundle.domain_indices(domain)) points.push_back(bundle.samples[i].x);
  return kme(points, net);
}

inline Episode sample_episode(const DatasetBundle& bundle, const EpisodeConfig& cfg, Rng& rng) {
  cfg.validate();
  const int total = bundle.total_domains();
  if (cfg.domains_per_episode > total)
    throw ConfigError("episode: domains_per_episode " + std::to_string(cfg.domains_per_episode) + " exceeds " +
                      std::to_string(total) + " domains");
  Episode episode;
  const auto chosen =
      rng.sample_without_replacement(static_cast<std::size_t>(total), static_cast<std::size_t>(cfg.domains_per_episode));
  for (const std::size_t d : chosen) {
    const std::vector<std::size_t> members = bundle.domain_indices(static_cast<int>(d));
    const std::size_t need = static_cast<std::size_t>(cfg.support_points + cfg.query_points);
    if (members.size() < need)
      throw ConfigError("episode: domain " + std::to_string(d) + " has " + std::to_string(members.size()) +
                        " points, needs " + std::to_string(need));
    const auto picks = rng.sample_without_replacement(members.size(), need);
    Episode::PerDomain pd;
    pd.domain_id = static_cast<int>(d);
    for (int i = 0; i < cfg.support_points; ++i) pd.support.push_back(members[picks[static_cast<std::size_t>(i)]]);
    for (int i = 0; i < cfg.query_points; ++i)
      pd.query.push_back(members[picks[static_cast<std::size_t>(cfg.support_points + i)]]);
    episode.domains.push_back(std::move(pd));
  }
  return episode;
}

// Negative log-likelihood of each query point's own domain under a softmax
// over negative squared distances to the support prototypes. Gradients flow
// into the net through both the query embeddings and the prototypes.
inline Var prototypical_loss(Tape& tape, const DatasetBundle& bundle, const Episode& episode, const EmbeddingNet& net,
                             const Binding& bind) {
  const std::size_t n_dom = episode.domains.size();
  if (n_dom < 2) throw ContractError("prototypical_loss: need at least 2 domains in the episode");

  // One forward pass over every episode point: supports first, per domain.
  std::vector<std::size_t> point_ids;
  std::vector<std::size_t> support_offset(n_dom), support_count(n_dom);
  std::vector<std::size_t> query_offset(n_dom), query_count(n_dom);
  for (std::size_t d = 0; d < n_dom; ++d) {
    support_offset[d] = point_ids.size();
    support_count[d] = episode.domains[d].support.size();
    for (const std::size_t i : episode.domains[d].support) point_ids.push_back(i);
  }
  for (std::size_t d = 0; d < n_dom; ++d) {
    query_offset[d] = point_ids.size();
    query_count[d] = episode.domains[d].query.size();
    for (const std::size_t i : episode.domains[d].query) point_ids.push_back(i);
  }
  const std::size_t total = point_ids.size();
  const std::size_t in_dim = static_cast<std::size_t>(bundle.in_dim);
  Tensor inputs(total, in_dim);
  for (std::size_t r = 0; r < total; ++r)
    for (std::size_t j = 0; j < in_dim; ++j) inputs(r, j) = bundle.samples[point_ids[r]].x[j];

  const Var embeddings = net.mlp.apply(tape, bind, tape.constant(std::move(inputs)));
  const std::size_t d_e = net.out_dim();

  // Prototypes: averaging selector over support rows.
  Tensor proto_sel(n_dom, total);
  std::size_t n_query = 0;
  for (std::size_t d = 0; d < n_dom; ++d) {
    for (std::size_t k = 0; k < support_count[d]; ++k)
      proto_sel(d, support_offset[d] + k) = 1.0 / static_cast<double>(support_count[d]);
    n_query += query_count[d];
  }
  Tensor query_sel(n_query, total);
  std::vector<int> query_domain(n_query);
  std::size_t q = 0;
  for (std::size_t d = 0; d < n_dom; ++d)
    for (std::size_t k = 0; k < query_count[d]; ++k, ++q) {
      query_sel(q, query_offset[d] + k) = 1.0;
      query_domain[q] = static_cast<int>(d);
    }

  const Var protos = tape.matmul(tape.constant(std::move(proto_sel)), embeddings);   // [n_dom, d_e]
  const Var queries = tape.matmul(tape.constant(std::move(query_sel)), embeddings);  // [n_query, d_e]

  // Squared distances via |q|^2 + |p|^2 - 2 q.p, all broadcast through
  // constant ones matrices.
  const Var ones_col = tape.constant(Tensor::filled(d_e, 1, 1.0));
  const Var q_norm = tape.matmul(tape.elementwise_mul(queries, queries), ones_col);  // [n_query, 1]
  const Var p_norm = tape.matmul(tape.elementwise_mul(protos, protos), ones_col);    // [n_dom, 1]
  const Var q_norm_b = tape.matmul(q_norm, tape.constant(Tensor::filled(1, n_dom, 1.0)));
  const Var p_norm_b = tape.matmul(tape.constant(Tensor::filled(n_query, 1, 1.0)), tape.transpose(p_norm));
  const Var gram = tape.matmul(queries, tape.transpose(protos));
  const Var dist2 = tape.add(tape.add(q_norm_b, p_norm_b), tape.scale(gram, -2.0));

  const Var probs = tape.softmax_rows(tape.scale(dist2, -1.0));
  return tape.cross_entropy(probs, std::move(query_domain));
}

inline double prototypical_loss_value(const DatasetBundle& bundle, const Episode& episode, const EmbeddingNet& net) {
  Tape tape;
  auto& writable = const_cast<EmbeddingNet&>(net);  // read-only binding, never stepped
  ParamSet set;
  writable.mlp.collect_params(set);
  Binding bind(tape, set, false);
  return tape.value(prototypical_loss(tape, bundle, episode, writable, bind))[0];
}

struct EmbedTrainLog {
  std::vector<double> loss;
  std::vector<double> lr;
};

inline EmbeddingNet train_embedding(const DatasetBundle& bundle, EmbeddingNet net, const EpisodeConfig& cfg,
                                    SgdConfig sgd, Rng& rng, EmbedTrainLog* log = nullptr) {
  cfg.validate();
  sgd.total_steps = cfg.episodes > 0 ? static_cast<std::size_t>(cfg.episodes) : 1;
  sgd.validate();
  ParamSet set;
  net.mlp.collect_params(set);
  SgdOptimizer opt(set, sgd.momentum);
  for (int episode_idx = 0; episode_idx < cfg.episodes; ++episode_idx) {
    const Episode episode = sample_episode(bundle, cfg, rng);
    Tape tape;
    Binding bind(tape, set, true);
    const Var loss = prototypical_loss(tape, bundle, episode, net, bind);
    tape.backward(loss);
    const double lr = cosine_lr(static_cast<std::size_t>(episode_idx), sgd);
    opt.step(set, bind.grads(tape), lr);
    if (log != nullptr) {
      log->loss.push_back(tape.value(loss)[0]);
      log->lr.push_back(lr);
    }
  }
  return net;
}

using DomainEmbeddingTable = std::map<int, std::vector<double>>;

inline DomainEmbeddingTable build_embedding_table(const DatasetBundle& bundle, const EmbeddingNet& net) {
  DomainEmbeddingTable table;
  for (int d = 0; d < bundle.total_domains(); ++d) table[d] = kme_of_domain(bundle, d, net);
  return table;
}

}  // namespace degaa
