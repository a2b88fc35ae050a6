#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "degaa/backbone.hpp"
#include "degaa/dataset.hpp"
#include "degaa/graph_attention.hpp"
#include "degaa/lof.hpp"
#include "degaa/optim.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

struct AdaptConfig {
  double lambda = 0.5;               // target loss weight
  std::size_t refresh_period = 50;   // episodes per pseudo-label batch (K)
  std::size_t outer_iters = 20;      // N''
  std::size_t source_batch = 32;     // n'
  std::size_t target_batch = 32;     // m'
  bool refresh_centroids = true;
  bool resample_per_episode = false;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("adapt: lambda must be >= 0");
    if (refresh_period < 1) throw ConfigError("adapt: refresh_period must be >= 1");
    if (source_batch < 1 || target_batch < 1) throw ConfigError("adapt: batch sizes must be >= 1");
  }
};

struct Metrics {
  double os = 0.0;
  double os_star = 0.0;
  double unknown_recall = 0.0;
  std::map<int, double> per_class_accuracy;  // includes the unknown id
  std::optional<double> pseudo_label_accuracy;
};

// Normalized (per-class mean) accuracies. os is derived from os_star and the
// unknown recall through the exact identity
//   os = (C_s * os_star + unknown_recall) / (C_s + 1)
// so the two routes agree bit-for-bit. Classes with no truth samples count a
// recall of 0 (relevant only when there are no private classes).
inline Metrics metrics_from_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                        int shared_classes) {
  if (predicted.size() != truth.size())
    throw DimensionError("metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " truths");
  const int unknown = shared_classes;
  std::map<int, std::size_t> total, correct;
  for (int c = 0; c <= unknown; ++c) total[c] = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] > unknown)
      throw ContractError("metrics: truth label " + std::to_string(truth[i]) + " out of range");
    ++total[truth[i]];
    if (predicted[i] == truth[i]) ++correct[truth[i]];
  }
  Metrics m;
  double known_sum = 0.0;
  for (int c = 0; c <= unknown; ++c) {
    const double recall =
        total[c] == 0 ? 0.0 : static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    m.per_class_accuracy[c] = recall;
    if (c < unknown)
      known_sum += recall;
    else
      m.unknown_recall = recall;
  }
  m.os_star = known_sum / static_cast<double>(shared_classes);
  m.os = (static_cast<double>(shared_classes) * m.os_star + m.unknown_recall) /
         static_cast<double>(shared_classes + 1);
  return m;
}

// One episode of the joint loss: cross-entropy on source nodes plus
// lambda-weighted cross-entropy on the LOF-known target nodes, through the
// full backbone + aggregation stack. Returns the loss and, when grads_out is
// given, gradients aligned with `trainable`. With an empty known set the
// target term vanishes and the graph runs source-only.
inline double adaptation_step(const DatasetBundle& bundle, const DomainEmbeddingTable& table,
                              const std::vector<std::size_t>& source_idx, const std::vector<std::size_t>& target_idx,
                              const PseudoLabelSet& pseudo, Backbone& backbone, GaaNetwork& gaa, double lambda,
                              GaaOptions gaa_opts, ParamSet& trainable, std::vector<Tensor>* grads_out) {
  const std::size_t n_src = source_idx.size();
  if (n_src == 0) throw ContractError("adaptation_step: empty source batch");
  std::vector<int> source_labels;
  source_labels.reserve(n_src);
  for (const std::size_t i : source_idx) source_labels.push_back(bundle.samples[i].label);

  std::vector<std::size_t> known_samples;
  std::vector<int> pseudo_labels;
  for (const std::size_t pos : pseudo.known) {
    known_samples.push_back(target_idx.at(pos));
    pseudo_labels.push_back(pseudo.labels.at(pos));
  }
  const std::size_t n_known = known_samples.size();
  const std::size_t n_nodes = n_src + n_known;
  if (n_known == 0) gaa_opts.allow_missing_role = true;

  Tape tape;
  Binding bind(tape, trainable, grads_out != nullptr);

  const Var src_feats = backbone.mlp.apply(tape, bind, tape.constant(combined_batch(backbone, bundle, source_idx, table)));
  Var nodes = src_feats;
  if (n_known > 0) {
    const Var tgt_feats =
        backbone.mlp.apply(tape, bind, tape.constant(combined_batch(backbone, bundle, known_samples, table)));
    // Stack rows through constant injection matrices.
    Tensor inj_src(n_nodes, n_src);
    for (std::size_t i = 0; i < n_src; ++i) inj_src(i, i) = 1.0;
    Tensor inj_tgt(n_nodes, n_known);
    for (std::size_t i = 0; i < n_known; ++i) inj_tgt(n_src + i, i) = 1.0;
    nodes = tape.add(tape.matmul(tape.constant(std::move(inj_src)), src_feats),
                     tape.matmul(tape.constant(std::move(inj_tgt)), tgt_feats));
  }

  GraphBatch batch;
  batch.features = tape.value(nodes);
  for (const std::size_t i : source_idx) {
    batch.roles.push_back(Role::source);
    batch.domain_ids.push_back(bundle.samples[i].domain_id);
  }
  for (const std::size_t i : known_samples) {
    batch.roles.push_back(Role::target);
    batch.domain_ids.push_back(bundle.samples[i].domain_id);
  }

  Var logits{-1};
  gaa_apply(tape, bind, nodes, gaa, batch, gaa_opts, nullptr, &logits);
  const Var probs = tape.softmax_rows(logits);

  Tensor sel_src(n_src, n_nodes);
  for (std::size_t i = 0; i < n_src; ++i) sel_src(i, i) = 1.0;
  const Var source_ce = tape.cross_entropy(tape.matmul(tape.constant(std::move(sel_src)), probs), source_labels);

  Var loss = source_ce;
  if (n_known > 0 && lambda > 0.0) {
    Tensor sel_tgt(n_known, n_nodes);
    for (std::size_t i = 0; i < n_known; ++i) sel_tgt(i, n_src + i) = 1.0;
    const Var target_ce = tape.cross_entropy(tape.matmul(tape.constant(std::move(sel_tgt)), probs), pseudo_labels);
    loss = tape.add(source_ce, tape.scale(target_ce, lambda));
  }

  if (grads_out != nullptr) {
    tape.backward(loss);
    *grads_out = bind.grads(tape);
  }
  return tape.value(loss)[0];
}

struct AdaptLogRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double lr = 0.0;
  double pseudo_acc = 0.0;
  double unknown_recall = 0.0;
};

struct AdaptResult {
  std::vector<AdaptLogRow> log;
  std::vector<double> refresh_pseudo_acc;      // one entry per refresh
  std::vector<double> refresh_unknown_recall;  // vacuously 1 when the batch has no private samples
  Centroids centroids;
};

// Outer loop: every refresh_period episodes draw fresh batches, re-run the
// LOF partition and nearest-centroid labelling (optionally recomputing
// centroids from the current extractor), then train on the frozen
// pseudo-labels. Pseudo-label accuracy against eval_truth is diagnostic
// logging only; it feeds no gradient.
inline AdaptResult run_adaptation(const DatasetBundle& bundle, const DomainEmbeddingTable& table, Backbone& backbone,
                                  Centroids centroids, GaaNetwork& gaa, const AdaptConfig& cfg, SgdConfig sgd,
                                  const LofConfig& lof, std::uint64_t lof_projection_seed, Rng& rng,
                                  const GaaOptions& gaa_opts = {}) {
  cfg.validate();
  lof.validate();
  AdaptResult result;
  result.centroids = std::move(centroids);
  if (cfg.outer_iters == 0) return result;

  sgd.total_steps = cfg.outer_iters * cfg.refresh_period;
  sgd.validate();
  ParamSet trainable;
  backbone.collect_feature_params(trainable);
  gaa.collect_params(trainable);
  SgdOptimizer opt(trainable, sgd.momentum);

  BatchStream source_stream(bundle, Role::source, cfg.source_batch);
  BatchStream target_stream(bundle, Role::target, cfg.target_batch);

  std::vector<std::size_t> source_idx, target_idx;
  PseudoLabelSet pseudo;
  double pseudo_acc = 0.0, unknown_recall = 1.0;

  const auto refresh = [&]() {
    source_idx = source_stream.next(rng);
    target_idx = target_stream.next(rng);
    if (cfg.refresh_centroids) result.centroids = compute_centroids(bundle, table, backbone);
    const Tensor feats = extract_batch(backbone, bundle, target_idx, table);
    pseudo = pseudo_label(feats, lof, lof_projection_seed, result.centroids);

    std::size_t correct = 0;
    for (const std::size_t pos : pseudo.known)
      if (pseudo.labels.at(pos) == bundle.eval_truth[target_idx[pos]]) ++correct;
    pseudo_acc = pseudo.known.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pseudo.known.size());

    std::size_t private_total = 0, private_flagged = 0;
    for (std::size_t pos = 0; pos < target_idx.size(); ++pos) {
      if (bundle.eval_truth[target_idx[pos]] != bundle.unknown_id()) continue;
      ++private_total;
      for (const std::size_t u : pseudo.unknown)
        if (u == pos) {
          ++private_flagged;
          break;
        }
    }
    unknown_recall =
        private_total == 0 ? 1.0 : static_cast<double>(private_flagged) / static_cast<double>(private_total);
    result.refresh_pseudo_acc.push_back(pseudo_acc);
    result.refresh_unknown_recall.push_back(unknown_recall);
  };

  std::size_t step = 0;
  for (std::size_t outer = 0; outer < cfg.outer_iters; ++outer) {
    refresh();
    for (std::size_t episode = 0; episode < cfg.refresh_period; ++episode) {
      if (cfg.resample_per_episode && episode > 0) refresh();
      std::vector<Tensor> grads;
      const double loss = adaptation_step(bundle, table, source_idx, target_idx, pseudo, backbone, gaa, cfg.lambda,
                                          gaa_opts, trainable, &grads);
      const double lr = cosine_lr(step, sgd);
      opt.step(trainable, grads, lr);
      ++step;
      result.log.push_back({step, loss, lr, pseudo_acc, unknown_recall});
    }
  }
  return result;
}

struct EvalOptions {
  bool source_nodes_centroids = true;      // otherwise a sampled source batch
  std::size_t source_sample_count = 32;    // used when sampling
  std::uint64_t lof_projection_seed = 0;
};

// Open-set evaluation over every target sample: LOF on the full target
// feature set decides unknown; the rest are classified through the
// aggregation stack against source-side nodes (class centroids by default,
// guaranteeing cross edges).
inline Metrics evaluate(const DatasetBundle& bundle, const Backbone& backbone, const GaaNetwork& gaa,
                        const DomainEmbeddingTable& table, const LofConfig& lof, const GaaOptions& gaa_opts = {},
                        const EvalOptions& opts = {}, Rng* rng = nullptr) {
  lof.validate();
  const std::vector<std::size_t> target_idx = bundle.role_indices(Role::target);
  if (target_idx.empty()) throw ContractError("evaluate: bundle has no target samples");

  const Tensor feats = extract_batch(backbone, bundle, target_idx, table);
  const std::vector<double> scores =
      lof_scores(project_features(feats, lof, opts.lof_projection_seed), lof_effective_k(lof, feats.rows()),
                 lof.epsilon);

  std::vector<std::size_t> known_pos;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!(scores[i] > lof.threshold)) known_pos.push_back(i);

  std::vector<int> predictions(target_idx.size(), bundle.unknown_id());
  if (!known_pos.empty()) {
    // Source-side nodes.
    Tensor src_feats;
    std::vector<int> src_domains;
    if (opts.source_nodes_centroids) {
      const Centroids centroids = compute_centroids(bundle, table, backbone);
      src_feats = Tensor(centroids.size(), static_cast<std::size_t>(backbone.feat_dim));
      std::size_t r = 0;
      for (const auto& [cls, center] : centroids) {
        for (std::size_t c = 0; c < center.size(); ++c) src_feats(r, c) = center[c];
        src_domains.push_back(-(1 + cls));  // distinct pseudo-domains
        ++r;
      }
    } else {
      if (rng == nullptr) throw ContractError("evaluate: sampled source nodes need an rng");
      BatchStream stream(bundle, Role::source, opts.source_sample_count);
      const std::vector<std::size_t> src_idx = stream.next(*rng);
      src_feats = extract_batch(backbone, bundle, src_idx, table);
      for (const std::size_t i : src_idx) src_domains.push_back(bundle.samples[i].domain_id);
    }

    const std::size_t n_src = src_feats.rows();
    GraphBatch batch;
    batch.features = Tensor(n_src + known_pos.size(), static_cast<std::size_t>(backbone.feat_dim));
    for (std::size_t i = 0; i < n_src; ++i)
      for (std::size_t c = 0; c < src_feats.cols(); ++c) batch.features(i, c) = src_feats(i, c);
    for (std::size_t k = 0; k < known_pos.size(); ++k)
      for (std::size_t c = 0; c < feats.cols(); ++c) batch.features(n_src + k, c) = feats(known_pos[k], c);
    for (std::size_t i = 0; i < n_src; ++i) {
      batch.roles.push_back(Role::source);
      batch.domain_ids.push_back(src_domains[i]);
    }
    for (const std::size_t pos : known_pos) {
      batch.roles.push_back(Role::target);
      batch.domain_ids.push_back(bundle.samples[target_idx[pos]].domain_id);
    }

    const GaaOutput out = gaa_forward(batch, gaa, gaa_opts);
    for (std::size_t k = 0; k < known_pos.size(); ++k) {
      const std::size_t row = n_src + k;
      int best = 0;
      for (std::size_t c = 1; c < out.logits.cols(); ++c)
        if (out.logits(row, c) > out.logits(row, best)) best = static_cast<int>(c);
      predictions[known_pos[k]] = best;
    }
  }

  std::vector<int> truth;
  truth.reserve(target_idx.size());
  for (const std::size_t i : target_idx) truth.push_back(bundle.eval_truth[i]);
  return metrics_from_predictions(predictions, truth, bundle.shared_classes);
}

}  // namespace degaa
