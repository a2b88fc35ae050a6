#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "degaa/dataset.hpp"
#include "degaa/mlp.hpp"
#include "degaa/optim.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

enum class EdgeMode { self, cross };
enum class Aggregation { attention, affinity };

inline const char* edge_mode_name(EdgeMode m) { return m == EdgeMode::self ? "self" : "cross"; }

// One node per sample. Row r of features belongs to roles[r] / domain_ids[r].
struct GraphBatch {
  Tensor features;  // [N, feat_dim]
  std::vector<Role> roles;
  std::vector<int> domain_ids;

  std::size_t node_count() const { return roles.size(); }

  void validate() const {
    if (features.rows() != roles.size() || roles.size() != domain_ids.size())
      throw DimensionError("graph batch: features " + features.shape_string() + " vs " +
                           std::to_string(roles.size()) + " roles, " + std::to_string(domain_ids.size()) +
                           " domain ids");
  }
};

struct GaaOptions {
  Aggregation aggregation = Aggregation::attention;
  bool scaled_attention = false;  // divide logits by sqrt(head_dim)
  bool strict_intra = false;      // self edges only between different domains of the same role
  bool allow_missing_role = false;  // cross layers emit zero messages instead of erroring
};

// Directed pairs (receiver, sender). Self mode connects same-role nodes
// (i != j), cross mode connects opposite roles; both are complete within
// their pattern. strict_intra drops same-domain self pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> edge_set(const GraphBatch& batch, EdgeMode mode,
                                                                 bool strict_intra = false) {
  batch.validate();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  const std::size_t n = batch.node_count();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool same_role = batch.roles[i] == batch.roles[j];
      if (mode == EdgeMode::self) {
        if (!same_role) continue;
        if (strict_intra && batch.domain_ids[i] == batch.domain_ids[j]) continue;
        edges.emplace_back(i, j);
      } else if (!same_role) {
        edges.emplace_back(i, j);
      }
    }
  return edges;
}

// mask(i,j) = 1 iff j sends to i; has_neighbor(i,0) = 1 iff row i has any sender.
struct EdgeMask {
  Tensor mask;
  Tensor has_neighbor;
};

inline EdgeMask build_edge_mask(const GraphBatch& batch, EdgeMode mode, bool strict_intra) {
  const std::size_t n = batch.node_count();
  EdgeMask out{Tensor(n, n), Tensor(n, 1)};
  for (const auto& [i, j] : edge_set(batch, mode, strict_intra)) {
    out.mask(i, j) = 1.0;
    out.has_neighbor(i, 0) = 1.0;
  }
  return out;
}

// Per-head projections (query/key/value), the multi-head merge matrix, and
// the residual update MLP. edge_mode is fixed by layer parity: self on odd
// 1-based layers, cross on even ones.
struct GaaLayer {
  std::vector<Tensor> wq, bq, wk, bk, wv, bv;  // per head, [f, f/h] and [1, f/h]
  Tensor merge;                                // [f, f]
  Mlp update;                                  // [2f -> f -> f], zero-initialized last layer
  EdgeMode edge_mode = EdgeMode::self;

  std::size_t heads() const { return wq.size(); }

  void collect_params(ParamSet& set) {
    for (std::size_t h = 0; h < wq.size(); ++h) {
      set.add(wq[h]);
      set.add(bq[h]);
      set.add(wk[h]);
      set.add(bk[h]);
      set.add(wv[h]);
      set.add(bv[h]);
    }
    set.add(merge);
    update.collect_params(set);
  }
};

struct GaaNetwork {
  std::vector<GaaLayer> layers;
  Tensor cls_w;  // [f, classes]
  Tensor cls_b;  // [1, classes]
  std::size_t feat_dim = 0;
  std::size_t heads = 0;
  std::size_t classes = 0;

  static GaaNetwork make(std::size_t feat_dim, std::size_t heads, std::size_t layer_count, std::size_t classes,
                         Rng& rng) {
    if (layer_count < 1) throw ConfigError("gaa: need at least one layer");
    if (heads < 1 || feat_dim % heads != 0)
      throw ConfigError("gaa: feat_dim " + std::to_string(feat_dim) + " not divisible by heads " +
                        std::to_string(heads));
    GaaNetwork net;
    net.feat_dim = feat_dim;
    net.heads = heads;
    net.classes = classes;
    const std::size_t head_dim = feat_dim / heads;
    const double stddev = std::sqrt(2.0 / static_cast<double>(feat_dim));
    for (std::size_t l = 0; l < layer_count; ++l) {
      GaaLayer layer;
      layer.edge_mode = (l % 2 == 0) ? EdgeMode::self : EdgeMode::cross;  // 1-based odd = self
      for (std::size_t h = 0; h < heads; ++h) {
        for (auto* block : {&layer.wq, &layer.wk, &layer.wv}) {
          Tensor w(feat_dim, head_dim);
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
          block->push_back(std::move(w));
        }
        layer.bq.emplace_back(1, head_dim);
        layer.bk.emplace_back(1, head_dim);
        layer.bv.emplace_back(1, head_dim);
      }
      layer.merge = Tensor(feat_dim, feat_dim);
      for (std::size_t i = 0; i < layer.merge.size(); ++i) layer.merge[i] = rng.normal(0.0, stddev);
      layer.update = Mlp::he_init({2 * feat_dim, feat_dim, feat_dim}, rng);
      layer.update.zero_final_layer();  // training starts at the residual identity
      net.layers.push_back(std::move(layer));
    }
    net.cls_w = Tensor(feat_dim, classes);
    for (std::size_t i = 0; i < net.cls_w.size(); ++i) net.cls_w[i] = rng.normal(0.0, stddev);
    net.cls_b = Tensor(1, classes);
    return net;
  }

  void collect_params(ParamSet& set) {
    for (GaaLayer& layer : layers) layer.collect_params(set);
    set.add(cls_w);
    set.add(cls_b);
  }
};

// Alpha matrices per layer and head (affinity mode: one per layer), plus the
// receiver mask, recorded for normalization checks.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> alpha;
  std::vector<Tensor> row_has_neighbor;
};

namespace detail {

constexpr double kMaskOffset = -1e9;

// Single-head attention message on the tape: softmax(q k^T) restricted to the
// edge mask, times values. Rows without senders come out exactly zero.
inline Var attention_head_var(Tape& tape, Var x, const GaaLayer& layer, std::size_t head, const Binding& bind,
                              const EdgeMask& edges, bool scaled, Tensor* alpha_out) {
  const Var q = tape.add(tape.matmul(x, bind.at(layer.wq[head])), bind.at(layer.bq[head]));
  const Var k = tape.add(tape.matmul(x, bind.at(layer.wk[head])), bind.at(layer.bk[head]));
  const Var v = tape.add(tape.matmul(x, bind.at(layer.wv[head])), bind.at(layer.bv[head]));

  Var logits = tape.matmul(q, tape.transpose(k));
  if (scaled) logits = tape.scale(logits, 1.0 / std::sqrt(static_cast<double>(layer.wq[head].cols())));

  const std::size_t n = edges.mask.rows();
  Tensor off(n, n);
  for (std::size_t i = 0; i < off.size(); ++i) off[i] = (1.0 - edges.mask[i]) * kMaskOffset;
  const Var masked = tape.add(tape.elementwise_mul(logits, tape.constant(edges.mask)), tape.constant(off));
  const Var alpha = tape.softmax_rows(masked);
  if (alpha_out != nullptr) *alpha_out = tape.value(alpha);

  // Zero out receivers with no senders (their softmax row is junk).
  Tensor row_gate(n, layer.wv[head].cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < row_gate.cols(); ++j) row_gate(i, j) = edges.has_neighbor(i, 0);
  return tape.elementwise_mul(tape.matmul(alpha, v), tape.constant(row_gate));
}

// Row-softmaxed cosine similarity over the edge set, computed from current
// node values and treated as constant in backward; gradient reaches the
// layer through the aggregated features themselves.
inline Tensor affinity_weights(const Tensor& x, const EdgeMask& edges) {
  const std::size_t n = x.rows();
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) acc += x(i, c) * x(i, c);
    norm[i] = std::sqrt(acc);
  }
  Tensor weights(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (edges.has_neighbor(i, 0) == 0.0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> sim(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (edges.mask(i, j) == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) dot += x(i, c) * x(j, c);
      sim[j] = dot / std::max(norm[i] * norm[j], 1e-12);
      mx = std::max(mx, sim[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (edges.mask(i, j) == 0.0) continue;
      sim[j] = std::exp(sim[j] - mx);
      sum += sim[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      if (edges.mask(i, j) != 0.0) weights(i, j) = sim[j] / sum;
  }
  return weights;
}

inline Var layer_forward_var(Tape& tape, Var x, const GaaLayer& layer, const Binding& bind, const GraphBatch& batch,
                             const GaaOptions& opts, std::vector<Tensor>* alpha_trace, Tensor* neighbor_trace) {
  const EdgeMask edges = build_edge_mask(batch, layer.edge_mode, opts.strict_intra);
  if (neighbor_trace != nullptr) *neighbor_trace = edges.has_neighbor;

  Var message{-1};
  if (opts.aggregation == Aggregation::attention) {
    Var heads_concat{-1};
    for (std::size_t h = 0; h < layer.heads(); ++h) {
      Tensor alpha;
      const Var m = attention_head_var(tape, x, layer, h, bind, edges, opts.scaled_attention,
                                       alpha_trace != nullptr ? &alpha : nullptr);
      if (alpha_trace != nullptr) alpha_trace->push_back(std::move(alpha));
      heads_concat = h == 0 ? m : tape.concat_cols(heads_concat, m);
    }
    message = tape.matmul(heads_concat, bind.at(layer.merge));
  } else {
    const Tensor weights = affinity_weights(tape.value(x), edges);
    if (alpha_trace != nullptr) alpha_trace->push_back(weights);
    message = tape.matmul(tape.constant(weights), x);
  }
  const Var update = layer.update.apply(tape, bind, tape.concat_cols(x, message));
  return tape.add(x, update);
}

}  // namespace detail

// Full stack on an existing tape; node_features may depend on upstream
// parameters (the backbone) so adaptation gradients flow end to end.
inline Var gaa_apply(Tape& tape, const Binding& bind, Var node_features, const GaaNetwork& net,
                     const GraphBatch& batch, const GaaOptions& opts = {}, AttentionTrace* trace = nullptr,
                     Var* logits_out = nullptr) {
  batch.validate();
  std::size_t n_source = 0, n_target = 0;
  for (const Role r : batch.roles) (r == Role::source ? n_source : n_target)++;
  if (net.layers.size() >= 2 && (n_source == 0 || n_target == 0) && !opts.allow_missing_role)
    throw ContractError(std::string("gaa_forward: cross layers need both roles, batch has ") +
                        std::to_string(n_source) + " source and " + std::to_string(n_target) + " target nodes");

  Var x = node_features;
  for (const GaaLayer& layer : net.layers) {
    std::vector<Tensor> alphas;
    Tensor neighbors;
    x = detail::layer_forward_var(tape, x, layer, bind, batch, opts, trace != nullptr ? &alphas : nullptr,
                                  trace != nullptr ? &neighbors : nullptr);
    if (trace != nullptr) {
      trace->alpha.push_back(std::move(alphas));
      trace->row_has_neighbor.push_back(std::move(neighbors));
    }
  }
  if (logits_out != nullptr) *logits_out = tape.add(tape.matmul(x, bind.at(net.cls_w)), bind.at(net.cls_b));
  return x;
}

struct GaaOutput {
  Tensor embeddings;
  Tensor logits;
  Tensor probs;
};

inline GaaOutput gaa_forward(const GraphBatch& batch, const GaaNetwork& net, const GaaOptions& opts = {},
                             AttentionTrace* trace = nullptr) {
  Tape tape;
  auto& writable = const_cast<GaaNetwork&>(net);  // read-only binding
  ParamSet set;
  writable.collect_params(set);
  Binding bind(tape, set, false);
  Var logits{-1};
  const Var embeddings = gaa_apply(tape, bind, tape.constant(batch.features), net, batch, opts, trace, &logits);
  GaaOutput out;
  out.embeddings = tape.value(embeddings);
  out.logits = tape.value(logits);
  out.probs = tape.value(tape.softmax_rows(logits));
  return out;
}

// Message vectors for one attention head, as a standalone evaluation.
inline Tensor attention_message(const GraphBatch& batch, const GaaLayer& layer, std::size_t head,
                                const GaaOptions& opts = {}, Tensor* alpha_out = nullptr) {
  batch.validate();
  if (head >= layer.heads()) throw ContractError("attention_message: head index out of range");
  Tape tape;
  auto& writable = const_cast<GaaLayer&>(layer);
  ParamSet set;
  writable.collect_params(set);
  Binding bind(tape, set, false);
  const EdgeMask edges = build_edge_mask(batch, layer.edge_mode, opts.strict_intra);
  const Var x = tape.constant(batch.features);
  const Var msg = detail::attention_head_var(tape, x, layer, head, bind, edges, opts.scaled_attention, alpha_out);
  return tape.value(msg);
}

// Affinity-matrix aggregation: messages are cosine-softmax averages of
// neighbor features, with no learned projections.
inline Tensor affinity_aggregate(const GraphBatch& batch, EdgeMode mode, bool strict_intra = false,
                                 Tensor* weights_out = nullptr) {
  batch.validate();
  const EdgeMask edges = build_edge_mask(batch, mode, strict_intra);
  const Tensor weights = detail::affinity_weights(batch.features, edges);
  if (weights_out != nullptr) *weights_out = weights;
  Tensor out(batch.features.rows(), batch.features.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i)
    for (std::size_t j = 0; j < batch.features.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < weights.cols(); ++s) acc += weights(i, s) * batch.features(s, j);
      out(i, j) = acc;
    }
  return out;
}

// Updated node features after one layer.
inline Tensor layer_forward(const GraphBatch& batch, const GaaLayer& layer, const GaaOptions& opts = {},
                            std::vector<Tensor>* alpha_trace = nullptr) {
  batch.validate();
  Tape tape;
  auto& writable = const_cast<GaaLayer&>(layer);
  ParamSet set;
  writable.collect_params(set);
  Binding bind(tape, set, false);
  const Var x = tape.constant(batch.features);
  const Var out = detail::layer_forward_var(tape, x, layer, bind, batch, opts, alpha_trace, nullptr);
  return tape.value(out);
}

}  // namespace degaa
