#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "degaa/dataset.hpp"
#include "degaa/domain_embedding.hpp"
#include "degaa/mlp.hpp"
#include "degaa/optim.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

enum class CombineMode { concat, elementwise_mul };

inline const char* combine_mode_name(CombineMode m) {
  return m == CombineMode::concat ? "concat" : "elementwise_mul";
}

// Feature extractor F over inputs combined with their domain embedding,
// plus the warm-up classifier head (discarded after centroid computation).
struct Backbone {
  CombineMode combine = CombineMode::concat;
  int in_dim = 0;
  int d_e_dim = 0;
  int feat_dim = 0;
  int classes = 0;
  std::vector<std::size_t> hidden;
  Mlp mlp;
  Tensor head_w;
  Tensor head_b;

  static Backbone make(int in_dim, int d_e_dim, CombineMode combine, const std::vector<std::size_t>& hidden,
                       int feat_dim, int classes, Rng& rng) {
    if (combine == CombineMode::elementwise_mul && in_dim != d_e_dim)
      throw DimensionError("backbone: elementwise_mul requires in_dim == d_e_dim, got " + std::to_string(in_dim) +
                           " vs " + std::to_string(d_e_dim));
    Backbone net;
    net.combine = combine;
    net.in_dim = in_dim;
    net.d_e_dim = d_e_dim;
    net.feat_dim = feat_dim;
    net.classes = classes;
    net.hidden = hidden;
    std::vector<std::size_t> dims;
    dims.push_back(static_cast<std::size_t>(combine == CombineMode::concat ? in_dim + d_e_dim : in_dim));
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(static_cast<std::size_t>(feat_dim));
    net.mlp = Mlp::he_init(dims, rng);
    net.head_w = Tensor(static_cast<std::size_t>(feat_dim), static_cast<std::size_t>(classes));
    const double stddev = std::sqrt(2.0 / static_cast<double>(feat_dim));
    for (std::size_t i = 0; i < net.head_w.size(); ++i) net.head_w[i] = rng.normal(0.0, stddev);
    net.head_b = Tensor(1, static_cast<std::size_t>(classes));
    return net;
  }

  // [x | d_e] in concat mode, x .* d_e in elementwise_mul mode.
  std::vector<double> combine_input(const std::vector<double>& x, const std::vector<double>& d_e) const {
    if (x.size() != static_cast<std::size_t>(in_dim))
      throw DimensionError("backbone(" + std::string(combine_mode_name(combine)) + "): input size " +
                           std::to_string(x.size()) + ", expected " + std::to_string(in_dim));
    if (d_e.size() != static_cast<std::size_t>(d_e_dim))
      throw DimensionError("backbone(" + std::string(combine_mode_name(combine)) + "): embedding size " +
                           std::to_string(d_e.size()) + ", expected " + std::to_string(d_e_dim));
    std::vector<double> out;
    if (combine == CombineMode::concat) {
      out.reserve(x.size() + d_e.size());
      out.insert(out.end(), x.begin(), x.end());
      out.insert(out.end(), d_e.begin(), d_e.end());
    } else {
      out.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * d_e[i];
    }
    return out;
  }

  void collect_feature_params(ParamSet& set) { mlp.collect_params(set); }

  void collect_params(ParamSet& set) {
    mlp.collect_params(set);
    set.add(head_w);
    set.add(head_b);
  }
};

inline const std::vector<double>& embedding_for(const DomainEmbeddingTable& table, int domain) {
  auto it = table.find(domain);
  if (it == table.end()) throw ConfigError("embedding table has no entry for domain " + std::to_string(domain));
  return it->second;
}

inline Tensor extract(const std::vector<double>& x, const std::vector<double>& d_e, const Backbone& net) {
  return net.mlp.apply_values(Tensor::row(net.combine_input(x, d_e)));
}

// Combined input rows for a batch of bundle samples.
inline Tensor combined_batch(const Backbone& net, const DatasetBundle& bundle, const std::vector<std::size_t>& idx,
                             const DomainEmbeddingTable& table) {
  const std::size_t width = static_cast<std::size_t>(net.combine == CombineMode::concat ? net.in_dim + net.d_e_dim
                                                                                        : net.in_dim);
  Tensor out(idx.size(), width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Sample& s = bundle.samples[idx[r]];
    const std::vector<double> row = net.combine_input(s.x, embedding_for(table, s.domain_id));
    for (std::size_t j = 0; j < width; ++j) out(r, j) = row[j];
  }
  return out;
}

// Feature rows for a batch of bundle samples (value-only forward).
inline Tensor extract_batch(const Backbone& net, const DatasetBundle& bundle, const std::vector<std::size_t>& idx,
                            const DomainEmbeddingTable& table) {
  return net.mlp.apply_values(combined_batch(net, bundle, idx, table));
}

struct WarmupLog {
  std::vector<double> loss;
  std::vector<double> lr;
};

// Supervised cross-entropy training on source batches only; target samples
// are never touched.
inline void warmup_train(const DatasetBundle& bundle, const DomainEmbeddingTable& table, Backbone& net, SgdConfig sgd,
                         std::size_t steps, std::size_t batch_size, Rng& rng, WarmupLog* log = nullptr) {
  for (int d = 0; d < bundle.n_source; ++d) embedding_for(table, d);
  if (steps == 0) return;
  sgd.total_steps = steps;
  sgd.validate();
  ParamSet set;
  net.collect_params(set);
  SgdOptimizer opt(set, sgd.momentum);
  BatchStream stream(bundle, Role::source, batch_size);
  for (std::size_t step = 0; step < steps; ++step) {
    const std::vector<std::size_t> batch = stream.next(rng);
    std::vector<int> labels;
    labels.reserve(batch.size());
    for (const std::size_t i : batch) labels.push_back(bundle.samples[i].label);

    Tape tape;
    Binding bind(tape, set, true);
    const Var features = net.mlp.apply(tape, bind, tape.constant(combined_batch(net, bundle, batch, table)));
    const Var logits = tape.add(tape.matmul(features, bind.at(net.head_w)), bind.at(net.head_b));
    const Var loss = tape.cross_entropy(tape.softmax_rows(logits), std::move(labels));
    tape.backward(loss);
    const double lr = cosine_lr(step, sgd);
    opt.step(set, bind.grads(tape), lr);
    if (log != nullptr) {
      log->loss.push_back(tape.value(loss)[0]);
      log->lr.push_back(lr);
    }
  }
}

using Centroids = std::map<int, std::vector<double>>;

// Per-class mean of source features, accumulated exactly so input order
// cannot perturb the result.
inline Centroids compute_centroids(const DatasetBundle& bundle, const DomainEmbeddingTable& table,
                                   const Backbone& net) {
  std::map<int, std::vector<ExactSum>> acc;
  std::map<int, std::size_t> count;
  for (const Sample& s : bundle.samples) {
    if (s.role != Role::source) continue;
    const Tensor f = extract(s.x, embedding_for(table, s.domain_id), net);
    auto it = acc.try_emplace(s.label, f.size()).first;
    for (std::size_t j = 0; j < f.size(); ++j) it->second[j].add(f[j]);
    ++count[s.label];
  }
  for (int c = 0; c < bundle.shared_classes; ++c)
    if (count.find(c) == count.end())
      throw ContractError("compute_centroids: class " + std::to_string(c) + " has no source samples");
  Centroids centroids;
  for (auto& [cls, sums] : acc) {
    std::vector<double> mean(sums.size());
    for (std::size_t j = 0; j < sums.size(); ++j) mean[j] = sums[j].value() / static_cast<double>(count[cls]);
    centroids[cls] = std::move(mean);
  }
  return centroids;
}

// The domain-embedding-off ablation: a zero vector per domain, same shapes.
inline DomainEmbeddingTable zero_embedding_table(const DatasetBundle& bundle, int d_e_dim) {
  DomainEmbeddingTable table;
  for (int d = 0; d < bundle.total_domains(); ++d)
    table[d] = std::vector<double>(static_cast<std::size_t>(d_e_dim), 0.0);
  return table;
}

}  // namespace degaa
