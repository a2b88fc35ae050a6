#pragma once

#include <cmath>
#include <cstddef>
#include <unordered_map>
#include <vector>

#include "degaa/errors.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

struct SgdConfig {
  double lr_max = 1e-2;
  double lr_min = 1e-3;
  std::size_t total_steps = 1;
  double momentum = 0.9;

  void validate() const {
    if (!(lr_min > 0.0) || !(lr_min <= lr_max)) throw ConfigError("sgd: requires 0 < lr_min <= lr_max");
    if (total_steps == 0) throw ConfigError("sgd: total_steps must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd: momentum must be in [0,1)");
  }
};

// lr(step) = lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total_steps)) / 2
inline double cosine_lr(std::size_t step, const SgdConfig& cfg) {
  if (step > cfg.total_steps)
    throw ContractError("cosine_lr: step " + std::to_string(step) + " past total_steps " +
                        std::to_string(cfg.total_steps));
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(3.14159265358979323846 * frac));
}

// Ordered list of trainable tensors. Collection order defines the
// serialization layout and the gradient vector layout.
struct ParamSet {
  std::vector<Tensor*> params;

  void add(Tensor& t) { params.push_back(&t); }
  std::size_t size() const { return params.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Tensor* p : params) n += p->size();
    return n;
  }
};

// Leaf vars for one ParamSet on one tape. Rebuilt each training step.
class Binding {
 public:
  Binding(Tape& tape, const ParamSet& set, bool requires_grad = true) : set_(&set) {
    vars_.reserve(set.params.size());
    for (Tensor* p : set.params) {
      Var v = tape.leaf(*p, requires_grad);
      vars_.push_back(v);
      index_[p] = v;
    }
  }

  Var at(const Tensor& p) const {
    auto it = index_.find(&p);
    if (it == index_.end()) throw ContractError("Binding: tensor not bound");
    return it->second;
  }

  // Gradients in ParamSet order; zero tensors where no gradient flowed.
  std::vector<Tensor> grads(const Tape& tape) const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (tape.requires_grad(vars_[i]))
        out.push_back(tape.grad(vars_[i]));
      else
        out.push_back(Tensor(set_->params[i]->rows(), set_->params[i]->cols()));
    }
    return out;
  }

 private:
  const ParamSet* set_;
  std::vector<Var> vars_;
  std::unordered_map<const Tensor*, Var> index_;
};

// v <- momentum * v + g ; p <- p - lr * v
class SgdOptimizer {
 public:
  SgdOptimizer(const ParamSet& set, double momentum) : momentum_(momentum) {
    velocity_.reserve(set.params.size());
    for (const Tensor* p : set.params) velocity_.emplace_back(p->rows(), p->cols());
  }

  void step(ParamSet& set, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != set.params.size()) throw DimensionError("sgd_step: gradient count mismatch");
    for (std::size_t i = 0; i < set.params.size(); ++i) {
      Tensor& p = *set.params[i];
      const Tensor& g = grads[i];
      Tensor& v = velocity_[i];
      if (!p.same_shape(g))
        throw DimensionError(std::string("sgd_step: param ") + p.shape_string() + " vs grad " + g.shape_string());
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j] + g[j];
        p[j] -= lr * v[j];
      }
    }
  }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

// Single-tensor convenience used by tests and small loops.
inline void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
  if (!param.same_shape(grad) || !param.same_shape(velocity))
    throw DimensionError(std::string("sgd_step: shapes disagree, param ") + param.shape_string() + " grad " +
                         grad.shape_string());
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

}  // namespace degaa
