#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "degaa/optim.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

// Fully connected stack with ReLU between layers and a linear last layer.
// Weights are [in, out] so activations multiply on the left: y = x W + b.
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static Mlp he_init(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dimension");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Tensor w(dims[l], dims[l + 1]);
      const double stddev = std::sqrt(2.0 / static_cast<double>(dims[l]));
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
      net.weights.push_back(std::move(w));
      net.biases.emplace_back(1, dims[l + 1]);
    }
    return net;
  }

  std::size_t in_dim() const { return weights.front().rows(); }
  std::size_t out_dim() const { return weights.back().cols(); }
  std::size_t layer_count() const { return weights.size(); }

  void zero_final_layer() {
    Tensor& w = weights.back();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.0;
    Tensor& b = biases.back();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.0;
  }

  void collect_params(ParamSet& set) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      set.add(weights[l]);
      set.add(biases[l]);
    }
  }

  Var apply(Tape& tape, const Binding& bind, Var x) const {
    Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      h = tape.add(tape.matmul(h, bind.at(weights[l])), bind.at(biases[l]));
      if (l + 1 < weights.size()) h = tape.relu(h);
    }
    return h;
  }

  // Value-only forward with the same loop order as the tape path, so both
  // produce bit-identical outputs.
  Tensor apply_values(const Tensor& x) const {
    if (x.cols() != in_dim())
      throw DimensionError(std::string("Mlp: input ") + x.shape_string() + " vs weight " +
                           weights.front().shape_string());
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const Tensor& w = weights[l];
      const Tensor& b = biases[l];
      Tensor next(h.rows(), w.cols());
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
          double acc = 0.0;
          for (std::size_t k = 0; k < h.cols(); ++k) acc += h(i, k) * w(k, j);
          next(i, j) = acc + b(0, j);
        }
      if (l + 1 < weights.size())
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = next[i] > 0.0 ? next[i] : 0.0;
      h = std::move(next);
    }
    return h;
  }
};

}  // namespace degaa
