#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "degaa/errors.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

enum class Role { source, target };

inline const char* role_name(Role r) { return r == Role::source ? "source" : "target"; }

struct Sample {
  std::vector<double> x;
  int label = -1;  // class id for source rows, -1 (hidden) for target rows
  int domain_id = 0;
  Role role = Role::source;
};

// Affine shift applied to class means: x ~ N(scale * R(rotation) * mean + translation, noise_sigma^2 I).
// The rotation acts on the first two coordinates.
struct DomainSpec {
  double rotation = 0.0;
  std::vector<double> translation;
  double scale = 1.0;
  double noise_sigma = 1.0;

  void validate() const {
    if (!(scale > 0.0)) throw ConfigError("domain_spec: scale must be positive");
    if (!(noise_sigma > 0.0)) throw ConfigError("domain_spec: noise_sigma must be positive");
  }
};

// Labelled source domains plus unlabelled target domains over a shared input
// space. Source domains carry only the shared classes; target domains add
// private classes that eval_truth maps to the single unknown id. eval_truth
// exists for evaluation and diagnostics only; no training path reads it.
struct DatasetBundle {
  int n_source = 0;
  int m_target = 0;
  int shared_classes = 0;
  int private_classes = 0;
  int per_class = 0;
  int in_dim = 0;
  std::uint64_t seed = 0;
  std::vector<DomainSpec> specs;
  std::vector<Sample> samples;
  std::vector<int> eval_truth;  // aligned with samples

  int unknown_id() const { return shared_classes; }
  int total_domains() const { return n_source + m_target; }

  std::vector<std::size_t> domain_indices(int domain) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].domain_id == domain) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> role_indices(Role role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].role == role) out.push_back(i);
    return out;
  }

  bool operator==(const DatasetBundle& o) const {
    if (n_source != o.n_source || m_target != o.m_target || shared_classes != o.shared_classes ||
        private_classes != o.private_classes || per_class != o.per_class || in_dim != o.in_dim || seed != o.seed ||
        eval_truth != o.eval_truth || samples.size() != o.samples.size())
      return false;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& a = samples[i];
      const Sample& b = o.samples[i];
      if (a.x != b.x || a.label != b.label || a.domain_id != b.domain_id || a.role != b.role) return false;
    }
    return true;
  }
};

// Class means: shared classes on a circle of shared_radius in the first two
// coordinates, private classes staggered on a wider circle. Remaining
// coordinates are zero before the domain transform.
inline std::vector<double> class_base_mean(int cls, int shared_classes, int private_classes, int in_dim,
                                           double shared_radius = 10.0, double private_radius = 20.0) {
  std::vector<double> mean(static_cast<std::size_t>(in_dim), 0.0);
  const double two_pi = 6.283185307179586476925287;
  if (cls < shared_classes) {
    const double angle = two_pi * static_cast<double>(cls) / static_cast<double>(shared_classes);
    mean[0] = shared_radius * std::cos(angle);
    mean[1] = shared_radius * std::sin(angle);
  } else {
    const int p = cls - shared_classes;
    const double angle = two_pi * (static_cast<double>(p) + 0.5) / static_cast<double>(private_classes);
    mean[0] = private_radius * std::cos(angle);
    mean[1] = private_radius * std::sin(angle);
  }
  return mean;
}

inline std::vector<double> transform_mean(const std::vector<double>& base, const DomainSpec& spec) {
  std::vector<double> out = base;
  const double c = std::cos(spec.rotation);
  const double s = std::sin(spec.rotation);
  const double x0 = out[0];
  const double x1 = out[1];
  out[0] = c * x0 - s * x1;
  out[1] = s * x0 + c * x1;
  for (double& v : out) v *= spec.scale;
  for (std::size_t i = 0; i < out.size() && i < spec.translation.size(); ++i) out[i] += spec.translation[i];
  return out;
}

inline DatasetBundle generate_bundle(int n, int m, int shared_classes, int private_classes, int per_class, int in_dim,
                                     const std::vector<DomainSpec>& specs, std::uint64_t seed,
                                     double shared_radius = 10.0, double private_radius = 20.0) {
  if (n < 1 || m < 1) throw ConfigError("generate_bundle: need at least one source and one target domain");
  if (shared_classes < 2) throw ConfigError("generate_bundle: need at least two shared classes");
  if (private_classes < 0) throw ConfigError("generate_bundle: private class count must be non-negative");
  if (per_class < 1) throw ConfigError("generate_bundle: per_class must be positive");
  if (in_dim < 2) throw ConfigError("generate_bundle: in_dim must be at least 2");
  if (specs.size() != static_cast<std::size_t>(n + m))
    throw ConfigError("generate_bundle: expected " + std::to_string(n + m) + " domain specs, got " +
                      std::to_string(specs.size()));
  for (const DomainSpec& s : specs) s.validate();

  DatasetBundle bundle;
  bundle.n_source = n;
  bundle.m_target = m;
  bundle.shared_classes = shared_classes;
  bundle.private_classes = private_classes;
  bundle.per_class = per_class;
  bundle.in_dim = in_dim;
  bundle.seed = seed;
  bundle.specs = specs;

  Rng rng(seed);
  for (int d = 0; d < n + m; ++d) {
    const Role role = d < n ? Role::source : Role::target;
    const int class_count = role == Role::source ? shared_classes : shared_classes + private_classes;
    for (int cls = 0; cls < class_count; ++cls) {
      const std::vector<double> mean =
          transform_mean(class_base_mean(cls, shared_classes, private_classes, in_dim, shared_radius, private_radius),
                         specs[static_cast<std::size_t>(d)]);
      for (int k = 0; k < per_class; ++k) {
        Sample s;
        s.domain_id = d;
        s.role = role;
        s.x.resize(static_cast<std::size_t>(in_dim));
        for (int j = 0; j < in_dim; ++j)
          s.x[static_cast<std::size_t>(j)] =
              mean[static_cast<std::size_t>(j)] + specs[static_cast<std::size_t>(d)].noise_sigma * rng.normal();
        s.label = role == Role::source ? cls : -1;
        bundle.samples.push_back(std::move(s));
        bundle.eval_truth.push_back(cls < shared_classes ? cls : bundle.unknown_id());
      }
    }
  }
  return bundle;
}

// Without-replacement batches: each epoch is a fresh shuffle of the role's
// samples chopped into full batches; an incomplete trailing batch is dropped
// and those samples rejoin the next epoch's shuffle.
class BatchStream {
 public:
  BatchStream(const DatasetBundle& bundle, Role role, std::size_t batch_size)
      : pool_(bundle.role_indices(role)), batch_size_(batch_size) {
    if (pool_.empty()) throw ContractError(std::string("BatchStream: no ") + role_name(role) + " samples");
    if (batch_size_ == 0 || batch_size_ > pool_.size())
      throw ContractError("BatchStream: batch size " + std::to_string(batch_size_) + " vs population " +
                          std::to_string(pool_.size()));
    order_ = pool_;
    pos_ = order_.size();  // force a shuffle on first next()
  }

  std::vector<std::size_t> next(Rng& rng) {
    if (pos_ + batch_size_ > order_.size()) {
      order_ = pool_;
      rng.shuffle(order_);
      pos_ = 0;
    }
    std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_size_));
    pos_ += batch_size_;
    return batch;
  }

 private:
  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_ = 0;
  std::size_t pos_ = 0;
};

// All full batches of one epoch, for tests and one-shot consumers.
inline std::vector<std::vector<std::size_t>> epoch_batches(const DatasetBundle& bundle, Role role,
                                                           std::size_t batch_size, Rng& rng) {
  BatchStream stream(bundle, role, batch_size);
  const std::size_t population = bundle.role_indices(role).size();
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t used = 0; used + batch_size <= population; used += batch_size) out.push_back(stream.next(rng));
  return out;
}

}  // namespace degaa
