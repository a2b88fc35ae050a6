#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "degaa/adaptation.hpp"
#include "degaa/backbone.hpp"
#include "degaa/config.hpp"
#include "degaa/dataset.hpp"
#include "degaa/domain_embedding.hpp"
#include "degaa/errors.hpp"
#include "degaa/graph_attention.hpp"

namespace degaa {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Primitives

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("bad float literal: '" + s + "'");
  return v;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open " + tmp.string() + " for writing");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config <-> JSON. Parsing rejects unknown keys so typos cannot silently fall
// back to defaults. Infinity (the LOF threshold disable) round-trips as "inf".

namespace detail {

inline void require_keys(const json& obj, const char* section, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(std::string("config: unknown key '") + key + "' in " + section);
  }
}

inline json dump_threshold(double v) {
  if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
  return json(v);
}

inline double parse_threshold(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("config: bad threshold string '" + s + "'");
  }
  return j.get<double>();
}

inline json sgd_to_json(const SgdConfig& c) {
  return json{{"lr_max", c.lr_max}, {"lr_min", c.lr_min}, {"momentum", c.momentum}};
}

inline void sgd_from_json(const json& j, const char* section, SgdConfig& c) {
  require_keys(j, section, {"lr_max", "lr_min", "momentum"});
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.momentum = j.value("momentum", c.momentum);
}

}  // namespace detail

inline json domain_spec_to_json(const DomainSpec& s) {
  return json{{"rotation", s.rotation}, {"translation", s.translation}, {"scale", s.scale},
              {"noise_sigma", s.noise_sigma}};
}

inline DomainSpec domain_spec_from_json(const json& j) {
  detail::require_keys(j, "domain_specs[]", {"rotation", "translation", "scale", "noise_sigma"});
  DomainSpec s;
  s.rotation = j.value("rotation", 0.0);
  s.translation = j.value("translation", std::vector<double>{});
  s.scale = j.value("scale", 1.0);
  s.noise_sigma = j.value("noise_sigma", 1.0);
  return s;
}

inline json run_config_to_json(const RunConfig& cfg) {
  json specs = json::array();
  for (const DomainSpec& s : cfg.data.domain_specs) specs.push_back(domain_spec_to_json(s));
  return json{
      {"seed", cfg.seed},
      {"data",
       {{"n_source", cfg.data.n_source},
        {"m_target", cfg.data.m_target},
        {"shared_classes", cfg.data.shared_classes},
        {"private_classes", cfg.data.private_classes},
        {"per_class", cfg.data.per_class},
        {"in_dim", cfg.data.in_dim},
        {"shared_radius", cfg.data.shared_radius},
        {"private_radius", cfg.data.private_radius},
        {"domain_specs", specs}}},
      {"embedding",
       {{"d_e_dim", cfg.embedding.d_e_dim},
        {"hidden", cfg.embedding.hidden},
        {"episodes", cfg.embedding.episode.episodes},
        {"domains_per_episode", cfg.embedding.episode.domains_per_episode},
        {"support_points", cfg.embedding.episode.support_points},
        {"query_points", cfg.embedding.episode.query_points},
        {"sgd", detail::sgd_to_json(cfg.embedding.sgd)}}},
      {"backbone",
       {{"feat_dim", cfg.backbone.feat_dim},
        {"hidden", cfg.backbone.hidden},
        {"combine_mode", combine_mode_name(cfg.backbone.combine_mode)},
        {"warmup_steps", cfg.backbone.warmup_steps},
        {"batch", cfg.backbone.batch},
        {"sgd", detail::sgd_to_json(cfg.backbone.sgd)}}},
      {"lof",
       {{"k", cfg.lof.k},
        {"threshold", detail::dump_threshold(cfg.lof.threshold)},
        {"epsilon", cfg.lof.epsilon},
        {"projection_dim", cfg.lof.projection_dim}}},
      {"gaa",
       {{"layers", cfg.gaa.layers},
        {"heads", cfg.gaa.heads},
        {"scaled_attention", cfg.gaa.scaled_attention},
        {"strict_intra", cfg.gaa.strict_intra},
        {"aggregation", cfg.gaa.aggregation == Aggregation::attention ? "attention" : "affinity"}}},
      {"adapt",
       {{"lambda", cfg.adapt.lambda},
        {"refresh_period", cfg.adapt.refresh_period},
        {"outer_iters", cfg.adapt.outer_iters},
        {"source_batch", cfg.adapt.source_batch},
        {"target_batch", cfg.adapt.target_batch},
        {"refresh_centroids", cfg.adapt.refresh_centroids},
        {"resample_per_episode", cfg.adapt.resample_per_episode},
        {"sgd", detail::sgd_to_json(cfg.adapt_sgd)}}},
      {"eval",
       {{"source_nodes_centroids", cfg.eval.source_nodes_centroids},
        {"source_sample_count", cfg.eval.source_sample_count}}},
      {"ablation",
       {{"use_domain_embedding", cfg.ablation.use_domain_embedding}, {"lof_dims", cfg.ablation.lof_dims}}}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::require_keys(j, "top level",
                       {"seed", "data", "embedding", "backbone", "lof", "gaa", "adapt", "eval", "ablation"});
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::require_keys(d, "data",
                         {"n_source", "m_target", "shared_classes", "private_classes", "per_class", "in_dim",
                          "shared_radius", "private_radius", "domain_specs"});
    cfg.data.n_source = d.value("n_source", cfg.data.n_source);
    cfg.data.m_target = d.value("m_target", cfg.data.m_target);
    cfg.data.shared_classes = d.value("shared_classes", cfg.data.shared_classes);
    cfg.data.private_classes = d.value("private_classes", cfg.data.private_classes);
    cfg.data.per_class = d.value("per_class", cfg.data.per_class);
    cfg.data.in_dim = d.value("in_dim", cfg.data.in_dim);
    cfg.data.shared_radius = d.value("shared_radius", cfg.data.shared_radius);
    cfg.data.private_radius = d.value("private_radius", cfg.data.private_radius);
    if (d.contains("domain_specs"))
      for (const json& s : d.at("domain_specs")) cfg.data.domain_specs.push_back(domain_spec_from_json(s));
  }
  if (j.contains("embedding")) {
    const json& e = j.at("embedding");
    detail::require_keys(
        e, "embedding",
        {"d_e_dim", "hidden", "episodes", "domains_per_episode", "support_points", "query_points", "sgd"});
    cfg.embedding.d_e_dim = e.value("d_e_dim", cfg.embedding.d_e_dim);
    cfg.embedding.hidden = e.value("hidden", cfg.embedding.hidden);
    cfg.embedding.episode.episodes = e.value("episodes", cfg.embedding.episode.episodes);
    cfg.embedding.episode.domains_per_episode =
        e.value("domains_per_episode", cfg.embedding.episode.domains_per_episode);
    cfg.embedding.episode.support_points = e.value("support_points", cfg.embedding.episode.support_points);
    cfg.embedding.episode.query_points = e.value("query_points", cfg.embedding.episode.query_points);
    if (e.contains("sgd")) detail::sgd_from_json(e.at("sgd"), "embedding.sgd", cfg.embedding.sgd);
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    detail::require_keys(b, "backbone", {"feat_dim", "hidden", "combine_mode", "warmup_steps", "batch", "sgd"});
    cfg.backbone.feat_dim = b.value("feat_dim", cfg.backbone.feat_dim);
    cfg.backbone.hidden = b.value("hidden", cfg.backbone.hidden);
    if (b.contains("combine_mode")) {
      const std::string mode = b.at("combine_mode").get<std::string>();
      if (mode == "concat")
        cfg.backbone.combine_mode = CombineMode::concat;
      else if (mode == "elementwise_mul")
        cfg.backbone.combine_mode = CombineMode::elementwise_mul;
      else
        throw ConfigError("config: combine_mode must be 'concat' or 'elementwise_mul', got '" + mode + "'");
    }
    cfg.backbone.warmup_steps = b.value("warmup_steps", cfg.backbone.warmup_steps);
    cfg.backbone.batch = b.value("batch", cfg.backbone.batch);
    if (b.contains("sgd")) detail::sgd_from_json(b.at("sgd"), "backbone.sgd", cfg.backbone.sgd);
  }
  if (j.contains("lof")) {
    const json& l = j.at("lof");
    detail::require_keys(l, "lof", {"k", "threshold", "epsilon", "projection_dim"});
    cfg.lof.k = l.value("k", cfg.lof.k);
    if (l.contains("threshold")) cfg.lof.threshold = detail::parse_threshold(l.at("threshold"));
    cfg.lof.epsilon = l.value("epsilon", cfg.lof.epsilon);
    cfg.lof.projection_dim = l.value("projection_dim", cfg.lof.projection_dim);
  }
  if (j.contains("gaa")) {
    const json& g = j.at("gaa");
    detail::require_keys(g, "gaa", {"layers", "heads", "scaled_attention", "strict_intra", "aggregation"});
    cfg.gaa.layers = g.value("layers", cfg.gaa.layers);
    cfg.gaa.heads = g.value("heads", cfg.gaa.heads);
    cfg.gaa.scaled_attention = g.value("scaled_attention", cfg.gaa.scaled_attention);
    cfg.gaa.strict_intra = g.value("strict_intra", cfg.gaa.strict_intra);
    if (g.contains("aggregation")) {
      const std::string agg = g.at("aggregation").get<std::string>();
      if (agg == "attention")
        cfg.gaa.aggregation = Aggregation::attention;
      else if (agg == "affinity")
        cfg.gaa.aggregation = Aggregation::affinity;
      else
        throw ConfigError("config: aggregation must be 'attention' or 'affinity', got '" + agg + "'");
    }
  }
  if (j.contains("adapt")) {
    const json& a = j.at("adapt");
    detail::require_keys(a, "adapt",
                         {"lambda", "refresh_period", "outer_iters", "source_batch", "target_batch",
                          "refresh_centroids", "resample_per_episode", "sgd"});
    cfg.adapt.lambda = a.value("lambda", cfg.adapt.lambda);
    cfg.adapt.refresh_period = a.value("refresh_period", cfg.adapt.refresh_period);
    cfg.adapt.outer_iters = a.value("outer_iters", cfg.adapt.outer_iters);
    cfg.adapt.source_batch = a.value("source_batch", cfg.adapt.source_batch);
    cfg.adapt.target_batch = a.value("target_batch", cfg.adapt.target_batch);
    cfg.adapt.refresh_centroids = a.value("refresh_centroids", cfg.adapt.refresh_centroids);
    cfg.adapt.resample_per_episode = a.value("resample_per_episode", cfg.adapt.resample_per_episode);
    if (a.contains("sgd")) detail::sgd_from_json(a.at("sgd"), "adapt.sgd", cfg.adapt_sgd);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    detail::require_keys(e, "eval", {"source_nodes_centroids", "source_sample_count"});
    cfg.eval.source_nodes_centroids = e.value("source_nodes_centroids", cfg.eval.source_nodes_centroids);
    cfg.eval.source_sample_count = e.value("source_sample_count", cfg.eval.source_sample_count);
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    detail::require_keys(a, "ablation", {"use_domain_embedding", "lof_dims"});
    cfg.ablation.use_domain_embedding = a.value("use_domain_embedding", cfg.ablation.use_domain_embedding);
    cfg.ablation.lof_dims = a.value("lof_dims", cfg.ablation.lof_dims);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config: top level must be a JSON object");
  return run_config_from_json(j);
}

inline RunConfig parse_config(const std::filesystem::path& path) { return parse_config_text(read_file(path)); }

inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(run_config_to_json(cfg).dump())); }

// ---------------------------------------------------------------------------
// Bundle file: one JSON header line, a CSV column header, then one row per
// sample. The label column is empty for target rows; eval_label keeps the
// ground truth with private classes collapsed to the unknown id.

inline std::string bundle_to_text(const DatasetBundle& bundle, const std::string& hash) {
  json header{{"config_hash", hash},
              {"seed", bundle.seed},
              {"n_source", bundle.n_source},
              {"m_target", bundle.m_target},
              {"shared_classes", bundle.shared_classes},
              {"private_classes", bundle.private_classes},
              {"per_class", bundle.per_class},
              {"in_dim", bundle.in_dim},
              {"domain_specs", json::array()}};
  for (const DomainSpec& s : bundle.specs) header["domain_specs"].push_back(domain_spec_to_json(s));

  std::ostringstream out;
  out << header.dump() << '\n';
  out << "domain_id,role";
  for (int j = 0; j < bundle.in_dim; ++j) out << ",x_" << j;
  out << ",label,eval_label\n";
  for (std::size_t i = 0; i < bundle.samples.size(); ++i) {
    const Sample& s = bundle.samples[i];
    out << s.domain_id << ',' << role_name(s.role);
    for (const double v : s.x) out << ',' << format_double(v);
    out << ',';
    if (s.label >= 0) out << s.label;
    out << ',' << bundle.eval_truth[i] << '\n';
  }
  return out.str();
}

inline void save_bundle(const std::filesystem::path& path, const DatasetBundle& bundle, const std::string& hash) {
  atomic_write(path, bundle_to_text(bundle, hash));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

inline DatasetBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bundle " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("bundle: missing header line");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bundle header: ") + e.what());
  }
  DatasetBundle bundle;
  bundle.seed = header.at("seed").get<std::uint64_t>();
  bundle.n_source = header.at("n_source").get<int>();
  bundle.m_target = header.at("m_target").get<int>();
  bundle.shared_classes = header.at("shared_classes").get<int>();
  bundle.private_classes = header.at("private_classes").get<int>();
  bundle.per_class = header.at("per_class").get<int>();
  bundle.in_dim = header.at("in_dim").get<int>();
  for (const json& s : header.at("domain_specs")) bundle.specs.push_back(domain_spec_from_json(s));

  if (!std::getline(in, line)) throw ParseError("bundle: missing column header");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != static_cast<std::size_t>(bundle.in_dim) + 4)
      throw ParseError("bundle row " + std::to_string(row) + ": expected " + std::to_string(bundle.in_dim + 4) +
                       " cells, got " + std::to_string(cells.size()));
    Sample s;
    s.domain_id = std::stoi(cells[0]);
    if (cells[1] == "source")
      s.role = Role::source;
    else if (cells[1] == "target")
      s.role = Role::target;
    else
      throw ParseError("bundle row " + std::to_string(row) + ": bad role '" + cells[1] + "'");
    s.x.resize(static_cast<std::size_t>(bundle.in_dim));
    for (int j = 0; j < bundle.in_dim; ++j) s.x[static_cast<std::size_t>(j)] = parse_double(cells[2 + j]);
    const std::string& label = cells[static_cast<std::size_t>(bundle.in_dim) + 2];
    s.label = label.empty() ? -1 : std::stoi(label);
    bundle.samples.push_back(std::move(s));
    bundle.eval_truth.push_back(std::stoi(cells[static_cast<std::size_t>(bundle.in_dim) + 3]));
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Embedding table: JSON mapping domain_id -> vector.

inline void save_embedding_table(const std::filesystem::path& path, const DomainEmbeddingTable& table, int d_e_dim,
                                 const std::string& hash, std::uint64_t seed) {
  json t = json::object();
  for (const auto& [domain, vec] : table) t[std::to_string(domain)] = vec;
  const json doc{{"config_hash", hash}, {"seed", seed}, {"d_e_dim", d_e_dim}, {"table", t}};
  atomic_write(path, doc.dump(2) + "\n");
}

inline DomainEmbeddingTable load_embedding_table(const std::filesystem::path& path, int* d_e_dim = nullptr) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("embedding table: ") + e.what());
  }
  DomainEmbeddingTable table;
  for (const auto& [key, value] : doc.at("table").items())
    table[std::stoi(key)] = value.get<std::vector<double>>();
  if (d_e_dim != nullptr) *d_e_dim = doc.at("d_e_dim").get<int>();
  return table;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header with dimensions plus flat parameter arrays in
// collect_params order. The adapted checkpoint adds the aggregation network
// with its layer manifest.

inline std::vector<double> flatten_params(const ParamSet& set) {
  std::vector<double> out;
  out.reserve(set.scalar_count());
  for (const Tensor* p : set.params) out.insert(out.end(), p->data().begin(), p->data().end());
  return out;
}

inline void unflatten_params(ParamSet& set, const std::vector<double>& flat) {
  if (flat.size() != set.scalar_count())
    throw ParseError("checkpoint: expected " + std::to_string(set.scalar_count()) + " parameters, got " +
                     std::to_string(flat.size()));
  std::size_t pos = 0;
  for (Tensor* p : set.params) {
    for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] = flat[pos++];
  }
}

inline json backbone_to_json(Backbone& net) {
  ParamSet set;
  net.collect_params(set);
  return json{{"in_dim", net.in_dim},
              {"d_e_dim", net.d_e_dim},
              {"feat_dim", net.feat_dim},
              {"classes", net.classes},
              {"hidden", net.hidden},
              {"combine_mode", combine_mode_name(net.combine)},
              {"params", flatten_params(set)}};
}

inline Backbone backbone_from_json(const json& j) {
  Rng scratch(0);
  const std::string mode = j.at("combine_mode").get<std::string>();
  Backbone net = Backbone::make(j.at("in_dim").get<int>(), j.at("d_e_dim").get<int>(),
                                mode == "concat" ? CombineMode::concat : CombineMode::elementwise_mul,
                                j.at("hidden").get<std::vector<std::size_t>>(), j.at("feat_dim").get<int>(),
                                j.at("classes").get<int>(), scratch);
  ParamSet set;
  net.collect_params(set);
  unflatten_params(set, j.at("params").get<std::vector<double>>());
  return net;
}

inline json centroids_to_json(const Centroids& centroids) {
  json out = json::object();
  for (const auto& [cls, center] : centroids) out[std::to_string(cls)] = center;
  return out;
}

inline Centroids centroids_from_json(const json& j) {
  Centroids out;
  for (const auto& [key, value] : j.items()) out[std::stoi(key)] = value.get<std::vector<double>>();
  return out;
}

inline json gaa_to_json(GaaNetwork& net) {
  ParamSet set;
  net.collect_params(set);
  json manifest = json::array();
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    manifest.push_back(json{{"layer", l}, {"edge_mode", edge_mode_name(net.layers[l].edge_mode)}});
  return json{{"feat_dim", net.feat_dim},
              {"heads", net.heads},
              {"layers", net.layers.size()},
              {"classes", net.classes},
              {"manifest", manifest},
              {"params", flatten_params(set)}};
}

inline GaaNetwork gaa_from_json(const json& j) {
  Rng scratch(0);
  GaaNetwork net = GaaNetwork::make(j.at("feat_dim").get<std::size_t>(), j.at("heads").get<std::size_t>(),
                                    j.at("layers").get<std::size_t>(), j.at("classes").get<std::size_t>(), scratch);
  ParamSet set;
  net.collect_params(set);
  unflatten_params(set, j.at("params").get<std::vector<double>>());
  return net;
}

inline void save_warmup_checkpoint(const std::filesystem::path& path, Backbone& net, const Centroids& centroids,
                                   const std::string& hash, std::uint64_t seed) {
  const json doc{{"config_hash", hash},
                 {"seed", seed},
                 {"backbone", backbone_to_json(net)},
                 {"centroids", centroids_to_json(centroids)}};
  atomic_write(path, doc.dump() + "\n");
}

struct WarmupCheckpoint {
  Backbone backbone;
  Centroids centroids;
};

inline WarmupCheckpoint load_warmup_checkpoint(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("warmup checkpoint: ") + e.what());
  }
  return WarmupCheckpoint{backbone_from_json(doc.at("backbone")), centroids_from_json(doc.at("centroids"))};
}

inline void save_adapted_checkpoint(const std::filesystem::path& path, Backbone& backbone, GaaNetwork& gaa,
                                    const Centroids& centroids, const std::string& hash, std::uint64_t seed) {
  const json doc{{"config_hash", hash},
                 {"seed", seed},
                 {"backbone", backbone_to_json(backbone)},
                 {"gaa", gaa_to_json(gaa)},
                 {"centroids", centroids_to_json(centroids)}};
  atomic_write(path, doc.dump() + "\n");
}

struct AdaptedCheckpoint {
  Backbone backbone;
  GaaNetwork gaa;
  Centroids centroids;
};

inline AdaptedCheckpoint load_adapted_checkpoint(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("adapted checkpoint: ") + e.what());
  }
  return AdaptedCheckpoint{backbone_from_json(doc.at("backbone")), gaa_from_json(doc.at("gaa")),
                           centroids_from_json(doc.at("centroids"))};
}

// ---------------------------------------------------------------------------
// Metrics and per-iteration logs.

inline json metrics_to_json(const Metrics& m, const RunConfig& cfg, const std::string& hash) {
  json per_class = json::object();
  for (const auto& [cls, acc] : m.per_class_accuracy) per_class[std::to_string(cls)] = acc;
  json doc{{"config_hash", hash},  {"seed", cfg.seed},
           {"os", m.os},           {"os_star", m.os_star},
           {"unknown_recall", m.unknown_recall}, {"per_class_accuracy", per_class},
           {"config", run_config_to_json(cfg)}};
  if (m.pseudo_label_accuracy.has_value()) doc["pseudo_label_accuracy"] = *m.pseudo_label_accuracy;
  return doc;
}

inline void save_metrics(const std::filesystem::path& path, const Metrics& m, const RunConfig& cfg,
                         const std::string& hash) {
  atomic_write(path, metrics_to_json(m, cfg, hash).dump(2) + "\n");
}

inline Metrics load_metrics(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("metrics: ") + e.what());
  }
  Metrics m;
  m.os = doc.at("os").get<double>();
  m.os_star = doc.at("os_star").get<double>();
  m.unknown_recall = doc.at("unknown_recall").get<double>();
  for (const auto& [key, value] : doc.at("per_class_accuracy").items())
    m.per_class_accuracy[std::stoi(key)] = value.get<double>();
  if (doc.contains("pseudo_label_accuracy")) m.pseudo_label_accuracy = doc.at("pseudo_label_accuracy").get<double>();
  return m;
}

inline std::string csv_comment(const std::string& hash, std::uint64_t seed) {
  return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

inline void save_adapt_log(const std::filesystem::path& path, const std::vector<AdaptLogRow>& log,
                           const std::string& hash, std::uint64_t seed) {
  std::ostringstream out;
  out << csv_comment(hash, seed) << "iter,loss,lr,pseudo_acc,unknown_recall\n";
  for (const AdaptLogRow& row : log)
    out << row.iter << ',' << format_double(row.loss) << ',' << format_double(row.lr) << ','
        << format_double(row.pseudo_acc) << ',' << format_double(row.unknown_recall) << '\n';
  atomic_write(path, out.str());
}

inline void save_loss_log(const std::filesystem::path& path, const std::vector<double>& loss,
                          const std::vector<double>& lr, const std::string& hash, std::uint64_t seed) {
  std::ostringstream out;
  out << csv_comment(hash, seed) << "step,loss,lr\n";
  for (std::size_t i = 0; i < loss.size(); ++i)
    out << (i + 1) << ',' << format_double(loss[i]) << ',' << format_double(lr[i]) << '\n';
  atomic_write(path, out.str());
}

}  // namespace degaa
