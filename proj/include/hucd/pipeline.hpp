#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hucd/clustering.hpp"
#include "hucd/concepts.hpp"
#include "hucd/constants.hpp"
#include "hucd/embedding.hpp"
#include "hucd/error.hpp"
#include "hucd/faithfulness.hpp"
#include "hucd/io.hpp"
#include "hucd/png.hpp"
#include "hucd/runtime.hpp"
#include "hucd/segments.hpp"
#include "hucd/synthetic.hpp"

namespace hucd {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::filesystem::path base;  // relative paths resolve against this (the config file's directory)

  std::string model = "model.json";
  std::string weights = "model.bin";
  std::string images = "images";
  std::string masks = "masks";
  std::string labels = "labels.csv";
  std::string output = "out";

  MaskingMode mode = MaskingMode::LayerMasking;
  std::vector<MaskingMode> bench_modes{MaskingMode::LayerMasking};
  double shrink_area_frac = defaults::kShrinkAreaFrac;

  double lambda_rel = defaults::kLambdaRel;
  int ssc_max_iter = defaults::kAdmmMaxIter;
  double ssc_tol = defaults::kSscTol;
  int kmeans_restarts = defaults::kKMeansRestarts;
  bool pooled_ssc = false;  // one SSC over all classes instead of one per class

  double min_area_frac = defaults::kMinAreaFrac;
  double var_threshold = defaults::kVarThreshold;
  int min_cluster_size = defaults::kMinClusterSize;
  double presence_threshold = defaults::kPresenceThreshold;
  double cond_cap = defaults::kCondCap;
  int top_k = defaults::kTopK;

  std::uint64_t seed = 0;
  int parallelism = 1;
  std::vector<int> classes;           // empty: every class in the labels file
  std::vector<std::string> explain;   // images explained by `all`
  bool bench_traces = false;

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
  }
  std::filesystem::path out(const std::string& rel) const { return resolve(output) / rel; }

  MaskingOptions masking(MaskingMode m) const {
    MaskingOptions o;
    o.mode = m;
    o.shrink_area_frac = shrink_area_frac;
    return o;
  }
  MaskingOptions masking() const { return masking(mode); }

  SSCConfig ssc() const {
    SSCConfig c;
    c.lambda_rel = lambda_rel;
    c.max_iter = ssc_max_iter;
    c.tol = ssc_tol;
    c.seed = seed;
    c.restarts = kmeans_restarts;
    c.parallelism = parallelism;
    return c;
  }

  void validate() const {
    auto in01 = [](double v, bool open_low, const char* name) {
      if (!(open_low ? v > 0.0 : v >= 0.0) || !(v <= 1.0))
        throw ConfigError(detail::cat(name, " must lie in ", open_low ? "(0, 1]" : "[0, 1]", ", got ", v));
    };
    in01(min_area_frac, false, "min_area_frac");
    in01(var_threshold, true, "var_threshold");
    in01(presence_threshold, false, "presence_threshold");
    in01(shrink_area_frac, false, "shrink_area_frac");
    if (min_cluster_size < 0) throw ConfigError("min_cluster_size must be >= 0");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    if (!(cond_cap > 1.0)) throw ConfigError("cond_cap must exceed 1");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (bench_modes.empty()) throw ConfigError("bench_modes must not be empty");
    for (int c : classes)
      if (c < 0) throw ConfigError("classes must be non-negative");
    ssc().validate();
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json modes = nlohmann::json::array();
  for (auto m : c.bench_modes) modes.push_back(to_string(m));
  return {{"model", c.model},
          {"weights", c.weights},
          {"images", c.images},
          {"masks", c.masks},
          {"labels", c.labels},
          {"output", c.output},
          {"mode", to_string(c.mode)},
          {"bench_modes", modes},
          {"shrink_area_frac", c.shrink_area_frac},
          {"ssc", {{"lambda_rel", c.lambda_rel}, {"max_iter", c.ssc_max_iter}, {"tol", c.ssc_tol},
                   {"kmeans_restarts", c.kmeans_restarts}, {"pooled", c.pooled_ssc}}},
          {"min_area_frac", c.min_area_frac},
          {"var_threshold", c.var_threshold},
          {"min_cluster_size", c.min_cluster_size},
          {"presence_threshold", c.presence_threshold},
          {"cond_cap", c.cond_cap},
          {"top_k", c.top_k},
          {"seed", c.seed},
          {"parallelism", c.parallelism},
          {"classes", c.classes},
          {"explain", c.explain},
          {"bench_traces", c.bench_traces}};
}

/// Missing keys keep their defaults; unknown keys and wrong types are config errors.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> known{"model", "weights", "images", "masks", "labels", "output", "mode",
                                           "bench_modes", "shrink_area_frac", "ssc", "min_area_frac",
                                           "var_threshold", "min_cluster_size", "presence_threshold", "cond_cap",
                                           "top_k", "seed", "parallelism", "classes", "explain", "bench_traces"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(detail::cat("config: unknown key '", it.key(), "'"));
  PipelineConfig c;
  c.base = base;
  auto get = [&](const nlohmann::json& obj, const char* key, auto& field) {
    if (!obj.contains(key)) return;
    try {
      field = obj.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(detail::cat("config: '", key, "' has the wrong type"));
    }
  };
  get(j, "model", c.model);
  get(j, "weights", c.weights);
  get(j, "images", c.images);
  get(j, "masks", c.masks);
  get(j, "labels", c.labels);
  get(j, "output", c.output);
  try {
    if (j.contains("mode")) c.mode = parse_masking_mode(j.at("mode").get<std::string>());
    if (j.contains("bench_modes")) {
      c.bench_modes.clear();
      for (const auto& m : j.at("bench_modes")) c.bench_modes.push_back(parse_masking_mode(m.get<std::string>()));
    }
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: masking modes must be strings");
  } catch (const Error& e) {
    throw ConfigError(detail::cat("config: ", e.what()));
  }
  get(j, "shrink_area_frac", c.shrink_area_frac);
  if (j.contains("ssc")) {
    const auto& s = j.at("ssc");
    if (!s.is_object()) throw ConfigError("config: 'ssc' must be an object");
    static const std::set<std::string> ssc_known{"lambda_rel", "max_iter", "tol", "kmeans_restarts", "pooled"};
    for (auto it = s.begin(); it != s.end(); ++it)
      if (!ssc_known.count(it.key())) throw ConfigError(detail::cat("config: unknown key 'ssc.", it.key(), "'"));
    get(s, "lambda_rel", c.lambda_rel);
    get(s, "max_iter", c.ssc_max_iter);
    get(s, "tol", c.ssc_tol);
    get(s, "kmeans_restarts", c.kmeans_restarts);
    get(s, "pooled", c.pooled_ssc);
  }
  get(j, "min_area_frac", c.min_area_frac);
  get(j, "var_threshold", c.var_threshold);
  get(j, "min_cluster_size", c.min_cluster_size);
  get(j, "presence_threshold", c.presence_threshold);
  get(j, "cond_cap", c.cond_cap);
  get(j, "top_k", c.top_k);
  get(j, "seed", c.seed);
  get(j, "parallelism", c.parallelism);
  get(j, "classes", c.classes);
  get(j, "explain", c.explain);
  get(j, "bench_traces", c.bench_traces);
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw ConfigError(detail::cat("config file '", p.string(), "' does not exist"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(detail::cat("'", p.string(), "': ", e.what()));
  }
  return config_from_json(j, p.parent_path());
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void rethrow_in_stage(const char* stage, const Error& e) {
  const std::string msg = cat("stage ", stage, ": ", e.what());
  switch (e.kind()) {
    case ErrorKind::Argument: throw ArgumentError(msg);
    case ErrorKind::Contract: throw ContractViolation(msg);
    case ErrorKind::Numeric: throw NumericError(msg);
    case ErrorKind::Data: throw DataError(msg);
    case ErrorKind::Config: throw ConfigError(msg);
  }
  throw DataError(msg);
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (std::string(e.what()).rfind("stage ", 0) == 0) throw;
    rethrow_in_stage(stage, e);
  }
}

inline std::string concept_name(int id) { return id == kResidual ? "residual" : std::to_string(id); }

}  // namespace detail

struct LabeledImage {
  std::string image_id;
  int class_label = -1;
};

/// Rows of the labels CSV (image_id, class_label), sorted by id and restricted
/// to the configured classes.
inline std::vector<LabeledImage> read_labels(const PipelineConfig& cfg) {
  const auto path = cfg.resolve(cfg.labels);
  const auto csv = io::read_csv(path);
  const auto ci = csv.column("image_id"), cl = csv.column("class_label");
  std::vector<LabeledImage> out;
  const std::set<int> wanted(cfg.classes.begin(), cfg.classes.end());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    LabeledImage li{csv.rows[r][ci], -1};
    try {
      li.class_label = std::stoi(csv.rows[r][cl]);
    } catch (const std::logic_error&) {
      throw DataError(detail::cat("'", path.string(), "' row ", r + 1, ": bad class label"));
    }
    if (wanted.empty() || wanted.count(li.class_label)) out.push_back(li);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].image_id == out[i - 1].image_id)
      throw DataError(detail::cat("'", path.string(), "': duplicate image id '", out[i].image_id, "'"));
  if (out.empty()) throw DataError(detail::cat("'", path.string(), "': no images for the selected classes"));
  return out;
}

inline std::filesystem::path mask_path(const PipelineConfig& cfg, const std::string& id) {
  const auto dir = cfg.resolve(cfg.masks);
  const auto json = dir / (id + ".json");
  if (std::filesystem::exists(json)) return json;
  const auto png = dir / (id + ".png");
  if (std::filesystem::exists(png)) return png;
  throw DataError(detail::cat("missing mask file '", json.string(), "' (or .png) for image '", id, "'"));
}

inline DatasetItem load_item(const PipelineConfig& cfg, const LabeledImage& li) {
  DatasetItem it;
  it.image_id = li.image_id;
  it.class_label = li.class_label;
  it.image = io::read_image(cfg.resolve(cfg.images) / (li.image_id + ".f32"));
  MaskSet ms = load_masks(mask_path(cfg, li.image_id));
  ms.image_id = li.image_id;
  it.map = select_granular(ms, cfg.min_area_frac);
  return it;
}

inline std::vector<DatasetItem> load_dataset(const PipelineConfig& cfg) {
  std::vector<DatasetItem> items;
  for (const auto& li : read_labels(cfg)) items.push_back(load_item(cfg, li));
  return items;
}

inline ModelGraph load_pipeline_model(const PipelineConfig& cfg) {
  return load_model(cfg.resolve(cfg.model), cfg.resolve(cfg.weights));
}

/// Group key of a class for clustering: the class itself, or -1 when pooled.
inline int cluster_group(const PipelineConfig& cfg, int class_label) { return cfg.pooled_ssc ? -1 : class_label; }

// ---------------------------------------------------------------------------
// discover: ingest → embed → SSC → filter
// ---------------------------------------------------------------------------

struct GroupClusters {
  int group = 0;
  std::vector<int> rows;  // global segment-table rows
  ClusterAssignment assignment;
  std::vector<int> isolated;  // global rows
};

struct DiscoverResult {
  SegmentTable table;
  std::vector<GroupClusters> groups;
  std::vector<std::string> warnings;
};

inline void save_clusters(const std::vector<GroupClusters>& groups, const std::filesystem::path& p) {
  std::vector<std::pair<int, std::string>> rows;
  for (const auto& g : groups)
    for (std::size_t k = 0; k < g.rows.size(); ++k)
      rows.emplace_back(g.rows[k], std::to_string(g.group) + "," + detail::concept_name(g.assignment.labels[k]));
  std::sort(rows.begin(), rows.end());
  io::CsvWriter csv({"row_id", "group", "cluster_id"});
  for (const auto& [r, rest] : rows) {
    const auto comma = rest.find(',');
    csv.row({std::to_string(r), rest.substr(0, comma), rest.substr(comma + 1)});
  }
  csv.save(p);
}

/// Cluster id per row (kResidual for the residual pool), keyed by group.
inline std::map<int, std::map<int, std::vector<int>>> load_clusters(const std::filesystem::path& p) {
  const auto csv = io::read_csv(p);
  const auto cr = csv.column("row_id"), cg = csv.column("group"), cc = csv.column("cluster_id");
  std::map<int, std::map<int, std::vector<int>>> out;  // group → cluster → rows
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    try {
      const int c = r[cc] == "residual" ? kResidual : std::stoi(r[cc]);
      out[std::stoi(r[cg])][c].push_back(std::stoi(r[cr]));
    } catch (const std::logic_error&) {
      throw DataError(detail::cat("'", p.string(), "' row ", i + 1, ": malformed"));
    }
  }
  return out;
}

inline DiscoverResult cmd_discover(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ModelGraph g = detail::in_stage("discover/load", [&] { return load_pipeline_model(cfg); });
  const auto items = detail::in_stage("discover/ingest", [&] { return load_dataset(cfg); });
  auto emb = detail::in_stage("discover/embed", [&] { return embed_dataset(g, items, cfg.masking(), cfg.parallelism); });
  DiscoverResult res;
  res.table = std::move(emb.table);
  res.warnings = std::move(emb.warnings);
  for (const auto& w : res.warnings) log << "warning: " << w << "\n";

  std::map<int, std::vector<int>> rows_by_group;
  std::map<int, std::set<std::string>> images_by_group;
  for (std::size_t i = 0; i < res.table.rows.size(); ++i) {
    const int grp = cluster_group(cfg, res.table.rows[i].class_label);
    rows_by_group[grp].push_back(static_cast<int>(i));
    images_by_group[grp].insert(res.table.rows[i].image_id);
  }
  const Matrix phi = res.table.phi_matrix();
  detail::in_stage("discover/cluster", [&] {
    for (const auto& [grp, rows] : rows_by_group) {
      GroupClusters gc{grp, rows, {}, {}};
      Matrix x(static_cast<Eigen::Index>(rows.size()), phi.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = phi.row(rows[k]);
      const double mean = static_cast<double>(rows.size()) / static_cast<double>(images_by_group[grp].size());
      const int k = choose_cluster_count(mean, x.rows());
      const SSCConfig sc = cfg.ssc();
      const auto spec = spectral_cluster(build_affinity(ssc_self_expression(x, sc)), k, sc.seed, sc.restarts);
      for (int r : spec.isolated) gc.isolated.push_back(rows[static_cast<std::size_t>(r)]);
      try {
        gc.assignment = filter_clusters(spec.labels, cfg.min_cluster_size);
      } catch (const DataError& e) {
        throw DataError(detail::cat("group ", grp, ": ", e.what()));
      }
      log << (grp < 0 ? std::string("pooled") : detail::cat("class ", grp)) << ": " << rows.size() << " segments, k = " << k
          << ", " << gc.assignment.k << " clusters kept, " << gc.assignment.residual_pool.size() << " residual\n";
      res.groups.push_back(std::move(gc));
    }
    return 0;
  });

  detail::in_stage("discover/write", [&] {
    save_segment_table(res.table, cfg.out("discover/segments.csv"), cfg.out("discover/phi.f32"));
    save_clusters(res.groups, cfg.out("discover/clusters.csv"));
    nlohmann::json summary;
    summary["groups"] = nlohmann::json::array();
    for (const auto& gc : res.groups)
      summary["groups"].push_back({{"group", gc.group},
                                   {"segments", gc.rows.size()},
                                   {"images", images_by_group[gc.group].size()},
                                   {"clusters", gc.assignment.k},
                                   {"cluster_sizes", gc.assignment.counts},
                                   {"residual", gc.assignment.residual_pool.size()},
                                   {"isolated_rows", gc.isolated}});
    summary["warnings"] = res.warnings;
    summary["config"] = to_json(cfg);
    summary["config"].erase("parallelism");  // results do not depend on it
    io::write_json(cfg.out("discover/summary.json"), summary);
    return 0;
  });
  return res;
}

// ---------------------------------------------------------------------------
// score: bases → spaces → η, per-segment scores, prototypes
// ---------------------------------------------------------------------------

struct ClassScore {
  int class_label = 0;
  ConceptSpace space;  // as reloaded from disk
  GlobalScores global;
  std::vector<int> cluster_ids;
};

struct ScoreResult {
  std::vector<ClassScore> classes;
};

inline std::filesystem::path space_stem(const PipelineConfig& cfg, int class_label) {
  return cfg.out("score/space_" + std::to_string(class_label));
}

inline ScoreResult cmd_score(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ModelGraph g = detail::in_stage("score/load", [&] { return load_pipeline_model(cfg); });
  const SegmentTable table = detail::in_stage(
      "score/load", [&] { return load_segment_table(cfg.out("discover/segments.csv"), cfg.out("discover/phi.f32")); });
  const auto clusters = detail::in_stage("score/load", [&] { return load_clusters(cfg.out("discover/clusters.csv")); });
  std::set<int> class_set;
  for (const auto& r : table.rows) class_set.insert(r.class_label);
  if (!cfg.classes.empty())
    for (auto it = class_set.begin(); it != class_set.end();)
      it = std::count(cfg.classes.begin(), cfg.classes.end(), *it) ? std::next(it) : class_set.erase(it);

  ScoreResult res;
  io::CsvWriter completeness({"class", "clusters", "completeness"});
  io::CsvWriter scores({"image_id", "segment_id", "concept_id", "activation", "relevance"});
  std::vector<std::vector<std::string>> score_rows;
  detail::in_stage("score/fit", [&] {
    for (int cls : class_set) {
      const auto git = clusters.find(cluster_group(cfg, cls));
      if (git == clusters.end()) throw DataError(detail::cat("class ", cls, " has no cluster assignment"));
      std::vector<ConceptBasis> bases;
      std::vector<int> degenerate;
      ClassScore cs;
      cs.class_label = cls;
      for (const auto& [cid, rows] : git->second) {
        if (cid == kResidual) continue;
        Matrix m(static_cast<Eigen::Index>(rows.size()), table.dim);
        for (std::size_t k = 0; k < rows.size(); ++k)
          m.row(static_cast<Eigen::Index>(k)) = table.rows[static_cast<std::size_t>(rows[k])].phi.transpose();
        try {
          bases.push_back(fit_basis(m, cfg.var_threshold, cid));
          cs.cluster_ids.push_back(cid);
        } catch (const DataError&) {
          degenerate.push_back(cid);
        }
      }
      if (!degenerate.empty()) {
        std::string ids;
        for (int d : degenerate) ids += (ids.empty() ? "" : ", ") + std::to_string(d);
        throw DataError(detail::cat("class ", cls, ": degenerate clusters (zero matrix): ", ids));
      }
      if (bases.empty()) throw DataError(detail::cat("class ", cls, ": no clusters to fit"));
      const ConceptSpace built = build_space(std::move(bases), cfg.cond_cap);
      const ClassHead head = class_head(g, cls);
      const GlobalScores gs = global_relevance(built, head.w);
      nlohmann::json extra{{"class", cls}, {"eta", gs.eta}};
      std::vector<double> gl(gs.g.data(), gs.g.data() + gs.g.size());
      extra["global_relevance"] = gl;
      save_space(built, space_stem(cfg, cls), extra);
      cs.space = load_space(space_stem(cfg, cls));
      cs.global = global_relevance(cs.space, head.w);
      for (const auto& [c, k] : built.dropped)
        log << "class " << cls << ": dropped direction " << k << " of concept " << c << " (rank repair)\n";
      log << "class " << cls << ": " << cs.space.n() << " concepts, completeness " << io::fmt(gs.eta) << "\n";
      completeness.row({std::to_string(cls), std::to_string(cs.space.n()), io::fmt(gs.eta)});

      // per-segment scores and prototype candidates
      const int n = cs.space.n();
      std::vector<std::vector<double>> act(static_cast<std::size_t>(n));
      std::vector<std::pair<std::string, int>> keys;
      std::vector<std::size_t> key_rows;
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r.class_label != cls) continue;
        if (!(r.phi.norm() > 0.0)) {
          score_rows.push_back({r.image_id, std::to_string(r.segment_id), "residual", "0", "0"});
          continue;
        }
        const auto dec = decompose(r.phi, cs.space);
        const Vector a = activation_scores(dec, r.phi);
        const Vector rel = local_relevance(dec, head.w);
        const int l = assign_segment(a);
        const Eigen::Index col = l == kResidual ? n : l;
        score_rows.push_back({r.image_id, std::to_string(r.segment_id),
                              detail::concept_name(l == kResidual ? kResidual : cs.space.bases[static_cast<std::size_t>(l)].concept_id),
                              io::fmt(a(col)), io::fmt(rel(col))});
        for (int c = 0; c < n; ++c) act[static_cast<std::size_t>(c)].push_back(a(c));
        keys.emplace_back(r.image_id, r.segment_id);
        key_rows.push_back(i);
      }
      nlohmann::json protos = nlohmann::json::array();
      for (int c = 0; c < n; ++c) {
        const auto p = concept_prototypes(act[static_cast<std::size_t>(c)], keys, static_cast<std::size_t>(cfg.top_k));
        nlohmann::json list = nlohmann::json::array();
        for (auto k : p.rows)
          list.push_back({{"image_id", keys[k].first}, {"segment_id", keys[k].second},
                          {"activation", act[static_cast<std::size_t>(c)][k]}});
        protos.push_back({{"concept_id", cs.space.bases[static_cast<std::size_t>(c)].concept_id},
                          {"truncated", p.truncated},
                          {"prototypes", list}});
      }
      io::write_json(cfg.out("score/prototypes_" + std::to_string(cls) + ".json"),
                     {{"class", cls}, {"top_k", cfg.top_k}, {"concepts", protos}});
      res.classes.push_back(std::move(cs));
    }
    return 0;
  });
  detail::in_stage("score/write", [&] {
    std::sort(score_rows.begin(), score_rows.end(), [](const auto& a, const auto& b) {
      return a[0] != b[0] ? a[0] < b[0] : std::stoi(a[1]) < std::stoi(b[1]);
    });
    for (const auto& r : score_rows) scores.row(r);
    scores.save(cfg.out("score/scores.csv"));
    completeness.save(cfg.out("score/completeness.csv"));
    return 0;
  });
  return res;
}

// ---------------------------------------------------------------------------
// explain: per-pixel activation and relevance maps for one image
// ---------------------------------------------------------------------------

struct ExplainResult {
  Matrix activation;  // H × W
  Matrix relevance;   // H × W
  nlohmann::json legend;
};

inline std::vector<SegmentEmbedding> table_rows_for(const SegmentTable& t, const std::string& image_id) {
  std::vector<SegmentEmbedding> out;
  for (const auto& r : t.rows)
    if (r.image_id == image_id) out.push_back(r);
  return out;
}

inline ExplainResult cmd_explain(const PipelineConfig& cfg, const std::string& image_id, std::ostream& log) {
  cfg.validate();
  const ModelGraph g = detail::in_stage("explain/load", [&] { return load_pipeline_model(cfg); });
  const auto labels = detail::in_stage("explain/load", [&] { return read_labels(cfg); });
  const auto li = std::find_if(labels.begin(), labels.end(), [&](const auto& l) { return l.image_id == image_id; });
  if (li == labels.end()) detail::rethrow_in_stage("explain", DataError(detail::cat("unknown image id '", image_id, "'")));
  return detail::in_stage("explain/map", [&] {
    const DatasetItem item = load_item(cfg, *li);
    const SegmentTable table = load_segment_table(cfg.out("discover/segments.csv"), cfg.out("discover/phi.f32"));
    const ConceptSpace sp = load_space(space_stem(cfg, li->class_label));
    const ClassHead head = class_head(g, li->class_label);
    const auto rows = table_rows_for(table, image_id);
    if (rows.empty()) throw DataError(detail::cat("image '", image_id, "' has no embedded segments"));
    ExplainResult ex{Matrix::Zero(item.map.h, item.map.w), Matrix::Zero(item.map.h, item.map.w), {}};
    nlohmann::json segs = nlohmann::json::array();
    nlohmann::json residual = nlohmann::json::array();
    std::vector<int> concept_of(static_cast<std::size_t>(item.map.segments) + 1, kResidual);
    for (const auto& r : rows) {
      int l = kResidual;
      double a = 0.0, rel = 0.0;
      if (r.phi.norm() > 0.0) {
        const auto dec = decompose(r.phi, sp);
        const Vector av = activation_scores(dec, r.phi);
        const Vector rv = local_relevance(dec, head.w);
        l = assign_segment(av);
        const Eigen::Index col = l == kResidual ? sp.n() : l;
        a = av(col);
        rel = rv(col);
      }
      const int cid = l == kResidual ? kResidual : sp.bases[static_cast<std::size_t>(l)].concept_id;
      segs.push_back({{"segment_id", r.segment_id}, {"concept_id", detail::concept_name(cid)}, {"activation", a},
                      {"relevance", rel}});
      if (l == kResidual) {
        residual.push_back(r.segment_id);
        continue;
      }
      concept_of[static_cast<std::size_t>(r.segment_id)] = l;
      for (int y = 0; y < item.map.h; ++y)
        for (int x = 0; x < item.map.w; ++x)
          if (item.map.labels[static_cast<std::size_t>(y) * item.map.w + x] == r.segment_id) {
            ex.activation(y, x) = a;
            ex.relevance(y, x) = rel;
          }
    }
    ex.legend = {{"image_id", image_id}, {"class", li->class_label}, {"segments", segs}, {"residual_segments", residual},
                 {"maps", {{"activation", "activation.f32"}, {"relevance", "relevance.f32"}}},
                 {"overlay", {{"file", "overlay.png"}, {"index", "0 = residual or unsegmented, l + 1 = concept index l"}}}};
    const auto dir = cfg.out("explain/" + image_id);
    io::write_matrix(dir / "activation.f32", ex.activation);
    io::write_matrix(dir / "relevance.f32", ex.relevance);
    io::write_json(dir / "legend.json", ex.legend);
    // overlay: palette index per pixel
    std::vector<std::uint8_t> index(static_cast<std::size_t>(item.map.h) * item.map.w, 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
      const int l = concept_of[static_cast<std::size_t>(item.map.labels[i])];
      if (l != kResidual) index[i] = static_cast<std::uint8_t>(std::min(l + 1, 255));
    }
    std::vector<png::Rgb> palette{{96, 96, 96}};
    for (int l = 0; l < std::min(sp.n(), 255); ++l)
      palette.push_back({static_cast<std::uint8_t>(60 + (l * 97) % 196), static_cast<std::uint8_t>(60 + (l * 53) % 196),
                         static_cast<std::uint8_t>(60 + (l * 151) % 196)});
    png::write_indexed(dir / "overlay.png", item.map.h, item.map.w, index, palette);
    log << image_id << ": " << rows.size() << " segments, " << residual.size() << " residual\n";
    return ex;
  });
}

// ---------------------------------------------------------------------------
// bench: C-Deletion / C-Insertion for every configured masking mode
// ---------------------------------------------------------------------------

struct BenchModeResult {
  MaskingMode mode;
  FlipCurve deletion, insertion;
};

struct BenchResult {
  double baseline = 0.0;
  std::set<ClassConcept> concepts;
  std::vector<BenchModeResult> modes;
};

inline BenchResult cmd_bench(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ModelGraph g = detail::in_stage("bench/load", [&] { return load_pipeline_model(cfg); });
  const auto items = detail::in_stage("bench/load", [&] { return load_dataset(cfg); });
  const SegmentTable table = detail::in_stage(
      "bench/load", [&] { return load_segment_table(cfg.out("discover/segments.csv"), cfg.out("discover/phi.f32")); });
  std::map<int, ConceptSpace> spaces;
  std::map<int, ClassHead> heads;
  detail::in_stage("bench/load", [&] {
    for (const auto& it : items)
      if (!spaces.count(it.class_label)) {
        spaces.emplace(it.class_label, load_space(space_stem(cfg, it.class_label)));
        heads.emplace(it.class_label, class_head(g, it.class_label));
      }
    return 0;
  });
  std::map<std::string, std::vector<SegmentEmbedding>> rows_by_image;
  for (const auto& r : table.rows) rows_by_image[r.image_id].push_back(r);

  BenchResult res;
  res.baseline = baseline_accuracy(g, items);
  std::vector<FlipPlan> main_plans;
  detail::in_stage("bench/plan", [&] {
    for (const auto& it : items)
      main_plans.push_back(build_flip_plan(rows_by_image[it.image_id], it.map, it.class_label,
                                           spaces.at(it.class_label), heads.at(it.class_label)));
    res.concepts = filter_common_concepts(main_plans, cfg.presence_threshold);
    return 0;
  });
  io::CsvWriter flipped({"class", "concept_id"});
  for (const auto& [c, k] : res.concepts) flipped.row({std::to_string(c), std::to_string(k)});
  flipped.save(cfg.out("bench/concepts.csv"));
  log << "baseline accuracy " << io::fmt(res.baseline) << ", " << res.concepts.size() << " common concepts\n";

  io::CsvWriter auc({"mode", "direction", "auc", "baseline_accuracy", "final_accuracy", "n_images", "excluded"});
  for (const MaskingMode mode : cfg.bench_modes) {
    const MaskingOptions opt = cfg.masking(mode);
    BenchModeResult mr{mode, {}, {}};
    detail::in_stage("bench/flip", [&] {
      std::vector<FlipPlan> plans;
      if (mode == cfg.mode) {
        plans = main_plans;
      } else {
        for (const auto& it : items)
          plans.push_back(build_flip_plan(g, it, spaces.at(it.class_label), heads.at(it.class_label), opt));
      }
      mr.deletion = c_deletion(g, items, plans, res.concepts, opt, cfg.parallelism);
      mr.insertion = c_insertion(g, items, plans, res.concepts, opt, cfg.parallelism);
      return 0;
    });
    const std::string dir = std::string("bench/") + to_string(mode);
    curves_csv({&mr.deletion, &mr.insertion}).save(cfg.out(dir + "/curves.csv"));
    if (cfg.bench_traces)
      io::write_json(cfg.out(dir + "/traces.json"),
                     {{"deletion", traces_json(mr.deletion)}, {"insertion", traces_json(mr.insertion)}});
    for (const FlipCurve* c : {&mr.deletion, &mr.insertion}) {
      auc.row({to_string(mode), to_string(c->direction), io::fmt(c->auc), io::fmt(res.baseline),
               io::fmt(c->accuracy.back()), std::to_string(c->n_images), std::to_string(c->excluded.size())});
      log << to_string(mode) << " " << to_string(c->direction) << ": accuracy " << io::fmt(c->accuracy.front())
          << " -> " << io::fmt(c->accuracy.back()) << " over " << c->steps() - 1 << " steps, auc " << io::fmt(c->auc)
          << "\n";
    }
    res.modes.push_back(std::move(mr));
  }
  auc.save(cfg.out("bench/auc.csv"));
  return res;
}

/// discover → score → bench, then explain for the configured images.
inline BenchResult cmd_all(const PipelineConfig& cfg, std::ostream& log) {
  cmd_discover(cfg, log);
  cmd_score(cfg, log);
  BenchResult b = cmd_bench(cfg, log);
  for (const auto& id : cfg.explain) cmd_explain(cfg, id, log);
  return b;
}

// ---------------------------------------------------------------------------
// Toy workspace
// ---------------------------------------------------------------------------

/// Writes model, images, masks, labels and a desk-scale config.json under `dir`.
inline PipelineConfig write_toy_workspace(const std::filesystem::path& dir, int images, std::uint64_t seed) {
  if (images < 4) throw ArgumentError("write_toy_workspace: need at least 4 images");
  const ModelGraph g = synth::toy_model();
  save_model(g, dir / "model.json", dir / "model.bin");
  io::CsvWriter labels({"image_id", "class_label"});
  for (int i = 0; i < images; ++i) {
    const auto t = synth::toy_image(i, seed);
    io::write_image(dir / "images" / (t.image_id + ".f32"), t.image);
    save_masks(t.masks, dir / "masks" / (t.image_id + ".json"));
    labels.row({t.image_id, std::to_string(t.class_label)});
  }
  labels.save(dir / "labels.csv");
  PipelineConfig cfg;
  cfg.base = dir;
  cfg.min_cluster_size = 5;  // desk scale
  cfg.seed = seed;
  cfg.explain = {synth::image_name("toy", 0), synth::image_name("toy", 1)};
  io::write_json(dir / "config.json", to_json(cfg));
  return cfg;
}

}  // namespace hucd
