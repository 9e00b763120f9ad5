#include "uvdro/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uvdro/csv.hpp"
#include "uvdro/errors.hpp"

namespace uvdro {

using json = nlohmann::json;

std::string to_string(Task task) {
  switch (task) {
    case Task::medical_sim: return "medical_sim";
    case Task::confounded_images: return "confounded_images";
    case Task::tabular: return "tabular";
  }
  return "unknown";
}

namespace {

// ---- config parsing --------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::vector<double> read_list(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  const json& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  return v.get<std::vector<double>>();
}

Task task_from_string(const std::string& s) {
  if (s == "medical_sim") return Task::medical_sim;
  if (s == "confounded_images") return Task::confounded_images;
  if (s == "tabular") return Task::tabular;
  throw ConfigError("unknown task '" + s + "'");
}

UvSourceKind uv_kind_from_string(const std::string& s) {
  if (s == "oracle") return UvSourceKind::oracle;
  if (s == "posterior_x") return UvSourceKind::posterior_x;
  if (s == "embeddings") return UvSourceKind::embeddings;
  if (s == "none") return UvSourceKind::none;
  throw ConfigError("unknown uv_source '" + s + "'");
}

UvSource parse_uv_source(const json& j) {
  UvSource src;
  if (j.is_string()) {
    src.kind = uv_kind_from_string(j.get<std::string>());
    return src;
  }
  check_keys(j, {"kind", "shuffled"}, "uv_source");
  if (j.contains("kind")) src.kind = uv_kind_from_string(j.at("kind").get<std::string>());
  read_opt(j, "shuffled", src.shuffle_fraction);
  return src;
}

// Step sizes per task; images additionally get per-objective ridge unless
// the document sets a ridge itself.
void apply_task_defaults(ExperimentConfig& cfg, const json& doc) {
  switch (cfg.task) {
    case Task::medical_sim: cfg.train.learning_rate = 1e-4; break;
    case Task::confounded_images: cfg.train.learning_rate = 1e-3; break;
    case Task::tabular: cfg.train.learning_rate = 5e-3; break;
  }
  const bool ridge_given = doc.contains("robustness") && doc.at("robustness").contains("ridge");
  if (cfg.task != Task::confounded_images || ridge_given) return;
  for (const auto& [obj, ridge] : {std::pair{Objective::erm, 25.0}, std::pair{Objective::uv_dro, 50.0}}) {
    auto& o = cfg.overrides[obj];
    if (!o.ridge) o.ridge = ridge;
  }
}

ObjectiveOverrides parse_overrides(const json& j, const std::string& where) {
  check_keys(j, {"alpha", "lipschitz", "ridge", "learning_rate"}, where);
  ObjectiveOverrides o;
  read_opt(j, "alpha", o.alpha);
  read_opt(j, "lipschitz", o.lipschitz);
  read_opt(j, "ridge", o.ridge);
  read_opt(j, "learning_rate", o.learning_rate);
  return o;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  if (objectives.empty()) throw ConfigError("objectives must be nonempty");
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  robustness.validate();
  train.validate();
  if (task == Task::medical_sim) {
    if (q_grid.empty()) throw ConfigError("grid.q_train must be nonempty for medical_sim");
    for (double q : q_grid)
      if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("q_train values must lie in [0, 1]");
    if (!(q_test > 0.0 && q_test <= 1.0)) throw ConfigError("q_test must lie in (0, 1]");
  } else {
    if (alpha_star_grid.empty()) throw ConfigError("grid.alpha_star must be nonempty");
    for (double a : alpha_star_grid)
      if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha_star values must lie in (0, 1]");
    if (!(q_test >= 0.0 && q_test <= 1.0)) throw ConfigError("q_test must lie in [0, 1]");
  }
  if (n_train < 2) throw ConfigError("n_train must be >= 2");
  if (n_test < 1) throw ConfigError("n_test must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (!(uv_source.shuffle_fraction >= 0.0 && uv_source.shuffle_fraction <= 1.0))
    throw ConfigError("uv_source.shuffled must lie in [0, 1]");
  if (uv_source.kind == UvSourceKind::posterior_x && task != Task::medical_sim)
    throw ConfigError("uv_source posterior_x is only defined for medical_sim");
  for (const auto& [obj, o] : overrides) {
    RobustnessConfig r = robustness;
    if (o.alpha) r.alpha = *o.alpha;
    if (o.lipschitz) r.lipschitz = *o.lipschitz;
    if (o.ridge) r.ridge = *o.ridge;
    r.validate();
    if (o.learning_rate && !(*o.learning_rate > 0.0))
      throw ConfigError("override learning_rate must be > 0");
  }
  for (double f : ablation_fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("ablation fractions must lie in [0, 1]");
  if (task == Task::confounded_images) {
    images.synthetic.validate();
    if (images.base_csv && !std::filesystem::exists(*images.base_csv))
      throw ConfigError("images.base_csv '" + *images.base_csv + "' does not exist");
    if (!(images.occlusion_prob >= 0.0 && images.occlusion_prob <= 1.0))
      throw ConfigError("images.occlusion_prob must lie in [0, 1]");
    images.annotations.validate();
  }
  if (task == Task::tabular) {
    if (tabular.path.empty()) throw ConfigError("tabular.path is required");
    if (!std::filesystem::exists(tabular.path))
      throw ConfigError("tabular.path '" + tabular.path + "' does not exist");
    if (tabular.embeddings_path && !std::filesystem::exists(*tabular.embeddings_path))
      throw ConfigError("tabular.embeddings_path '" + *tabular.embeddings_path + "' does not exist");
    if (!(tabular.test_fraction > 0.0 && tabular.test_fraction < 1.0))
      throw ConfigError("tabular.test_fraction must lie in (0, 1)");
    if (uv_source.kind == UvSourceKind::embeddings && !tabular.embeddings_path)
      throw ConfigError("uv_source embeddings needs tabular.embeddings_path");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    check_keys(j,
               {"schema_version", "task", "objectives", "robustness", "objective_overrides", "train",
                "grid", "n_train", "n_test", "validation_fraction", "uv_source", "seeds",
                "normalize_distances", "record_timing", "medical", "images", "tabular", "tuning",
                "ablation", "output_dir"},
               "config");
    if (!j.contains("schema_version")) throw ConfigError("schema_version is required");
    cfg.schema_version = j.at("schema_version").get<int>();
    if (!j.contains("task")) throw ConfigError("task is required");
    cfg.task = task_from_string(j.at("task").get<std::string>());
    if (!j.contains("objectives")) throw ConfigError("objectives is required");
    for (const auto& name : j.at("objectives").get<std::vector<std::string>>())
      cfg.objectives.push_back(objective_from_string(name));

    if (j.contains("robustness")) {
      const json& r = j.at("robustness");
      check_keys(r, {"alpha", "lipschitz", "ridge"}, "robustness");
      read_opt(r, "alpha", cfg.robustness.alpha);
      read_opt(r, "lipschitz", cfg.robustness.lipschitz);
      read_opt(r, "ridge", cfg.robustness.ridge);
    }
    if (j.contains("objective_overrides")) {
      for (const auto& [name, o] : j.at("objective_overrides").items())
        cfg.overrides[objective_from_string(name)] = parse_overrides(o, "objective_overrides." + name);
    }
    apply_task_defaults(cfg, j);
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, {"learning_rate", "steps", "adagrad_epsilon", "convergence_tol",
                     "transport_learning_rate"},
                 "train");
      read_opt(t, "learning_rate", cfg.train.learning_rate);
      read_opt(t, "steps", cfg.train.steps);
      read_opt(t, "adagrad_epsilon", cfg.train.adagrad_epsilon);
      read_opt(t, "convergence_tol", cfg.train.convergence_tol);
      read_opt(t, "transport_learning_rate", cfg.train.transport_learning_rate);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      check_keys(g, {"alpha_star", "q_train", "q_test"}, "grid");
      cfg.alpha_star_grid = read_list(g, "alpha_star");
      cfg.q_grid = read_list(g, "q_train");
      read_opt(g, "q_test", cfg.q_test);
    }
    read_opt(j, "n_train", cfg.n_train);
    read_opt(j, "n_test", cfg.n_test);
    read_opt(j, "validation_fraction", cfg.validation_fraction);
    if (j.contains("uv_source")) cfg.uv_source = parse_uv_source(j.at("uv_source"));
    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      cfg.seeds = s.is_number() ? std::vector<std::uint64_t>{s.get<std::uint64_t>()}
                                : s.get<std::vector<std::uint64_t>>();
    }
    read_opt(j, "normalize_distances", cfg.normalize_distances);
    read_opt(j, "record_timing", cfg.record_timing);
    if (j.contains("medical")) {
      const json& m = j.at("medical");
      check_keys(m, {"label_param", "noise_param", "params_are_stddev"}, "medical");
      read_opt(m, "label_param", cfg.medical.label_param);
      read_opt(m, "noise_param", cfg.medical.noise_param);
      read_opt(m, "params_are_stddev", cfg.medical.params_are_stddev);
    }
    if (j.contains("images")) {
      const json& im = j.at("images");
      check_keys(im, {"synthetic", "base_csv", "label_column", "occlusion_prob",
                      "occlusion_patch_fraction", "annotations"},
                 "images");
      if (im.contains("synthetic")) {
        const json& s = im.at("synthetic");
        check_keys(s, {"side", "num_classes", "strokes", "pixel_noise", "shift_prob", "label_noise",
                       "prototype_seed"},
                   "images.synthetic");
        auto& sc = cfg.images.synthetic;
        read_opt(s, "side", sc.side);
        read_opt(s, "num_classes", sc.num_classes);
        read_opt(s, "strokes", sc.strokes);
        read_opt(s, "pixel_noise", sc.pixel_noise);
        read_opt(s, "shift_prob", sc.shift_prob);
        read_opt(s, "label_noise", sc.label_noise);
        read_opt(s, "prototype_seed", sc.prototype_seed);
      }
      read_opt(im, "base_csv", cfg.images.base_csv);
      read_opt(im, "label_column", cfg.images.label_column);
      read_opt(im, "occlusion_prob", cfg.images.occlusion_prob);
      read_opt(im, "occlusion_patch_fraction", cfg.images.occlusion_patch_fraction);
      if (im.contains("annotations")) {
        const json& a = im.at("annotations");
        check_keys(a, {"replicates", "dim", "noise", "confusion"}, "images.annotations");
        read_opt(a, "replicates", cfg.images.annotations.replicates);
        read_opt(a, "dim", cfg.images.annotations.dim);
        read_opt(a, "noise", cfg.images.annotations.noise);
        read_opt(a, "confusion", cfg.images.annotations.confusion);
      }
    }
    if (j.contains("tabular")) {
      const json& t = j.at("tabular");
      check_keys(t, {"path", "label_column", "uv_column", "minority_value", "test_fraction",
                     "embeddings_path"},
                 "tabular");
      read_opt(t, "path", cfg.tabular.path);
      read_opt(t, "label_column", cfg.tabular.label_column);
      read_opt(t, "uv_column", cfg.tabular.uv_column);
      read_opt(t, "minority_value", cfg.tabular.minority_value);
      read_opt(t, "test_fraction", cfg.tabular.test_fraction);
      read_opt(t, "embeddings_path", cfg.tabular.embeddings_path);
    }
    if (j.contains("tuning")) {
      const json& t = j.at("tuning");
      check_keys(t, {"learning_rate", "ridge", "lipschitz", "alpha"}, "tuning");
      cfg.tuning.learning_rate = read_list(t, "learning_rate");
      cfg.tuning.ridge = read_list(t, "ridge");
      cfg.tuning.lipschitz = read_list(t, "lipschitz");
      cfg.tuning.alpha = read_list(t, "alpha");
    }
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      check_keys(a, {"fractions"}, "ablation");
      cfg.ablation_fractions = read_list(a, "fractions");
    }
    read_opt(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
  json canonical = j;
  canonical.erase("output_dir");
  cfg.hash = fnv1a_hex(canonical.dump());
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<GridPoint> grid_points(const ExperimentConfig& cfg) {
  std::vector<GridPoint> out;
  if (cfg.task == Task::medical_sim) {
    for (double q : cfg.q_grid) out.push_back({std::min(1.0, q / cfg.q_test), q});
  } else {
    for (double a : cfg.alpha_star_grid) out.push_back({a, a});
  }
  return out;
}

// ---- data preparation ------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (run seed, purpose, grid value).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, double grid_value = 0.0) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ std::bit_cast<std::uint64_t>(grid_value));
}

enum Stream : std::uint64_t {
  kTrainPool = 1,
  kTestPool,
  kSplit,
  kPosterior,
  kRows,
  kTransform,
  kAnnotations,
  kShuffle,
  kTestTransform,
};

std::vector<Index> shuffled_indices(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void split_pool(const Dataset& pool, double validation_fraction, std::uint64_t seed,
                Dataset& train, Dataset& validation) {
  const auto idx = shuffled_indices(pool.size(), seed);
  auto n_val = static_cast<Index>(std::llround(validation_fraction * static_cast<double>(pool.size())));
  n_val = std::min(n_val, pool.size() - 1);
  std::vector<Index> val(idx.begin(), idx.begin() + n_val);
  std::vector<Index> tr(idx.begin() + n_val, idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  train = pool.subset(tr);
  validation = n_val > 0 ? pool.subset(val) : Dataset{};
}

Dataset load_image_base(const ExperimentConfig& cfg) {
  CsvSchema schema;
  schema.label_column = cfg.images.label_column;
  schema.label_type = LabelType::classification;
  return load_csv_dataset(*cfg.images.base_csv, schema);
}

void prepare_images(const ExperimentConfig& cfg, const GridPoint& point, std::uint64_t seed,
                    Dataset& pool, Dataset& test) {
  Dataset train_base;
  Dataset test_base;
  if (cfg.images.base_csv) {
    const Dataset all = load_image_base(cfg);
    const auto idx = shuffled_indices(all.size(), derive_seed(seed, kRows));
    const Index n_test = std::min(cfg.n_test, all.size() / 2);
    const Index n_train = std::min(cfg.n_train, all.size() - n_test);
    std::vector<Index> te(idx.begin(), idx.begin() + n_test);
    std::vector<Index> tr(idx.begin() + n_test, idx.begin() + n_test + n_train);
    test_base = all.subset(te);
    train_base = all.subset(tr);
  } else {
    SyntheticDigitsConfig sc = cfg.images.synthetic;
    sc.n = cfg.n_train;
    sc.seed = derive_seed(seed, kTrainPool, point.q);
    train_base = gen_synthetic_digits(sc);
    sc.n = cfg.n_test;
    sc.seed = derive_seed(seed, kTestPool);
    test_base = gen_synthetic_digits(sc);
  }
  TransformConfig tc;
  tc.rotation_prob = point.q;
  tc.occlusion_prob = std::min(cfg.images.occlusion_prob, 1.0 - point.q);
  tc.occlusion_patch_fraction = cfg.images.occlusion_patch_fraction;
  tc.seed = derive_seed(seed, kTransform, point.q);
  pool = gen_confounded_classification(train_base, tc);
  TransformConfig test_tc = tc;
  test_tc.rotation_prob = cfg.q_test;
  test_tc.occlusion_prob = 0.0;
  test_tc.seed = derive_seed(seed, kTestTransform);
  test = gen_confounded_classification(test_base, test_tc);
}

void prepare_tabular(const ExperimentConfig& cfg, const GridPoint& point, std::uint64_t seed,
                     Dataset& pool, Dataset& test) {
  CsvSchema schema;
  schema.label_column = cfg.tabular.label_column;
  schema.uv_column = cfg.tabular.uv_column;
  schema.label_type = LabelType::classification;
  Dataset all = load_csv_dataset(cfg.tabular.path, schema);
  if (cfg.tabular.embeddings_path)
    all.uv_embeddings = load_embeddings(*cfg.tabular.embeddings_path, all.size());
  all.validate();
  const auto idx = shuffled_indices(all.size(), derive_seed(seed, kRows));
  const auto n_test = std::max<Index>(
      1, static_cast<Index>(std::llround(cfg.tabular.test_fraction * static_cast<double>(all.size()))));
  std::vector<Index> tr_min, tr_maj, te_min, te_maj;
  for (Index k = 0; k < all.size(); ++k) {
    const Index row = idx[static_cast<std::size_t>(k)];
    const bool minority = (*all.uv_oracle)[row] == cfg.tabular.minority_value;
    auto& bucket = k < n_test ? (minority ? te_min : te_maj) : (minority ? tr_min : tr_maj);
    bucket.push_back(row);
  }
  for (auto* v : {&tr_min, &tr_maj, &te_min, &te_maj}) std::sort(v->begin(), v->end());
  if (tr_min.empty() || tr_maj.empty() || te_min.empty() || te_maj.empty())
    throw Error("tabular data needs minority and majority rows in both train and test parts");
  const Dataset trmin = all.subset(tr_min), trmaj = all.subset(tr_maj);
  const Dataset temin = all.subset(te_min), temaj = all.subset(te_maj);
  pool = mix_subpopulation({point.q, &trmaj, &trmin, cfg.n_train, derive_seed(seed, kTrainPool, point.q)});
  if (cfg.q_test > 0.0) {
    test = mix_subpopulation({cfg.q_test, &temaj, &temin, cfg.n_test, derive_seed(seed, kTestPool)});
  } else {
    test = mix_subpopulation({1.0, &temin, &temaj, cfg.n_test, derive_seed(seed, kTestPool)});
  }
  pool.num_classes = all.num_classes;
  test.num_classes = all.num_classes;
}

}  // namespace

PreparedRun prepare_run(const ExperimentConfig& cfg, const GridPoint& point, std::uint64_t seed) {
  PreparedRun run;
  Dataset pool;
  MedicalSimConfig med = cfg.medical;
  switch (cfg.task) {
    case Task::medical_sim: {
      med.n = cfg.n_train;
      med.q = point.q;
      med.seed = derive_seed(seed, kTrainPool, point.q);
      pool = gen_medical_sim(med);
      MedicalSimConfig test_cfg = med;
      test_cfg.n = cfg.n_test;
      test_cfg.q = cfg.q_test;
      test_cfg.seed = derive_seed(seed, kTestPool);
      run.test = gen_medical_sim(test_cfg);
      break;
    }
    case Task::confounded_images:
      prepare_images(cfg, point, seed, pool, run.test);
      break;
    case Task::tabular:
      prepare_tabular(cfg, point, seed, pool, run.test);
      break;
  }
  split_pool(pool, cfg.validation_fraction, derive_seed(seed, kSplit, point.q), run.train,
             run.validation);

  const Index n = run.train.size();
  run.dx = pairwise_euclidean(run.train.features);
  switch (cfg.uv_source.kind) {
    case UvSourceKind::oracle:
      if (!run.train.uv_oracle) throw Error("uv_source oracle needs ground-truth values");
      run.dc = oracle_distance(*run.train.uv_oracle, run.train.uv_categorical);
      break;
    case UvSourceKind::posterior_x: {
      const Vector c = sample_medical_c_given_x(run.train.features, med,
                                                derive_seed(seed, kPosterior, point.q));
      run.dc = oracle_distance(c, false);
      break;
    }
    case UvSourceKind::embeddings: {
      if (cfg.task == Task::confounded_images) {
        run.train.uv_embeddings = simulate_annotations(
            *run.train.uv_oracle, 3, cfg.images.annotations, derive_seed(seed, kAnnotations, point.q));
      }
      if (!run.train.uv_embeddings) throw Error("uv_source embeddings needs annotation embeddings");
      run.dc = annotation_distance(*run.train.uv_embeddings);
      break;
    }
    case UvSourceKind::none:
      run.dc = DistanceMatrix::zeros(n);
      break;
  }
  if (cfg.uv_source.shuffle_fraction > 0.0)
    run.dc = shuffle_distances(run.dc, cfg.uv_source.shuffle_fraction,
                               derive_seed(seed, kShuffle, point.q));
  if (cfg.normalize_distances) {
    run.dx = rescale_unit_mean(run.dx);
    run.dc = rescale_unit_mean(run.dc);
  }
  return run;
}

// ---- experiment loop -------------------------------------------------------

namespace {

struct Candidate {
  RobustnessConfig robust;
  TrainConfig train;
};

std::vector<Candidate> candidates(const ExperimentConfig& cfg, Objective objective) {
  Candidate base{cfg.robustness, cfg.train};
  base.robust.objective = objective;
  if (auto it = cfg.overrides.find(objective); it != cfg.overrides.end()) {
    const ObjectiveOverrides& o = it->second;
    if (o.alpha) base.robust.alpha = *o.alpha;
    if (o.lipschitz) base.robust.lipschitz = *o.lipschitz;
    if (o.ridge) base.robust.ridge = *o.ridge;
    if (o.learning_rate) base.train.learning_rate = *o.learning_rate;
  }
  std::vector<Candidate> out{base};
  auto expand = [&](const std::vector<double>& values, auto setter, bool applies) {
    if (values.empty() || !applies) return;
    std::vector<Candidate> next;
    for (const Candidate& c : out)
      for (double v : values) {
        Candidate d = c;
        setter(d, v);
        next.push_back(d);
      }
    out = std::move(next);
  };
  const bool robust = objective != Objective::erm;
  expand(cfg.tuning.learning_rate, [](Candidate& c, double v) { c.train.learning_rate = v; }, true);
  expand(cfg.tuning.ridge, [](Candidate& c, double v) { c.robust.ridge = v; }, true);
  expand(cfg.tuning.alpha, [](Candidate& c, double v) { c.robust.alpha = v; }, robust);
  expand(cfg.tuning.lipschitz, [](Candidate& c, double v) { c.robust.lipschitz = v; },
         uses_transport(objective));
  return out;
}

RunRecord train_and_evaluate(const ExperimentConfig& cfg, const PreparedRun& run,
                             Objective objective, const Logger& log) {
  RunRecord rec;
  const LossKind kind = default_loss_kind(run.train);
  const auto options = candidates(cfg, objective);
  std::optional<TrainTrace> best;
  double best_val = 0.0;
  for (const Candidate& c : options) {
    TrainTrace trace = train(run.train, &run.dx, &run.dc, c.robust, c.train, kind);
    if (options.size() == 1) {
      best = std::move(trace);
      break;
    }
    if (run.validation.size() == 0)
      throw ConfigError("tuning grids need a validation split (validation_fraction > 0)");
    const double val = evaluate(trace.params, run.validation, kind).mean_loss;
    if (log) {
      std::ostringstream msg;
      msg << to_string(objective) << " candidate lr=" << c.train.learning_rate
          << " ridge=" << c.robust.ridge << " alpha=" << c.robust.alpha
          << " L=" << c.robust.lipschitz << " validation loss=" << val;
      log(msg.str());
    }
    if (!best || val < best_val) {
      best_val = val;
      best = std::move(trace);
    }
  }
  const Metrics m = evaluate(best->params, run.test, kind);
  rec.accuracy = m.accuracy;
  if (kind == LossKind::log) rec.log_loss = m.mean_loss;
  rec.mse = m.mse;
  if (m.relative_weights && m.relative_weights->size() >= 2) rec.relative_weight_x2 = (*m.relative_weights)[1];
  rec.objective_value = best->objective.back();
  if (cfg.record_timing) rec.wall_ms = best->wall_ms;
  return rec;
}

}  // namespace

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  const auto points = grid_points(cfg);
  struct Keyed {
    std::size_t objective, point, seed;
    RunRecord record;
  };
  std::vector<Keyed> keyed;
  for (std::size_t gi = 0; gi < points.size(); ++gi) {
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const std::uint64_t seed = cfg.seeds[si];
      std::optional<PreparedRun> run;
      std::string prep_error;
      try {
        run = prepare_run(cfg, points[gi], seed);
      } catch (const std::exception& e) {
        prep_error = std::string("data preparation failed: ") + e.what();
        if (log) log(prep_error);
      }
      for (std::size_t oi = 0; oi < cfg.objectives.size(); ++oi) {
        RunRecord rec;
        if (run) {
          try {
            rec = train_and_evaluate(cfg, *run, cfg.objectives[oi], log);
          } catch (const std::exception& e) {
            rec = RunRecord{};
            rec.error = e.what();
            if (log) log(to_string(cfg.objectives[oi]) + " failed: " + e.what());
          }
        } else {
          rec.error = prep_error;
        }
        rec.config_hash = cfg.hash;
        rec.task = to_string(cfg.task);
        rec.objective = to_string(cfg.objectives[oi]);
        rec.alpha_star = points[gi].alpha_star;
        rec.q = points[gi].q;
        rec.seed = seed;
        if (cfg.uv_source.shuffle_fraction > 0.0) rec.fraction = cfg.uv_source.shuffle_fraction;
        if (log && rec.ok()) {
          std::ostringstream msg;
          msg << rec.objective << " alpha*=" << rec.alpha_star << " seed=" << seed;
          if (rec.accuracy) msg << " accuracy=" << *rec.accuracy;
          if (rec.mse) msg << " mse=" << *rec.mse;
          log(msg.str());
        }
        keyed.push_back({oi, gi, si, std::move(rec)});
      }
    }
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.objective, a.point, a.seed) < std::tie(b.objective, b.point, b.seed);
  });
  std::vector<RunRecord> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::move(k.record));
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("spearman input length", static_cast<long>(a.size()), static_cast<long>(b.size()));
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

AblationResult run_shuffle_ablation(const ExperimentConfig& cfg,
                                    const std::vector<double>& fractions, const Logger& log) {
  if (cfg.uv_source.kind != UvSourceKind::oracle && cfg.uv_source.kind != UvSourceKind::embeddings)
    throw ConfigError("the shuffle ablation needs uv_source oracle or embeddings");
  if (fractions.empty()) throw ConfigError("ablation fractions must be nonempty");
  AblationResult result;
  result.fractions = fractions;
  // accuracy[seed][fraction], averaged over grid points
  std::vector<std::vector<double>> acc(cfg.seeds.size(), std::vector<double>(fractions.size(), 0.0));
  std::vector<std::vector<int>> count(cfg.seeds.size(), std::vector<int>(fractions.size(), 0));
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    ExperimentConfig c = cfg;
    c.uv_source.shuffle_fraction = fractions[fi];
    if (log) log("shuffle fraction " + csv::format_double(fractions[fi]));
    auto recs = run_experiment(c, log);
    for (auto& r : recs) {
      r.fraction = fractions[fi];
      if (r.ok() && r.objective == to_string(Objective::uv_dro) && r.accuracy) {
        const auto si = static_cast<std::size_t>(
            std::find(cfg.seeds.begin(), cfg.seeds.end(), r.seed) - cfg.seeds.begin());
        acc[si][fi] += *r.accuracy;
        ++count[si][fi];
      }
      result.records.push_back(std::move(r));
    }
  }
  result.mean_accuracy.assign(fractions.size(), 0.0);
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      if (count[si][fi] > 0) acc[si][fi] /= count[si][fi];
      result.mean_accuracy[fi] += acc[si][fi] / static_cast<double>(cfg.seeds.size());
    }
    result.seed_spearman.push_back(spearman(fractions, acc[si]));
  }
  result.mean_spearman = std::accumulate(result.seed_spearman.begin(), result.seed_spearman.end(), 0.0) /
                         static_cast<double>(result.seed_spearman.size());
  return result;
}

// ---- reporting -------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "jsonl") return ReportFormat::jsonl;
  throw ConfigError("unknown report format '" + name + "'");
}

const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{
      "task",  "objective", "alpha_star",     "q",           "seed",        "accuracy",
      "log_loss", "mse",    "relative_weight_x2", "objective_value", "wall_ms", "fraction",
      "config_hash", "error"};
  return cols;
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_parse(const std::string& field, std::size_t line, const std::string& column) {
  if (field.empty()) return std::nullopt;
  const auto v = csv::parse_double(field);
  if (!v) throw ParseError("bad number '" + field + "' in column " + column, line);
  return v;
}

std::optional<double> opt_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string records_to_csv(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  const auto& cols = record_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  for (const RunRecord& r : records) {
    out << csv::escape(r.task) << ',' << csv::escape(r.objective) << ','
        << csv::format_double(r.alpha_star) << ',' << csv::format_double(r.q) << ',' << r.seed << ','
        << opt_field(r.accuracy) << ',' << opt_field(r.log_loss) << ',' << opt_field(r.mse) << ','
        << opt_field(r.relative_weight_x2) << ',' << opt_field(r.objective_value) << ','
        << opt_field(r.wall_ms) << ',' << opt_field(r.fraction) << ',' << csv::escape(r.config_hash)
        << ',' << csv::escape(r.error.value_or("")) << '\n';
  }
  return out.str();
}

std::string records_to_jsonl(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  for (const RunRecord& r : records) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["objective"] = r.objective;
    j["alpha_star"] = r.alpha_star;
    j["q"] = r.q;
    j["seed"] = r.seed;
    j["accuracy"] = opt_json(r.accuracy);
    j["log_loss"] = opt_json(r.log_loss);
    j["mse"] = opt_json(r.mse);
    j["relative_weight_x2"] = opt_json(r.relative_weight_x2);
    j["objective_value"] = opt_json(r.objective_value);
    j["wall_ms"] = opt_json(r.wall_ms);
    j["fraction"] = opt_json(r.fraction);
    j["config_hash"] = r.config_hash;
    j["error"] = r.error ? json(*r.error) : json(nullptr);
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<RunRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  const csv::Table t = csv::read(in);
  const auto& cols = record_columns();
  std::vector<std::size_t> pos;
  for (const auto& c : cols) {
    const auto p = t.column(c);
    if (!p) throw ParseError("records file is missing column '" + c + "'", 1);
    pos.push_back(*p);
  }
  std::vector<RunRecord> out;
  for (const auto& row : t.rows) {
    auto f = [&](std::size_t k) -> const std::string& { return row.fields[pos[k]]; };
    RunRecord r;
    r.task = f(0);
    r.objective = f(1);
    r.alpha_star = opt_parse(f(2), row.line, cols[2]).value_or(0.0);
    r.q = opt_parse(f(3), row.line, cols[3]).value_or(0.0);
    try {
      r.seed = std::stoull(f(4));
    } catch (const std::exception&) {
      throw ParseError("bad seed '" + f(4) + "'", row.line);
    }
    r.accuracy = opt_parse(f(5), row.line, cols[5]);
    r.log_loss = opt_parse(f(6), row.line, cols[6]);
    r.mse = opt_parse(f(7), row.line, cols[7]);
    r.relative_weight_x2 = opt_parse(f(8), row.line, cols[8]);
    r.objective_value = opt_parse(f(9), row.line, cols[9]);
    r.wall_ms = opt_parse(f(10), row.line, cols[10]);
    r.fraction = opt_parse(f(11), row.line, cols[11]);
    r.config_hash = f(12);
    if (!f(13).empty()) r.error = f(13);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunRecord> records_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      RunRecord r;
      r.task = j.at("task").get<std::string>();
      r.objective = j.at("objective").get<std::string>();
      r.alpha_star = j.at("alpha_star").get<double>();
      r.q = j.at("q").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.accuracy = opt_from_json(j, "accuracy");
      r.log_loss = opt_from_json(j, "log_loss");
      r.mse = opt_from_json(j, "mse");
      r.relative_weight_x2 = opt_from_json(j, "relative_weight_x2");
      r.objective_value = opt_from_json(j, "objective_value");
      r.wall_ms = opt_from_json(j, "wall_ms");
      r.fraction = opt_from_json(j, "fraction");
      r.config_hash = j.value("config_hash", "");
      if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), lineno);
    }
  }
  return out;
}

std::vector<RunRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  if (std::filesystem::path(path).extension() == ".jsonl") return records_from_jsonl(ss.str());
  return records_from_csv(ss.str());
}

std::string aggregate_csv(const std::vector<RunRecord>& records) {
  struct Group {
    std::string task, objective;
    double alpha_star, q;
    std::optional<double> fraction;
    std::vector<const RunRecord*> members;
  };
  std::vector<Group> groups;
  for (const RunRecord& r : records) {
    if (!r.ok()) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.task == r.task && g.objective == r.objective && g.alpha_star == r.alpha_star &&
             g.q == r.q && g.fraction == r.fraction;
    });
    if (it == groups.end()) {
      groups.push_back({r.task, r.objective, r.alpha_star, r.q, r.fraction, {}});
      it = groups.end() - 1;
    }
    it->members.push_back(&r);
  }
  using Getter = std::optional<double> RunRecord::*;
  const std::vector<std::pair<std::string, Getter>> metrics{
      {"accuracy", &RunRecord::accuracy},
      {"log_loss", &RunRecord::log_loss},
      {"mse", &RunRecord::mse},
      {"relative_weight_x2", &RunRecord::relative_weight_x2},
      {"objective_value", &RunRecord::objective_value}};
  std::ostringstream out;
  out << "task,objective,alpha_star,q,fraction,runs";
  for (const auto& [name, g] : metrics) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const Group& g : groups) {
    out << csv::escape(g.task) << ',' << csv::escape(g.objective) << ','
        << csv::format_double(g.alpha_star) << ',' << csv::format_double(g.q) << ','
        << opt_field(g.fraction) << ',' << g.members.size();
    for (const auto& [name, getter] : metrics) {
      std::vector<double> v;
      for (const RunRecord* r : g.members)
        if ((r->*getter)) v.push_back(*(r->*getter));
      if (v.empty()) {
        out << ",,";
        continue;
      }
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
      out << ',' << csv::format_double(mean) << ',' << csv::format_double(sd);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> report(const std::vector<RunRecord>& records, const std::string& dir,
                                ReportFormat format) {
  if (records.empty()) throw Error("no records to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  const std::string records_path =
      (base / (format == ReportFormat::csv ? "records.csv" : "records.jsonl")).string();
  const std::string aggregate_path = (base / "aggregate.csv").string();
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path + "'");
  };
  write(records_path, format == ReportFormat::csv ? records_to_csv(records) : records_to_jsonl(records));
  write(aggregate_path, aggregate_csv(records));
  return {records_path, aggregate_path};
}

}  // namespace uvdro
