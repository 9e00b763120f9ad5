#include "uvdro/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <string>

#include "uvdro/csv.hpp"
#include "uvdro/errors.hpp"

namespace uvdro {

// ---- simulated diagnosis ---------------------------------------------------

void MedicalSimConfig::validate() const {
  if (n < 1) throw ConfigError("medical sim needs n >= 1");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("lie probability q must lie in [0, 1]");
  if (!(label_param > 0.0) || !(noise_param > 0.0))
    throw ConfigError("medical sim normal parameters must be > 0");
}

double MedicalSimConfig::label_variance() const {
  return params_are_stddev ? label_param * label_param : label_param;
}

double MedicalSimConfig::noise_variance() const {
  return params_are_stddev ? noise_param * noise_param : noise_param;
}

Dataset gen_medical_sim(const MedicalSimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution lies(cfg.q);
  std::normal_distribution<double> label(0.0, std::sqrt(cfg.label_variance()));
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance()));
  Dataset d;
  d.features.resize(cfg.n, 2);
  d.labels.resize(cfg.n);
  Vector c(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    c[i] = lies(rng) ? -1.0 : 1.0;
    const double y = label(rng);
    const double eps = noise(rng);
    d.features(i, 0) = c[i] * y;
    d.features(i, 1) = y + eps;
    d.labels[i] = y;
  }
  d.uv_oracle = std::move(c);
  d.uv_categorical = false;
  return d;
}

Vector sample_medical_c_given_x(const Matrix& features, const MedicalSimConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  if (features.cols() != 2) throw DimensionError("medical sim feature count", 2, features.cols());
  const Index n = features.rows();
  Vector c(n);
  if (cfg.q == 0.0 || cfg.q == 1.0) {
    c.setConstant(cfg.q == 0.0 ? 1.0 : -1.0);
    return c;
  }
  // p(x | c) = p_y(c x1) N(x2; c x1, s2) and p_y is symmetric, so
  // log P(c=-1|x) / P(c=+1|x) = log(q / (1 - q)) - 2 x1 x2 / s2.
  const double prior = std::log(cfg.q / (1.0 - cfg.q));
  const double s2 = cfg.noise_variance();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double logit = prior - 2.0 * features(i, 0) * features(i, 1) / s2;
    const double p_neg = 1.0 / (1.0 + std::exp(-logit));
    c[i] = u(rng) < p_neg ? -1.0 : 1.0;
  }
  return c;
}

// ---- image transformations -------------------------------------------------

namespace {

void check_side(std::size_t size, Index side) {
  if (side < 1 || static_cast<std::size_t>(side * side) != size)
    throw DimensionError("image length for side " + std::to_string(side), side * side,
                         static_cast<long>(size));
}

Index infer_side(Index dim) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side != dim)
    throw DimensionError("image length (not a perfect square)", side * side, dim);
  return side;
}

}  // namespace

std::vector<double> apply_rotation(std::span<const double> image, Index side) {
  check_side(image.size(), side);
  return std::vector<double>(image.rbegin(), image.rend());
}

std::vector<double> apply_occlusion(std::span<const double> image, Index side,
                                    double patch_fraction, std::uint64_t seed) {
  check_side(image.size(), side);
  if (!(patch_fraction > 0.0 && patch_fraction <= 1.0))
    throw ConfigError("occlusion patch fraction must lie in (0, 1]");
  const Index patch =
      std::min(side, static_cast<Index>(std::ceil(patch_fraction * static_cast<double>(side))));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pos(0, side - patch);
  const Index top = pos(rng);
  const Index left = pos(rng);
  std::vector<double> out(image.begin(), image.end());
  for (Index r = top; r < top + patch; ++r)
    for (Index c = left; c < left + patch; ++c) out[static_cast<std::size_t>(r * side + c)] = 0.0;
  return out;
}

void TransformConfig::validate() const {
  if (!(rotation_prob >= 0.0 && occlusion_prob >= 0.0 && rotation_prob + occlusion_prob <= 1.0 + 1e-12))
    throw ConfigError("transform probabilities must be >= 0 and sum to at most 1");
  if (!(occlusion_patch_fraction > 0.0 && occlusion_patch_fraction < 1.0))
    throw ConfigError("occlusion patch fraction must lie in (0, 1)");
}

Dataset gen_confounded_classification(const Dataset& base, const TransformConfig& cfg) {
  cfg.validate();
  if (!base.is_classification()) throw Error("confounded images need class labels");
  const Index side = cfg.image_side > 0 ? cfg.image_side : infer_side(base.dim());
  check_side(static_cast<std::size_t>(base.dim()), side);
  Dataset out = base;
  out.uv_embeddings.reset();
  out.uv_categorical = true;
  Vector codes(base.size());
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < base.size(); ++i) {
    const double draw = u(rng);
    const std::uint64_t patch_seed = rng();
    const std::span<const double> row(base.features.row(i).data(),
                                      static_cast<std::size_t>(base.dim()));
    Transform t = Transform::identity;
    if (draw < cfg.rotation_prob) {
      t = Transform::rotation;
      const auto img = apply_rotation(row, side);
      std::copy(img.begin(), img.end(), out.features.row(i).data());
    } else if (draw < cfg.rotation_prob + cfg.occlusion_prob) {
      t = Transform::occlusion;
      const auto img = apply_occlusion(row, side, cfg.occlusion_patch_fraction, patch_seed);
      std::copy(img.begin(), img.end(), out.features.row(i).data());
    }
    codes[i] = static_cast<double>(t);
  }
  out.uv_oracle = std::move(codes);
  return out;
}

void SyntheticDigitsConfig::validate() const {
  if (n < 1) throw ConfigError("synthetic digits need n >= 1");
  if (side < 3) throw ConfigError("synthetic digits need side >= 3");
  if (num_classes < 2) throw ConfigError("synthetic digits need at least 2 classes");
  if (strokes < 1) throw ConfigError("synthetic digits need at least one stroke");
  if (!(pixel_noise >= 0.0)) throw ConfigError("pixel_noise must be >= 0");
  if (!(shift_prob >= 0.0 && shift_prob <= 1.0)) throw ConfigError("shift_prob must lie in [0, 1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0))
    throw ConfigError("label_noise must lie in [0, 1]");
}

namespace {

Matrix stroke_prototypes(const SyntheticDigitsConfig& cfg) {
  const Index side = cfg.side;
  Matrix protos = Matrix::Zero(cfg.num_classes, side * side);
  std::mt19937_64 rng(cfg.prototype_seed);
  std::uniform_real_distribution<double> coord(0.5, static_cast<double>(side) - 1.5);
  for (int k = 0; k < cfg.num_classes; ++k) {
    double x = coord(rng);
    double y = coord(rng);
    // Connected polyline, like a pen stroke.
    for (int s = 0; s < cfg.strokes; ++s) {
      const double nx = coord(rng);
      const double ny = coord(rng);
      const int samples = static_cast<int>(4 * side);
      for (int t = 0; t <= samples; ++t) {
        const double f = static_cast<double>(t) / samples;
        const auto r = static_cast<Index>(std::lround(y + f * (ny - y)));
        const auto c = static_cast<Index>(std::lround(x + f * (nx - x)));
        protos(k, r * side + c) = 1.0;
      }
      x = nx;
      y = ny;
    }
  }
  return protos;
}

}  // namespace

Dataset gen_synthetic_digits(const SyntheticDigitsConfig& cfg) {
  cfg.validate();
  const Index side = cfg.side;
  const Matrix protos = stroke_prototypes(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> cls(0, cfg.num_classes - 1);
  std::uniform_int_distribution<int> offset(-1, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.pixel_noise > 0.0 ? cfg.pixel_noise : 1.0);
  Dataset d;
  d.num_classes = cfg.num_classes;
  d.features.resize(cfg.n, side * side);
  d.labels.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    const int k = cls(rng);
    int dr = 0;
    int dc = 0;
    if (u(rng) < cfg.shift_prob) {
      dr = offset(rng);
      dc = offset(rng);
    }
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        const Index sr = r - dr;
        const Index sc = c - dc;
        double v = (sr >= 0 && sr < side && sc >= 0 && sc < side) ? protos(k, sr * side + sc) : 0.0;
        if (cfg.pixel_noise > 0.0) v += noise(rng);
        d.features(i, r * side + c) = std::clamp(v, 0.0, 1.0);
      }
    }
    int label = k;
    if (cfg.label_noise > 0.0 && u(rng) < cfg.label_noise) {
      label = cls(rng);
    }
    d.labels[i] = label;
  }
  return d;
}

void AnnotationSimConfig::validate() const {
  if (replicates < 1) throw ConfigError("annotations need at least one replicate");
  if (dim < 1) throw ConfigError("annotation dimension must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("annotation noise must be >= 0");
  if (!(confusion >= 0.0 && confusion <= 1.0))
    throw ConfigError("annotation confusion must lie in [0, 1]");
}

std::vector<Matrix> simulate_annotations(const Vector& categories, int num_categories,
                                         const AnnotationSimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (num_categories < 1 || cfg.dim < num_categories)
    throw ConfigError("annotation dimension must cover every category");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, num_categories - 1);
  std::normal_distribution<double> noise(0.0, cfg.noise > 0.0 ? cfg.noise : 1.0);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(categories.size()));
  for (Index i = 0; i < categories.size(); ++i) {
    const int truth = static_cast<int>(categories[i]);
    if (truth < 0 || truth >= num_categories)
      throw Error("category " + std::to_string(truth) + " out of range");
    Matrix reps = Matrix::Zero(cfg.replicates, cfg.dim);
    for (int r = 0; r < cfg.replicates; ++r) {
      const int said = u(rng) < cfg.confusion ? any(rng) : truth;
      reps(r, said) = 1.0;
      if (cfg.noise > 0.0)
        for (Index k = 0; k < cfg.dim; ++k) reps(r, k) += noise(rng);
      if (reps.row(r).norm() == 0.0) reps(r, said) = 1.0;
    }
    out.push_back(std::move(reps));
  }
  return out;
}

// ---- mixtures --------------------------------------------------------------

void MixtureConfig::validate() const {
  if (!(alpha_star > 0.0 && alpha_star <= 1.0)) throw ConfigError("alpha_star must lie in (0, 1]");
  if (!majority_source || !minority_source) throw ConfigError("mixture needs both sources");
  if (majority_source->size() < 1 || minority_source->size() < 1)
    throw ConfigError("mixture sources must be nonempty");
  if (majority_source->dim() != minority_source->dim())
    throw DimensionError("mixture source dimension", majority_source->dim(), minority_source->dim());
  if (n < 1) throw ConfigError("mixture needs n >= 1");
}

Dataset mix_subpopulation(const MixtureConfig& cfg) {
  cfg.validate();
  const Dataset& maj = *cfg.majority_source;
  const Dataset& min = *cfg.minority_source;
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution minority(cfg.alpha_star);
  std::uniform_int_distribution<Index> pick_maj(0, maj.size() - 1);
  std::uniform_int_distribution<Index> pick_min(0, min.size() - 1);
  Dataset out;
  out.num_classes = std::max(maj.num_classes, min.num_classes);
  out.class_names = maj.class_names.size() >= min.class_names.size() ? maj.class_names : min.class_names;
  out.uv_categorical = maj.uv_categorical;
  out.features.resize(cfg.n, maj.dim());
  out.labels.resize(cfg.n);
  const bool with_uv = maj.uv_oracle && min.uv_oracle;
  const bool with_emb = maj.uv_embeddings && min.uv_embeddings;
  Vector uv(with_uv ? cfg.n : 0);
  std::vector<Matrix> emb;
  std::vector<int> flags(static_cast<std::size_t>(cfg.n));
  for (Index i = 0; i < cfg.n; ++i) {
    const bool from_min = minority(rng);
    const Dataset& src = from_min ? min : maj;
    const Index r = from_min ? pick_min(rng) : pick_maj(rng);
    out.features.row(i) = src.features.row(r);
    out.labels[i] = src.labels[r];
    if (with_uv) uv[i] = (*src.uv_oracle)[r];
    if (with_emb) emb.push_back((*src.uv_embeddings)[static_cast<std::size_t>(r)]);
    flags[static_cast<std::size_t>(i)] = from_min ? 1 : 0;
  }
  if (with_uv) out.uv_oracle = std::move(uv);
  if (with_emb) out.uv_embeddings = std::move(emb);
  out.source_flags = std::move(flags);
  return out;
}

// ---- loaders ---------------------------------------------------------------

Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema) {
  const csv::Table table = csv::read_file(path);
  const auto label_col = table.column(schema.label_column);
  if (!label_col) throw ParseError("missing label column '" + schema.label_column + "'", 1);
  std::optional<std::size_t> uv_col;
  if (schema.uv_column) {
    uv_col = table.column(*schema.uv_column);
    if (!uv_col) throw ParseError("missing uv column '" + *schema.uv_column + "'", 1);
  }
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t k = 0; k < table.header.size(); ++k)
      if (k != *label_col && (!uv_col || k != *uv_col)) feature_cols.push_back(k);
  } else {
    for (const auto& name : schema.feature_columns) {
      const auto k = table.column(name);
      if (!k) throw ParseError("missing feature column '" + name + "'", 1);
      feature_cols.push_back(*k);
    }
  }
  if (feature_cols.empty()) throw ParseError("no feature columns", 1);
  if (table.rows.empty()) throw ParseError("no data rows", 0);

  const auto n = static_cast<Index>(table.rows.size());
  Dataset d;
  d.features.resize(n, static_cast<Index>(feature_cols.size()));
  for (Index i = 0; i < n; ++i) {
    const csv::Row& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const auto v = csv::parse_double(row.fields[feature_cols[k]]);
      if (!v)
        throw ParseError("non-numeric value '" + row.fields[feature_cols[k]] + "' in column '" +
                             table.header[feature_cols[k]] + "'",
                         row.line);
      d.features(i, static_cast<Index>(k)) = *v;
    }
  }

  bool classification = schema.label_type == LabelType::classification;
  if (schema.label_type == LabelType::automatic) {
    for (const auto& row : table.rows)
      if (!csv::parse_double(row.fields[*label_col])) classification = true;
  }
  d.labels.resize(n);
  if (classification) {
    std::map<std::string, int> codes;
    for (Index i = 0; i < n; ++i) {
      const std::string& s = table.rows[static_cast<std::size_t>(i)].fields[*label_col];
      auto [it, inserted] = codes.emplace(s, static_cast<int>(codes.size()));
      if (inserted) d.class_names.push_back(s);
      d.labels[i] = it->second;
    }
    d.num_classes = static_cast<int>(codes.size());
    if (d.num_classes < 2) throw ParseError("classification labels need at least 2 classes", 0);
  } else {
    for (Index i = 0; i < n; ++i) {
      const csv::Row& row = table.rows[static_cast<std::size_t>(i)];
      const auto v = csv::parse_double(row.fields[*label_col]);
      if (!v) throw ParseError("non-numeric regression label '" + row.fields[*label_col] + "'", row.line);
      d.labels[i] = *v;
    }
  }

  if (uv_col) {
    Vector uv(n);
    bool numeric = true;
    for (const auto& row : table.rows)
      if (!csv::parse_double(row.fields[*uv_col])) numeric = false;
    if (numeric) {
      for (Index i = 0; i < n; ++i)
        uv[i] = *csv::parse_double(table.rows[static_cast<std::size_t>(i)].fields[*uv_col]);
    } else {
      std::map<std::string, int> codes;
      for (Index i = 0; i < n; ++i) {
        const std::string& s = table.rows[static_cast<std::size_t>(i)].fields[*uv_col];
        uv[i] = codes.emplace(s, static_cast<int>(codes.size())).first->second;
      }
    }
    d.uv_oracle = std::move(uv);
    d.uv_categorical = !numeric;
  }
  d.validate();
  return d;
}

std::vector<Matrix> load_embeddings(const std::string& path, Index n) {
  const csv::Table table = csv::read_file(path, false);
  std::vector<std::map<long, std::vector<double>>> grouped(static_cast<std::size_t>(n));
  std::optional<std::size_t> width;
  bool first = true;
  for (const auto& row : table.rows) {
    const auto id = csv::parse_double(row.fields[0]);
    if (first && !id) {
      first = false;  // header row
      continue;
    }
    first = false;
    if (row.fields.size() < 3) throw ParseError("embedding row needs id, replicate and values", row.line);
    const auto rep = csv::parse_double(row.fields[1]);
    if (!id || *id != std::floor(*id) || !rep || *rep != std::floor(*rep))
      throw ParseError("example_id and replicate_id must be integers", row.line);
    if (*id < 0 || *id >= static_cast<double>(n))
      throw ParseError("unknown example_id " + row.fields[0], row.line);
    if (width && *width != row.fields.size())
      throw ParseError("inconsistent embedding dimension: expected " + std::to_string(*width - 2) +
                           ", found " + std::to_string(row.fields.size() - 2),
                       row.line);
    width = row.fields.size();
    std::vector<double> v;
    v.reserve(row.fields.size() - 2);
    for (std::size_t k = 2; k < row.fields.size(); ++k) {
      const auto x = csv::parse_double(row.fields[k]);
      if (!x) throw ParseError("non-numeric embedding value '" + row.fields[k] + "'", row.line);
      v.push_back(*x);
    }
    auto& slot = grouped[static_cast<std::size_t>(*id)];
    if (!slot.emplace(static_cast<long>(*rep), std::move(v)).second)
      throw ParseError("duplicate (example_id, replicate_id) = (" + row.fields[0] + ", " +
                           row.fields[1] + ")",
                       row.line);
  }
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& reps = grouped[static_cast<std::size_t>(i)];
    if (reps.empty()) throw ParseError("example " + std::to_string(i) + " has no embeddings", 0);
    Matrix m(static_cast<Index>(reps.size()), static_cast<Index>(reps.begin()->second.size()));
    Index r = 0;
    for (const auto& [rid, v] : reps) {
      for (std::size_t k = 0; k < v.size(); ++k) m(r, static_cast<Index>(k)) = v[k];
      ++r;
    }
    out.push_back(std::move(m));
  }
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (Index k = 0; k < data.dim(); ++k) out << 'x' << (k + 1) << ',';
  out << "label";
  if (data.uv_oracle) out << ",uv";
  if (data.source_flags) out << ",source";
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index k = 0; k < data.dim(); ++k) out << csv::format_double(data.features(i, k)) << ',';
    if (data.is_classification() && !data.class_names.empty())
      out << csv::escape(data.class_names[static_cast<std::size_t>(data.labels[i])]);
    else
      out << csv::format_double(data.labels[i]);
    if (data.uv_oracle) out << ',' << csv::format_double((*data.uv_oracle)[i]);
    if (data.source_flags) out << ',' << (*data.source_flags)[static_cast<std::size_t>(i)];
    out << '\n';
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

void write_embeddings_csv(const std::vector<Matrix>& embeddings, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const Index k = embeddings.empty() ? 0 : embeddings.front().cols();
  out << "example_id,replicate_id";
  for (Index j = 0; j < k; ++j) out << ",v" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (Index r = 0; r < embeddings[i].rows(); ++r) {
      out << i << ',' << r;
      for (Index j = 0; j < embeddings[i].cols(); ++j)
        out << ',' << csv::format_double(embeddings[i](r, j));
      out << '\n';
    }
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace uvdro
