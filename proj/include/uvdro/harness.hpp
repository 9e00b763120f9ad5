#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uvdro/datagen.hpp"
#include "uvdro/objectives.hpp"
#include "uvdro/optimizer.hpp"

namespace uvdro {

enum class Task { medical_sim, confounded_images, tabular };

std::string to_string(Task task);

/// Where the unmeasured-variable costs come from.
enum class UvSourceKind {
  oracle,       ///< ground-truth c
  posterior_x,  ///< c redrawn from c | x (simulated diagnosis task only)
  embeddings,   ///< mean cosine distance between annotation embeddings
  none,         ///< D_c = 0
};

struct UvSource {
  UvSourceKind kind = UvSourceKind::oracle;
  /// Fraction of examples whose unmeasured-variable identities get permuted.
  double shuffle_fraction = 0.0;
};

/// Per-objective hyperparameter replacements.
struct ObjectiveOverrides {
  std::optional<double> alpha;
  std::optional<double> lipschitz;
  std::optional<double> ridge;
  std::optional<double> learning_rate;
};

/// Optional validation grids; every combination is trained and the one with
/// the lowest validation loss is kept.
struct TuningGrid {
  std::vector<double> learning_rate;
  std::vector<double> ridge;
  std::vector<double> lipschitz;
  std::vector<double> alpha;

  bool empty() const {
    return learning_rate.empty() && ridge.empty() && lipschitz.empty() && alpha.empty();
  }
};

struct ImagesTaskConfig {
  SyntheticDigitsConfig synthetic;
  std::optional<std::string> base_csv;  ///< flattened images + label column
  std::string label_column = "label";
  double occlusion_prob = 0.0;
  double occlusion_patch_fraction = 0.25;
  AnnotationSimConfig annotations;
};

struct TabularTaskConfig {
  std::string path;
  std::string label_column = "label";
  std::string uv_column = "uv";
  double minority_value = 1.0;
  double test_fraction = 0.3;
  std::optional<std::string> embeddings_path;  ///< aligned with data rows
};

struct ExperimentConfig {
  int schema_version = 1;
  Task task = Task::medical_sim;
  std::vector<Objective> objectives;
  RobustnessConfig robustness;
  std::map<Objective, ObjectiveOverrides> overrides;
  TrainConfig train;
  /// Training-set minority fractions (images, tabular).
  std::vector<double> alpha_star_grid;
  /// Training lie probabilities (simulated diagnosis).
  std::vector<double> q_grid;
  double q_test = 1.0;
  Index n_train = 1000;  ///< pool split into train / validation
  Index n_test = 2000;
  double validation_fraction = 0.2;
  UvSource uv_source;
  std::vector<std::uint64_t> seeds{0};
  bool normalize_distances = false;
  /// Wall times are not reproducible, so they are only written on request.
  bool record_timing = false;
  MedicalSimConfig medical;
  ImagesTaskConfig images;
  TabularTaskConfig tabular;
  TuningGrid tuning;
  std::vector<double> ablation_fractions;
  std::string output_dir = "out";
  /// FNV-1a of the canonical config document (output_dir excluded).
  std::string hash;

  /// Paths must exist, grids must be nonempty, values in range.
  void validate() const;
};

/// Parses and validates a JSON config. Unknown keys are rejected. Throws
/// ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct GridPoint {
  double alpha_star = 0.0;
  double q = 0.0;  ///< training q (lie probability or transform / minority rate)
};

std::vector<GridPoint> grid_points(const ExperimentConfig& cfg);

struct RunRecord {
  std::string config_hash;
  std::string task;
  std::string objective;
  double alpha_star = 0.0;
  double q = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> fraction;
  std::optional<double> accuracy;
  std::optional<double> log_loss;
  std::optional<double> mse;
  std::optional<double> relative_weight_x2;
  std::optional<double> objective_value;
  std::optional<double> wall_ms;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  bool operator==(const RunRecord&) const = default;
};

/// Progress and failure messages; defaults to silence.
using Logger = std::function<void(const std::string&)>;

/// Train / validation / test data for one (grid point, seed), plus the cost
/// matrices built on the training split.
struct PreparedRun {
  Dataset train;
  Dataset validation;
  Dataset test;
  DistanceMatrix dx;
  DistanceMatrix dc;
};

PreparedRun prepare_run(const ExperimentConfig& cfg, const GridPoint& point, std::uint64_t seed);

/// Every (objective, grid point, seed); records come back ordered by
/// objective (config order), grid point, then seed.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const Logger& log = {});

struct AblationResult {
  std::vector<RunRecord> records;
  std::vector<double> fractions;
  /// Mean uv_dro test accuracy per fraction, across seeds.
  std::vector<double> mean_accuracy;
  /// Spearman(fraction, accuracy) per seed.
  std::vector<double> seed_spearman;
  double mean_spearman = 0.0;
};

AblationResult run_shuffle_ablation(const ExperimentConfig& cfg,
                                    const std::vector<double>& fractions,
                                    const Logger& log = {});

/// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

enum class ReportFormat { csv, jsonl };
ReportFormat report_format_from_string(const std::string& name);

/// Column order shared by the csv and jsonl writers.
const std::vector<std::string>& record_columns();

std::string records_to_csv(const std::vector<RunRecord>& records);
std::string records_to_jsonl(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_csv(const std::string& text);
std::vector<RunRecord> records_from_jsonl(const std::string& text);
std::vector<RunRecord> read_records(const std::string& path);

/// Per (task, objective, alpha_star, q, fraction): mean and sample standard
/// deviation across seeds of every metric; failed records are skipped.
std::string aggregate_csv(const std::vector<RunRecord>& records);

/// Writes records.<ext> and aggregate.csv into `dir` (created if needed);
/// returns the written paths.
std::vector<std::string> report(const std::vector<RunRecord>& records, const std::string& dir,
                                ReportFormat format);

}  // namespace uvdro
