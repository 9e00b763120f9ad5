#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uvdro/dataset.hpp"

namespace uvdro {

// ---- simulated diagnosis task ----------------------------------------------

/// y ~ N(0, label_param), c = +1 / -1 with P(c = -1) = q,
/// x1 = c * y, x2 = y + eps with eps ~ N(0, noise_param).
/// The second normal parameter is a variance unless `params_are_stddev`.
struct MedicalSimConfig {
  Index n = 1000;
  double q = 0.05;
  std::uint64_t seed = 0;
  double label_param = 2.0;
  double noise_param = 4.0;
  bool params_are_stddev = false;

  void validate() const;
  double label_variance() const;
  double noise_variance() const;
};

/// Features [x1, x2], real labels, uv_oracle = c (numeric).
Dataset gen_medical_sim(const MedicalSimConfig& cfg);

/// Draws c from its posterior given (x1, x2) only, under the generating model
/// with lie probability q. This is the label-blind imputation.
Vector sample_medical_c_given_x(const Matrix& features, const MedicalSimConfig& cfg,
                                std::uint64_t seed);

// ---- image transformations -------------------------------------------------

enum class Transform : int { identity = 0, rotation = 1, occlusion = 2 };

/// 180 degree rotation of a row-major side x side image (index reversal).
std::vector<double> apply_rotation(std::span<const double> image, Index side);

/// Zeroes a square patch of side ceil(patch_fraction * side) at a uniformly
/// drawn position.
std::vector<double> apply_occlusion(std::span<const double> image, Index side,
                                    double patch_fraction, std::uint64_t seed);

struct TransformConfig {
  double rotation_prob = 0.1;
  double occlusion_prob = 0.0;
  double occlusion_patch_fraction = 0.25;
  Index image_side = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Transforms every example independently; uv_oracle records the Transform
/// code (categorical). Labels are left untouched.
Dataset gen_confounded_classification(const Dataset& base, const TransformConfig& cfg);

/// Bundled stand-in for a digit dataset: each class is a fixed stroke
/// prototype (drawn from prototype_seed), observed with a random one-pixel
/// shift, additive pixel noise, and optional label noise.
struct SyntheticDigitsConfig {
  Index n = 2000;
  Index side = 10;
  int num_classes = 10;
  int strokes = 3;
  double pixel_noise = 0.2;
  double shift_prob = 0.5;
  double label_noise = 0.0;
  std::uint64_t prototype_seed = 7;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset gen_synthetic_digits(const SyntheticDigitsConfig& cfg);

/// Simulated crowd annotations: each replicate points along the one-hot
/// direction of the example's category, reports a wrong category with
/// probability `confusion`, and carries isotropic Gaussian noise.
struct AnnotationSimConfig {
  int replicates = 2;
  Index dim = 8;
  double noise = 0.3;
  double confusion = 0.1;

  void validate() const;
};

/// `categories` holds codes 0..num_categories-1; needs dim >= num_categories.
std::vector<Matrix> simulate_annotations(const Vector& categories, int num_categories,
                                         const AnnotationSimConfig& cfg, std::uint64_t seed);

// ---- subpopulation mixtures ------------------------------------------------

struct MixtureConfig {
  double alpha_star = 0.1;
  const Dataset* majority_source = nullptr;
  const Dataset* minority_source = nullptr;
  Index n = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Each example comes from the minority source with probability alpha_star,
/// drawn uniformly with replacement; source_flags = 1 marks minority rows.
/// uv_oracle and uv_embeddings are carried along when both sources have them.
Dataset mix_subpopulation(const MixtureConfig& cfg);

// ---- loaders ---------------------------------------------------------------

enum class LabelType { automatic, regression, classification };

struct CsvSchema {
  /// Empty means every column except the label and uv columns.
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  std::optional<std::string> uv_column;
  LabelType label_type = LabelType::automatic;
};

/// Classification labels map to 0..K-1 in order of first appearance; the
/// original strings are kept in class_names. A non-numeric uv column becomes
/// categorical codes in the same way.
Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema);

/// Rows of `example_id,replicate_id,v1,...,vk` (an optional header row is
/// skipped). Replicates are ordered by replicate_id, so row order in the file
/// does not matter. Every example 0..n-1 needs at least one replicate.
std::vector<Matrix> load_embeddings(const std::string& path, Index n);

/// Writes features as x1..xd, then label, then uv / source columns if present.
void write_dataset_csv(const Dataset& data, const std::string& path);

/// Writes `example_id,replicate_id,v1..vk`.
void write_embeddings_csv(const std::vector<Matrix>& embeddings, const std::string& path);

}  // namespace uvdro
