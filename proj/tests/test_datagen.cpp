#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "uvdro/datagen.hpp"
#include "uvdro/errors.hpp"

using namespace uvdro;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "uvdro_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path.string();
}

double normal_cdf(double x, double sd) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); }

}  // namespace

TEST_CASE("medical simulation examples") {
  MedicalSimConfig m;
  m.n = 500;
  m.q = 0.0;
  const Dataset a = gen_medical_sim(m);
  for (Index i = 0; i < a.size(); ++i) CHECK(a.features(i, 0) == a.labels[i]);
  m.q = 1.0;
  const Dataset b = gen_medical_sim(m);
  for (Index i = 0; i < b.size(); ++i) CHECK(b.features(i, 0) == -b.labels[i]);

  m.n = 100000;
  m.q = 0.3;
  m.seed = 17;
  const Dataset big = gen_medical_sim(m);
  CHECK(std::abs(big.uv_oracle->mean() - 0.4) <= 0.02);
  CHECK(std::abs(big.labels.squaredNorm() / 1e5 - 2.0) <= 0.05);
}

TEST_CASE("medical simulation noise passes a Kolmogorov-Smirnov check") {
  for (bool stddev : {false, true}) {
    MedicalSimConfig m;
    m.n = 100000;
    m.seed = 5;
    m.params_are_stddev = stddev;
    const Dataset d = gen_medical_sim(m);
    std::vector<double> e(static_cast<std::size_t>(d.size()));
    for (Index i = 0; i < d.size(); ++i) e[static_cast<std::size_t>(i)] = d.features(i, 1) - d.labels[i];
    std::sort(e.begin(), e.end());
    const double sd = std::sqrt(m.noise_variance());
    CHECK(sd == doctest::Approx(stddev ? 4.0 : 2.0));
    double ks = 0.0;
    const double n = static_cast<double>(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double f = normal_cdf(e[i], sd);
      ks = std::max({ks, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    CHECK(ks < 1.628 / std::sqrt(n));
  }
}

TEST_CASE("generators are deterministic under their seed") {
  MedicalSimConfig m;
  m.n = 50;
  m.seed = 4;
  CHECK(gen_medical_sim(m).features == gen_medical_sim(m).features);
  SyntheticDigitsConfig s;
  s.n = 60;
  s.seed = 9;
  s.label_noise = 0.1;
  const Dataset a = gen_synthetic_digits(s), b = gen_synthetic_digits(s);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  s.seed = 10;
  CHECK(gen_synthetic_digits(s).features != a.features);
  CHECK(sample_medical_c_given_x(a.features.leftCols(2), m, 3) ==
        sample_medical_c_given_x(a.features.leftCols(2), m, 3));
}

TEST_CASE("rotation and occlusion") {
  const std::vector<double> img{1, 2, 3, 4};
  CHECK(apply_rotation(img, 2) == std::vector<double>{4, 3, 2, 1});
  CHECK(apply_rotation(apply_rotation(img, 2), 2) == img);
  const std::vector<double> flat(9, 0.5);
  CHECK(apply_rotation(flat, 3) == flat);
  CHECK_THROWS_AS(apply_rotation(img, 3), DimensionError);

  const std::vector<double> ones(100, 1.0);
  const auto full = apply_occlusion(ones, 10, 1.0, 1);
  CHECK(std::all_of(full.begin(), full.end(), [](double v) { return v == 0.0; }));
  const std::vector<double> zeros(100, 0.0);
  CHECK(apply_occlusion(zeros, 10, 0.3, 2) == zeros);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = apply_occlusion(ones, 10, 0.25, seed);
    CHECK(std::count(out.begin(), out.end(), 0.0) == 9);  // ceil(2.5)^2
  }
}

TEST_CASE("gen_confounded_classification") {
  SyntheticDigitsConfig s;
  s.n = 4000;
  s.seed = 1;
  const Dataset base = gen_synthetic_digits(s);
  TransformConfig t;
  t.rotation_prob = 1.0;
  const Dataset all = gen_confounded_classification(base, t);
  CHECK(all.uv_categorical);
  CHECK((all.uv_oracle->array() == 1.0).all());
  CHECK(all.labels == base.labels);
  t.rotation_prob = 0.0;
  const Dataset same = gen_confounded_classification(base, t);
  CHECK(same.features == base.features);
  t.rotation_prob = 0.1;
  t.seed = 5;
  const Dataset mixed = gen_confounded_classification(base, t);
  const auto rotated = (mixed.uv_oracle->array() == 1.0).count();
  CHECK(std::abs(static_cast<double>(rotated) - 400.0) <= 60.0);
  CHECK(mixed.labels == base.labels);
  t.occlusion_prob = 0.95;
  CHECK_THROWS(t.validate());
}

TEST_CASE("synthetic digits are learnable and valid") {
  SyntheticDigitsConfig s;
  s.n = 300;
  const Dataset d = gen_synthetic_digits(s);
  CHECK_NOTHROW(d.validate());
  CHECK(d.dim() == 100);
  CHECK(d.num_classes == 10);
  CHECK(d.features.minCoeff() >= 0.0);
  CHECK(d.features.maxCoeff() <= 1.0);
}

TEST_CASE("mix_subpopulation") {
  Dataset major = testutil::small_regression(50, 2, 1);
  Dataset minor = testutil::small_regression(30, 2, 2);
  major.uv_oracle = Vector::Zero(50);
  minor.uv_oracle = Vector::Ones(30);
  MixtureConfig m{1.0, &major, &minor, 500, 3};
  const Dataset all_minor = mix_subpopulation(m);
  CHECK(all_minor.size() == 500);
  CHECK((all_minor.uv_oracle->array() == 1.0).all());
  m.alpha_star = 0.5;
  m.n = 10000;
  const Dataset half = mix_subpopulation(m);
  CHECK(half.size() == 10000);
  const double frac = static_cast<double>(std::count(half.source_flags->begin(), half.source_flags->end(), 1)) / 1e4;
  CHECK(std::abs(frac - 0.5) <= 0.015);
  CHECK(half.uv_oracle->sum() == doctest::Approx(frac * 1e4));
  m.minority_source = nullptr;
  CHECK_THROWS(mix_subpopulation(m));
}

TEST_CASE("simulated annotations follow the category") {
  Vector cats(200);
  for (Index i = 0; i < 200; ++i) cats[i] = static_cast<double>(i % 3);
  AnnotationSimConfig a;
  a.confusion = 0.0;
  a.noise = 0.05;
  const auto emb = simulate_annotations(cats, 3, a, 1);
  REQUIRE(emb.size() == 200);
  for (Index i = 0; i < 200; ++i) {
    CHECK(emb[static_cast<std::size_t>(i)].rows() == a.replicates);
    Index arg;
    emb[static_cast<std::size_t>(i)].row(0).maxCoeff(&arg);
    CHECK(arg == static_cast<Index>(cats[i]));
  }
}

TEST_CASE("load_csv_dataset") {
  const auto two = write_temp("two.csv", "a,b,label\n1,2,0.5\n3,4,1.5\n");
  const Dataset d = load_csv_dataset(two, {});
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.num_classes == 0);
  CHECK(d.features(1, 1) == 4.0);

  const auto yn = write_temp("yn.csv", "x,label,uv\n1,no,b\n2,yes,a\n3,no,a\n");
  CsvSchema s;
  s.uv_column = "uv";
  const Dataset c = load_csv_dataset(yn, s);
  CHECK(c.num_classes == 2);
  CHECK(c.class_names == std::vector<std::string>{"no", "yes"});
  CHECK(c.labels[1] == 1.0);
  CHECK(c.uv_categorical);
  CHECK((*c.uv_oracle)[0] == 0.0);
  CHECK(c.dim() == 1);

  const auto ragged = write_temp("ragged.csv", "a,b,label\n1,2,0\n3,0\n");
  try {
    load_csv_dataset(ragged, {});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  const auto bad = write_temp("bad.csv", "a,label\nfoo,1\n");
  CHECK_THROWS_AS(load_csv_dataset(bad, {}), ParseError);
  CsvSchema missing;
  missing.label_column = "target";
  CHECK_THROWS(load_csv_dataset(two, missing));
  CHECK_THROWS(load_csv_dataset("/nonexistent/file.csv", {}));
}

TEST_CASE("load_embeddings") {
  const auto single = write_temp("e1.csv", "example_id,replicate_id,v1,v2\n0,0,1,0\n1,0,0,1\n");
  const auto e = load_embeddings(single, 2);
  CHECK(e.size() == 2);
  CHECK(e[0].rows() == 1);
  CHECK(e[1](0, 1) == 1.0);

  const auto sorted = write_temp("e2.csv", "0,0,1,0\n0,1,2,0\n1,0,0,1\n1,1,0,3\n");
  const auto shuffled = write_temp("e3.csv", "1,1,0,3\n0,1,2,0\n1,0,0,1\n0,0,1,0\n");
  const auto a = load_embeddings(sorted, 2), b = load_embeddings(shuffled, 2);
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);

  CHECK_THROWS_AS(load_embeddings(write_temp("dup.csv", "0,0,1,0\n0,0,2,0\n1,0,0,1\n"), 2), ParseError);
  CHECK_THROWS(load_embeddings(write_temp("gap.csv", "0,0,1,0\n"), 2));
  CHECK_THROWS(load_embeddings(write_temp("width.csv", "0,0,1,0\n1,0,1\n"), 2));
  CHECK_THROWS(load_embeddings(write_temp("range.csv", "0,0,1,0\n5,0,1,1\n"), 2));
}

TEST_CASE("dataset CSV round trip") {
  SyntheticDigitsConfig s;
  s.n = 20;
  s.side = 4;
  s.num_classes = 3;
  TransformConfig t;
  t.rotation_prob = 0.5;
  const Dataset d = gen_confounded_classification(gen_synthetic_digits(s), t);
  const auto path = (std::filesystem::temp_directory_path() / "uvdro_tests" / "rt.csv").string();
  write_dataset_csv(d, path);
  CsvSchema schema;
  schema.uv_column = "uv";
  schema.label_type = LabelType::classification;
  const Dataset back = load_csv_dataset(path, schema);
  CHECK(back.size() == d.size());
  CHECK((back.features - d.features).cwiseAbs().maxCoeff() == 0.0);
}
