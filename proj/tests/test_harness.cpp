#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uvdro/errors.hpp"
#include "uvdro/harness.hpp"

using namespace uvdro;

namespace {

const char* kSmallMedical = R"({
  "schema_version": 1,
  "task": "medical_sim",
  "objectives": ["erm", "uv_dro"],
  "train": {"learning_rate": 0.05, "steps": 20},
  "grid": {"q_train": [0.05, 0.4], "q_test": 0.8},
  "n_train": 60, "n_test": 100,
  "uv_source": "oracle",
  "seeds": [1, 2]
})";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "uvdro_tests" / name;
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  const ExperimentConfig cfg = parse_config(kSmallMedical);
  CHECK(cfg.task == Task::medical_sim);
  CHECK(cfg.objectives.size() == 2);
  CHECK(cfg.train.steps == 20);
  CHECK(cfg.hash.size() == 16);
  CHECK(parse_config(kSmallMedical).hash == cfg.hash);

  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm"],
                                   "grid": {"q_train": [0.1]}, "bogus": 1})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 2, "task": "medical_sim", "objectives": ["erm"],
                                   "grid": {"q_train": [0.1]}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm"],
                                   "grid": {"q_train": []}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": [],
                                   "grid": {"q_train": [0.1]}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "task": "tabular", "objectives": ["erm"],
                                   "grid": {"alpha_star": [0.1]}, "tabular": {"path": "/no/such.csv"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm"],
                                   "grid": {"q_train": [0.1]}, "train": {"steps": "many"}})"),
                  ConfigError);
}

TEST_CASE("the full medical grid has nine points") {
  auto cfg = parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm", "uv_dro"],
      "grid": {"q_train": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], "q_test": 0.8}})");
  const auto pts = grid_points(cfg);
  CHECK(pts.size() == 9);
  CHECK(pts.front().alpha_star == doctest::Approx(0.0625));
  CHECK(pts.back().alpha_star == 1.0);
}

TEST_CASE("single erm point with one step yields one finite record") {
  auto cfg = parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm"],
      "train": {"steps": 1}, "grid": {"q_train": [0.1]}, "n_train": 30, "n_test": 30, "seeds": [4]})");
  const auto recs = run_experiment(cfg);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].ok());
  CHECK(std::isfinite(*recs[0].mse));
  CHECK(std::isfinite(*recs[0].objective_value));
  CHECK(recs[0].config_hash == cfg.hash);
  CHECK_FALSE(recs[0].wall_ms);
}

TEST_CASE("one record per objective, grid point and seed in a fixed order") {
  const auto cfg = parse_config(kSmallMedical);
  const auto recs = run_experiment(cfg);
  REQUIRE(recs.size() == 8);
  CHECK(recs[0].objective == "erm");
  CHECK(recs[4].objective == "uv_dro");
  CHECK(recs[0].q == 0.05);
  CHECK(recs[2].q == 0.4);
  CHECK(recs[0].seed == 1);
  CHECK(recs[1].seed == 2);
  for (const auto& r : recs) {
    CHECK(r.ok());
    CHECK(r.relative_weight_x2);
  }
  CHECK(run_experiment(cfg) == recs);
}

TEST_CASE("every objective sees the same test split") {
  const auto cfg = parse_config(kSmallMedical);
  const auto a = prepare_run(cfg, grid_points(cfg)[0], 1);
  const auto b = prepare_run(cfg, grid_points(cfg)[1], 1);
  CHECK(a.test.features == b.test.features);
  CHECK(a.train.size() == 48);
  CHECK(a.validation.size() == 12);
  CHECK(a.dx.size() == 48);
}

TEST_CASE("images task builds a 0/1 oracle distance from the transform id") {
  auto cfg = parse_config(R"({"schema_version": 1, "task": "confounded_images", "objectives": ["uv_dro"],
      "grid": {"alpha_star": [0.3], "q_test": 1.0}, "n_train": 80, "n_test": 40,
      "validation_fraction": 0, "uv_source": "oracle", "images": {"synthetic": {"side": 6}}})");
  const auto run = prepare_run(cfg, grid_points(cfg)[0], 1);
  const Vector& c = *run.train.uv_oracle;
  for (Index i = 0; i < run.train.size(); ++i)
    for (Index j = 0; j < run.train.size(); ++j) CHECK(run.dc(i, j) == (c[i] == c[j] ? 0.0 : 1.0));
  CHECK((run.test.uv_oracle->array() == 1.0).all());
}

TEST_CASE("a failing record carries its reason and the rest proceed") {
  auto cfg = parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm", "uv_dro"],
      "train": {"steps": 2}, "grid": {"q_train": [0.1]}, "n_train": 30, "n_test": 30, "seeds": [1]})");
  cfg.medical.label_param = -1.0;  // invalid generator parameter
  const auto recs = run_experiment(cfg);
  REQUIRE(recs.size() == 2);
  CHECK_FALSE(recs[0].ok());
  CHECK(recs[0].error->find("data preparation") != std::string::npos);
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 2}) == doctest::Approx(0.894427191));
}

TEST_CASE("shuffle ablation") {
  auto cfg = parse_config(R"({"schema_version": 1, "task": "confounded_images", "objectives": ["erm", "uv_dro"],
      "train": {"learning_rate": 0.05, "steps": 10}, "grid": {"alpha_star": [0.2], "q_test": 1.0},
      "n_train": 50, "n_test": 50, "uv_source": "oracle", "seeds": [3],
      "images": {"synthetic": {"side": 6}}})");
  const auto base = run_experiment(cfg);
  const auto ab = run_shuffle_ablation(cfg, {0.0});
  REQUIRE(ab.records.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(ab.records[i].accuracy == base[i].accuracy);
    CHECK(ab.records[i].fraction == 0.0);
  }
  const auto two = run_shuffle_ablation(cfg, {0.0, 1.0});
  for (const auto& r : two.records) CHECK(r.fraction);
  cfg.uv_source.kind = UvSourceKind::none;
  CHECK_THROWS_AS(run_shuffle_ablation(cfg, {0.0}), ConfigError);
}

TEST_CASE("report formats") {
  RunRecord r;
  r.config_hash = "abc";
  r.task = "medical_sim";
  r.objective = "erm";
  r.alpha_star = 0.0625;
  r.q = 0.05;
  r.seed = 7;
  r.mse = 1.0 / 3.0;
  r.relative_weight_x2 = 0.1;
  r.objective_value = 2.5;
  RunRecord s = r;
  s.seed = 8;
  s.error = "failed, \"badly\"";
  s.mse.reset();

  const std::string text = records_to_csv({r, s});
  std::istringstream lines(text);
  std::string header;
  std::getline(lines, header);
  CHECK(header.rfind("task,objective,alpha_star,q,seed,accuracy,log_loss,mse,relative_weight_x2,"
                     "objective_value,wall_ms",
                     0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(records_from_csv(text) == std::vector<RunRecord>{r, s});
  CHECK(records_from_jsonl(records_to_jsonl({r, s})) == std::vector<RunRecord>{r, s});

  const std::string agg = aggregate_csv({r, r, r});
  CHECK(agg.find("mse_std") != std::string::npos);
  std::istringstream al(agg);
  std::string h, row;
  std::getline(al, h);
  std::getline(al, row);
  CHECK(row.find(",3,") != std::string::npos);
  // mse mean then std 0
  CHECK(row.find("0.3333333333333333,0") != std::string::npos);

  const auto dir = temp_dir("report");
  const auto paths = report({r, s}, dir.string(), ReportFormat::jsonl);
  CHECK(read_records(paths[0]) == std::vector<RunRecord>{r, s});
  CHECK_THROWS(report({}, dir.string(), ReportFormat::csv));
  CHECK_THROWS(report({r}, "/proc/uvdro_cannot_write_here", ReportFormat::csv));
}

TEST_CASE("identical config and seed give byte-identical report files") {
  const auto cfg = parse_config(kSmallMedical);
  const auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
  const auto p1 = report(run_experiment(cfg), d1.string(), ReportFormat::csv);
  const auto p2 = report(run_experiment(cfg), d2.string(), ReportFormat::csv);
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(slurp(p1[i]) == slurp(p2[i]));
}

TEST_CASE("task defaults fill omitted step size and image ridge") {
  const auto med = parse_config(R"({"schema_version": 1, "task": "medical_sim", "objectives": ["erm"],
                                    "grid": {"q_train": [0.1]}})");
  CHECK(med.train.learning_rate == 1e-4);
  CHECK(med.overrides.empty());

  const auto img = parse_config(R"({"schema_version": 1, "task": "confounded_images",
                                    "objectives": ["erm", "uv_dro"], "grid": {"alpha_star": [0.1]},
                                    "objective_overrides": {"uv_dro": {"ridge": 3}}})");
  CHECK(img.train.learning_rate == 1e-3);
  CHECK(*img.overrides.at(Objective::erm).ridge == 25.0);
  CHECK(*img.overrides.at(Objective::uv_dro).ridge == 3.0);

  const auto explicit_ridge = parse_config(R"({"schema_version": 1, "task": "confounded_images",
                                    "objectives": ["erm"], "grid": {"alpha_star": [0.1]},
                                    "robustness": {"ridge": 0}, "train": {"learning_rate": 0.05}})");
  CHECK(explicit_ridge.overrides.empty());
  CHECK(explicit_ridge.train.learning_rate == 0.05);
}
